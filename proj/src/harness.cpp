#include "rtr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rtr/random.hpp"

namespace rtr {

using nlohmann::json;

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::Single: return "single";
    case Policy::Triggered: return "triggered";
    case Policy::Consistent: return "consistent";
    case Policy::FCFS: return "fcfs";
    case Policy::iDFST: return "idfst";
  }
  return "?";
}

Policy parse_policy(std::string_view text) {
  for (Policy p : {Policy::Single, Policy::Triggered, Policy::Consistent, Policy::FCFS, Policy::iDFST}) {
    if (text == to_string(p)) return p;
  }
  if (text == "rtr") return Policy::Triggered;
  throw ConfigError("policy", "unknown policy '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

void validate(const RunConfig& c) {
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw ConfigError("horizon", "must be > 0");
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw ConfigError("dt", "must be > 0");
  if (!(c.penetration >= 0.0 && c.penetration <= 1.0)) throw ConfigError("penetration", "must lie in [0, 1]");
  if (c.n_vehicles < 0) throw ConfigError("n_vehicles", "must be >= 0");
  validate(c.planner);
  const DetectorConfig& d = c.detectors;
  if (!(d.dangerous_ttcp > 0.0)) throw ConfigError("detectors.dangerous_ttcp", "must be > 0");
  if (!(d.inefficient_window > 0.0)) throw ConfigError("detectors.inefficient_window", "must be > 0");
  if (!(d.uncertain_window > 0.0)) throw ConfigError("detectors.uncertain_window", "must be > 0");
  if (d.flip_threshold < 1) throw ConfigError("detectors.flip_threshold", "must be >= 1");
  if (!(d.eps_ttcp >= 0.0)) throw ConfigError("detectors.eps_ttcp", "must be >= 0");
  const std::pair<const char*, const HdvStyleParams*> styles[] = {
      {"aggressive", &c.styles.aggressive}, {"normal", &c.styles.normal}, {"conservative", &c.styles.conservative}};
  for (const auto& [name, s] : styles) {
    if (!(s->sigma >= 0.0)) throw ConfigError(std::string("styles.") + name + ".sigma", "must be >= 0");
    if (!(s->commit_time > 0.0)) throw ConfigError(std::string("styles.") + name + ".commit_time", "must be > 0");
  }
  const IdmParams& m = c.idm;
  if (!(m.v0 > 0.0 && m.T >= 0.0 && m.a_max > 0.0 && m.b_comf > 0.0 && m.s0 >= 0.0 && m.delta > 0.0 && m.b_hard > 0.0)) {
    throw ConfigError("idm", "parameters must be positive");
  }
  if (c.scenario) validate(*c.scenario);
}

namespace {

template <class T>
void read_field(const json& obj, const char* key, T& out, const std::string& prefix) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, e.what());
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& prefix) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "" : prefix.substr(0, prefix.size() - 1), "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(prefix + k, "unknown key");
  }
}

void read_style(const json& doc, const char* name, HdvStyleParams& style) {
  const auto it = doc.find(name);
  if (it == doc.end()) return;
  const std::string prefix = std::string("styles.") + name + ".";
  reject_unknown(*it, {"theta", "sigma", "commit_time"}, prefix);
  read_field(*it, "theta", style.theta, prefix);
  read_field(*it, "sigma", style.sigma, prefix);
  read_field(*it, "commit_time", style.commit_time, prefix);
}

}  // namespace

RunConfig parse_run_config(std::string_view text, RunConfig c) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  reject_unknown(doc,
                 {"policy", "penetration", "n_vehicles", "seed", "dt", "horizon", "planner", "detectors", "idm",
                  "styles", "boundary", "boundary_file", "scenario", "layout", "spawn"},
                 "");
  if (doc.contains("policy")) {
    std::string p;
    read_field(doc, "policy", p, "");
    c.policy = parse_policy(p);
  }
  read_field(doc, "penetration", c.penetration, "");
  read_field(doc, "n_vehicles", c.n_vehicles, "");
  read_field(doc, "seed", c.seed, "");
  if (const auto it = doc.find("planner"); it != doc.end()) {
    reject_unknown(*it, {"c_explore", "lambda_penalty", "iterations", "delta_safe", "hard_prune"}, "planner.");
    read_field(*it, "c_explore", c.planner.c_explore, "planner.");
    read_field(*it, "lambda_penalty", c.planner.lambda_penalty, "planner.");
    read_field(*it, "iterations", c.planner.iterations, "planner.");
    read_field(*it, "delta_safe", c.planner.delta_safe, "planner.");
    read_field(*it, "hard_prune", c.planner.hard_prune, "planner.");
  }
  if (const auto it = doc.find("detectors"); it != doc.end()) {
    const std::string px = "detectors.";
    reject_unknown(*it,
                   {"dangerous_ttcp", "inefficient_window", "uncertain_window", "flip_threshold", "eps_ttcp", "t_far",
                    "uncertain_mode"},
                   px);
    read_field(*it, "dangerous_ttcp", c.detectors.dangerous_ttcp, px);
    read_field(*it, "inefficient_window", c.detectors.inefficient_window, px);
    read_field(*it, "uncertain_window", c.detectors.uncertain_window, px);
    read_field(*it, "flip_threshold", c.detectors.flip_threshold, px);
    read_field(*it, "eps_ttcp", c.detectors.eps_ttcp, px);
    read_field(*it, "t_far", c.detectors.t_far, px);
    if (it->contains("uncertain_mode")) {
      std::string mode;
      read_field(*it, "uncertain_mode", mode, px);
      if (mode == "region") {
        c.detectors.uncertain_mode = UncertainMode::RegionFlips;
      } else if (mode == "derivative") {
        c.detectors.uncertain_mode = UncertainMode::DerivativeFlips;
      } else {
        throw ConfigError(px + "uncertain_mode", "expected 'region' or 'derivative'");
      }
    }
  }
  if (const auto it = doc.find("idm"); it != doc.end()) {
    reject_unknown(*it, {"v0", "T", "a_max", "b_comf", "s0", "delta", "b_hard"}, "idm.");
    read_field(*it, "v0", c.idm.v0, "idm.");
    read_field(*it, "T", c.idm.T, "idm.");
    read_field(*it, "a_max", c.idm.a_max, "idm.");
    read_field(*it, "b_comf", c.idm.b_comf, "idm.");
    read_field(*it, "s0", c.idm.s0, "idm.");
    read_field(*it, "delta", c.idm.delta, "idm.");
    read_field(*it, "b_hard", c.idm.b_hard, "idm.");
  }
  if (const auto it = doc.find("styles"); it != doc.end()) {
    reject_unknown(*it, {"aggressive", "normal", "conservative"}, "styles.");
    read_style(*it, "aggressive", c.styles.aggressive);
    read_style(*it, "normal", c.styles.normal);
    read_style(*it, "conservative", c.styles.conservative);
  }
  if (const auto it = doc.find("boundary"); it != doc.end()) {
    try {
      c.boundary = boundary_from_json(it->dump());
    } catch (const ConfigError& e) {
      throw ConfigError("boundary." + e.field(), e.what());
    } catch (const std::exception& e) {
      throw ConfigError("boundary", e.what());
    }
  }
  if (doc.contains("boundary_file")) {
    read_field(doc, "boundary_file", c.boundary_file, "");
    try {
      c.boundary = load_boundary_file(c.boundary_file);
    } catch (const std::exception& e) {
      throw ConfigError("boundary_file", e.what());
    }
  }
  if (const auto it = doc.find("layout"); it != doc.end()) {
    const std::string px = "layout.";
    reject_unknown(*it, {"include_left_turns", "box_half_width", "lane_offset", "upstream", "downstream"}, px);
    read_field(*it, "include_left_turns", c.layout.include_left_turns, px);
    read_field(*it, "box_half_width", c.layout.box_half_width, px);
    read_field(*it, "lane_offset", c.layout.lane_offset, px);
    read_field(*it, "upstream", c.layout.upstream, px);
    read_field(*it, "downstream", c.layout.downstream, px);
  }
  if (const auto it = doc.find("spawn"); it != doc.end()) {
    const std::string px = "spawn.";
    reject_unknown(*it, {"s_min", "s_max", "v_min", "v_max", "min_spacing", "half_length", "attempts"}, px);
    read_field(*it, "s_min", c.spawn.s_min, px);
    read_field(*it, "s_max", c.spawn.s_max, px);
    read_field(*it, "v_min", c.spawn.v_min, px);
    read_field(*it, "v_max", c.spawn.v_max, px);
    read_field(*it, "min_spacing", c.spawn.min_spacing, px);
    read_field(*it, "half_length", c.spawn.half_length, px);
    read_field(*it, "attempts", c.spawn.attempts, px);
  }
  if (const auto it = doc.find("scenario"); it != doc.end()) {
    try {
      c.scenario = load_scenario(it->is_string() ? read_text_file(it->get<std::string>()) : it->dump());
    } catch (const ConfigError& e) {
      throw ConfigError("scenario." + e.field(), e.what());
    } catch (const std::exception& e) {
      throw ConfigError("scenario", e.what());
    }
    c.dt = c.scenario->dt;
    c.horizon = c.scenario->horizon;
  }
  read_field(doc, "dt", c.dt, "");
  read_field(doc, "horizon", c.horizon, "");
  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  return parse_run_config(read_text_file(path), std::move(base));
}

Scenario episode_scenario(const RunConfig& config) {
  Scenario sc;
  if (config.scenario) {
    sc = *config.scenario;
  } else if (config.n_vehicles == 0) {
    sc = default_template(config.layout);
  } else {
    sc = randomize(config.seed, config.penetration, config.n_vehicles, default_template(config.layout), config.spawn);
  }
  sc.dt = config.dt;
  sc.horizon = config.horizon;
  return sc;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

bool same_lane(const VehicleState& a, const VehicleState& b, const Scenario& scenario) {
  if (a.path == b.path) return true;
  const PathSpec& pa = scenario.path(a.path);
  const PathSpec& pb = scenario.path(b.path);
  return pa.approach == pb.approach && a.s < pa.stop_line && b.s < pb.stop_line;
}

}  // namespace

bool detect_collision(const std::vector<VehicleState>& states, const Scenario& scenario) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      const VehicleState& a = states[i];
      const VehicleState& b = states[j];
      if (same_lane(a, b, scenario)) {
        if (std::abs(a.s - b.s) < a.half_length + b.half_length) return true;
        continue;
      }
      for (const ConflictPoint* cp : scenario.conflicts_between(a.path, b.path)) {
        if (std::abs(distance_to(a, *cp)) <= a.half_length && std::abs(distance_to(b, *cp)) <= b.half_length) {
          return true;
        }
      }
    }
  }
  return false;
}

namespace {

struct Traversal {
  VehicleId id = 0;
  std::string path;
  double t_enter = std::numeric_limits<double>::quiet_NaN();
  double t_exit = std::numeric_limits<double>::quiet_NaN();
};

/// Time in (t0, t1] at which x(t), linear between (t0, x0) and (t1, x1), reaches `level`.
double crossing_time(double t0, double x0, double t1, double x1, double level) {
  if (x1 == x0) return t1;
  return t0 + (t1 - t0) * (level - x0) / (x1 - x0);
}

}  // namespace

std::optional<double> compute_pet(const StepLog& log, const ConflictPoint& cp) {
  std::map<VehicleId, Traversal> by_id;
  std::map<VehicleId, std::pair<double, VehicleSnapshot>> last;
  auto visit = [&](const StepFrame& frame) {
    for (const auto& v : frame.vehicles) {
      if (!cp.involves(v.path)) continue;
      const double arc = cp.arc_on(v.path);
      Traversal& tr = by_id[v.id];
      tr.id = v.id;
      tr.path = v.path;
      const auto prev = last.find(v.id);
      if (prev != last.end()) {
        const double t0 = prev->second.first;
        const VehicleSnapshot& p = prev->second.second;
        if (std::isnan(tr.t_enter) && p.s + p.half_length < arc && v.s + v.half_length >= arc) {
          tr.t_enter = crossing_time(t0, p.s + p.half_length, frame.t, v.s + v.half_length, arc);
        }
        if (std::isnan(tr.t_exit) && p.s - p.half_length <= arc && v.s - v.half_length > arc) {
          tr.t_exit = crossing_time(t0, p.s - p.half_length, frame.t, v.s - v.half_length, arc);
        }
      }
      last[v.id] = {frame.t, v};
    }
  };
  visit(log.initial);
  for (const auto& frame : log.frames) visit(frame);

  std::vector<Traversal> done;
  for (const auto& [id, tr] : by_id) {
    if (!std::isnan(tr.t_enter) && !std::isnan(tr.t_exit)) done.push_back(tr);
  }
  std::sort(done.begin(), done.end(), [](const Traversal& a, const Traversal& b) {
    return a.t_enter != b.t_enter ? a.t_enter < b.t_enter : a.id < b.id;
  });
  for (std::size_t k = 0; k + 1 < done.size(); ++k) {
    if (done[k].path != done[k + 1].path) return done[k + 1].t_enter - done[k].t_exit;
  }
  return std::nullopt;
}

bool detect_deadlock(const StepLog& log, double horizon) {
  constexpr double kSpeed = 0.5;
  constexpr double kWindow = 5.0;
  if (log.collision || log.t_end < horizon - 1e-9) return false;
  if (log.exit_times.size() >= log.vehicles.size()) return false;
  std::set<VehicleId> unexited;
  for (VehicleId id : log.vehicles) {
    if (!log.exit_times.count(id)) unexited.insert(id);
  }
  bool any = false;
  for (const auto& frame : log.frames) {
    if (frame.t < log.t_end - kWindow - 1e-9) continue;
    for (const auto& v : frame.vehicles) {
      if (!unexited.count(v.id)) continue;
      any = true;
      if (v.v >= kSpeed) return false;
    }
  }
  return any;
}

// ---------------------------------------------------------------------------
// Episode loop

namespace {

struct PairTrack {
  int conflict = -1;
  BipgTrace trace;
  std::optional<BreakdownKind> last;
  double last_event = 0.0;
  bool seen = false;
};

/// First conflict point both vehicles still approach (centers short of it).
const ConflictPoint* approaching_conflict(const VehicleState& a, const VehicleState& b, const Scenario& sc) {
  for (const ConflictPoint* cp : sc.conflicts_between(a.path, b.path)) {
    if (distance_to(a, *cp) > 0.0 && distance_to(b, *cp) > 0.0) return cp;
  }
  return nullptr;
}

/// First conflict point neither vehicle has cleared.
const ConflictPoint* open_conflict(const VehicleState& a, const VehicleState& b, const Scenario& sc) {
  for (const ConflictPoint* cp : sc.conflicts_between(a.path, b.path)) {
    if (!has_cleared(a, *cp) && !has_cleared(b, *cp)) return cp;
  }
  return nullptr;
}

std::vector<DirectedIntention> infer_intentions(const Scenario& sc, const IntentionBoundary& boundary) {
  std::vector<DirectedIntention> out;
  for (const auto& h : sc.vehicles) {
    if (!h.is_hdv()) continue;
    for (const auto& o : sc.vehicles) {
      if (o.id == h.id) continue;
      const ConflictPoint* cp = open_conflict(h, o, sc);
      if (cp == nullptr) continue;
      const InteractionFeatures f = make_features(std::max(0.0, distance_to(h, *cp)), h.v,
                                                  std::max(0.0, distance_to(o, *cp)), o.v);
      const PairIntentions p = classify_pair(f, boundary, h.id, o.id);
      out.push_back({h.id, o.id, p.ego.intention, p.ego.margin});
    }
  }
  return out;
}

VehicleSnapshot snapshot(const VehicleState& v) {
  VehicleSnapshot s;
  s.id = v.id;
  s.path = v.path;
  s.s = v.s;
  s.v = v.v;
  s.a = v.a;
  s.half_length = v.half_length;
  return s;
}

class EpisodeRunner {
 public:
  explicit EpisodeRunner(const RunConfig& config) : cfg_(config), sc_(episode_scenario(config)) {
    memory_ = HdvDecisionMemory(mix_seed({cfg_.seed, 0x48445631ull}));
  }

  Episode run() {
    Episode ep;
    StepLog& log = ep.log;
    RunResult& res = ep.result;
    log.dt = cfg_.dt;
    log.initial.t = 0.0;
    for (const auto& v : sc_.vehicles) {
      log.vehicles.push_back(v.id);
      log.initial.vehicles.push_back(snapshot(v));
    }
    if (cfg_.policy == Policy::FCFS) baseline_ = fcfs_order(sc_, cfg_.idm);
    if (cfg_.policy == Policy::iDFST) baseline_ = idfst_order(sc_, cfg_.idm);

    const int steps = static_cast<int>(std::ceil(cfg_.horizon / cfg_.dt - 1e-9));
    double t_end = 0.0;
    for (int k = 0; k < steps && !sc_.vehicles.empty(); ++k) {
      const double t = k * cfg_.dt;
      const double t_next = (k + 1) * cfg_.dt;
      std::map<VehicleId, std::optional<Region>> regions;
      std::map<VehicleId, BreakdownKind> flagged;
      const std::vector<BreakdownEvent> events = recognize(t, regions, flagged);
      res.breakdowns.insert(res.breakdowns.end(), events.begin(), events.end());
      resolve(k, events);

      std::vector<double> accel(sc_.vehicles.size());
      for (std::size_t i = 0; i < sc_.vehicles.size(); ++i) accel[i] = command(sc_.vehicles[i], t);
      for (std::size_t i = 0; i < sc_.vehicles.size(); ++i) sc_.vehicles[i] = step(sc_.vehicles[i], accel[i], cfg_.dt);

      StepFrame frame;
      frame.t = t_next;
      for (const auto& v : sc_.vehicles) {
        VehicleSnapshot snap = snapshot(v);
        if (const auto r = regions.find(v.id); r != regions.end()) snap.region = r->second;
        if (const auto e = flagged.find(v.id); e != flagged.end()) snap.event = e->second;
        frame.vehicles.push_back(std::move(snap));
      }
      log.frames.push_back(std::move(frame));
      t_end = t_next;

      if (detect_collision(sc_.vehicles, sc_)) {
        log.collision = true;
        break;
      }
      retire_exited(t, log);
    }
    log.t_end = t_end;

    res.collision = log.collision;
    res.t_end = log.t_end;
    res.planner_invocations = invocations_;
    res.planner_rollouts = rollouts_;
    res.planner_time_ms = planner_ms_;
    for (const auto& [id, te] : log.exit_times) res.travel_times[id] = te;
    bool all_exited = log.exit_times.size() == log.vehicles.size();
    for (const auto& [id, te] : log.exit_times) all_exited = all_exited && te <= cfg_.horizon + 1e-9;
    res.success = !res.collision && all_exited;
    res.deadlock = detect_deadlock(log, cfg_.horizon);
    if (!res.collision) {
      for (const auto& cp : sc_.conflicts) {
        if (const auto pet = compute_pet(log, cp)) res.pets.push_back(*pet);
      }
    }
    return ep;
  }

 private:
  std::vector<BreakdownEvent> recognize(double t, std::map<VehicleId, std::optional<Region>>& regions,
                                        std::map<VehicleId, BreakdownKind>& flagged) {
    std::vector<BreakdownEvent> events;
    for (auto& [key, track] : tracks_) track.seen = false;
    const double rearm = std::max(cfg_.detectors.inefficient_window, cfg_.detectors.uncertain_window);
    const double keep = rearm + 2.0 * cfg_.dt;
    const auto& vs = sc_.vehicles;
    for (std::size_t a = 0; a < vs.size(); ++a) {
      for (std::size_t b = a + 1; b < vs.size(); ++b) {
        const VehicleState* ego = &vs[a];
        const VehicleState* opp = &vs[b];
        if (ego->is_hdv() && opp->is_hdv()) continue;
        if (ego->is_hdv() || (!opp->is_hdv() && opp->id < ego->id)) std::swap(ego, opp);
        const ConflictPoint* cp = approaching_conflict(*ego, *opp, sc_);
        if (cp == nullptr) continue;
        PairTrack& track = tracks_[{ego->id, opp->id}];
        if (track.conflict != cp->id) {
          track = PairTrack{};
          track.conflict = cp->id;
          track.trace.ego = ego->id;
          track.trace.opponent = opp->id;
        }
        track.seen = true;
        const InteractionFeatures f = make_features(distance_to(*ego, *cp), ego->v, distance_to(*opp, *cp), opp->v);
        track.trace.push(make_sample(t, ego->id, opp->id, f, cfg_.boundary, cfg_.detectors.t_far));
        auto& samples = track.trace.samples;
        const auto stale = std::find_if(samples.begin(), samples.end(),
                                        [&](const BipgSample& s) { return s.t >= t - keep; });
        samples.erase(samples.begin(), stale);
        regions[ego->id] = track.trace.samples.back().region;
        regions[opp->id] = track.trace.samples.back().region;

        const auto ev = detect_breakdown(track.trace, cfg_.detectors);
        const std::optional<BreakdownKind> kind = ev ? std::optional<BreakdownKind>(ev->kind) : std::nullopt;
        // A breakdown still present a full detector window after it last fired counts again.
        const bool persisting = ev && track.last == kind && t - track.last_event >= rearm - 1e-9;
        if (ev && (track.last != kind || persisting)) {
          track.last_event = t;
          events.push_back(*ev);
          flagged[ego->id] = ev->kind;
          flagged[opp->id] = ev->kind;
        }
        track.last = kind;
      }
    }
    for (auto it = tracks_.begin(); it != tracks_.end();) {
      it = it->second.seen ? std::next(it) : tracks_.erase(it);
    }
    return events;
  }

  void resolve(int k, const std::vector<BreakdownEvent>& events) {
    const bool replan = (cfg_.policy == Policy::Triggered && !events.empty()) || cfg_.policy == Policy::Consistent;
    if (!replan) return;
    const auto started = std::chrono::steady_clock::now();
    const SchedulingProblem problem = make_problem(sc_, cfg_.idm);
    if (problem.size() == 0) {
      plan_.reset();
      return;
    }
    const ConstraintSet cs = build_constraints(infer_intentions(sc_, cfg_.boundary));
    MctsConfig mc = cfg_.planner;
    mc.seed = mix_seed({cfg_.seed, static_cast<std::uint64_t>(k), 0x4d435453ull});
    SearchResult sr = search(problem, cs.constraints, mc);
    plan_ = std::move(sr.order);
    ++invocations_;
    rollouts_ += sr.iterations;
    planner_ms_ += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  }

  double command(const VehicleState& v, double t) {
    if (v.is_hdv()) {
      std::vector<OpponentDecision> decisions;
      for (const auto& o : sc_.vehicles) {
        if (o.id == v.id) continue;
        for (const ConflictPoint* cp : sc_.conflicts_between(v.path, o.path)) {
          if (has_cleared(v, *cp) || has_cleared(o, *cp)) continue;
          decisions.push_back({o.id, cp->id, memory_.decide(t, v, o, *cp, cfg_.styles.of(v.style))});
        }
      }
      return hdv_accelerate(v, decisions, sc_, cfg_.idm);
    }
    switch (cfg_.policy) {
      case Policy::Single: break;
      case Policy::Triggered:
      case Policy::Consistent:
        if (plan_) return cav_ordered_accelerate(v, *plan_, sc_, cfg_.idm);
        break;
      case Policy::FCFS:
      case Policy::iDFST:
        if (baseline_) return cav_ordered_accelerate(v, *baseline_, sc_, cfg_.idm);
        break;
    }
    return cav_single_accelerate(v, sc_, cfg_.idm);
  }

  void retire_exited(double t, StepLog& log) {
    auto& vs = sc_.vehicles;
    for (auto it = vs.begin(); it != vs.end();) {
      const double length = sc_.path(it->path).length();
      if (it->s < length) {
        ++it;
        continue;
      }
      // Interpolate the crossing of the path end within the last step.
      const double s_prev = it->s - it->v * cfg_.dt;
      const double frac = it->v > 0.0 ? std::clamp((length - s_prev) / (it->s - s_prev), 0.0, 1.0) : 1.0;
      log.exit_times[it->id] = t + frac * cfg_.dt;
      if (plan_ && plan_->position(it->id) && cfg_.policy == Policy::Triggered) {
        plan_.reset();
        for (auto& [key, track] : tracks_) track.last.reset();
      }
      it = vs.erase(it);
    }
  }

  const RunConfig& cfg_;
  Scenario sc_;
  HdvDecisionMemory memory_;
  std::map<std::pair<VehicleId, VehicleId>, PairTrack> tracks_;
  std::optional<PassingOrder> plan_;
  std::optional<PassingOrder> baseline_;
  int invocations_ = 0;
  long long rollouts_ = 0;
  double planner_ms_ = 0.0;
};

}  // namespace

Episode run_episode(const RunConfig& config) {
  validate(config);
  return EpisodeRunner(config).run();
}

// ---------------------------------------------------------------------------
// Sweeps and aggregation

namespace {

bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

bool AggregateCell::operator==(const AggregateCell& o) const {
  return policy == o.policy && same_number(penetration, o.penetration) && runs == o.runs &&
         same_number(success_rate, o.success_rate) && same_number(collision_rate, o.collision_rate) &&
         same_number(deadlock_rate, o.deadlock_rate) && pet_count == o.pet_count && same_number(mean_pet, o.mean_pet) &&
         same_number(median_pet, o.median_pet) && same_number(pet_share_below_3, o.pet_share_below_3) &&
         same_number(mean_planner_time_ms, o.mean_planner_time_ms) &&
         same_number(mean_invocations, o.mean_invocations) && same_number(mean_rollouts, o.mean_rollouts);
}

const AggregateCell* AggregateReport::find(Policy policy, double penetration) const {
  for (const auto& c : cells) {
    if (c.policy == policy && std::abs(c.penetration - penetration) < 1e-12) return &c;
  }
  return nullptr;
}

SweepOutput sweep(const RunConfig& base, const std::vector<Policy>& policies, const std::vector<double>& penetrations,
                  int runs_per_cell) {
  if (runs_per_cell < 1) throw ConfigError("runs", "must be >= 1");
  SweepOutput out;
  for (Policy policy : policies) {
    for (double p : penetrations) {
      for (int r = 0; r < runs_per_cell; ++r) {
        RunConfig c = base;
        c.policy = policy;
        c.penetration = p;
        c.seed = base.seed + static_cast<std::uint64_t>(r);
        EpisodeRecord rec;
        rec.policy = policy;
        rec.penetration = p;
        rec.seed = c.seed;
        rec.n_vehicles = c.scenario ? static_cast<int>(c.scenario->vehicles.size()) : c.n_vehicles;
        rec.result = run_episode(c).result;
        out.episodes.push_back(std::move(rec));
      }
    }
  }
  out.report = aggregate(out.episodes);
  return out;
}

AggregateReport aggregate(const std::vector<EpisodeRecord>& episodes) {
  std::map<std::pair<int, double>, std::vector<const EpisodeRecord*>> groups;
  for (const auto& e : episodes) groups[{static_cast<int>(e.policy), e.penetration}].push_back(&e);
  AggregateReport report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [key, recs] : groups) {
    AggregateCell c;
    c.policy = static_cast<Policy>(key.first);
    c.penetration = key.second;
    c.runs = static_cast<int>(recs.size());
    std::vector<double> pets;
    double success = 0, collision = 0, deadlock = 0, time = 0, inv = 0, roll = 0;
    for (const EpisodeRecord* e : recs) {
      success += e->result.success;
      collision += e->result.collision;
      deadlock += e->result.deadlock;
      time += e->result.planner_time_ms;
      inv += e->result.planner_invocations;
      roll += static_cast<double>(e->result.planner_rollouts);
      if (!e->result.collision) pets.insert(pets.end(), e->result.pets.begin(), e->result.pets.end());
    }
    const double n = c.runs;
    c.success_rate = success / n;
    c.collision_rate = collision / n;
    c.deadlock_rate = deadlock / n;
    c.mean_planner_time_ms = time / n;
    c.mean_invocations = inv / n;
    c.mean_rollouts = roll / n;
    c.pet_count = static_cast<int>(pets.size());
    if (pets.empty()) {
      c.mean_pet = c.median_pet = c.pet_share_below_3 = nan;
    } else {
      std::sort(pets.begin(), pets.end());
      double sum = 0.0;
      int below = 0;
      for (double p : pets) {
        sum += p;
        below += p < 3.0;
      }
      c.mean_pet = sum / static_cast<double>(pets.size());
      const std::size_t m = pets.size() / 2;
      c.median_pet = pets.size() % 2 ? pets[m] : 0.5 * (pets[m - 1] + pets[m]);
      c.pet_share_below_3 = static_cast<double>(below) / static_cast<double>(pets.size());
    }
    report.cells.push_back(c);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_number(const std::string& field) {
  if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double x = std::stod(field, &used);
  if (used != field.size()) throw std::invalid_argument("bad number '" + field + "'");
  return x;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

BreakdownKind parse_breakdown(const std::string& s) {
  for (BreakdownKind k : {BreakdownKind::Uncertain, BreakdownKind::Inefficient, BreakdownKind::Dangerous}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown breakdown kind '" + s + "'");
}

}  // namespace

std::string episode_to_jsonl(const EpisodeRecord& r, bool include_timing) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["policy"] = to_string(r.policy);
  j["penetration"] = r.penetration;
  j["seed"] = r.seed;
  j["n_vehicles"] = r.n_vehicles;
  j["success"] = r.result.success;
  j["collision"] = r.result.collision;
  j["deadlock"] = r.result.deadlock;
  j["t_end"] = r.result.t_end;
  j["pets"] = r.result.pets;
  j["planner_invocations"] = r.result.planner_invocations;
  j["planner_rollouts"] = r.result.planner_rollouts;
  j["planner_time_ms"] = include_timing ? nlohmann::ordered_json(r.result.planner_time_ms) : nlohmann::ordered_json();
  nlohmann::ordered_json tt = nlohmann::ordered_json::object();
  for (const auto& [id, t] : r.result.travel_times) tt[std::to_string(id)] = t;
  j["travel_times"] = tt;
  nlohmann::ordered_json br = nlohmann::ordered_json::array();
  for (const auto& e : r.result.breakdowns) {
    br.push_back({{"kind", to_string(e.kind)}, {"t", e.t}, {"pair", {e.pair.first, e.pair.second}}});
  }
  j["breakdowns"] = br;
  return j.dump() + "\n";
}

EpisodeRecord episode_from_json(std::string_view line) {
  const json j = json::parse(line);
  if (j.value("schema_version", 0) != kSchemaVersion) throw std::invalid_argument("unsupported schema_version");
  EpisodeRecord r;
  r.policy = parse_policy(j.at("policy").get<std::string>());
  r.penetration = j.at("penetration").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.n_vehicles = j.at("n_vehicles").get<int>();
  r.result.success = j.at("success").get<bool>();
  r.result.collision = j.at("collision").get<bool>();
  r.result.deadlock = j.at("deadlock").get<bool>();
  r.result.t_end = j.at("t_end").get<double>();
  r.result.pets = j.at("pets").get<std::vector<double>>();
  r.result.planner_invocations = j.at("planner_invocations").get<int>();
  r.result.planner_rollouts = j.at("planner_rollouts").get<long long>();
  const json& time = j.at("planner_time_ms");
  r.result.planner_time_ms = time.is_null() ? 0.0 : time.get<double>();
  for (const auto& [id, t] : j.at("travel_times").items()) r.result.travel_times[std::stoi(id)] = t.get<double>();
  for (const auto& e : j.at("breakdowns")) {
    r.result.breakdowns.push_back(BreakdownEvent{parse_breakdown(e.at("kind").get<std::string>()), e.at("t").get<double>(),
                                                 {e.at("pair").at(0).get<int>(), e.at("pair").at(1).get<int>()}});
  }
  return r;
}

std::string episodes_to_jsonl(const std::vector<EpisodeRecord>& records, bool include_timing) {
  std::string out;
  for (const auto& r : records) out += episode_to_jsonl(r, include_timing);
  return out;
}

std::vector<EpisodeRecord> episodes_from_jsonl(std::string_view text) {
  std::vector<EpisodeRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(episode_from_json(line));
    } catch (const std::exception& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

constexpr const char* kReportHeader =
    "schema_version,policy,penetration,runs,success_rate,collision_rate,deadlock_rate,pet_count,mean_pet,median_pet,"
    "pet_share_below_3,mean_planner_time_ms,mean_invocations,mean_rollouts";

}  // namespace

std::string report_to_csv(const AggregateReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& c : report.cells) {
    out += std::to_string(kSchemaVersion) + "," + std::string(to_string(c.policy)) + "," + fmt(c.penetration) + "," +
           std::to_string(c.runs) + "," + fmt(c.success_rate) + "," + fmt(c.collision_rate) + "," +
           fmt(c.deadlock_rate) + "," + std::to_string(c.pet_count) + "," + fmt(c.mean_pet) + "," +
           fmt(c.median_pet) + "," + fmt(c.pet_share_below_3) + "," + fmt(c.mean_planner_time_ms) + "," +
           fmt(c.mean_invocations) + "," + fmt(c.mean_rollouts) + "\n";
  }
  return out;
}

AggregateReport report_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || split(line, ',') != split(kReportHeader, ',')) {
    throw std::invalid_argument("aggregate table: unexpected header");
  }
  AggregateReport report;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    if (f.size() != 14) throw std::invalid_argument("aggregate table: expected 14 fields");
    if (std::stoi(f[0]) != kSchemaVersion) throw std::invalid_argument("aggregate table: unsupported schema_version");
    AggregateCell c;
    c.policy = parse_policy(f[1]);
    c.penetration = parse_number(f[2]);
    c.runs = std::stoi(f[3]);
    c.success_rate = parse_number(f[4]);
    c.collision_rate = parse_number(f[5]);
    c.deadlock_rate = parse_number(f[6]);
    c.pet_count = std::stoi(f[7]);
    c.mean_pet = parse_number(f[8]);
    c.median_pet = parse_number(f[9]);
    c.pet_share_below_3 = parse_number(f[10]);
    c.mean_planner_time_ms = parse_number(f[11]);
    c.mean_invocations = parse_number(f[12]);
    c.mean_rollouts = parse_number(f[13]);
    report.cells.push_back(c);
  }
  return report;
}

std::string step_log_to_jsonl(const StepLog& log) {
  std::string out;
  for (const auto& frame : log.frames) {
    for (const auto& v : frame.vehicles) {
      nlohmann::ordered_json j;
      j["schema_version"] = kSchemaVersion;
      j["t"] = frame.t;
      j["id"] = v.id;
      j["s"] = v.s;
      j["v"] = v.v;
      j["a"] = v.a;
      if (v.region) j["region"] = to_string(*v.region);
      if (v.event) j["event"] = to_string(*v.event);
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::string pets_to_csv(const std::vector<EpisodeRecord>& records) {
  std::string out = "policy,penetration,seed,pet\n";
  for (const auto& r : records) {
    if (r.result.collision) continue;
    for (double p : r.result.pets) {
      out += std::string(to_string(r.policy)) + "," + fmt(r.penetration) + "," + std::to_string(r.seed) + "," + fmt(p) +
             "\n";
    }
  }
  return out;
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Synthetic training data

std::vector<LabeledInteraction> synthetic_dataset(const SyntheticOptions& o) {
  if (o.n < 2) throw std::invalid_argument("synthetic_dataset: n must be >= 2");
  if (!(o.ttcp_max - o.ttcp_min > o.margin)) throw std::invalid_argument("synthetic_dataset: TTCP range too narrow");
  Rng rng(mix_seed({o.seed, 0x53594eull}));
  std::vector<LabeledInteraction> out;
  out.reserve(static_cast<std::size_t>(o.n));
  while (static_cast<int>(out.size()) < o.n) {
    LabeledInteraction r;
    r.ttcp_i = rng.uniform(o.ttcp_min, o.ttcp_max);
    r.ttcp_j = rng.uniform(o.ttcp_min, o.ttcp_max);
    if (std::abs(r.ttcp_i - r.ttcp_j) < o.margin) continue;
    // Alternate classes so the set stays balanced.
    const bool want_rush = out.size() % 2 == 0;
    if ((r.ttcp_i > r.ttcp_j) != want_rush) std::swap(r.ttcp_i, r.ttcp_j);
    r.label = want_rush ? Intention::Rush : Intention::Yield;
    if (!o.zero_ac) {
      const double v_i = rng.uniform(3.0, 12.0);
      r.a_c_j = cooperative_acceleration(r.ttcp_i * v_i, v_i, r.ttcp_j);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace rtr
