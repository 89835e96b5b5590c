#include "rtr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "json.hpp"
#include "rtr/random.hpp"

namespace rtr {

using nlohmann::json;

std::string_view to_string(VehicleKind kind) { return kind == VehicleKind::CAV ? "CAV" : "HDV"; }

std::string_view to_string(DrivingStyle style) {
  switch (style) {
    case DrivingStyle::Aggressive: return "aggressive";
    case DrivingStyle::Normal: return "normal";
    case DrivingStyle::Conservative: return "conservative";
  }
  return "normal";
}

std::string_view to_string(Intention intention) { return intention == Intention::Rush ? "rush" : "yield"; }

VehicleKind parse_vehicle_kind(std::string_view text) {
  if (text == "CAV" || text == "cav") return VehicleKind::CAV;
  if (text == "HDV" || text == "hdv") return VehicleKind::HDV;
  throw std::invalid_argument("unknown vehicle kind '" + std::string(text) + "'");
}

DrivingStyle parse_driving_style(std::string_view text) {
  if (text == "aggressive") return DrivingStyle::Aggressive;
  if (text == "normal") return DrivingStyle::Normal;
  if (text == "conservative") return DrivingStyle::Conservative;
  throw std::invalid_argument("unknown driving style '" + std::string(text) + "'");
}

Intention parse_intention(std::string_view text) {
  if (text == "rush") return Intention::Rush;
  if (text == "yield") return Intention::Yield;
  throw std::invalid_argument("unknown intention '" + std::string(text) + "'");
}

std::string_view to_string(Approach approach) {
  switch (approach) {
    case Approach::North: return "N";
    case Approach::East: return "E";
    case Approach::South: return "S";
    case Approach::West: return "W";
  }
  return "S";
}

std::string_view to_string(Movement movement) {
  switch (movement) {
    case Movement::Through: return "through";
    case Movement::Left: return "left";
    case Movement::Right: return "right";
  }
  return "through";
}

Approach parse_approach(std::string_view text) {
  if (text == "N" || text == "north") return Approach::North;
  if (text == "E" || text == "east") return Approach::East;
  if (text == "S" || text == "south") return Approach::South;
  if (text == "W" || text == "west") return Approach::West;
  throw std::invalid_argument("unknown approach '" + std::string(text) + "'");
}

Movement parse_movement(std::string_view text) {
  if (text == "through") return Movement::Through;
  if (text == "left") return Movement::Left;
  if (text == "right") return Movement::Right;
  throw std::invalid_argument("unknown movement '" + std::string(text) + "'");
}

const PathSpec* Scenario::find_path(const std::string& id) const {
  for (const auto& p : paths) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

const PathSpec& Scenario::path(const std::string& id) const {
  const PathSpec* p = find_path(id);
  if (p == nullptr) throw std::out_of_range("unknown path '" + id + "'");
  return *p;
}

const VehicleState* Scenario::find_vehicle(VehicleId id) const {
  for (const auto& v : vehicles) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

std::vector<const ConflictPoint*> Scenario::conflicts_between(const std::string& a, const std::string& b) const {
  std::vector<const ConflictPoint*> out;
  if (a == b) return out;
  for (const auto& cp : conflicts) {
    if ((cp.path_a == a && cp.path_b == b) || (cp.path_a == b && cp.path_b == a)) out.push_back(&cp);
  }
  return out;
}

std::vector<const ConflictPoint*> Scenario::conflicts_on(const std::string& path) const {
  std::vector<const ConflictPoint*> out;
  for (const auto& cp : conflicts) {
    if (cp.involves(path)) out.push_back(&cp);
  }
  std::sort(out.begin(), out.end(), [&](const ConflictPoint* x, const ConflictPoint* y) {
    return x->arc_on(path) < y->arc_on(path);
  });
  return out;
}

std::vector<ConflictPoint> compute_conflict_points(const PathSpec& a, const PathSpec& b) {
  std::vector<ConflictPoint> out;
  int next = 0;
  for (const auto& [sa, sb] : polyline_crossings(a.centerline, b.centerline)) {
    out.push_back(ConflictPoint{next++, a.id, b.id, sa, sb});
  }
  return out;
}

std::vector<ConflictPoint> derive_conflicts(const std::vector<PathSpec>& paths) {
  std::vector<ConflictPoint> out;
  int next = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t j = i + 1; j < paths.size(); ++j) {
      // Paths from one approach share the inbound lane; their divergence is not a crossing.
      if (paths[i].approach == paths[j].approach) continue;
      for (auto cp : compute_conflict_points(paths[i], paths[j])) {
        cp.id = next++;
        out.push_back(std::move(cp));
      }
    }
  }
  return out;
}

void validate(const Scenario& scenario) {
  if (!(scenario.dt > 0.0)) throw ConfigError("dt", "must be > 0");
  if (!(scenario.horizon > 0.0)) throw ConfigError("horizon", "must be > 0");
  std::set<std::string> ids;
  for (std::size_t k = 0; k < scenario.paths.size(); ++k) {
    const auto& p = scenario.paths[k];
    const std::string field = "paths[" + std::to_string(k) + "]";
    if (p.id.empty()) throw ConfigError(field + ".id", "must be non-empty");
    if (!ids.insert(p.id).second) throw ConfigError(field + ".id", "duplicate path id '" + p.id + "'");
    if (p.centerline.points().size() < 2) throw ConfigError(field + ".centerline", "needs at least two points");
    if (!(p.length() > 0.0)) throw ConfigError(field + ".centerline", "length must be > 0");
    if (p.stop_line < 0.0 || p.stop_line > p.length()) throw ConfigError(field + ".stop_line", "off path");
  }
  constexpr double tol = 1e-9;
  std::set<std::pair<std::string, std::string>> covered;
  for (std::size_t k = 0; k < scenario.conflicts.size(); ++k) {
    const auto& cp = scenario.conflicts[k];
    const std::string field = "conflicts[" + std::to_string(k) + "]";
    const PathSpec* a = scenario.find_path(cp.path_a);
    const PathSpec* b = scenario.find_path(cp.path_b);
    if (a == nullptr) throw ConfigError(field + ".path_a", "dangling path reference '" + cp.path_a + "'");
    if (b == nullptr) throw ConfigError(field + ".path_b", "dangling path reference '" + cp.path_b + "'");
    if (cp.path_a == cp.path_b) throw ConfigError(field, "path_a and path_b must differ");
    if (cp.s_a < -tol || cp.s_a > a->length() + tol) throw ConfigError(field + ".s_a", "conflict point off path");
    if (cp.s_b < -tol || cp.s_b > b->length() + tol) throw ConfigError(field + ".s_b", "conflict point off path");
    covered.emplace(std::min(cp.path_a, cp.path_b), std::max(cp.path_a, cp.path_b));
  }
  for (const auto& cp : derive_conflicts(scenario.paths)) {
    if (!covered.count({std::min(cp.path_a, cp.path_b), std::max(cp.path_a, cp.path_b)})) {
      throw ConfigError("conflicts", "missing crossing of '" + cp.path_a + "' and '" + cp.path_b + "'");
    }
  }
  std::set<VehicleId> vids;
  for (std::size_t k = 0; k < scenario.vehicles.size(); ++k) {
    const auto& v = scenario.vehicles[k];
    const std::string field = "vehicles[" + std::to_string(k) + "]";
    if (!vids.insert(v.id).second) throw ConfigError(field + ".id", "duplicate vehicle id");
    const PathSpec* p = scenario.find_path(v.path);
    if (p == nullptr) throw ConfigError(field + ".path", "dangling path reference '" + v.path + "'");
    if (!(v.v >= 0.0)) throw ConfigError(field + ".v", "must be >= 0");
    if (v.s < 0.0 || v.s > p->length()) throw ConfigError(field + ".s", "outside [0, path length]");
    if (!(v.half_length > 0.0)) throw ConfigError(field + ".half_length", "must be > 0");
  }
}

namespace {

template <typename T>
T required(const json& node, const char* key, const std::string& field) {
  if (!node.contains(key)) throw ConfigError(field + "." + key, "missing");
  try {
    return node.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field + "." + key, e.what());
  }
}

template <typename F>
auto parse_enum(F&& parse, const std::string& text, const std::string& field) {
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

PathSpec parse_path(const json& node, const std::string& field) {
  PathSpec p;
  p.id = required<std::string>(node, "id", field);
  p.approach = parse_enum(parse_approach, required<std::string>(node, "approach", field), field + ".approach");
  p.movement = parse_enum(parse_movement, node.value("movement", std::string("through")), field + ".movement");
  const auto pts = required<std::vector<std::vector<double>>>(node, "centerline", field);
  std::vector<Point2<double>> points;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (pts[k].size() != 2) throw ConfigError(field + ".centerline[" + std::to_string(k) + "]", "expected [x, y]");
    points.emplace_back(pts[k][0], pts[k][1]);
  }
  try {
    p.centerline = Polyline<double>(std::move(points));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field + ".centerline", e.what());
  }
  return p;
}

}  // namespace

Scenario load_scenario(std::string_view config_text) {
  json doc;
  try {
    doc = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("parse failure: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("", "expected a JSON object");
  Scenario sc;
  sc.dt = doc.value("dt", 0.1);
  sc.horizon = doc.value("horizon", 30.0);
  if (!doc.contains("paths") || !doc["paths"].is_array()) throw ConfigError("paths", "missing path list");
  for (std::size_t k = 0; k < doc["paths"].size(); ++k) {
    sc.paths.push_back(parse_path(doc["paths"][k], "paths[" + std::to_string(k) + "]"));
  }
  if (doc.contains("conflicts")) {
    const auto& list = doc["conflicts"];
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string field = "conflicts[" + std::to_string(k) + "]";
      ConflictPoint cp;
      cp.id = list[k].value("id", static_cast<int>(k));
      cp.path_a = required<std::string>(list[k], "path_a", field);
      cp.path_b = required<std::string>(list[k], "path_b", field);
      cp.s_a = required<double>(list[k], "s_a", field);
      cp.s_b = required<double>(list[k], "s_b", field);
      sc.conflicts.push_back(std::move(cp));
    }
  } else {
    sc.conflicts = derive_conflicts(sc.paths);
  }
  // Default stop line: 5 m before the first conflict point on the path.
  for (std::size_t k = 0; k < sc.paths.size(); ++k) {
    auto& p = sc.paths[k];
    const auto& node = doc["paths"][k];
    if (node.contains("stop_line")) {
      p.stop_line = required<double>(node, "stop_line", "paths[" + std::to_string(k) + "]");
    } else {
      double first = p.length();
      for (const auto& cp : sc.conflicts) {
        if (cp.involves(p.id)) first = std::min(first, cp.arc_on(p.id));
      }
      p.stop_line = std::max(0.0, first - 5.0);
    }
  }
  if (doc.contains("vehicles")) {
    const auto& list = doc["vehicles"];
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string field = "vehicles[" + std::to_string(k) + "]";
      VehicleState v;
      v.id = required<int>(list[k], "id", field);
      v.kind = parse_enum(parse_vehicle_kind, required<std::string>(list[k], "kind", field), field + ".kind");
      if (list[k].contains("style")) {
        v.style = parse_enum(parse_driving_style, required<std::string>(list[k], "style", field), field + ".style");
      }
      v.path = required<std::string>(list[k], "path", field);
      v.s = required<double>(list[k], "s", field);
      v.v = required<double>(list[k], "v", field);
      v.half_length = list[k].value("half_length", 2.5);
      if (list[k].contains("script")) {
        for (const auto& step : list[k]["script"]) {
          ScriptedDecision d;
          d.t_from = required<double>(step, "t", field + ".script");
          d.decision = parse_enum(parse_intention, required<std::string>(step, "decision", field + ".script"),
                                  field + ".script.decision");
          v.script.push_back(d);
        }
      }
      sc.vehicles.push_back(std::move(v));
    }
  }
  validate(sc);
  return sc;
}

std::string dump_scenario(const Scenario& scenario) {
  json doc;
  doc["dt"] = scenario.dt;
  doc["horizon"] = scenario.horizon;
  doc["paths"] = json::array();
  for (const auto& p : scenario.paths) {
    json pts = json::array();
    for (const auto& q : p.centerline.points()) pts.push_back({q.x(), q.y()});
    doc["paths"].push_back({{"id", p.id},
                            {"approach", to_string(p.approach)},
                            {"movement", to_string(p.movement)},
                            {"centerline", pts},
                            {"stop_line", p.stop_line}});
  }
  doc["conflicts"] = json::array();
  for (const auto& cp : scenario.conflicts) {
    doc["conflicts"].push_back(
        {{"id", cp.id}, {"path_a", cp.path_a}, {"path_b", cp.path_b}, {"s_a", cp.s_a}, {"s_b", cp.s_b}});
  }
  doc["vehicles"] = json::array();
  for (const auto& v : scenario.vehicles) {
    json node = {{"id", v.id},     {"kind", to_string(v.kind)}, {"path", v.path},
                 {"s", v.s},       {"v", v.v},                  {"half_length", v.half_length}};
    if (v.is_hdv()) node["style"] = to_string(v.style);
    if (!v.script.empty()) {
      node["script"] = json::array();
      for (const auto& d : v.script) node["script"].push_back({{"t", d.t_from}, {"decision", to_string(d.decision)}});
    }
    doc["vehicles"].push_back(std::move(node));
  }
  return doc.dump(2);
}

namespace {

Point2<double> rotate(const Point2<double>& p, int quarter_turns) {
  switch (((quarter_turns % 4) + 4) % 4) {
    case 1: return {-p.y(), p.x()};
    case 2: return {-p.x(), -p.y()};
    case 3: return {p.y(), -p.x()};
    default: return p;
  }
}

}  // namespace

Scenario default_template(const TemplateOptions& options) {
  const double box = options.box_half_width;
  const double lo = options.lane_offset;
  const double up = options.upstream;
  const double down = options.downstream;
  // Each approach is built heading north from the south arm and rotated into place.
  const std::pair<Approach, int> arms[] = {
      {Approach::South, 0}, {Approach::East, 1}, {Approach::North, 2}, {Approach::West, 3}};
  Scenario sc;
  for (const auto& [approach, turns] : arms) {
    const std::string prefix(to_string(approach));
    {
      std::vector<Point2<double>> pts = {rotate({lo, -(box + up)}, turns), rotate({lo, box + down}, turns)};
      sc.paths.push_back(PathSpec{prefix + "_through", approach, Movement::Through, Polyline<double>(pts), up});
    }
    if (options.include_left_turns) {
      std::vector<Point2<double>> pts = {rotate({lo, -(box + up)}, turns), rotate({lo, -box}, turns)};
      const Point2<double> center(-box, -box);
      const double radius = box + lo;
      constexpr int arc_segments = 16;
      for (int k = 1; k <= arc_segments; ++k) {
        const double angle = std::numbers::pi * 0.5 * k / arc_segments;
        pts.push_back(rotate(center + radius * Point2<double>(std::cos(angle), std::sin(angle)), turns));
      }
      pts.push_back(rotate({-(box + down), lo}, turns));
      sc.paths.push_back(PathSpec{prefix + "_left", approach, Movement::Left, Polyline<double>(pts), up});
    }
  }
  sc.conflicts = derive_conflicts(sc.paths);
  validate(sc);
  return sc;
}

Scenario randomize(std::uint64_t seed, double penetration, int n_vehicles, const Scenario& scenario_template,
                   const SpawnWindow& window) {
  if (n_vehicles < 1) throw std::invalid_argument("randomize: n_vehicles must be >= 1");
  if (!(penetration >= 0.0 && penetration <= 1.0)) throw std::invalid_argument("randomize: penetration outside [0,1]");
  if (scenario_template.paths.empty()) throw std::invalid_argument("randomize: template has no paths");
  Scenario sc = scenario_template;
  sc.vehicles.clear();
  Rng rng(seed);

  const int n_cav = static_cast<int>(std::lround(penetration * n_vehicles));
  std::vector<int> order(n_vehicles);
  for (int k = 0; k < n_vehicles; ++k) order[k] = k;
  for (int k = n_vehicles - 1; k > 0; --k) {
    std::swap(order[k], order[rng.below(static_cast<std::uint64_t>(k) + 1)]);
  }
  std::vector<bool> is_cav(n_vehicles, false);
  for (int k = 0; k < n_cav; ++k) is_cav[order[k]] = true;

  for (int k = 0; k < n_vehicles; ++k) {
    VehicleState v;
    v.id = k + 1;
    v.kind = is_cav[k] ? VehicleKind::CAV : VehicleKind::HDV;
    const auto style_draw = rng.below(3);
    v.style = v.is_hdv() ? static_cast<DrivingStyle>(style_draw) : DrivingStyle::Normal;
    v.half_length = window.half_length;
    bool placed = false;
    for (int attempt = 0; attempt < window.attempts && !placed; ++attempt) {
      const auto& path = scenario_template.paths[rng.below(scenario_template.paths.size())];
      const double s = path.stop_line + rng.uniform(window.s_min, window.s_max);
      const double speed = rng.uniform(window.v_min, window.v_max);
      if (s < 0.0) continue;
      bool clear = true;
      for (const auto& other : sc.vehicles) {
        const auto& op = sc.path(other.path);
        // Paths from one approach share the inbound lane upstream of the stop line.
        if (op.approach == path.approach && std::abs(other.s - s) < window.min_spacing) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      v.path = path.id;
      v.s = s;
      v.v = speed;
      placed = true;
    }
    if (!placed) throw PlacementError("cannot place vehicle " + std::to_string(v.id) + " without overlap");
    sc.vehicles.push_back(std::move(v));
  }
  validate(sc);
  return sc;
}

}  // namespace rtr
