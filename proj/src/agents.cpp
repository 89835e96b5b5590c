#include "rtr/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rtr/random.hpp"

namespace rtr {

const HdvStyleParams& StyleTable::of(DrivingStyle style) const {
  switch (style) {
    case DrivingStyle::Aggressive: return aggressive;
    case DrivingStyle::Conservative: return conservative;
    case DrivingStyle::Normal: break;
  }
  return normal;
}

namespace {

Ttcp ttcp_to(const VehicleState& v, const ConflictPoint& cp) { return ttcp(std::max(0.0, distance_to(v, cp)), v.v); }

}  // namespace

Intention hdv_decide(const VehicleState& self, const VehicleState& opponent, const ConflictPoint& cp,
                     const HdvStyleParams& style, std::uint64_t noise_seed) {
  const Ttcp mine = ttcp_to(self, cp);
  if (mine.infinite) return Intention::Yield;
  const Ttcp theirs = ttcp_to(opponent, cp);
  Rng rng(noise_seed);
  const double eta = style.sigma > 0.0 ? style.sigma * rng.normal() : 0.0;
  const double advantage = theirs.seconds - mine.seconds + eta;
  return advantage > style.theta ? Intention::Rush : Intention::Yield;
}

Intention HdvDecisionMemory::decide(double t, const VehicleState& self, const VehicleState& opponent,
                                    const ConflictPoint& cp, const HdvStyleParams& style) {
  const ScriptedDecision* scripted = nullptr;
  for (const auto& d : self.script) {
    if (d.t_from <= t + 1e-9) scripted = &d;
  }
  const auto key = std::make_pair(self.id, opponent.id);
  auto it = entries_.find(key);
  Intention next;
  if (scripted != nullptr) {
    next = scripted->decision;
  } else if (it != entries_.end() && t - it->second.t_decided < style.commit_time - 1e-9) {
    return it->second.decision;
  } else {
    const std::uint64_t epoch = it == entries_.end() ? 0 : it->second.epoch + 1;
    next = hdv_decide(self, opponent, cp, style,
                      mix_seed({seed_, static_cast<std::uint64_t>(self.id), static_cast<std::uint64_t>(opponent.id), epoch}));
    if (it == entries_.end()) {
      it = entries_.emplace(key, Entry{next, t, epoch, {}}).first;
    }
    it->second.epoch = epoch;
    it->second.t_decided = t;
  }
  if (it == entries_.end()) it = entries_.emplace(key, Entry{next, t, 0, {}}).first;
  if (it->second.decision != next) {
    it->second.changes.push_back(t);
    it->second.decision = next;
  }
  return next;
}

int HdvDecisionMemory::flips(VehicleId self, VehicleId opponent) const {
  const auto it = entries_.find({self, opponent});
  return it == entries_.end() ? 0 : static_cast<int>(it->second.changes.size());
}

const std::vector<double>& HdvDecisionMemory::change_times(VehicleId self, VehicleId opponent) const {
  static const std::vector<double> empty;
  const auto it = entries_.find({self, opponent});
  return it == entries_.end() ? empty : it->second.changes;
}

std::optional<std::pair<double, double>> lane_leader(const VehicleState& self, const Scenario& scenario) {
  const PathSpec& mine = scenario.path(self.path);
  const VehicleState* best = nullptr;
  for (const auto& other : scenario.vehicles) {
    if (other.id == self.id || other.s <= self.s) continue;
    bool same_lane = other.path == self.path;
    if (!same_lane) {
      const PathSpec& theirs = scenario.path(other.path);
      same_lane = theirs.approach == mine.approach && other.s < theirs.stop_line && self.s < mine.stop_line;
    }
    if (same_lane && (best == nullptr || other.s < best->s)) best = &other;
  }
  if (best == nullptr) return std::nullopt;
  return std::make_pair(best->s - self.s - self.half_length - best->half_length, best->v);
}

namespace {

double follow(double v, double gap, double v_leader, const IdmParams& idm) {
  // A non-positive gap means the leader is already overlapping; brake hard.
  return idm_acceleration(v, std::max(gap, 1e-2), v_leader, idm);
}

double base_acceleration(const VehicleState& self, const Scenario& scenario, const IdmParams& idm) {
  double a = idm_free_acceleration(self.v, idm);
  if (const auto leader = lane_leader(self, scenario)) {
    a = std::min(a, follow(self.v, leader->first, leader->second, idm));
  }
  return a;
}

bool committed(const VehicleState& self, const ConflictPoint& cp) {
  return distance_to(self, cp) - self.half_length < 0.0;
}

}  // namespace

double hdv_accelerate(const VehicleState& self, const std::vector<OpponentDecision>& decisions,
                      const Scenario& scenario, const IdmParams& idm) {
  double a = base_acceleration(self, scenario, idm);
  for (const auto& d : decisions) {
    if (d.decision != Intention::Yield) continue;
    const VehicleState* opp = scenario.find_vehicle(d.opponent);
    const ConflictPoint* cp = nullptr;
    for (const auto& c : scenario.conflicts) {
      if (c.id == d.conflict) cp = &c;
    }
    if (opp == nullptr || cp == nullptr || has_cleared(*opp, *cp)) continue;
    const double gap = distance_to(self, *cp) - self.half_length - opp->half_length;
    if (gap <= 0.0) continue;  // cannot stop short of the point any more
    a = std::min(a, idm_acceleration(self.v, gap, 0.0, idm));
  }
  return a;
}

std::optional<double> virtual_leader_acceleration(const VehicleState& follower, const VehicleState& leader,
                                                  const ConflictPoint& cp, const IdmParams& idm) {
  if (committed(follower, cp)) return std::nullopt;
  const LeaderGap g = virtual_leader_gap(follower, leader, cp);
  if (g.cleared) return std::nullopt;
  return follow(follower.v, g.gap, g.v_leader, idm);
}

bool arrives_earlier(const VehicleState& opponent, const VehicleState& self, const ConflictPoint& cp) {
  if (distance_to(opponent, cp) <= 0.0) return true;
  const Ttcp theirs = ttcp_to(opponent, cp);
  const Ttcp mine = ttcp_to(self, cp);
  if (theirs.infinite) return false;
  if (mine.infinite) return true;
  if (theirs.seconds != mine.seconds) return theirs.seconds < mine.seconds;
  return opponent.id < self.id;
}

double cav_single_accelerate(const VehicleState& self, const Scenario& scenario, const IdmParams& idm) {
  double a = base_acceleration(self, scenario, idm);
  for (const auto& other : scenario.vehicles) {
    if (other.id == self.id) continue;
    for (const ConflictPoint* cp : scenario.conflicts_between(self.path, other.path)) {
      if (has_cleared(other, *cp) || committed(self, *cp)) continue;
      if (!arrives_earlier(other, self, *cp)) continue;
      if (const auto va = virtual_leader_acceleration(self, other, *cp, idm)) a = std::min(a, *va);
    }
  }
  return a;
}

double cav_ordered_accelerate(const VehicleState& self, const PassingOrder& order, const Scenario& scenario,
                              const IdmParams& idm) {
  double a = base_acceleration(self, scenario, idm);
  const auto mine = order.position(self.id);
  if (!mine) return cav_single_accelerate(self, scenario, idm);
  for (std::size_t k = 0; k < *mine; ++k) {
    const VehicleState* other = scenario.find_vehicle(order.order[k]);
    if (other == nullptr) continue;
    for (const ConflictPoint* cp : scenario.conflicts_between(self.path, other->path)) {
      if (const auto va = virtual_leader_acceleration(self, *other, *cp, idm)) a = std::min(a, *va);
    }
  }
  return a;
}

std::string_view to_string(BaselineKind kind) { return kind == BaselineKind::FCFS ? "fcfs" : "idfst"; }

namespace {

/// Kahn's algorithm over `pred` masks, always taking the available vertex of
/// lowest rank; vertices left on a cycle are appended by rank.
std::vector<int> ranked_topological(const std::vector<std::uint64_t>& pred, const std::vector<double>& rank) {
  const int n = static_cast<int>(pred.size());
  std::vector<int> out;
  std::uint64_t placed = 0;
  while (static_cast<int>(out.size()) < n) {
    int pick = -1;
    for (int pass = 0; pass < 2 && pick < 0; ++pass) {
      for (int k = 0; k < n; ++k) {
        if ((placed >> k) & 1u) continue;
        if (pass == 0 && (pred[k] & ~placed) != 0) continue;
        if (pick < 0 || rank[k] < rank[pick]) pick = k;
      }
    }
    out.push_back(pick);
    placed |= std::uint64_t{1} << pick;
  }
  return out;
}

bool earlier(const SchedulingProblem& p, int a, int b) {
  if (p.t_free(a) != p.t_free(b)) return p.t_free(a) < p.t_free(b);
  return p.ids[a] < p.ids[b];
}

PassingOrder to_order(const SchedulingProblem& p, const std::vector<int>& idx) {
  PassingOrder out;
  for (int k : idx) out.order.push_back(p.ids[k]);
  return out;
}

}  // namespace

PassingOrder fcfs_order(const SchedulingProblem& problem) {
  const int n = problem.size();
  std::vector<int> by_arrival(n);
  std::iota(by_arrival.begin(), by_arrival.end(), 0);
  std::sort(by_arrival.begin(), by_arrival.end(), [&](int a, int b) { return earlier(problem, a, b); });
  std::vector<double> rank(n);
  for (int k = 0; k < n; ++k) rank[by_arrival[k]] = k;
  std::vector<std::uint64_t> pred(n, 0);
  for (const auto& [front, back] : problem.lane_order) pred[back] |= std::uint64_t{1} << front;
  return to_order(problem, ranked_topological(pred, rank));
}

PassingOrder idfst_order(const SchedulingProblem& problem) {
  const int n = problem.size();
  // Arrival-oriented conflict graph; lanes are oriented by physical order.
  std::vector<std::vector<int>> out_edges(n);
  std::vector<std::uint64_t> pred(n, 0);
  std::vector<std::vector<bool>> lane(n, std::vector<bool>(n, false));
  for (const auto& [front, back] : problem.lane_order) {
    lane[front][back] = lane[back][front] = true;
    out_edges[front].push_back(back);
    pred[back] |= std::uint64_t{1} << front;
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b || !problem.shares(a, b) || lane[a][b] || !earlier(problem, a, b)) continue;
      out_edges[a].push_back(b);
      pred[b] |= std::uint64_t{1} << a;
    }
  }
  for (auto& edges : out_edges) {
    std::sort(edges.begin(), edges.end(), [&](int a, int b) { return earlier(problem, a, b); });
  }
  std::vector<int> by_arrival(n);
  std::iota(by_arrival.begin(), by_arrival.end(), 0);
  std::sort(by_arrival.begin(), by_arrival.end(), [&](int a, int b) { return earlier(problem, a, b); });

  // Depth-first preorder, restarting from the earliest unvisited vehicle.
  std::vector<double> rank(n, 0.0);
  std::vector<bool> visited(n, false);
  int next_rank = 0;
  for (int start : by_arrival) {
    if (visited[start]) continue;
    std::vector<int> stack{start};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (visited[v]) continue;
      visited[v] = true;
      rank[v] = next_rank++;
      for (auto it = out_edges[v].rbegin(); it != out_edges[v].rend(); ++it) {
        if (!visited[*it]) stack.push_back(*it);
      }
    }
  }
  return to_order(problem, ranked_topological(pred, rank));
}

PassingOrder fcfs_order(const Scenario& scenario, const IdmParams& idm) {
  return fcfs_order(make_problem(scenario, idm));
}

PassingOrder idfst_order(const Scenario& scenario, const IdmParams& idm) {
  return idfst_order(make_problem(scenario, idm));
}

}  // namespace rtr
