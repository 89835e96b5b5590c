#include "rtr/planner.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "rtr/random.hpp"

namespace rtr {

std::optional<std::size_t> PassingOrder::position(VehicleId id) const {
  const auto it = std::find(order.begin(), order.end(), id);
  if (it == order.end()) return std::nullopt;
  return static_cast<std::size_t>(it - order.begin());
}

namespace {

struct WeightedEdge {
  PrecedenceConstraint c;
  double weight = 0.0;
};

bool acyclic(const std::vector<const WeightedEdge*>& edges) {
  std::set<VehicleId> nodes;
  for (const auto* e : edges) {
    nodes.insert(e->c.before);
    nodes.insert(e->c.after);
  }
  std::map<VehicleId, int> indegree;
  for (VehicleId v : nodes) indegree[v] = 0;
  for (const auto* e : edges) ++indegree[e->c.after];
  std::vector<VehicleId> ready;
  for (const auto& [v, d] : indegree) {
    if (d == 0) ready.push_back(v);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    const VehicleId v = ready.back();
    ready.pop_back();
    ++seen;
    for (const auto* e : edges) {
      if (e->c.before == v && --indegree[e->c.after] == 0) ready.push_back(e->c.after);
    }
  }
  return seen == nodes.size();
}

}  // namespace

ConstraintSet build_constraints(const std::vector<DirectedIntention>& intentions) {
  // Merge duplicates, keeping the most confident source.
  std::map<std::pair<VehicleId, VehicleId>, WeightedEdge> merged;
  for (const auto& in : intentions) {
    if (in.hdv == in.opponent) continue;
    PrecedenceConstraint c = in.intention == Intention::Rush ? PrecedenceConstraint{in.hdv, in.opponent, in.hdv}
                                                             : PrecedenceConstraint{in.opponent, in.hdv, in.hdv};
    const double w = std::abs(in.margin);
    auto [it, inserted] = merged.try_emplace({c.before, c.after}, WeightedEdge{c, w});
    if (!inserted && w > it->second.weight) it->second = WeightedEdge{c, w};
  }
  std::vector<WeightedEdge> edges;
  for (auto& [key, e] : merged) edges.push_back(e);

  ConstraintSet out;
  std::vector<const WeightedEdge*> all;
  for (const auto& e : edges) all.push_back(&e);
  if (acyclic(all)) {
    for (const auto& e : edges) out.constraints.push_back(e.c);
    return out;
  }
  out.had_cycle = true;

  // Smallest removal set first; among equal sizes the lowest total |margin|.
  // Exact for the handful of constraints a planning episode produces.
  const std::size_t n = edges.size();
  std::vector<bool> best_drop;
  if (n <= 16) {
    double best_weight = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= n && best_drop.empty(); ++k) {
      std::vector<bool> pick(n, false);
      std::fill(pick.end() - static_cast<std::ptrdiff_t>(k), pick.end(), true);
      do {
        std::vector<const WeightedEdge*> kept;
        double weight = 0.0;
        for (std::size_t e = 0; e < n; ++e) {
          if (pick[e]) {
            weight += edges[e].weight;
          } else {
            kept.push_back(&edges[e]);
          }
        }
        if (weight < best_weight && acyclic(kept)) {
          best_weight = weight;
          best_drop = pick;
        }
      } while (std::next_permutation(pick.begin(), pick.end()));
    }
  } else {
    // Greedy: admit constraints from most to least confident.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return edges[a].weight > edges[b].weight; });
    best_drop.assign(n, false);
    std::vector<const WeightedEdge*> kept;
    for (std::size_t e : idx) {
      kept.push_back(&edges[e]);
      if (!acyclic(kept)) {
        kept.pop_back();
        best_drop[e] = true;
      }
    }
  }
  for (std::size_t e = 0; e < n; ++e) {
    (best_drop[e] ? out.dropped : out.constraints).push_back(edges[e].c);
  }
  return out;
}

int SchedulingProblem::index_of(VehicleId id) const {
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return -1;
  return static_cast<int>(it - ids.begin());
}

SchedulingProblem make_problem(const Scenario& scenario, const IdmParams& idm) {
  std::vector<const VehicleState*> live;
  for (const auto& v : scenario.vehicles) {
    for (const ConflictPoint* cp : scenario.conflicts_on(v.path)) {
      if (!has_cleared(v, *cp)) {
        live.push_back(&v);
        break;
      }
    }
  }
  std::sort(live.begin(), live.end(), [](const VehicleState* a, const VehicleState* b) { return a->id < b->id; });
  const int n = static_cast<int>(live.size());
  SchedulingProblem p;
  p.t_free.resize(n);
  p.shares = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  for (int i = 0; i < n; ++i) {
    const VehicleState& v = *live[i];
    p.ids.push_back(v.id);
    double d = 0.0;
    for (const ConflictPoint* cp : scenario.conflicts_on(v.path)) {
      if (!has_cleared(v, *cp)) {
        d = std::max(0.0, distance_to(v, *cp));
        break;
      }
    }
    p.t_free(i) = free_flow_travel_time(d, v.v, idm);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const VehicleState& a = *live[i];
      const VehicleState& b = *live[j];
      const PathSpec& pa = scenario.path(a.path);
      const PathSpec& pb = scenario.path(b.path);
      bool shares = false;
      if (a.path == b.path) {
        shares = true;
      } else {
        for (const ConflictPoint* cp : scenario.conflicts_between(a.path, b.path)) {
          if (!has_cleared(a, *cp) && !has_cleared(b, *cp)) shares = true;
        }
      }
      p.shares(i, j) = p.shares(j, i) = shares;
      const bool same_lane = a.path == b.path || (pa.approach == pb.approach && a.s < pa.stop_line && b.s < pb.stop_line);
      if (same_lane) {
        if (a.s >= b.s) {
          p.lane_order.emplace_back(i, j);
        } else {
          p.lane_order.emplace_back(j, i);
        }
      }
    }
  }
  return p;
}

namespace {

ScheduleEvaluation evaluate_indices(const int* order, int count, const SchedulingProblem& problem, double delta_safe) {
  ScheduleEvaluation ev;
  ev.ids.reserve(count);
  ev.t_free.reserve(count);
  ev.t_actual.reserve(count);
  ev.reward.reserve(count);
  for (int k = 0; k < count; ++k) {
    const int i = order[k];
    double t = problem.t_free(i);
    for (int m = 0; m < k; ++m) {
      if (problem.shares(i, order[m])) t = std::max(t, ev.t_actual[m] + delta_safe);
    }
    ev.ids.push_back(problem.ids[i]);
    ev.t_free.push_back(problem.t_free(i));
    ev.t_actual.push_back(t);
    ev.reward.push_back(problem.t_free(i) - t);
    ev.total += problem.t_free(i) - t;
  }
  return ev;
}

std::vector<int> to_indices(const PassingOrder& order, const SchedulingProblem& problem) {
  std::vector<int> idx;
  std::vector<bool> seen(problem.ids.size(), false);
  for (VehicleId id : order.order) {
    const int k = problem.index_of(id);
    if (k < 0) throw std::domain_error("evaluate_order: vehicle " + std::to_string(id) + " is not planned");
    if (seen[k]) throw std::domain_error("evaluate_order: duplicate vehicle " + std::to_string(id));
    seen[k] = true;
    idx.push_back(k);
  }
  if (idx.size() != problem.ids.size()) throw std::domain_error("evaluate_order: vehicle missing from order");
  return idx;
}

}  // namespace

ScheduleEvaluation evaluate_order(const std::vector<int>& order, const SchedulingProblem& problem, double delta_safe) {
  return evaluate_indices(order.data(), static_cast<int>(order.size()), problem, delta_safe);
}

ScheduleEvaluation evaluate_order(const PassingOrder& order, const SchedulingProblem& problem, double delta_safe) {
  return evaluate_order(to_indices(order, problem), problem, delta_safe);
}

ScheduleEvaluation evaluate_order(const PassingOrder& order, const Scenario& scenario, double delta_safe,
                                  const IdmParams& idm) {
  return evaluate_order(order, make_problem(scenario, idm), delta_safe);
}

void validate(const MctsConfig& config) {
  if (config.iterations < 1) throw ConfigError("planner.iterations", "must be >= 1");
  if (!(config.delta_safe > 0.0)) throw ConfigError("planner.delta_safe", "must be > 0");
  if (!std::isfinite(config.c_explore) || config.c_explore < 0.0) throw ConfigError("planner.c_explore", "must be >= 0");
  if (!std::isfinite(config.lambda_penalty)) throw ConfigError("planner.lambda_penalty", "must be finite");
}

int count_violations(const PassingOrder& order, const std::vector<PrecedenceConstraint>& constraints) {
  int violations = 0;
  for (const auto& c : constraints) {
    const auto pb = order.position(c.before);
    const auto pa = order.position(c.after);
    if (pb && pa && *pb > *pa) ++violations;
  }
  return violations;
}

double simulate_reward(const PassingOrder& order, const std::vector<PrecedenceConstraint>& constraints,
                       const SchedulingProblem& problem, const MctsConfig& config) {
  return evaluate_order(order, problem, config.delta_safe).total +
         config.lambda_penalty * static_cast<double>(count_violations(order, constraints));
}

double simulate_reward(const PassingOrder& order, const std::vector<DirectedIntention>& intentions,
                       const Scenario& scenario, const MctsConfig& config, const IdmParams& idm) {
  return simulate_reward(order, build_constraints(intentions).constraints, make_problem(scenario, idm), config);
}

MctsTree::MctsTree(const SchedulingProblem& problem, const std::vector<PrecedenceConstraint>& constraints,
                   bool hard_prune)
    : n_(problem.size()), hard_prune_(hard_prune), pred_(static_cast<std::size_t>(problem.size()), 0) {
  if (n_ > 64) throw std::invalid_argument("MctsTree: at most 64 vehicles per search");
  for (const auto& [front, back] : problem.lane_order) pred_[back] |= std::uint64_t{1} << front;
  if (hard_prune_) {
    for (const auto& c : constraints) {
      const int b = problem.index_of(c.before);
      const int a = problem.index_of(c.after);
      if (a >= 0 && b >= 0) pred_[a] |= std::uint64_t{1} << b;
    }
  }
  MctsNode root;
  fill_candidates(root);
  nodes_.push_back(std::move(root));
}

void MctsTree::fill_candidates(MctsNode& node) const {
  node.untried.clear();
  for (int k = 0; k < n_; ++k) {
    if ((node.placed >> k) & 1u) continue;
    if (legal(k, node.placed)) node.untried.push_back(k);
  }
}

int MctsTree::add_child(int parent, int vehicle) {
  MctsNode child;
  child.vehicle = vehicle;
  child.parent = parent;
  child.depth = node(parent).depth + 1;
  child.placed = node(parent).placed | (std::uint64_t{1} << vehicle);
  fill_candidates(child);
  nodes_.push_back(std::move(child));
  const int id = static_cast<int>(nodes_.size()) - 1;
  node(parent).children.push_back(id);
  return id;
}

double ucb_score(double mean, int parent_visits, int child_visits, double c_explore) {
  return mean + c_explore * std::sqrt(2.0 * std::log(static_cast<double>(parent_visits)) / child_visits);
}

std::optional<int> select_child(const MctsTree& tree, int node, double c_explore) {
  const MctsNode& p = tree.node(node);
  std::optional<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  VehicleId best_vehicle = std::numeric_limits<int>::max();
  for (int c : p.children) {
    const MctsNode& ch = tree.node(c);
    const double score = ch.visits == 0 ? std::numeric_limits<double>::infinity()
                                        : ucb_score(ch.mean(), std::max(p.visits, 1), ch.visits, c_explore);
    if (score > best_score || (score == best_score && ch.vehicle < best_vehicle)) {
      best = c;
      best_score = score;
      best_vehicle = ch.vehicle;
    }
  }
  return best;
}

std::optional<int> expand(MctsTree& tree, int node) {
  MctsNode& p = tree.node(node);
  if (p.untried.empty()) return std::nullopt;
  const int vehicle = p.untried.front();
  p.untried.erase(p.untried.begin());
  return tree.add_child(node, vehicle);
}

void backpropagate(MctsTree& tree, const std::vector<int>& path, double reward) {
  for (int k : path) {
    MctsNode& n = tree.node(k);
    n.visits += 1;
    n.q_sum += reward;
  }
}

namespace {

bool constraints_feasible(const SchedulingProblem& problem, const std::vector<PrecedenceConstraint>& constraints) {
  const int n = problem.size();
  std::vector<std::uint64_t> pred(static_cast<std::size_t>(n), 0);
  for (const auto& [front, back] : problem.lane_order) pred[back] |= std::uint64_t{1} << front;
  for (const auto& c : constraints) {
    const int b = problem.index_of(c.before);
    const int a = problem.index_of(c.after);
    if (a >= 0 && b >= 0) pred[a] |= std::uint64_t{1} << b;
  }
  std::uint64_t placed = 0;
  for (int round = 0; round < n; ++round) {
    bool progressed = false;
    for (int k = 0; k < n; ++k) {
      if (((placed >> k) & 1u) == 0 && (pred[k] & ~placed) == 0) {
        placed |= std::uint64_t{1} << k;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return std::popcount(placed) == n;
}

struct IndexConstraint {
  int before;
  int after;
};

/// Fast inner evaluation on index arrays; mirrors evaluate_order + penalty.
class RolloutEvaluator {
 public:
  RolloutEvaluator(const SchedulingProblem& problem, const std::vector<PrecedenceConstraint>& constraints,
                   const MctsConfig& config)
      : n_(problem.size()), t_free_(problem.t_free.data(), problem.t_free.data() + problem.size()),
        share_mask_(static_cast<std::size_t>(problem.size()), 0), delta_(config.delta_safe),
        lambda_(config.lambda_penalty), t_actual_(static_cast<std::size_t>(problem.size())),
        position_(static_cast<std::size_t>(problem.size())) {
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        if (i != j && problem.shares(i, j)) share_mask_[i] |= std::uint64_t{1} << j;
      }
    }
    for (const auto& c : constraints) {
      const int b = problem.index_of(c.before);
      const int a = problem.index_of(c.after);
      if (a >= 0 && b >= 0) constraints_.push_back({b, a});
    }
  }

  double operator()(const std::vector<int>& order) {
    double total = 0.0;
    for (int k = 0; k < n_; ++k) {
      const int i = order[k];
      double t = t_free_[i];
      for (int m = 0; m < k; ++m) {
        if ((share_mask_[i] >> order[m]) & 1u) t = std::max(t, t_actual_[m] + delta_);
      }
      t_actual_[k] = t;
      total += t_free_[i] - t;
      position_[i] = k;
    }
    int violations = 0;
    for (const auto& c : constraints_) violations += position_[c.before] > position_[c.after];
    return total + lambda_ * violations;
  }

 private:
  int n_;
  std::vector<double> t_free_;
  std::vector<std::uint64_t> share_mask_;
  double delta_;
  double lambda_;
  std::vector<IndexConstraint> constraints_;
  std::vector<double> t_actual_;
  std::vector<int> position_;
};

}  // namespace

SearchResult search(const SchedulingProblem& problem, const std::vector<PrecedenceConstraint>& constraints,
                    const MctsConfig& config) {
  validate(config);
  const int n = problem.size();
  const bool feasible = constraints_feasible(problem, constraints);
  const bool prune = config.hard_prune && feasible;
  SearchResult result{PassingOrder{}, 0.0, ScheduleEvaluation{}, 0, !feasible, MctsTree(problem, constraints, prune)};
  result.order.constraints = constraints;
  if (n == 0) return result;

  MctsTree& tree = result.tree;
  RolloutEvaluator evaluate(problem, constraints, config);
  Rng rng(mix_seed({config.seed, static_cast<std::uint64_t>(n)}));
  std::vector<int> path;
  std::vector<int> order;
  std::vector<int> candidates;
  path.reserve(static_cast<std::size_t>(n) + 1);
  order.reserve(static_cast<std::size_t>(n));

  for (int it = 0; it < config.iterations; ++it) {
    path.assign(1, tree.root());
    order.clear();
    int node = tree.root();
    while (true) {
      if (!tree.node(node).untried.empty()) {
        node = *expand(tree, node);
        path.push_back(node);
        order.push_back(tree.node(node).vehicle);
        break;
      }
      const auto next = select_child(tree, node, config.c_explore);
      if (!next) break;
      node = *next;
      path.push_back(node);
      order.push_back(tree.node(node).vehicle);
    }
    // Default policy: uniformly random legal completion.
    std::uint64_t placed = tree.node(node).placed;
    while (static_cast<int>(order.size()) < n) {
      candidates.clear();
      for (int k = 0; k < n; ++k) {
        if (((placed >> k) & 1u) == 0 && tree.legal(k, placed)) candidates.push_back(k);
      }
      if (candidates.empty()) {
        for (int k = 0; k < n; ++k) {
          if (((placed >> k) & 1u) == 0) candidates.push_back(k);
        }
      }
      const int pick = candidates[rng.below(candidates.size())];
      order.push_back(pick);
      placed |= std::uint64_t{1} << pick;
    }
    backpropagate(tree, path, evaluate(order));
  }
  result.iterations = config.iterations;

  // Most visited path; ties by mean reward, then lowest id.
  std::vector<int> best;
  std::uint64_t placed = 0;
  int node = tree.root();
  while (!tree.node(node).children.empty()) {
    int pick = -1;
    for (int c : tree.node(node).children) {
      if (pick < 0) {
        pick = c;
        continue;
      }
      const MctsNode& a = tree.node(c);
      const MctsNode& b = tree.node(pick);
      if (a.visits > b.visits || (a.visits == b.visits && (a.mean() > b.mean() ||
                                                            (a.mean() == b.mean() && a.vehicle < b.vehicle)))) {
        pick = c;
      }
    }
    node = pick;
    best.push_back(tree.node(node).vehicle);
    placed |= std::uint64_t{1} << tree.node(node).vehicle;
  }
  // Complete beyond the tree by earliest free-flow time among legal candidates.
  while (static_cast<int>(best.size()) < n) {
    int pick = -1;
    for (int pass = 0; pass < 2 && pick < 0; ++pass) {
      for (int k = 0; k < n; ++k) {
        if ((placed >> k) & 1u) continue;
        if (pass == 0 && !tree.legal(k, placed)) continue;
        if (pick < 0 || problem.t_free(k) < problem.t_free(pick)) pick = k;
      }
    }
    best.push_back(pick);
    placed |= std::uint64_t{1} << pick;
  }
  for (int k : best) result.order.order.push_back(problem.ids[k]);
  result.schedule = evaluate_order(best, problem, config.delta_safe);
  result.reward = result.schedule.total +
                  config.lambda_penalty * static_cast<double>(count_violations(result.order, constraints));
  return result;
}

PassingOrder search(const Scenario& scenario, const std::vector<DirectedIntention>& intentions,
                    const MctsConfig& config, const IdmParams& idm) {
  return search(make_problem(scenario, idm), build_constraints(intentions).constraints, config).order;
}

std::map<VehicleId, std::optional<LeaderAssignment>> order_to_leaders(const PassingOrder& order,
                                                                     const Scenario& scenario) {
  std::map<VehicleId, std::optional<LeaderAssignment>> out;
  for (std::size_t k = 0; k < order.order.size(); ++k) {
    const VehicleState* self = scenario.find_vehicle(order.order[k]);
    out[order.order[k]] = std::nullopt;
    if (self == nullptr) continue;
    for (std::size_t m = k; m-- > 0;) {
      const VehicleState* other = scenario.find_vehicle(order.order[m]);
      if (other == nullptr) continue;
      for (const ConflictPoint* cp : scenario.conflicts_between(self->path, other->path)) {
        if (!has_cleared(*self, *cp) && !has_cleared(*other, *cp)) {
          out[order.order[k]] = LeaderAssignment{other->id, cp->id};
          break;
        }
      }
      if (out[order.order[k]]) break;
    }
  }
  return out;
}

}  // namespace rtr
