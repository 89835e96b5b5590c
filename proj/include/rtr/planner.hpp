#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "rtr/dynamics.hpp"
#include "rtr/scenario.hpp"
#include "rtr/types.hpp"

namespace rtr {

struct PrecedenceConstraint {
  VehicleId before = 0;
  VehicleId after = 0;
  VehicleId source = 0;  // HDV whose intention induced it

  bool operator==(const PrecedenceConstraint&) const = default;
};

struct PassingOrder {
  std::vector<VehicleId> order;  // index 0 passes first
  std::vector<PrecedenceConstraint> constraints;

  std::optional<std::size_t> position(VehicleId id) const;
};

/// Recognized intention of HDV `hdv` with respect to one conflicting opponent.
struct DirectedIntention {
  VehicleId hdv = 0;
  VehicleId opponent = 0;
  Intention intention = Intention::Yield;
  double margin = 0.0;
};

struct ConstraintSet {
  std::vector<PrecedenceConstraint> constraints;
  std::vector<PrecedenceConstraint> dropped;  // removed to break cycles
  bool had_cycle = false;
};

/// rush(h vs x) gives (h before x), yield gives (x before h). Duplicates are
/// merged; cycles are broken by removing the fewest constraints, preferring
/// those backed by the smallest |margin|.
ConstraintSet build_constraints(const std::vector<DirectedIntention>& intentions);

/// Dense scheduling instance: free-flow crossing times plus the symmetric
/// "shares a conflict point" relation, indexed 0..n-1 with ids ascending.
struct SchedulingProblem {
  std::vector<VehicleId> ids;
  Eigen::VectorXd t_free;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> shares;
  /// Physical order on shared lanes, (front, back) in index space; always enforced.
  std::vector<std::pair<int, int>> lane_order;

  int size() const { return static_cast<int>(ids.size()); }
  int index_of(VehicleId id) const;
};

/// Builds the instance for every vehicle of `scenario` that still has an
/// uncleared conflict point. t_free is the free-flow IDM time to reach the
/// first uncleared conflict point.
SchedulingProblem make_problem(const Scenario& scenario, const IdmParams& idm);

struct ScheduleEvaluation {
  std::vector<VehicleId> ids;  // in priority order
  std::vector<double> t_free;
  std::vector<double> t_actual;
  std::vector<double> reward;  // t_free - t_actual, <= 0
  double total = 0.0;
};

ScheduleEvaluation evaluate_order(const std::vector<int>& order, const SchedulingProblem& problem, double delta_safe);
ScheduleEvaluation evaluate_order(const PassingOrder& order, const SchedulingProblem& problem, double delta_safe);
ScheduleEvaluation evaluate_order(const PassingOrder& order, const Scenario& scenario, double delta_safe,
                                  const IdmParams& idm = {});

struct MctsConfig {
  double c_explore = std::sqrt(2.0);
  double lambda_penalty = -100.0;
  int iterations = 5000;
  double delta_safe = 2.0;
  bool hard_prune = true;
  std::uint64_t seed = 0;
};

void validate(const MctsConfig& config);

int count_violations(const PassingOrder& order, const std::vector<PrecedenceConstraint>& constraints);

/// Schedule reward plus lambda per violated intention constraint.
double simulate_reward(const PassingOrder& order, const std::vector<PrecedenceConstraint>& constraints,
                       const SchedulingProblem& problem, const MctsConfig& config);
double simulate_reward(const PassingOrder& order, const std::vector<DirectedIntention>& intentions,
                       const Scenario& scenario, const MctsConfig& config, const IdmParams& idm = {});

struct MctsNode {
  int vehicle = -1;  // problem index assigned here; -1 at the root
  int parent = -1;
  int depth = 0;
  std::uint64_t placed = 0;  // bitmask of problem indices on the root path
  int visits = 0;
  double q_sum = 0.0;
  std::vector<int> children;
  std::vector<int> untried;  // candidate problem indices, ascending id

  double mean() const { return visits > 0 ? q_sum / visits : 0.0; }
};

/// Search tree over passing orders. Nodes live in an arena; indices are stable.
class MctsTree {
 public:
  MctsTree(const SchedulingProblem& problem, const std::vector<PrecedenceConstraint>& constraints, bool hard_prune);

  const MctsNode& node(int k) const { return nodes_[static_cast<std::size_t>(k)]; }
  MctsNode& node(int k) { return nodes_[static_cast<std::size_t>(k)]; }
  int root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  int vehicles() const { return n_; }
  bool hard_prune() const { return hard_prune_; }
  /// Required predecessors of each index (lane order always, intentions when pruning).
  const std::vector<std::uint64_t>& predecessors() const { return pred_; }
  bool legal(int candidate, std::uint64_t placed) const { return (pred_[candidate] & ~placed) == 0; }

  int add_child(int parent, int vehicle);

 private:
  void fill_candidates(MctsNode& node) const;

  int n_ = 0;
  bool hard_prune_ = true;
  std::vector<std::uint64_t> pred_;
  std::vector<MctsNode> nodes_;
};

/// UCB argmax over the children of a fully expanded node; ties go to the
/// lowest vehicle id. nullopt when the node has no children (leaf).
std::optional<int> select_child(const MctsTree& tree, int node, double c_explore);

double ucb_score(double mean, int parent_visits, int child_visits, double c_explore);

/// Creates the child for the lowest-id untried candidate. nullopt when the
/// node is incomplete but every candidate was pruned (infeasible constraints).
std::optional<int> expand(MctsTree& tree, int node);

void backpropagate(MctsTree& tree, const std::vector<int>& path, double reward);

struct SearchResult {
  PassingOrder order;
  double reward = 0.0;
  ScheduleEvaluation schedule;
  int iterations = 0;
  bool soft_fallback = false;  // constraints infeasible; penalties only
  MctsTree tree;
};

SearchResult search(const SchedulingProblem& problem, const std::vector<PrecedenceConstraint>& constraints,
                    const MctsConfig& config);
PassingOrder search(const Scenario& scenario, const std::vector<DirectedIntention>& intentions,
                    const MctsConfig& config, const IdmParams& idm = {});

struct LeaderAssignment {
  VehicleId leader = 0;
  int conflict = 0;  // ConflictPoint id
};

/// Nearest-in-priority higher vehicle sharing an uncleared conflict point.
std::map<VehicleId, std::optional<LeaderAssignment>> order_to_leaders(const PassingOrder& order,
                                                                     const Scenario& scenario);

}  // namespace rtr
