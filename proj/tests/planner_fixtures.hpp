#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "rtr/planner.hpp"

namespace fixtures {

struct Instance {
  rtr::SchedulingProblem problem;
  std::vector<rtr::PrecedenceConstraint> constraints;
};

inline rtr::SchedulingProblem problem_of(const std::vector<double>& t_free, bool all_share) {
  rtr::SchedulingProblem p;
  const int n = static_cast<int>(t_free.size());
  p.t_free.resize(n);
  p.shares = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  for (int i = 0; i < n; ++i) {
    p.ids.push_back(i + 1);
    p.t_free(i) = t_free[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) p.shares(i, j) = all_share && i != j;
  }
  return p;
}

/// Random instance: conflicts with probability 0.6, up to three intention
/// constraints drawn consistent with a hidden order so the set is feasible.
inline Instance random_instance(std::mt19937_64& gen, int n) {
  std::uniform_real_distribution<double> t(1.0, 10.0), coin(0.0, 1.0);
  std::vector<double> tf;
  for (int k = 0; k < n; ++k) tf.push_back(t(gen));
  Instance out{problem_of(tf, false), {}};
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool s = coin(gen) < 0.6;
      out.problem.shares(i, j) = out.problem.shares(j, i) = s;
    }
  }
  std::vector<int> hidden(static_cast<std::size_t>(n));
  std::iota(hidden.begin(), hidden.end(), 0);
  std::shuffle(hidden.begin(), hidden.end(), gen);
  const int count = std::uniform_int_distribution<int>(0, std::min(3, n - 1))(gen);
  for (int c = 0; c < count; ++c) {
    int a = std::uniform_int_distribution<int>(0, n - 1)(gen);
    int b = std::uniform_int_distribution<int>(0, n - 1)(gen);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    const rtr::PrecedenceConstraint pc{out.problem.ids[hidden[a]], out.problem.ids[hidden[b]],
                                       out.problem.ids[hidden[a]]};
    if (std::find(out.constraints.begin(), out.constraints.end(), pc) == out.constraints.end()) {
      out.constraints.push_back(pc);
    }
  }
  return out;
}

/// Schedule recurrence evaluated directly on an id order.
inline double order_reward(const std::vector<int>& idx, const rtr::SchedulingProblem& p, double delta_safe) {
  std::vector<double> actual;
  double total = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    double ta = p.t_free(idx[k]);
    for (std::size_t m = 0; m < k; ++m) {
      if (p.shares(idx[k], idx[m])) ta = std::max(ta, actual[m] + delta_safe);
    }
    actual.push_back(ta);
    total += p.t_free(idx[k]) - ta;
  }
  return total;
}

inline bool respects(const std::vector<int>& idx, const Instance& inst) {
  auto pos = [&](rtr::VehicleId id) {
    const int k = inst.problem.index_of(id);
    return std::find(idx.begin(), idx.end(), k) - idx.begin();
  };
  for (const auto& c : inst.constraints) {
    if (pos(c.before) > pos(c.after)) return false;
  }
  for (const auto& [front, back] : inst.problem.lane_order) {
    if (std::find(idx.begin(), idx.end(), front) > std::find(idx.begin(), idx.end(), back)) return false;
  }
  return true;
}

/// Best reward over every feasible permutation.
inline double brute_force_optimum(const Instance& inst, double delta_safe) {
  std::vector<int> idx(static_cast<std::size_t>(inst.problem.size()));
  std::iota(idx.begin(), idx.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  do {
    if (respects(idx, inst)) best = std::max(best, order_reward(idx, inst.problem, delta_safe));
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

}  // namespace fixtures
