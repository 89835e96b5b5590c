#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "rtr/dynamics.hpp"
#include "rtr/planner.hpp"
#include "rtr/scenario.hpp"

namespace rtr {

struct HdvStyleParams {
  double theta = 0.0;        // rush-advantage threshold, s
  double sigma = 0.3;        // decision noise scale, s
  double commit_time = 1.0;  // s between re-evaluations
};

struct StyleTable {
  HdvStyleParams aggressive{-0.5, 0.3, 1.0};
  HdvStyleParams normal{0.0, 0.3, 1.0};
  HdvStyleParams conservative{0.5, 0.3, 1.0};

  const HdvStyleParams& of(DrivingStyle style) const;
};

/// Rush iff ttcp_opponent - ttcp_self + eta > theta, eta ~ sigma * N(0,1) drawn
/// from noise_seed. A stopped HDV yields.
Intention hdv_decide(const VehicleState& self, const VehicleState& opponent, const ConflictPoint& cp,
                     const HdvStyleParams& style, std::uint64_t noise_seed);

/// Per-(HDV, opponent) decision hold: a decision is kept for commit_time
/// before it is re-evaluated with a fresh noise draw.
class HdvDecisionMemory {
 public:
  explicit HdvDecisionMemory(std::uint64_t episode_seed = 0) : seed_(episode_seed) {}

  Intention decide(double t, const VehicleState& self, const VehicleState& opponent, const ConflictPoint& cp,
                   const HdvStyleParams& style);
  /// Number of decision changes recorded for a pair.
  int flips(VehicleId self, VehicleId opponent) const;
  /// Times at which the held decision changed, per pair.
  const std::vector<double>& change_times(VehicleId self, VehicleId opponent) const;

 private:
  struct Entry {
    Intention decision = Intention::Rush;
    double t_decided = 0.0;
    std::uint64_t epoch = 0;
    std::vector<double> changes;
  };
  std::uint64_t seed_;
  std::map<std::pair<VehicleId, VehicleId>, Entry> entries_;
};

/// Nearest vehicle ahead in the same inbound lane, as an IDM (gap, leader speed).
std::optional<std::pair<double, double>> lane_leader(const VehicleState& self, const Scenario& scenario);

struct OpponentDecision {
  VehicleId opponent = 0;
  int conflict = 0;  // ConflictPoint id
  Intention decision = Intention::Rush;
};

/// Rush follows free-flow (lane leader aside); yield stops before the point
/// behind a stationary virtual leader until the opponent clears.
double hdv_accelerate(const VehicleState& self, const std::vector<OpponentDecision>& decisions,
                      const Scenario& scenario, const IdmParams& idm);

/// IDM response to `leader` projected through `cp`; nullopt once it has cleared
/// or when the follower is already committed (front past the point).
std::optional<double> virtual_leader_acceleration(const VehicleState& follower, const VehicleState& leader,
                                                  const ConflictPoint& cp, const IdmParams& idm);

/// True when `opponent` reaches `cp` ahead of `self` by TTCP (ties by id).
bool arrives_earlier(const VehicleState& opponent, const VehicleState& self, const ConflictPoint& cp);

/// Single-vehicle CAV: IDM, treating earlier-arriving conflicting vehicles as virtual leaders.
double cav_single_accelerate(const VehicleState& self, const Scenario& scenario, const IdmParams& idm);

/// CAV executing a passing order: every higher-priority vehicle with a shared
/// uncleared conflict point acts as a virtual leader.
double cav_ordered_accelerate(const VehicleState& self, const PassingOrder& order, const Scenario& scenario,
                              const IdmParams& idm);

enum class BaselineKind { FCFS, iDFST };
std::string_view to_string(BaselineKind kind);

PassingOrder fcfs_order(const Scenario& scenario, const IdmParams& idm = {});
PassingOrder idfst_order(const Scenario& scenario, const IdmParams& idm = {});
PassingOrder fcfs_order(const SchedulingProblem& problem);
PassingOrder idfst_order(const SchedulingProblem& problem);

}  // namespace rtr
