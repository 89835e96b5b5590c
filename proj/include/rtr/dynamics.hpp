#pragma once

#include "rtr/scenario.hpp"

namespace rtr {

struct IdmParams {
  double v0 = 15.0;     // desired speed, m/s
  double T = 1.5;       // desired time headway, s
  double a_max = 2.0;   // m/s^2
  double b_comf = 3.0;  // m/s^2
  double s0 = 2.0;      // jam distance, m
  double delta = 4.0;
  double b_hard = 6.0;  // output clamp, m/s^2
};

/// Time to the conflict point. A stopped vehicle never arrives: `infinite` is
/// set and `seconds` holds kSentinel so downstream arithmetic stays finite.
struct Ttcp {
  static constexpr double kSentinel = 1e9;
  double seconds = 0.0;
  bool infinite = false;
};

Ttcp ttcp(double d, double v);

/// 2 (d_i - v_i T_j) / T_j^2: the constant acceleration the opponent needs to
/// reach the conflict point together with the ego.
double cooperative_acceleration(double d_i, double v_i, double ttcp_j);

double idm_acceleration(double v, double gap, double v_leader, const IdmParams& p);
double idm_free_acceleration(double v, const IdmParams& p);

struct InteractionFeatures {
  double ttcp_i = 0.0;  // opponent
  double ttcp_j = 0.0;  // ego
  double a_c_j = 0.0;
  double d_i = 0.0, d_j = 0.0;
  double v_i = 0.0, v_j = 0.0;
  bool stopped_i = false;
  bool stopped_j = false;

  /// Same pair seen from the opponent's side.
  InteractionFeatures swapped() const;
};

/// Features of the (ego, opponent) pair at arc distances d_j, d_i from the point.
InteractionFeatures make_features(double d_j, double v_j, double d_i, double v_i);

/// Signed distance from the vehicle's center to the conflict point.
double distance_to(const VehicleState& vehicle, const ConflictPoint& cp);
/// Occupancy [s - h, s + h] has fully passed the point.
bool has_cleared(const VehicleState& vehicle, const ConflictPoint& cp);

struct LeaderGap {
  double gap = 0.0;
  double v_leader = 0.0;
  bool cleared = false;  // leader is past the point; follow free-flow instead
};

/// Projection of `leader` onto the follower's path through `cp`.
LeaderGap virtual_leader_gap(const VehicleState& follower, const VehicleState& leader, const ConflictPoint& cp);

/// Semi-implicit Euler with a non-negative speed clamp; `a` stores the realized acceleration.
VehicleState step(const VehicleState& state, double a_cmd, double dt);

/// Time for a free-flowing IDM vehicle starting at speed v to cover `distance`.
double free_flow_travel_time(double distance, double v, const IdmParams& p);

}  // namespace rtr
