#include "rtr/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rtr {

Ttcp ttcp(double d, double v) {
  if (!(d >= 0.0)) throw std::domain_error("ttcp: distance must be >= 0");
  if (!(v > 0.0)) return Ttcp{Ttcp::kSentinel, true};
  const double t = d / v;
  // Creeping speeds whose arrival lies beyond the sentinel count as stopped.
  if (!(t < Ttcp::kSentinel)) return Ttcp{Ttcp::kSentinel, true};
  return Ttcp{t, false};
}

double cooperative_acceleration(double d_i, double v_i, double ttcp_j) {
  if (!(ttcp_j > 0.0) || !std::isfinite(ttcp_j) || ttcp_j >= Ttcp::kSentinel) {
    throw std::domain_error("cooperative_acceleration: ego TTCP must be positive and finite");
  }
  return 2.0 * (d_i - v_i * ttcp_j) / (ttcp_j * ttcp_j);
}

double idm_free_acceleration(double v, const IdmParams& p) {
  const double a = p.a_max * (1.0 - std::pow(v / p.v0, p.delta));
  return std::clamp(a, -p.b_hard, p.a_max);
}

double idm_acceleration(double v, double gap, double v_leader, const IdmParams& p) {
  if (!(gap > 0.0)) throw std::domain_error("idm_acceleration: gap must be > 0 with a leader");
  const double dv = v - v_leader;
  const double s_star = p.s0 + std::max(0.0, v * p.T + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf)));
  const double ratio = s_star / gap;
  const double a = p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - ratio * ratio);
  return std::clamp(a, -p.b_hard, p.a_max);
}

InteractionFeatures InteractionFeatures::swapped() const { return make_features(d_i, v_i, d_j, v_j); }

InteractionFeatures make_features(double d_j, double v_j, double d_i, double v_i) {
  InteractionFeatures f;
  f.d_i = d_i;
  f.d_j = d_j;
  f.v_i = v_i;
  f.v_j = v_j;
  const Ttcp ti = ttcp(d_i, v_i);
  const Ttcp tj = ttcp(d_j, v_j);
  f.ttcp_i = ti.seconds;
  f.ttcp_j = tj.seconds;
  f.stopped_i = ti.infinite;
  f.stopped_j = tj.infinite;
  f.a_c_j = (!tj.infinite && tj.seconds > 0.0) ? cooperative_acceleration(d_i, v_i, tj.seconds) : 0.0;
  return f;
}

double distance_to(const VehicleState& vehicle, const ConflictPoint& cp) { return cp.arc_on(vehicle.path) - vehicle.s; }

bool has_cleared(const VehicleState& vehicle, const ConflictPoint& cp) {
  return vehicle.s - vehicle.half_length > cp.arc_on(vehicle.path);
}

LeaderGap virtual_leader_gap(const VehicleState& follower, const VehicleState& leader, const ConflictPoint& cp) {
  if (!cp.involves(follower.path) || !cp.involves(leader.path)) {
    throw std::domain_error("virtual_leader_gap: vehicles do not share this conflict point");
  }
  LeaderGap out;
  out.v_leader = leader.v;
  if (has_cleared(leader, cp)) {
    out.cleared = true;
    return out;
  }
  out.gap = distance_to(follower, cp) - std::max(0.0, distance_to(leader, cp)) - follower.half_length -
            leader.half_length;
  return out;
}

VehicleState step(const VehicleState& state, double a_cmd, double dt) {
  VehicleState next = state;
  next.v = std::max(0.0, state.v + a_cmd * dt);
  next.s = state.s + next.v * dt;
  next.a = (next.v - state.v) / dt;
  return next;
}

double free_flow_travel_time(double distance, double v, const IdmParams& p) {
  if (distance <= 0.0) return 0.0;
  constexpr double h = 0.05;
  double s = 0.0;
  double t = 0.0;
  double speed = v;
  for (int k = 0; k < 100000; ++k) {
    const double next_v = std::max(0.0, speed + idm_free_acceleration(speed, p) * h);
    const double next_s = s + next_v * h;
    if (next_s >= distance) {
      return t + h * (distance - s) / (next_s - s);
    }
    s = next_s;
    speed = next_v;
    t += h;
  }
  return t;
}

}  // namespace rtr
