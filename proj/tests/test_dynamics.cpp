#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "rtr/dynamics.hpp"

using namespace rtr;

namespace {

ConflictPoint cross(double s_a, double s_b) { return ConflictPoint{0, "a", "b", s_a, s_b}; }

VehicleState at(const std::string& path, double s, double v, double half_length = 2.5) {
  VehicleState out;
  out.path = path;
  out.s = s;
  out.v = v;
  out.half_length = half_length;
  return out;
}

// Textbook IDM written out term by term.
double idm_reference(double v, double gap, double v_leader, const IdmParams& p) {
  const double free_term = std::pow(v / p.v0, p.delta);
  const double s_star = p.s0 + std::max(0.0, v * p.T + v * (v - v_leader) / (2.0 * std::sqrt(p.a_max * p.b_comf)));
  return p.a_max * (1.0 - free_term - (s_star / gap) * (s_star / gap));
}

}  // namespace

TEST_CASE("ttcp is distance over speed") {
  const Ttcp t = ttcp(20.0, 10.0);
  CHECK(t.seconds == 2.0);
  CHECK_FALSE(t.infinite);
  CHECK(ttcp(0.0, 5.0).seconds == 0.0);
  CHECK_THROWS_AS(ttcp(-1.0, 5.0), std::domain_error);
}

TEST_CASE("stopped vehicle gets the sentinel") {
  const Ttcp t = ttcp(15.0, 0.0);
  CHECK(t.infinite);
  CHECK(t.seconds == Ttcp::kSentinel);
  const Ttcp creep = ttcp(15.0, 1e-12);
  CHECK(creep.infinite);
  CHECK(creep.seconds == Ttcp::kSentinel);
}

TEST_CASE("cooperative acceleration examples") {
  CHECK(cooperative_acceleration(30.0, 10.0, 2.0) == 5.0);
  CHECK(cooperative_acceleration(20.0, 10.0, 2.0) == 0.0);
  CHECK(cooperative_acceleration(10.0, 10.0, 2.0) == -5.0);
  CHECK_THROWS_AS(cooperative_acceleration(10.0, 10.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(cooperative_acceleration(10.0, 10.0, Ttcp::kSentinel), std::domain_error);
  CHECK_THROWS_AS(cooperative_acceleration(10.0, 10.0, INFINITY), std::domain_error);
}

TEST_CASE("cooperative acceleration synchronizes arrival") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> d(1.0, 120.0), v(0.0, 20.0), t(0.2, 15.0);
  for (int k = 0; k < 500; ++k) {
    const double d_i = d(gen), v_i = v(gen), t_j = t(gen);
    const double a = cooperative_acceleration(d_i, v_i, t_j);
    // Constant acceleration a covers d_i in exactly t_j.
    CHECK(v_i * t_j + 0.5 * a * t_j * t_j == doctest::Approx(d_i).epsilon(1e-12));
  }
}

TEST_CASE("IDM examples") {
  const IdmParams p;
  CHECK(idm_free_acceleration(p.v0, p) == doctest::Approx(0.0));
  CHECK(idm_free_acceleration(0.0, p) == p.a_max);
  const double a = idm_acceleration(10.0, 20.0, 10.0, p);
  CHECK(a == doctest::Approx(idm_reference(10.0, 20.0, 10.0, p)).epsilon(1e-12));
  CHECK(a == doctest::Approx(0.160).epsilon(1e-3 / 0.160));
  CHECK_THROWS_AS(idm_acceleration(10.0, 0.0, 10.0, p), std::domain_error);
}

TEST_CASE("IDM stays inside its clamp and decreases as the gap shrinks") {
  const IdmParams p;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> v(0.0, 25.0), gap(0.05, 150.0);
  for (int k = 0; k < 1000; ++k) {
    const double vv = v(gen), vl = v(gen), g = gap(gen);
    const double a = idm_acceleration(vv, g, vl, p);
    CHECK(a <= p.a_max);
    CHECK(a >= -p.b_hard);
    CHECK(idm_acceleration(vv, g * 0.5, vl, p) <= a);
    CHECK(idm_acceleration(vv, g, vl, p) <= idm_free_acceleration(vv, p) + 1e-12);
  }
}

TEST_CASE("virtual leader projection") {
  const ConflictPoint cp = cross(100.0, 50.0);
  const VehicleState follower = at("a", 60.0, 8.0, 2.0);  // 40 m to go
  SUBCASE("leader approaching") {
    const LeaderGap g = virtual_leader_gap(follower, at("b", 40.0, 6.0, 2.0), cp);
    CHECK_FALSE(g.cleared);
    CHECK(g.gap == doctest::Approx(26.0));
    CHECK(g.v_leader == 6.0);
  }
  SUBCASE("leader at the point") {
    CHECK(virtual_leader_gap(follower, at("b", 50.0, 6.0, 2.0), cp).gap == doctest::Approx(36.0));
  }
  SUBCASE("leader inside the box counts as at the point") {
    CHECK(virtual_leader_gap(follower, at("b", 51.0, 6.0, 2.0), cp).gap == doctest::Approx(36.0));
  }
  SUBCASE("leader cleared") {
    CHECK(virtual_leader_gap(follower, at("b", 52.5, 6.0, 2.0), cp).cleared);
  }
  SUBCASE("unrelated paths") {
    CHECK_THROWS_AS(virtual_leader_gap(follower, at("c", 10.0, 6.0), cp), std::domain_error);
  }
}

TEST_CASE("step applies semi-implicit Euler") {
  const VehicleState s0 = at("a", 0.0, 10.0);
  const VehicleState cruise = step(s0, 0.0, 0.1);
  CHECK(cruise.s == doctest::Approx(1.0));
  CHECK(cruise.v == 10.0);

  const VehicleState stop = step(at("a", 5.0, 0.1), -5.0, 0.1);
  CHECK(stop.v == 0.0);
  CHECK(stop.s == 5.0);
  CHECK(stop.a == doctest::Approx(-1.0));

  const VehicleState accel = step(s0, 2.0, 0.1);
  CHECK(accel.v == doctest::Approx(10.2));
  CHECK(accel.s == doctest::Approx(1.02));
}

TEST_CASE("speed never goes negative and position never decreases") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> v(0.0, 20.0), a(-6.0, 2.0);
  VehicleState s = at("a", 0.0, 8.0);
  for (int k = 0; k < 2000; ++k) {
    const VehicleState next = step(s, a(gen), 0.1);
    CHECK(next.v >= 0.0);
    CHECK(next.s >= s.s);
    s = next;
  }
}

TEST_CASE("features and their swap") {
  const InteractionFeatures f = make_features(20.0, 10.0, 30.0, 10.0);
  CHECK(f.ttcp_j == 2.0);
  CHECK(f.ttcp_i == 3.0);
  CHECK(f.a_c_j == 5.0);
  const InteractionFeatures g = f.swapped();
  CHECK(g.ttcp_j == 3.0);
  CHECK(g.ttcp_i == 2.0);
  CHECK(g.a_c_j == doctest::Approx(2.0 * (20.0 - 30.0) / 9.0));

  const InteractionFeatures stopped = make_features(20.0, 0.0, 30.0, 10.0);
  CHECK(stopped.stopped_j);
  CHECK(stopped.a_c_j == 0.0);
  CHECK(make_features(0.0, 5.0, 30.0, 10.0).a_c_j == 0.0);
}

TEST_CASE("free-flow travel time") {
  const IdmParams p;
  CHECK(free_flow_travel_time(0.0, 5.0, p) == 0.0);
  CHECK(free_flow_travel_time(150.0, p.v0, p) == doctest::Approx(10.0).epsilon(1e-6));
  // Slower start, longer trip.
  CHECK(free_flow_travel_time(50.0, 5.0, p) > free_flow_travel_time(50.0, 10.0, p));
  CHECK(free_flow_travel_time(50.0, 5.0, p) < 50.0 / 5.0);
}

TEST_CASE("clearance uses the rear of the vehicle") {
  const ConflictPoint cp = cross(100.0, 50.0);
  CHECK_FALSE(has_cleared(at("a", 102.5, 5.0, 2.5), cp));
  CHECK(has_cleared(at("a", 102.6, 5.0, 2.5), cp));
  CHECK(distance_to(at("a", 70.0, 5.0), cp) == 30.0);
}
