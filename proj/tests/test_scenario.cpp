#include "doctest.h"

#include <cmath>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtr/scenario.hpp"

using namespace rtr;
using nlohmann::json;

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

// Closed-form intersection of two straight segments, as arc lengths from each start.
std::optional<std::pair<double, double>> crossing(const Segment& a, const Segment& b) {
  const double rx = a.x1 - a.x0, ry = a.y1 - a.y0;
  const double sx = b.x1 - b.x0, sy = b.y1 - b.y0;
  const double denom = rx * sy - ry * sx;
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double qx = b.x0 - a.x0, qy = b.y0 - a.y0;
  const double t = (qx * sy - qy * sx) / denom;
  const double u = (qx * ry - qy * rx) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return std::make_pair(t * std::hypot(rx, ry), u * std::hypot(sx, sy));
}

struct NamedSegment {
  std::string id;
  std::string approach;
  Segment seg;
};

// Four arms, two through lanes per approach, right-hand traffic.
std::vector<NamedSegment> eight_through_paths() {
  return {
      {"S1", "S", {1.75, -100, 1.75, 100}},   {"S2", "S", {5.25, -100, 5.25, 100}},
      {"N1", "N", {-1.75, 100, -1.75, -100}}, {"N2", "N", {-5.25, 100, -5.25, -100}},
      {"E1", "E", {100, 1.75, -100, 1.75}},   {"E2", "E", {100, 5.25, -100, 5.25}},
      {"W1", "W", {-100, -1.75, 100, -1.75}}, {"W2", "W", {-100, -5.25, 100, -5.25}},
  };
}

json config_for(const std::vector<NamedSegment>& paths) {
  json doc;
  doc["dt"] = 0.1;
  doc["horizon"] = 30.0;
  doc["paths"] = json::array();
  for (const auto& p : paths) {
    doc["paths"].push_back({{"id", p.id},
                            {"approach", p.approach},
                            {"centerline", {{p.seg.x0, p.seg.y0}, {p.seg.x1, p.seg.y1}}}});
  }
  doc["vehicles"] = json::array();
  return doc;
}

Polyline<double> line(std::initializer_list<std::pair<double, double>> pts) {
  std::vector<Point2<double>> out;
  for (const auto& [x, y] : pts) out.emplace_back(x, y);
  return Polyline<double>(std::move(out));
}

PathSpec straight(const std::string& id, Approach approach, double x0, double y0, double x1, double y1) {
  PathSpec p;
  p.id = id;
  p.approach = approach;
  p.centerline = line({{x0, y0}, {x1, y1}});
  return p;
}

}  // namespace

TEST_CASE("eight through paths yield sixteen crossings matching segment intersection") {
  const auto paths = eight_through_paths();
  const Scenario sc = load_scenario(config_for(paths).dump());
  CHECK(sc.paths.size() == 8);

  int expected = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t j = i + 1; j < paths.size(); ++j) {
      const auto hit = crossing(paths[i].seg, paths[j].seg);
      if (!hit) continue;
      ++expected;
      const auto found = sc.conflicts_between(paths[i].id, paths[j].id);
      REQUIRE(found.size() == 1);
      CHECK(found[0]->arc_on(paths[i].id) == doctest::Approx(hit->first).epsilon(1e-12));
      CHECK(found[0]->arc_on(paths[j].id) == doctest::Approx(hit->second).epsilon(1e-12));
    }
  }
  CHECK(expected == 16);
  CHECK(sc.conflicts.size() == 16);
}

TEST_CASE("vehicle on an unknown path is a dangling reference") {
  json doc = config_for(eight_through_paths());
  doc["vehicles"] = json::array({{{"id", 1}, {"kind", "CAV"}, {"path", "S1"}, {"s", 10.0}, {"v", 5.0}},
                                 {{"id", 2}, {"kind", "HDV"}, {"path", "Q9"}, {"s", 10.0}, {"v", 5.0}}});
  try {
    load_scenario(doc.dump());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "vehicles[1].path");
  }
}

TEST_CASE("scenario validation names the offending field") {
  json doc = config_for(eight_through_paths());
  SUBCASE("duplicate vehicle id") {
    doc["vehicles"] = json::array({{{"id", 1}, {"kind", "CAV"}, {"path", "S1"}, {"s", 10.0}, {"v", 5.0}},
                                   {{"id", 1}, {"kind", "CAV"}, {"path", "S2"}, {"s", 10.0}, {"v", 5.0}}});
    CHECK_THROWS_WITH_AS(load_scenario(doc.dump()), doctest::Contains("vehicles[1].id"), ConfigError);
  }
  SUBCASE("negative speed") {
    doc["vehicles"] = json::array({{{"id", 1}, {"kind", "CAV"}, {"path", "S1"}, {"s", 10.0}, {"v", -1.0}}});
    CHECK_THROWS_WITH_AS(load_scenario(doc.dump()), doctest::Contains("vehicles[0].v"), ConfigError);
  }
  SUBCASE("position past the path end") {
    doc["vehicles"] = json::array({{{"id", 1}, {"kind", "CAV"}, {"path", "S1"}, {"s", 500.0}, {"v", 1.0}}});
    CHECK_THROWS_WITH_AS(load_scenario(doc.dump()), doctest::Contains("vehicles[0].s"), ConfigError);
  }
  SUBCASE("unknown vehicle kind") {
    doc["vehicles"] = json::array({{{"id", 1}, {"kind", "bus"}, {"path", "S1"}, {"s", 1.0}, {"v", 1.0}}});
    CHECK_THROWS_AS(load_scenario(doc.dump()), ConfigError);
  }
  SUBCASE("duplicate path id") {
    doc["paths"][1]["id"] = "S1";
    CHECK_THROWS_WITH_AS(load_scenario(doc.dump()), doctest::Contains("paths[1].id"), ConfigError);
  }
  SUBCASE("conflict list missing a crossing") {
    doc["conflicts"] = json::array({{{"path_a", "S1"}, {"path_b", "E1"}, {"s_a", 101.75}, {"s_b", 98.25}}});
    CHECK_THROWS_WITH_AS(load_scenario(doc.dump()), doctest::Contains("conflicts"), ConfigError);
  }
  SUBCASE("malformed text") {
    CHECK_THROWS_AS(load_scenario("{not json"), ConfigError);
  }
}

TEST_CASE("empty vehicle list is a valid scenario") {
  const Scenario sc = load_scenario(config_for(eight_through_paths()).dump());
  CHECK(sc.vehicles.empty());
  json no_key = config_for(eight_through_paths());
  no_key.erase("vehicles");
  CHECK(load_scenario(no_key.dump()).vehicles.empty());
}

TEST_CASE("perpendicular centerlines crossing at the origin") {
  const PathSpec a = straight("a", Approach::South, 0, -30, 0, 50);
  const PathSpec b = straight("b", Approach::West, -12, 0, 40, 0);
  const auto cps = compute_conflict_points(a, b);
  REQUIRE(cps.size() == 1);
  CHECK(cps[0].s_a == doctest::Approx(30.0));
  CHECK(cps[0].s_b == doctest::Approx(12.0));
  CHECK(cps[0].path_a == "a");
  CHECK(cps[0].path_b == "b");
}

TEST_CASE("parallel same-direction paths never conflict") {
  const PathSpec a = straight("a", Approach::South, 0, -30, 0, 50);
  const PathSpec b = straight("b", Approach::West, 3.5, -30, 3.5, 50);
  CHECK(compute_conflict_points(a, b).empty());
}

TEST_CASE("conflict points are symmetric in the path pair") {
  const PathSpec a = straight("a", Approach::South, 0, -30, 0, 50);
  const PathSpec b = straight("b", Approach::West, -12, 4, 40, 4);
  const auto ab = compute_conflict_points(a, b);
  const auto ba = compute_conflict_points(b, a);
  REQUIRE(ab.size() == ba.size());
  for (std::size_t k = 0; k < ab.size(); ++k) {
    CHECK(ab[k].s_a == doctest::Approx(ba[k].s_b));
    CHECK(ab[k].s_b == doctest::Approx(ba[k].s_a));
  }
}

TEST_CASE("polyline crossings on bent paths") {
  // An L-shaped path crosses a straight one on its second leg.
  PathSpec a;
  a.id = "L";
  a.approach = Approach::South;
  a.centerline = line({{0, -20}, {0, 0}, {20, 0}});
  const PathSpec b = straight("b", Approach::North, 10, 10, 10, -10);
  const auto cps = compute_conflict_points(a, b);
  REQUIRE(cps.size() == 1);
  CHECK(cps[0].s_a == doctest::Approx(30.0));
  CHECK(cps[0].s_b == doctest::Approx(10.0));
}

TEST_CASE("default template and its scenario round-trip") {
  const Scenario sc = default_template();
  CHECK(sc.paths.size() == 4);
  CHECK(sc.conflicts.size() == 4);
  for (const auto& cp : sc.conflicts) {
    const Approach a = sc.path(cp.path_a).approach;
    const Approach b = sc.path(cp.path_b).approach;
    const bool a_ns = a == Approach::North || a == Approach::South;
    const bool b_ns = b == Approach::North || b == Approach::South;
    CHECK(a_ns != b_ns);
  }
  const Scenario back = load_scenario(dump_scenario(sc));
  CHECK(back.paths.size() == sc.paths.size());
  REQUIRE(back.conflicts.size() == sc.conflicts.size());
  for (std::size_t k = 0; k < sc.conflicts.size(); ++k) {
    CHECK(back.conflicts[k].s_a == sc.conflicts[k].s_a);
    CHECK(back.conflicts[k].s_b == sc.conflicts[k].s_b);
  }
  CHECK(default_template(TemplateOptions{true}).paths.size() == 8);
}

TEST_CASE("randomize is deterministic and honours the CAV rounding rule") {
  const Scenario tpl = default_template();
  const Scenario a = randomize(7, 1.0, 4, tpl);
  const Scenario b = randomize(7, 1.0, 4, tpl);
  CHECK(dump_scenario(a) == dump_scenario(b));
  int cavs = 0;
  for (const auto& v : a.vehicles) cavs += v.kind == VehicleKind::CAV;
  CHECK(cavs == 4);
  CHECK(a.vehicles.size() == 4);

  int half = 0;
  for (const auto& v : randomize(7, 0.5, 4, tpl).vehicles) half += v.kind == VehicleKind::CAV;
  CHECK(half == 2);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (double p : {0.0, 0.3, 0.5, 0.7, 1.0}) {
      const Scenario sc = randomize(seed, p, 6, tpl);
      int n = 0;
      for (const auto& v : sc.vehicles) n += v.kind == VehicleKind::CAV;
      CHECK(n == static_cast<int>(std::lround(p * 6)));
    }
  }
}

TEST_CASE("randomized vehicles keep spacing on shared approaches") {
  const Scenario tpl = default_template();
  const SpawnWindow w;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scenario sc = randomize(seed, 0.5, 6, tpl, w);
    for (std::size_t i = 0; i < sc.vehicles.size(); ++i) {
      const auto& vi = sc.vehicles[i];
      const PathSpec& pi = sc.path(vi.path);
      CHECK(vi.s - pi.stop_line >= w.s_min - 1e-9);
      CHECK(vi.s - pi.stop_line <= w.s_max + 1e-9);
      CHECK(vi.v >= w.v_min);
      CHECK(vi.v <= w.v_max);
      for (std::size_t j = i + 1; j < sc.vehicles.size(); ++j) {
        const auto& vj = sc.vehicles[j];
        if (sc.path(vj.path).approach != pi.approach) continue;
        CHECK(std::abs(vi.s - vj.s) >= w.min_spacing);
      }
    }
  }
}

TEST_CASE("randomize reports an unplaceable population") {
  SpawnWindow tight;
  tight.s_min = -31.0;
  tight.s_max = -30.0;
  CHECK_THROWS_AS(randomize(1, 0.5, 12, default_template(), tight), PlacementError);
  CHECK_THROWS_AS(randomize(1, 1.5, 4, default_template()), std::invalid_argument);
}
