#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rtr/geometry.hpp"
#include "rtr/types.hpp"

namespace rtr {

enum class Approach { North, East, South, West };
enum class Movement { Through, Left, Right };

std::string_view to_string(Approach approach);
std::string_view to_string(Movement movement);
Approach parse_approach(std::string_view text);
Movement parse_movement(std::string_view text);

struct PathSpec {
  std::string id;
  Approach approach = Approach::South;
  Movement movement = Movement::Through;
  Polyline<double> centerline;
  /// Arc length of the stop line; spawn windows are measured from here.
  double stop_line = 0.0;

  double length() const { return centerline.length(); }
};

struct ConflictPoint {
  int id = 0;
  std::string path_a;
  std::string path_b;
  double s_a = 0.0;
  double s_b = 0.0;

  /// Arc length of the crossing on `path`; the path must be one of the pair.
  double arc_on(const std::string& path) const { return path == path_a ? s_a : s_b; }
  bool involves(const std::string& path) const { return path == path_a || path == path_b; }
};

/// HDV decision override from `t_from` onward, used for scripted scenarios.
struct ScriptedDecision {
  double t_from = 0.0;
  Intention decision = Intention::Rush;
};

struct VehicleState {
  VehicleId id = 0;
  VehicleKind kind = VehicleKind::CAV;
  DrivingStyle style = DrivingStyle::Normal;
  std::string path;
  double s = 0.0;
  double v = 0.0;
  double a = 0.0;
  double half_length = 2.5;
  std::vector<ScriptedDecision> script;

  bool is_hdv() const { return kind == VehicleKind::HDV; }
};

struct Scenario {
  std::vector<PathSpec> paths;
  std::vector<ConflictPoint> conflicts;
  std::vector<VehicleState> vehicles;
  double dt = 0.1;
  double horizon = 30.0;

  const PathSpec& path(const std::string& id) const;
  const PathSpec* find_path(const std::string& id) const;
  const VehicleState* find_vehicle(VehicleId id) const;
  /// Conflict points shared by two paths (empty for the same path or disjoint paths).
  std::vector<const ConflictPoint*> conflicts_between(const std::string& a, const std::string& b) const;
  /// Conflict points on one path, ordered by arc length along it.
  std::vector<const ConflictPoint*> conflicts_on(const std::string& path) const;
};

/// One ConflictPoint per geometric crossing of the two centerlines (ids start at 0).
std::vector<ConflictPoint> compute_conflict_points(const PathSpec& a, const PathSpec& b);

/// All crossings between distinct paths of different approaches, numbered consecutively.
std::vector<ConflictPoint> derive_conflicts(const std::vector<PathSpec>& paths);

/// Checks every Scenario invariant; throws ConfigError naming the field.
void validate(const Scenario& scenario);

/// Parses the JSON scenario schema (see README) and validates it.
Scenario load_scenario(std::string_view config_text);
std::string dump_scenario(const Scenario& scenario);

struct TemplateOptions {
  bool include_left_turns = false;
  double box_half_width = 7.0;
  double lane_offset = 1.75;
  double upstream = 100.0;
  double downstream = 30.0;
};

/// Four-arm intersection, one inbound lane per approach, right-hand traffic.
Scenario default_template(const TemplateOptions& options = {});

struct SpawnWindow {
  double s_min = -80.0;  // relative to the stop line
  double s_max = -30.0;
  double v_min = 5.0;
  double v_max = 10.0;
  double min_spacing = 10.0;  // center-to-center on a shared path
  double half_length = 2.5;
  int attempts = 200;
};

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic random population of the template: realized CAV count is
/// round(penetration * n_vehicles), HDV styles uniform, spawn per `window`.
Scenario randomize(std::uint64_t seed, double penetration, int n_vehicles, const Scenario& scenario_template,
                   const SpawnWindow& window = {});

}  // namespace rtr
