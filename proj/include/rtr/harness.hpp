#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rtr/agents.hpp"
#include "rtr/bipg.hpp"
#include "rtr/dynamics.hpp"
#include "rtr/planner.hpp"
#include "rtr/scenario.hpp"

namespace rtr {

inline constexpr int kSchemaVersion = 1;

enum class Policy { Single, Triggered, Consistent, FCFS, iDFST };
std::string_view to_string(Policy policy);
Policy parse_policy(std::string_view text);

struct RunConfig {
  Policy policy = Policy::Triggered;
  double penetration = 1.0;
  int n_vehicles = 6;
  std::uint64_t seed = 0;
  double dt = 0.1;
  double horizon = 30.0;
  MctsConfig planner;
  DetectorConfig detectors;
  IdmParams idm;
  StyleTable styles;
  IntentionBoundary boundary = default_boundary();
  std::string boundary_file;  // informational; the boundary is loaded when configured
  TemplateOptions layout;
  SpawnWindow spawn;
  /// Fixed scenario; when set, randomization is skipped and its vehicles are used as-is.
  std::optional<Scenario> scenario;
};

/// Throws ConfigError naming the offending field.
void validate(const RunConfig& config);

/// Applies a JSON configuration document on top of `base`; absent keys keep their values.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});

/// The scenario the episode will run: the fixed one, or the randomized template.
Scenario episode_scenario(const RunConfig& config);

struct VehicleSnapshot {
  VehicleId id = 0;
  std::string path;
  double s = 0.0;
  double v = 0.0;
  double a = 0.0;
  double half_length = 2.5;
  std::optional<Region> region;
  std::optional<BreakdownKind> event;
};

/// Vehicle states at time t and the accelerations that produced them.
struct StepFrame {
  double t = 0.0;
  std::vector<VehicleSnapshot> vehicles;
};

struct StepLog {
  double dt = 0.1;
  StepFrame initial;               // t = 0, not exported
  std::vector<StepFrame> frames;   // one per completed step
  std::map<VehicleId, double> exit_times;
  std::vector<VehicleId> vehicles;  // every vehicle of the episode
  bool collision = false;
  double t_end = 0.0;
};

struct RunResult {
  bool success = false;
  bool collision = false;
  bool deadlock = false;
  std::vector<double> pets;  // one per conflict point with two traversals
  int planner_invocations = 0;
  long long planner_rollouts = 0;
  double planner_time_ms = 0.0;  // wall clock; not reproducible
  std::map<VehicleId, double> travel_times;
  std::vector<BreakdownEvent> breakdowns;
  double t_end = 0.0;
};

struct Episode {
  RunResult result;
  StepLog log;
};

Episode run_episode(const RunConfig& config);

/// Occupancy overlap at a conflict point, or on a shared lane.
bool detect_collision(const std::vector<VehicleState>& states, const Scenario& scenario);

/// Entry of the second traversal minus exit of the first, interpolated between frames.
std::optional<double> compute_pet(const StepLog& log, const ConflictPoint& cp);

/// Horizon reached without collision while every unexited vehicle stayed below
/// 0.5 m/s over the final 5 s.
bool detect_deadlock(const StepLog& log, double horizon);

struct EpisodeRecord {
  Policy policy = Policy::Triggered;
  double penetration = 0.0;
  std::uint64_t seed = 0;
  int n_vehicles = 0;
  RunResult result;
};

struct AggregateCell {
  Policy policy = Policy::Triggered;
  double penetration = 0.0;
  int runs = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double deadlock_rate = 0.0;
  int pet_count = 0;
  double mean_pet = 0.0;    // NaN when no PET samples
  double median_pet = 0.0;  // NaN when no PET samples
  double pet_share_below_3 = 0.0;  // NaN when no PET samples
  double mean_planner_time_ms = 0.0;
  double mean_invocations = 0.0;
  double mean_rollouts = 0.0;

  bool operator==(const AggregateCell& other) const;
};

struct AggregateReport {
  std::vector<AggregateCell> cells;  // ordered by policy, then penetration

  const AggregateCell* find(Policy policy, double penetration) const;
  bool operator==(const AggregateReport& other) const = default;
};

struct SweepOutput {
  std::vector<EpisodeRecord> episodes;
  AggregateReport report;
};

/// Seeds base.seed .. base.seed + runs - 1 in every (policy, penetration) cell.
SweepOutput sweep(const RunConfig& base, const std::vector<Policy>& policies, const std::vector<double>& penetrations,
                  int runs_per_cell);

/// Groups records by (policy, penetration); collision episodes contribute no PET.
AggregateReport aggregate(const std::vector<EpisodeRecord>& episodes);

// Persistence. Wall-clock planner time is written only when include_timing is set.
std::string episode_to_jsonl(const EpisodeRecord& record, bool include_timing);
EpisodeRecord episode_from_json(std::string_view line);
std::string episodes_to_jsonl(const std::vector<EpisodeRecord>& records, bool include_timing);
std::vector<EpisodeRecord> episodes_from_jsonl(std::string_view text);
std::string report_to_csv(const AggregateReport& report);
AggregateReport report_from_csv(std::string_view text);
std::string step_log_to_jsonl(const StepLog& log);
std::string pets_to_csv(const std::vector<EpisodeRecord>& records);

void write_text_file(const std::string& path, std::string_view content);
std::string read_text_file(const std::string& path);

struct SyntheticOptions {
  int n = 400;
  double margin = 0.5;       // s, minimum |ttcp_i - ttcp_j|
  double ttcp_min = 0.5;
  double ttcp_max = 10.0;
  bool zero_ac = true;       // a_c_j fixed at 0 instead of derived from sampled kinematics
  std::uint64_t seed = 0;
};

/// Separable interactions labeled rush iff ttcp_i > ttcp_j.
std::vector<LabeledInteraction> synthetic_dataset(const SyntheticOptions& options);

}  // namespace rtr
