#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rtr/dynamics.hpp"
#include "rtr/types.hpp"

namespace rtr {

/// Separating plane w1 * ttcp_i + w2 * ttcp_j + w3 * a_c_j + b = 0 in the
/// ego-centred feature space; positive side means the ego rushes.
struct IntentionBoundary {
  double w1 = 1.0;
  double w2 = -1.0;
  double w3 = 0.12;
  double b = 0.0;

  Eigen::Vector3d weights() const { return {w1, w2, w3}; }
};

/// Shipped calibration used when no boundary file is supplied.
IntentionBoundary default_boundary();

struct LabeledInteraction {
  double ttcp_i = 0.0;
  double ttcp_j = 0.0;
  double a_c_j = 0.0;
  Intention label = Intention::Rush;  // outcome for the ego j
};

struct TrainOptions {
  int epochs = 4000;
  double step = 0.5;
};

/// Soft-margin linear SVM trained by deterministic full-batch sub-gradient
/// descent on mean hinge loss + reg * |w|^2.
IntentionBoundary train_boundary(const std::vector<LabeledInteraction>& data, double reg,
                                 const TrainOptions& options = {});

/// Mean hinge loss max(0, 1 - y f(x)) with y = +1 for rush.
double hinge_loss(const std::vector<LabeledInteraction>& data, const IntentionBoundary& boundary);
double training_accuracy(const std::vector<LabeledInteraction>& data, const IntentionBoundary& boundary);

struct IntentionEstimate {
  VehicleId vehicle = 0;
  Intention intention = Intention::Yield;
  double margin = 0.0;
};

double decision_value(const IntentionBoundary& boundary, double ttcp_i, double ttcp_j, double a_c_j);

/// margin > 0 is rush; ties and the negative side are yield.
IntentionEstimate classify(const InteractionFeatures& features, const IntentionBoundary& boundary,
                           VehicleId ego = 0);

/// The opponent TTCP on the zero set for a given ego TTCP, with the opponent's
/// distance and speed (d_s, v_s) entering through the cooperative acceleration.
/// Requires w1 != 0.
double boundary_curve(double ttcp_j, double d_s, double v_s, const IntentionBoundary& boundary);

enum class Region { A, B, C, D, E };
std::string_view to_string(Region region);

/// Directed classifications of a pair with the stopped-vehicle bypass applied.
struct PairIntentions {
  IntentionEstimate ego;       // j
  IntentionEstimate opponent;  // i
};
PairIntentions classify_pair(const InteractionFeatures& feat_ij, const IntentionBoundary& boundary, VehicleId ego = 0,
                             VehicleId opponent = 1);

Region classify_region(const InteractionFeatures& feat_ij, const IntentionBoundary& boundary, double t_far);

struct BipgSample {
  double t = 0.0;
  InteractionFeatures features;  // ego perspective
  Region region = Region::C;
  /// Vehicle the region expects to pass first; nullopt in region D.
  std::optional<VehicleId> expected_first;
};

struct BipgTrace {
  VehicleId ego = 0;
  VehicleId opponent = 0;
  std::vector<BipgSample> samples;

  /// Appends a sample; timestamps must strictly increase.
  void push(BipgSample sample);
  double span() const { return samples.empty() ? 0.0 : samples.back().t - samples.front().t; }
};

/// Builds the sample for the current pair state (region, expected first vehicle).
BipgSample make_sample(double t, VehicleId ego, VehicleId opponent, const InteractionFeatures& feat_ij,
                       const IntentionBoundary& boundary, double t_far);

enum class UncertainMode { RegionFlips, DerivativeFlips };

struct DetectorConfig {
  double dangerous_ttcp = 3.0;
  double inefficient_window = 1.0;
  double uncertain_window = 2.0;
  int flip_threshold = 2;
  double eps_ttcp = 0.1;
  double t_far = 6.0;
  UncertainMode uncertain_mode = UncertainMode::RegionFlips;
};

struct DetectorResult {
  bool fired = false;
  bool insufficient = false;  // trace shorter than the window
  explicit operator bool() const { return fired; }
};

bool detect_dangerous(const InteractionFeatures& feat, double threshold = 3.0);
DetectorResult detect_inefficient(const BipgTrace& trace, double window, double eps_ttcp = 0.1);
DetectorResult detect_uncertain(const BipgTrace& trace, double window, int flip_threshold = 2,
                                UncertainMode mode = UncertainMode::RegionFlips);

enum class BreakdownKind { Uncertain, Inefficient, Dangerous };
std::string_view to_string(BreakdownKind kind);

struct BreakdownEvent {
  BreakdownKind kind = BreakdownKind::Dangerous;
  double t = 0.0;
  std::pair<VehicleId, VehicleId> pair;
};

/// Dangerous, then inefficient, then uncertain on the latest state and window.
std::optional<BreakdownEvent> detect_breakdown(const BipgTrace& trace, const DetectorConfig& config);

// Boundary file and training dataset formats.
std::string boundary_to_json(const IntentionBoundary& boundary);
IntentionBoundary boundary_from_json(std::string_view text);
IntentionBoundary load_boundary_file(const std::string& path);
void save_boundary_file(const IntentionBoundary& boundary, const std::string& path);

std::vector<LabeledInteraction> parse_dataset_csv(std::string_view text);
std::vector<LabeledInteraction> load_dataset_csv(const std::string& path);
std::string dataset_to_csv(const std::vector<LabeledInteraction>& data);

}  // namespace rtr
