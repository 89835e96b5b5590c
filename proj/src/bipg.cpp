#include "rtr/bipg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rtr {

IntentionBoundary default_boundary() { return IntentionBoundary{1.0, -1.0, 0.12, 0.0}; }

namespace {

void check_training_data(const std::vector<LabeledInteraction>& data) {
  bool rush = false;
  bool yield = false;
  for (const auto& row : data) {
    if (!std::isfinite(row.ttcp_i) || !std::isfinite(row.ttcp_j) || !std::isfinite(row.a_c_j)) {
      throw std::domain_error("train_boundary: non-finite feature");
    }
    (row.label == Intention::Rush ? rush : yield) = true;
  }
  if (!rush || !yield) throw std::invalid_argument("train_boundary: degenerate data, both labels required");
}

double objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::Vector3d& w, double b,
                 double reg) {
  const Eigen::ArrayXd slack = (1.0 - y.array() * ((x * w).array() + b)).max(0.0);
  return slack.mean() + reg * w.squaredNorm();
}

}  // namespace

IntentionBoundary train_boundary(const std::vector<LabeledInteraction>& data, double reg,
                                 const TrainOptions& options) {
  check_training_data(data);
  if (!(reg >= 0.0)) throw std::invalid_argument("train_boundary: reg must be >= 0");
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& row = data[static_cast<std::size_t>(k)];
    x.row(k) << row.ttcp_i, row.ttcp_j, row.a_c_j;
    y(k) = row.label == Intention::Rush ? 1.0 : -1.0;
  }

  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  double b = 0.0;
  Eigen::Vector3d best_w = w;
  double best_b = b;
  double best = objective(x, y, w, b, reg);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const Eigen::ArrayXd active = (y.array() * ((x * w).array() + b) < 1.0).cast<double>();
    const Eigen::VectorXd coeff = (active * y.array()).matrix();
    const Eigen::Vector3d grad_w = 2.0 * reg * w - x.transpose() * coeff / static_cast<double>(n);
    const double grad_b = -coeff.sum() / static_cast<double>(n);
    if (grad_w.squaredNorm() + grad_b * grad_b == 0.0) break;
    const double eta = options.step / std::sqrt(static_cast<double>(epoch) + 1.0);
    w -= eta * grad_w;
    b -= eta * grad_b;
    const double obj = objective(x, y, w, b, reg);
    if (obj < best) {
      best = obj;
      best_w = w;
      best_b = b;
    }
  }
  return IntentionBoundary{best_w(0), best_w(1), best_w(2), best_b};
}

double decision_value(const IntentionBoundary& boundary, double ttcp_i, double ttcp_j, double a_c_j) {
  return boundary.w1 * ttcp_i + boundary.w2 * ttcp_j + boundary.w3 * a_c_j + boundary.b;
}

double hinge_loss(const std::vector<LabeledInteraction>& data, const IntentionBoundary& boundary) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& row : data) {
    const double y = row.label == Intention::Rush ? 1.0 : -1.0;
    total += std::max(0.0, 1.0 - y * decision_value(boundary, row.ttcp_i, row.ttcp_j, row.a_c_j));
  }
  return total / static_cast<double>(data.size());
}

double training_accuracy(const std::vector<LabeledInteraction>& data, const IntentionBoundary& boundary) {
  if (data.empty()) return 1.0;
  std::size_t correct = 0;
  for (const auto& row : data) {
    const double f = decision_value(boundary, row.ttcp_i, row.ttcp_j, row.a_c_j);
    const Intention predicted = f > 0.0 ? Intention::Rush : Intention::Yield;
    correct += predicted == row.label;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

IntentionEstimate classify(const InteractionFeatures& features, const IntentionBoundary& boundary, VehicleId ego) {
  IntentionEstimate out;
  out.vehicle = ego;
  out.margin = decision_value(boundary, features.ttcp_i, features.ttcp_j, features.a_c_j);
  out.intention = out.margin > 0.0 ? Intention::Rush : Intention::Yield;
  return out;
}

double boundary_curve(double ttcp_j, double d_s, double v_s, const IntentionBoundary& boundary) {
  if (ttcp_j == 0.0) throw std::domain_error("boundary_curve: singular at ttcp_j = 0");
  if (!(ttcp_j > 0.0)) throw std::domain_error("boundary_curve: ttcp_j must be > 0");
  if (boundary.w1 == 0.0) throw std::domain_error("boundary_curve: w1 must be non-zero");
  // Zero set of the decision value solved for the opponent TTCP.
  const double a_c = cooperative_acceleration(d_s, v_s, ttcp_j);
  return -(boundary.w2 / boundary.w1) * ttcp_j - (boundary.w3 / boundary.w1) * a_c - boundary.b / boundary.w1;
}

std::string_view to_string(Region region) {
  switch (region) {
    case Region::A: return "A";
    case Region::B: return "B";
    case Region::C: return "C";
    case Region::D: return "D";
    case Region::E: return "E";
  }
  return "C";
}

PairIntentions classify_pair(const InteractionFeatures& feat_ij, const IntentionBoundary& boundary, VehicleId ego,
                             VehicleId opponent) {
  // A stopped vehicle is behaviourally yielding; its classification is bypassed.
  auto directed = [&](const InteractionFeatures& f, bool self_stopped, VehicleId id) {
    if (self_stopped) return IntentionEstimate{id, Intention::Yield, -Ttcp::kSentinel};
    return classify(f, boundary, id);
  };
  return PairIntentions{directed(feat_ij, feat_ij.stopped_j, ego),
                        directed(feat_ij.swapped(), feat_ij.stopped_i, opponent)};
}

namespace {

Region region_of(const PairIntentions& p, const InteractionFeatures& f, double t_far) {
  const bool j_rush = p.ego.intention == Intention::Rush;
  const bool i_rush = p.opponent.intention == Intention::Rush;
  if (j_rush && !i_rush) return Region::A;
  if (i_rush && !j_rush) return Region::B;
  if (!i_rush && !j_rush) return Region::D;
  return std::min(f.ttcp_i, f.ttcp_j) > t_far ? Region::C : Region::E;
}

}  // namespace

Region classify_region(const InteractionFeatures& feat_ij, const IntentionBoundary& boundary, double t_far) {
  return region_of(classify_pair(feat_ij, boundary), feat_ij, t_far);
}

void BipgTrace::push(BipgSample sample) {
  if (!samples.empty() && !(sample.t > samples.back().t)) {
    throw std::invalid_argument("BipgTrace: timestamps must strictly increase");
  }
  samples.push_back(std::move(sample));
}

BipgSample make_sample(double t, VehicleId ego, VehicleId opponent, const InteractionFeatures& feat_ij,
                       const IntentionBoundary& boundary, double t_far) {
  BipgSample s;
  s.t = t;
  s.features = feat_ij;
  const PairIntentions p = classify_pair(feat_ij, boundary, ego, opponent);
  s.region = region_of(p, feat_ij, t_far);
  switch (s.region) {
    case Region::A: s.expected_first = ego; break;
    case Region::B: s.expected_first = opponent; break;
    case Region::D: break;
    case Region::C:
    case Region::E:
      if (p.ego.margin != p.opponent.margin) {
        s.expected_first = p.ego.margin > p.opponent.margin ? ego : opponent;
      } else if (feat_ij.ttcp_j != feat_ij.ttcp_i) {
        s.expected_first = feat_ij.ttcp_j < feat_ij.ttcp_i ? ego : opponent;
      } else {
        s.expected_first = std::min(ego, opponent);
      }
      break;
  }
  return s;
}

bool detect_dangerous(const InteractionFeatures& feat, double threshold) {
  return feat.ttcp_i < threshold && feat.ttcp_j < threshold;
}

namespace {

constexpr double kTimeTol = 1e-9;

/// Index of the first sample inside the trailing window, or nullopt if the trace is too short.
std::optional<std::size_t> window_start(const BipgTrace& trace, double window) {
  if (trace.samples.empty() || trace.span() + kTimeTol < window) return std::nullopt;
  const double t0 = trace.samples.back().t - window - kTimeTol;
  std::size_t k = trace.samples.size() - 1;
  while (k > 0 && trace.samples[k - 1].t >= t0) --k;
  return k;
}

}  // namespace

DetectorResult detect_inefficient(const BipgTrace& trace, double window, double eps_ttcp) {
  const auto start = window_start(trace, window);
  if (!start) return DetectorResult{false, true};
  const auto& s = trace.samples;
  for (std::size_t k = *start + 1; k < s.size(); ++k) {
    if (s[k].features.ttcp_i < s[k - 1].features.ttcp_i) return {};
    if (s[k].features.ttcp_j < s[k - 1].features.ttcp_j) return {};
  }
  const double rise_i = s.back().features.ttcp_i - s[*start].features.ttcp_i;
  const double rise_j = s.back().features.ttcp_j - s[*start].features.ttcp_j;
  return DetectorResult{rise_i > eps_ttcp && rise_j > eps_ttcp, false};
}

DetectorResult detect_uncertain(const BipgTrace& trace, double window, int flip_threshold, UncertainMode mode) {
  const auto start = window_start(trace, window);
  if (!start) return DetectorResult{false, true};
  const auto& s = trace.samples;
  int flips = 0;
  if (mode == UncertainMode::RegionFlips) {
    std::optional<VehicleId> last;
    for (std::size_t k = *start; k < s.size(); ++k) {
      if (!s[k].expected_first) continue;
      if (last && *last != *s[k].expected_first) ++flips;
      last = s[k].expected_first;
    }
  } else {
    int last_sign = 0;
    for (std::size_t k = *start + 1; k < s.size(); ++k) {
      const double g = (s[k].features.ttcp_i - s[k].features.ttcp_j) -
                       (s[k - 1].features.ttcp_i - s[k - 1].features.ttcp_j);
      const int sign = (g > 0.0) - (g < 0.0);
      if (sign == 0) continue;
      if (last_sign != 0 && sign != last_sign) ++flips;
      last_sign = sign;
    }
  }
  return DetectorResult{flips >= flip_threshold, false};
}

std::string_view to_string(BreakdownKind kind) {
  switch (kind) {
    case BreakdownKind::Uncertain: return "uncertain";
    case BreakdownKind::Inefficient: return "inefficient";
    case BreakdownKind::Dangerous: return "dangerous";
  }
  return "dangerous";
}

std::optional<BreakdownEvent> detect_breakdown(const BipgTrace& trace, const DetectorConfig& config) {
  if (trace.samples.empty()) return std::nullopt;
  const double t = trace.samples.back().t;
  const auto pair = std::make_pair(trace.ego, trace.opponent);
  if (detect_dangerous(trace.samples.back().features, config.dangerous_ttcp)) {
    return BreakdownEvent{BreakdownKind::Dangerous, t, pair};
  }
  if (detect_inefficient(trace, config.inefficient_window, config.eps_ttcp)) {
    return BreakdownEvent{BreakdownKind::Inefficient, t, pair};
  }
  if (detect_uncertain(trace, config.uncertain_window, config.flip_threshold, config.uncertain_mode)) {
    return BreakdownEvent{BreakdownKind::Uncertain, t, pair};
  }
  return std::nullopt;
}

std::string boundary_to_json(const IntentionBoundary& boundary) {
  nlohmann::ordered_json doc;
  doc["w1"] = boundary.w1;
  doc["w2"] = boundary.w2;
  doc["w3"] = boundary.w3;
  doc["b"] = boundary.b;
  doc["feature_units"] = {{"ttcp", "s"}, {"a_c", "m/s^2"}};
  return doc.dump(2) + "\n";
}

IntentionBoundary boundary_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("boundary parse failure: ") + e.what());
  }
  IntentionBoundary out;
  const char* keys[] = {"w1", "w2", "w3", "b"};
  double* slots[] = {&out.w1, &out.w2, &out.w3, &out.b};
  for (int k = 0; k < 4; ++k) {
    if (!doc.contains(keys[k]) || !doc[keys[k]].is_number()) throw ConfigError(keys[k], "missing or not a number");
    *slots[k] = doc[keys[k]].get<double>();
  }
  if (out.w1 == 0.0) throw ConfigError("w1", "must be non-zero");
  return out;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

IntentionBoundary load_boundary_file(const std::string& path) { return boundary_from_json(read_file(path)); }

void save_boundary_file(const IntentionBoundary& boundary, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << boundary_to_json(boundary);
}

std::vector<LabeledInteraction> parse_dataset_csv(std::string_view text) {
  std::vector<LabeledInteraction> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(row);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!header_seen) {
      if (cells != std::vector<std::string>{"ttcp_i", "ttcp_j", "ac_j", "label"}) {
        throw ConfigError("line 1", "expected header ttcp_i,ttcp_j,ac_j,label");
      }
      header_seen = true;
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != 4) throw ConfigError(where, "expected 4 columns");
    LabeledInteraction r;
    try {
      std::size_t used = 0;
      r.ttcp_i = std::stod(cells[0], &used);
      r.ttcp_j = std::stod(cells[1], &used);
      r.a_c_j = std::stod(cells[2], &used);
      r.label = parse_intention(cells[3]);
    } catch (const std::exception& e) {
      throw ConfigError(where, e.what());
    }
    rows.push_back(r);
  }
  if (!header_seen) throw ConfigError("line 1", "missing header");
  return rows;
}

std::vector<LabeledInteraction> load_dataset_csv(const std::string& path) { return parse_dataset_csv(read_file(path)); }

std::string dataset_to_csv(const std::vector<LabeledInteraction>& data) {
  std::string out = "ttcp_i,ttcp_j,ac_j,label\n";
  for (const auto& r : data) {
    out += fmt_double(r.ttcp_i) + "," + fmt_double(r.ttcp_j) + "," + fmt_double(r.a_c_j) + "," +
           std::string(to_string(r.label)) + "\n";
  }
  return out;
}

}  // namespace rtr
