#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rtr {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

/// Piecewise-linear curve with cumulative arc-length lookup.
template <typename Scalar>
class Polyline {
 public:
  Polyline() = default;

  explicit Polyline(std::vector<Point2<Scalar>> points) : points_(std::move(points)) {
    if (points_.size() < 2) {
      throw std::invalid_argument("polyline needs at least two points");
    }
    cumulative_.resize(points_.size());
    cumulative_[0] = Scalar(0);
    for (std::size_t k = 1; k < points_.size(); ++k) {
      const Scalar seg = (points_[k] - points_[k - 1]).norm();
      if (!(seg > Scalar(0))) {
        throw std::invalid_argument("polyline has a zero-length segment");
      }
      cumulative_[k] = cumulative_[k - 1] + seg;
    }
  }

  const std::vector<Point2<Scalar>>& points() const { return points_; }
  std::size_t segments() const { return points_.empty() ? 0 : points_.size() - 1; }
  Scalar length() const { return cumulative_.empty() ? Scalar(0) : cumulative_.back(); }
  Scalar arc_at_vertex(std::size_t k) const { return cumulative_[k]; }

  /// Position at arc length s; clamps to the end points outside [0, length].
  Point2<Scalar> at(Scalar s) const {
    if (s <= Scalar(0)) return points_.front();
    if (s >= length()) return points_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t k = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    const Scalar t = (s - cumulative_[k]) / (cumulative_[k + 1] - cumulative_[k]);
    return points_[k] + t * (points_[k + 1] - points_[k]);
  }

 private:
  std::vector<Point2<Scalar>> points_;
  std::vector<Scalar> cumulative_;
};

/// Parameters (t, u) in [0,1]^2 where p0 + t(p1-p0) meets q0 + u(q1-q0).
/// Parallel and collinear segments report no crossing.
template <typename Scalar>
std::optional<std::pair<Scalar, Scalar>> segment_intersection(const Point2<Scalar>& p0,
                                                              const Point2<Scalar>& p1,
                                                              const Point2<Scalar>& q0,
                                                              const Point2<Scalar>& q1) {
  const Point2<Scalar> r = p1 - p0;
  const Point2<Scalar> d = q1 - q0;
  const Scalar denom = r.x() * d.y() - r.y() * d.x();
  const Scalar scale = r.norm() * d.norm();
  if (std::abs(denom) <= Scalar(1e-12) * scale) return std::nullopt;
  const Point2<Scalar> w = q0 - p0;
  const Scalar t = (w.x() * d.y() - w.y() * d.x()) / denom;
  const Scalar u = (w.x() * r.y() - w.y() * r.x()) / denom;
  constexpr Scalar eps = Scalar(1e-12);
  if (t < -eps || t > Scalar(1) + eps || u < -eps || u > Scalar(1) + eps) return std::nullopt;
  return std::make_pair(std::clamp(t, Scalar(0), Scalar(1)), std::clamp(u, Scalar(0), Scalar(1)));
}

/// Arc-length pairs (s_a, s_b) of every crossing of two polylines, ordered by s_a.
/// Crossings found twice at a shared vertex are merged.
template <typename Scalar>
std::vector<std::pair<Scalar, Scalar>> polyline_crossings(const Polyline<Scalar>& a,
                                                          const Polyline<Scalar>& b) {
  std::vector<std::pair<Scalar, Scalar>> hits;
  const auto& pa = a.points();
  const auto& pb = b.points();
  for (std::size_t i = 0; i + 1 < pa.size(); ++i) {
    for (std::size_t j = 0; j + 1 < pb.size(); ++j) {
      const auto hit = segment_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1]);
      if (!hit) continue;
      const Scalar sa = a.arc_at_vertex(i) + hit->first * (a.arc_at_vertex(i + 1) - a.arc_at_vertex(i));
      const Scalar sb = b.arc_at_vertex(j) + hit->second * (b.arc_at_vertex(j + 1) - b.arc_at_vertex(j));
      hits.emplace_back(sa, sb);
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<std::pair<Scalar, Scalar>> merged;
  for (const auto& h : hits) {
    if (!merged.empty() && std::abs(merged.back().first - h.first) < Scalar(1e-9) &&
        std::abs(merged.back().second - h.second) < Scalar(1e-9)) {
      continue;
    }
    merged.push_back(h);
  }
  return merged;
}

}  // namespace rtr
