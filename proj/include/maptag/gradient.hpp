#pragma once

// Intensity-gradient downsampling. Each point gets a local linear intensity
// model I(x) ~ A^T x + b fitted over its n nearest neighbors; points whose
// gradient norm |A| exceeds a threshold are kept.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "maptag/cloud.hpp"
#include "maptag/error.hpp"
#include "maptag/parallel.hpp"
#include "maptag/spatial_index.hpp"

namespace maptag {

struct GradientModel {
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();  // A, intensity units per meter
  double mean_intensity = 0.0;                         // b
  double radius = 0.0;                                 // distance to the farthest neighbor used
};

struct DownsampleParams {
  std::size_t neighbors = 20;
  /// When set, the threshold is the `quantile` of all gradient norms,
  /// raised to `noise_floor` times the median norm.
  bool relative_mode = true;
  double quantile = 0.9;
  double noise_floor = 4.0;
  double tau = 0.0;  // absolute threshold, intensity units per meter
  unsigned threads = 1;
};

struct DownsampleDiagnostics {
  std::size_t input_points = 0;
  std::size_t kept_points = 0;
  std::size_t skipped_degenerate = 0;
  double effective_tau = 0.0;
  double mean_neighborhood_radius = 0.0;
};

struct DownsampleResult {
  IntensityCloud cloud;
  std::vector<std::size_t> kept;  // output index -> source index
  std::vector<double> norms;      // per source point; NaN where the fit was degenerate
  DownsampleDiagnostics diagnostics;
};

/// Relative eigenvalue cutoff below which a neighborhood direction carries no
/// gradient information (planar or collinear neighborhoods).
inline constexpr double kRankTolerance = 1e-8;

/// Least-squares fit over the n nearest neighbors of point i (point i included).
/// Coordinates are centered on the neighborhood centroid, so b is exactly the
/// mean intensity. Rank-deficient directions get a zero gradient component.
inline GradientModel fit_local_model(const IntensityCloud& cloud, const SpatialIndex& index, std::size_t i,
                                     std::size_t n) {
  if (n < 4) throw Error(ErrorCode::InvalidConfig, "gradient neighborhood needs n >= 4");
  if (cloud.size() < n) throw Error(ErrorCode::InvalidConfig, "cloud smaller than gradient neighborhood");
  auto nbrs = index.knn(cloud.position(i), n);
  if (std::none_of(nbrs.begin(), nbrs.end(), [&](const Neighbor& nb) { return nb.index == i; }))
    nbrs.back() = Neighbor{i, 0.0};

  GradientModel model;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  double mean = 0.0;
  for (const auto& nb : nbrs) {
    centroid += cloud.position(nb.index);
    mean += cloud[nb.index].intensity;
    model.radius = std::max(model.radius, nb.distance);
  }
  const double count = static_cast<double>(nbrs.size());
  centroid /= count;
  mean /= count;
  model.mean_intensity = mean;

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  Eigen::Vector3d moment = Eigen::Vector3d::Zero();
  bool all_same = true;
  const Eigen::Vector3d first = cloud.position(nbrs.front().index);
  for (const auto& nb : nbrs) {
    const Eigen::Vector3d p = cloud.position(nb.index);
    all_same = all_same && p == first;
    const Eigen::Vector3d d = p - centroid;
    scatter.noalias() += d * d.transpose();
    moment += d * (cloud[nb.index].intensity - mean);
  }
  if (all_same)
    throw Error(ErrorCode::DegenerateNeighborhood, "all neighbors of point " + std::to_string(i) + " coincide");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const Eigen::Vector3d& values = eig.eigenvalues();  // ascending
  const double largest = values[2];
  if (!(largest > 0.0))
    throw Error(ErrorCode::DegenerateNeighborhood, "zero spread around point " + std::to_string(i));
  for (int k = 0; k < 3; ++k) {
    if (values[k] <= kRankTolerance * largest) continue;
    const Eigen::Vector3d axis = eig.eigenvectors().col(k);
    model.gradient += axis * (axis.dot(moment) / values[k]);
  }
  return model;
}

inline double gradient_norm(const GradientModel& model) { return model.gradient.norm(); }

/// Linear-interpolated quantile of an already sorted sequence.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double effective_threshold(const std::vector<double>& norms, const DownsampleParams& params) {
  if (!params.relative_mode) return params.tau;
  std::vector<double> sorted;
  sorted.reserve(norms.size());
  for (double v : norms)
    if (!std::isnan(v)) sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());
  return std::max(sorted_quantile(sorted, params.quantile), params.noise_floor * sorted_quantile(sorted, 0.5));
}

inline DownsampleResult downsample_by_gradient(const IntensityCloud& cloud, const SpatialIndex& index,
                                               const DownsampleParams& params) {
  if (params.neighbors < 4) throw Error(ErrorCode::InvalidConfig, "gradient neighborhood needs n >= 4");
  if (params.relative_mode && !(params.quantile > 0.0 && params.quantile < 1.0))
    throw Error(ErrorCode::InvalidConfig, "gradient quantile must lie in (0, 1)");
  if (!params.relative_mode && !(params.tau > 0.0))
    throw Error(ErrorCode::InvalidConfig, "absolute gradient threshold must be positive");

  DownsampleResult result;
  auto& diag = result.diagnostics;
  diag.input_points = cloud.size();
  if (cloud.size() < params.neighbors) {
    diag.effective_tau = params.relative_mode ? 0.0 : params.tau;
    return result;
  }

  const std::size_t n = cloud.size();
  result.norms.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> radii(n, 0.0);
  const auto& order = index.traversal_order();
  parallel_for(n, params.threads, [&](std::size_t j) {
    const std::size_t i = order[j];
    try {
      const GradientModel m = fit_local_model(cloud, index, i, params.neighbors);
      result.norms[i] = gradient_norm(m);
      radii[i] = m.radius;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateNeighborhood) throw;
    }
  });

  double radius_sum = 0.0;
  std::size_t fitted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(result.norms[i])) {
      ++diag.skipped_degenerate;
    } else {
      radius_sum += radii[i];
      ++fitted;
    }
  }
  diag.mean_neighborhood_radius = fitted ? radius_sum / static_cast<double>(fitted) : 0.0;
  diag.effective_tau = effective_threshold(result.norms, params);

  for (std::size_t i = 0; i < n; ++i) {
    if (result.norms[i] > diag.effective_tau) {  // NaN compares false
      result.kept.push_back(i);
      result.cloud.points.push_back(cloud.points[i]);
    }
  }
  diag.kept_points = result.kept.size();
  return result;
}

inline DownsampleResult downsample_by_gradient(const IntensityCloud& cloud, const DownsampleParams& params) {
  if (cloud.empty()) {
    DownsampleResult r;
    r.diagnostics.effective_tau = params.relative_mode ? 0.0 : params.tau;
    return r;
  }
  const SpatialIndex index(cloud);
  return downsample_by_gradient(cloud, index, params);
}

}  // namespace maptag
