#pragma once

// Euclidean clustering and PCA oriented bounding boxes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "maptag/cloud.hpp"
#include "maptag/error.hpp"
#include "maptag/geometry.hpp"
#include "maptag/parallel.hpp"
#include "maptag/spatial_index.hpp"

namespace maptag {

/// Member indices into the clustered cloud, ascending.
using Cluster = std::vector<std::size_t>;

/// Connected components of the graph linking points at distance <= tol,
/// keeping components with min_size..max_size members. Sorted by descending
/// size, then by smallest member index.
inline std::vector<Cluster> euclidean_cluster(const IntensityCloud& cloud, const SpatialIndex& index, double tol,
                                              std::size_t min_size,
                                              std::size_t max_size = std::numeric_limits<std::size_t>::max()) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "cluster tolerance must be positive");
  if (min_size < 1 || min_size > max_size) throw Error(ErrorCode::InvalidConfig, "need 1 <= min_size <= max_size");
  std::vector<Cluster> clusters;
  std::vector<char> visited(cloud.size(), 0);
  std::vector<std::size_t> frontier;
  for (std::size_t seed = 0; seed < cloud.size(); ++seed) {
    if (visited[seed]) continue;
    Cluster members{seed};
    visited[seed] = 1;
    frontier.assign(1, seed);
    while (!frontier.empty()) {
      const std::size_t cur = frontier.back();
      frontier.pop_back();
      for (std::size_t nb : index.radius_search(cloud.position(cur), tol)) {
        if (visited[nb]) continue;
        visited[nb] = 1;
        members.push_back(nb);
        frontier.push_back(nb);
      }
    }
    if (members.size() < min_size || members.size() > max_size) continue;
    std::sort(members.begin(), members.end());
    clusters.push_back(std::move(members));
  }
  std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    return a.size() > b.size() || (a.size() == b.size() && a.front() < b.front());
  });
  return clusters;
}

inline std::vector<Cluster> euclidean_cluster(const IntensityCloud& cloud, double tol, std::size_t min_size,
                                              std::size_t max_size = std::numeric_limits<std::size_t>::max()) {
  if (cloud.empty()) return {};
  const SpatialIndex index(cloud);
  return euclidean_cluster(cloud, index, tol, min_size, max_size);
}

/// Mean distance from each point to its nearest other point (0 for < 2 points).
inline double mean_nearest_neighbor_spacing(const IntensityCloud& cloud, const SpatialIndex& index,
                                            unsigned threads = 1) {
  if (cloud.size() < 2) return 0.0;
  std::vector<double> d(cloud.size(), 0.0);
  const auto& order = index.traversal_order();
  parallel_for(cloud.size(), threads, [&](std::size_t j) {
    const std::size_t i = order[j];
    d[i] = index.knn(cloud.position(i), 2).back().distance;
  });
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

/// Oriented bounding box. pose maps box coordinates to map coordinates:
/// columns of pose.rotation are the length, width and height axes and
/// pose.translation is the box center.
struct ObbCandidate {
  RigidTransform pose;
  Eigen::Vector3d extents = Eigen::Vector3d::Zero();  // (l, w, h), l >= w >= h
  Cluster members;

  double length() const { return extents[0]; }
  double width() const { return extents[1]; }
  double height() const { return extents[2]; }
  double diagonal() const { return extents.norm(); }
};

namespace obb_detail {

/// Flips v so its largest-magnitude component is positive (first one on ties).
inline Eigen::Vector3d fix_sign(const Eigen::Vector3d& v) {
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(v[i]) > std::abs(v[k])) k = i;
  return v[k] < 0.0 ? Eigen::Vector3d(-v) : v;
}

}  // namespace obb_detail

/// PCA box: axes are covariance eigenvectors by descending eigenvalue with a
/// deterministic sign rule, extents are the projection ranges sorted l >= w >= h.
inline ObbCandidate compute_obb(const IntensityCloud& cloud, const Cluster& cluster) {
  if (cluster.size() < 3) throw Error(ErrorCode::DegenerateCluster, "cluster has fewer than 3 points");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (std::size_t i : cluster) centroid += cloud.position(i);
  centroid /= static_cast<double>(cluster.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : cluster) {
    const Eigen::Vector3d d = cloud.position(i) - centroid;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(cluster.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d values = eig.eigenvalues();
  if (!(values[2] > 0.0) || values[1] <= 1e-12 * values[2])
    throw Error(ErrorCode::DegenerateCluster, "cluster points are collinear or coincident");

  std::array<Eigen::Vector3d, 3> axes;
  axes[0] = obb_detail::fix_sign(eig.eigenvectors().col(2));
  axes[1] = obb_detail::fix_sign(eig.eigenvectors().col(1));
  axes[2] = axes[0].cross(axes[1]);

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (std::size_t i : cluster) {
    const Eigen::Vector3d p = cloud.position(i);
    for (int k = 0; k < 3; ++k) {
      const double s = axes[k].dot(p);
      lo[k] = std::min(lo[k], s);
      hi[k] = std::max(hi[k], s);
    }
  }
  Eigen::Vector3d ext = hi - lo;
  Eigen::Vector3d mid = 0.5 * (hi + lo);

  // Relabel so extents are sorted; the third axis is rebuilt to keep det = +1.
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ext[a] > ext[b]; });
  ObbCandidate obb;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) center += axes[k] * mid[k];
  const Eigen::Vector3d a0 = axes[order[0]];
  const Eigen::Vector3d a1 = axes[order[1]];
  obb.pose.rotation.col(0) = a0;
  obb.pose.rotation.col(1) = a1;
  obb.pose.rotation.col(2) = a0.cross(a1);
  obb.pose.translation = center;
  obb.extents = {ext[order[0]], ext[order[1]], ext[order[2]]};
  obb.members = cluster;
  return obb;
}

}  // namespace maptag
