#pragma once

#include <algorithm>
#include <cmath>
#include <array>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <vector>

#include <Eigen/Core>

#include "maptag/cloud.hpp"
#include "maptag/error.hpp"

namespace maptag {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Squared Euclidean distance, evaluated in a fixed order so every caller
/// (including brute-force checks) gets bit-identical values.
inline double squared_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Immutable k-d tree over a snapshot of a cloud's coordinates.
///
/// Neighbors are ordered by (squared distance, point index), so results match
/// a brute-force sort exactly. Queries are const and thread-safe.
class SpatialIndex {
 public:
  explicit SpatialIndex(const IntensityCloud& cloud, std::size_t leaf_size = 16)
      : leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    points_.reserve(cloud.size());
    for (const auto& p : cloud.points) points_.emplace_back(p.x, p.y, p.z);
    perm_.resize(points_.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = static_cast<std::uint32_t>(i);
    if (!points_.empty()) build(0, perm_.size());
    // Leaf scans read contiguous memory.
    ordered_.reserve(points_.size());
    for (std::uint32_t p : perm_) ordered_.push_back(points_[p]);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Eigen::Vector3d& point(std::size_t i) const { return points_[i]; }

  /// Point indices in leaf order. Running per-point queries in this order
  /// keeps successive queries spatially close, which is much faster.
  const std::vector<std::uint32_t>& traversal_order() const { return perm_; }

  /// The k nearest points, ascending by distance; all points when k > size().
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k) const {
    if (points_.empty()) throw Error(ErrorCode::EmptyCloud, "knn on an empty cloud");
    k = std::min(k, points_.size());
    std::vector<Entry> best;
    best.reserve(k + 1);
    if (k > 0) {
      std::array<double, 3> offsets{0.0, 0.0, 0.0};
      knn_node(0, query, k, best, 0.0, offsets);
    }
    std::vector<Neighbor> out;
    out.reserve(best.size());
    for (const auto& e : best) out.push_back({e.index, std::sqrt(e.d2)});
    return out;
  }

  /// All points within `radius` (inclusive), ascending by index.
  std::vector<std::size_t> radius_search(const Eigen::Vector3d& query, double radius) const {
    std::vector<std::size_t> out;
    if (points_.empty() || radius < 0.0) return out;
    radius_node(0, query, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;
    int dim = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  struct Entry {
    double d2;
    std::size_t index;
    bool operator<(const Entry& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    Eigen::Vector3d lo = points_[perm_[begin]], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[perm_[i]]);
      hi = hi.cwiseMax(points_[perm_[i]]);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(begin),
                     perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                     perm_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = points_[a][dim], cb = points_[b][dim];
                       return ca < cb || (ca == cb && a < b);
                     });
    const double split = points_[perm_[mid]][dim];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    Node& n = nodes_[id];
    n.dim = dim;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  /// cell_d2 is the squared distance from q to the node's cell, built up from
  /// the per-axis offsets to the split planes crossed so far. `best` is kept
  /// sorted ascending.
  void knn_node(std::size_t id, const Eigen::Vector3d& q, std::size_t k, std::vector<Entry>& best, double cell_d2,
                std::array<double, 3>& offsets) const {
    const Node& n = nodes_[id];
    if (n.dim < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const double d2 = squared_distance(q, ordered_[i]);
        if (best.size() == k) {
          const Entry& worst = best.back();
          if (d2 > worst.d2 || (d2 == worst.d2 && perm_[i] > worst.index)) continue;
          best.pop_back();
        }
        const Entry e{d2, perm_[i]};
        auto pos = best.end();
        while (pos != best.begin() && e < *(pos - 1)) --pos;
        best.insert(pos, e);
      }
      return;
    }
    const double diff = q[n.dim] - n.split;
    const std::size_t near = diff < 0.0 ? n.left : n.right;
    const std::size_t far = diff < 0.0 ? n.right : n.left;
    knn_node(near, q, k, best, cell_d2, offsets);
    const double old = offsets[n.dim];
    const double far_d2 = cell_d2 - old * old + diff * diff;
    // Equal distances must still be visited so index tie-breaks stay exact.
    if (best.size() < k || far_d2 <= best.back().d2) {
      offsets[n.dim] = diff;
      knn_node(far, q, k, best, far_d2, offsets);
      offsets[n.dim] = old;
    }
  }

  void radius_node(std::size_t id, const Eigen::Vector3d& q, double r2, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[id];
    if (n.dim < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i)
        if (squared_distance(q, ordered_[i]) <= r2) out.push_back(perm_[i]);
      return;
    }
    const double diff = q[n.dim] - n.split;
    if (diff <= 0.0 || diff * diff <= r2) radius_node(n.left, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) radius_node(n.right, q, r2, out);
  }

  std::size_t leaf_size_;
  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> perm_;
  std::vector<Eigen::Vector3d> ordered_;  // points_ in perm_ order
  std::vector<Node> nodes_;
};

/// Free-function form of SpatialIndex::knn.
inline std::vector<Neighbor> knn(const SpatialIndex& index, const Eigen::Vector3d& query, std::size_t k) {
  return index.knn(query, k);
}

}  // namespace maptag
