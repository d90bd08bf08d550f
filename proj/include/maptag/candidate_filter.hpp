#pragma once

// Tag-size and squareness criteria on OBBs, and buffered extraction of the raw
// map points around each surviving box.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "maptag/cloud.hpp"
#include "maptag/cluster_obb.hpp"
#include "maptag/error.hpp"
#include "maptag/spatial_index.hpp"

namespace maptag {

/// side: full printed side length a (outer edge of the white margin).
/// thickness: allowance delta for the tag's apparent thickness in the map.
struct TagGeometry {
  double side = 0.2;
  double thickness = 0.03;

  void validate() const {
    if (!(side > 0.0) || !(thickness > 0.0) || !(thickness < side))
      throw Error(ErrorCode::InvalidConfig, "tag geometry needs a > 0 and 0 < delta < a");
  }
};

/// margin: multiplicative relaxation of both diagonal bounds.
/// edge_dilation: how far high-gradient bands spread past a tag edge; it
/// widens the upper bound to a tag of side a + 2 * edge_dilation.
struct DiagonalTolerance {
  double margin = 0.02;
  double edge_dilation = 0.0;
};

struct DiagonalBounds {
  double lower = 0.0;
  double upper = 0.0;
};

inline DiagonalBounds diagonal_bounds(const TagGeometry& geom, const DiagonalTolerance& tol = {}) {
  const double a = geom.side, d = geom.thickness;
  const double grown = a + 2.0 * tol.edge_dilation;
  return {std::sqrt(2.0 * a * a + d * d) * (1.0 - tol.margin),
          std::sqrt(4.0 * grown * grown + d * d) * (1.0 + tol.margin)};
}

/// h <= delta and sqrt(2a^2 + delta^2) <= L <= sqrt(4a^2 + delta^2), with the
/// tolerance applied to the bounds.
inline bool criterion_diagonal(const ObbCandidate& obb, const TagGeometry& geom, const DiagonalTolerance& tol = {}) {
  if (obb.height() > geom.thickness) return false;
  const DiagonalBounds b = diagonal_bounds(geom, tol);
  const double L = obb.diagonal();
  return L >= b.lower && L <= b.upper;
}

/// 1/1.5 <= l/w <= 1.5. A zero width fails.
inline bool criterion_aspect(const ObbCandidate& obb) {
  if (!(obb.width() > 0.0)) return false;
  const double ratio = obb.length() / obb.width();
  return ratio >= 1.0 / 1.5 && ratio <= 1.5;
}

struct CriteriaRecord {
  double diagonal = 0.0;
  double aspect = 0.0;  // l / w, infinity when w == 0
  bool pass_diagonal = false;
  bool pass_aspect = false;
};

inline CriteriaRecord evaluate_criteria(const ObbCandidate& obb, const TagGeometry& geom,
                                        const DiagonalTolerance& tol = {}) {
  CriteriaRecord r;
  r.diagonal = obb.diagonal();
  r.aspect = obb.width() > 0.0 ? obb.length() / obb.width() : std::numeric_limits<double>::infinity();
  r.pass_diagonal = criterion_diagonal(obb, geom, tol);
  r.pass_aspect = criterion_aspect(obb);
  return r;
}

/// Boxes passing both criteria, input order preserved. When `records` is
/// given it receives one entry per input box.
inline std::vector<ObbCandidate> filter_candidates(const std::vector<ObbCandidate>& obbs, const TagGeometry& geom,
                                                   const DiagonalTolerance& tol = {},
                                                   std::vector<CriteriaRecord>* records = nullptr) {
  std::vector<ObbCandidate> out;
  if (records) records->clear();
  for (const auto& obb : obbs) {
    const CriteriaRecord r = evaluate_criteria(obb, geom, tol);
    if (records) records->push_back(r);
    if (r.pass_diagonal && r.pass_aspect) out.push_back(obb);
  }
  return out;
}

/// Floor: in-plane extents become at least buffer * a and the thickness
/// becomes max(h, delta) + delta. Factor: l, w and h are multiplied by buffer,
/// with the thickness never below max(h, delta) + delta.
enum class BufferMode { Floor, Factor };

struct BufferedCandidate {
  ObbCandidate source;
  std::vector<std::size_t> points;  // indices into the raw cloud, ascending
  Eigen::Vector3d extents = Eigen::Vector3d::Zero();
};

inline Eigen::Vector3d buffered_extents(const ObbCandidate& obb, const TagGeometry& geom, BufferMode mode,
                                        double buffer) {
  const double thick = std::max(obb.height(), geom.thickness) + geom.thickness;
  if (mode == BufferMode::Floor) {
    const double floor = buffer * geom.side;
    return {std::max(obb.length(), floor), std::max(obb.width(), floor), thick};
  }
  return {obb.length() * buffer, obb.width() * buffer, std::max(obb.height() * buffer, thick)};
}

inline bool inside_box(const RigidTransform& pose, const Eigen::Vector3d& extents, const Eigen::Vector3d& p,
                       double eps = 1e-9) {
  const Eigen::Vector3d local = pose.apply_inverse(p);
  for (int k = 0; k < 3; ++k)
    if (std::abs(local[k]) > 0.5 * extents[k] + eps) return false;
  return true;
}

/// Raw-map points inside the enlarged box; the pose is carried over unchanged.
/// Throws EmptySelection when nothing falls inside.
inline BufferedCandidate extract_buffered(const IntensityCloud& raw, const SpatialIndex& raw_index,
                                          const ObbCandidate& obb, const TagGeometry& geom,
                                          BufferMode mode = BufferMode::Floor, double buffer = 2.0) {
  if (!(buffer > 0.0)) throw Error(ErrorCode::InvalidConfig, "buffer must be positive");
  BufferedCandidate out;
  out.source = obb;
  out.extents = buffered_extents(obb, geom, mode, buffer);
  const double reach = 0.5 * out.extents.norm() + 1e-9;
  for (std::size_t i : raw_index.radius_search(obb.pose.translation, reach))
    if (inside_box(obb.pose, out.extents, raw.position(i))) out.points.push_back(i);
  if (out.points.empty()) throw Error(ErrorCode::EmptySelection, "no raw points inside the buffered box");
  return out;
}

}  // namespace maptag
