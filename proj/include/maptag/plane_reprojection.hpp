#pragma once

// Re-seats a buffered candidate on the plane x = 1 m in front of the origin,
// renders it as an intensity image by spherical projection and maps image
// coordinates back into the map.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "maptag/candidate_filter.hpp"
#include "maptag/cloud.hpp"
#include "maptag/error.hpp"
#include "maptag/geometry.hpp"
#include "maptag/image.hpp"
#include "maptag/spatial_index.hpp"

namespace maptag {

/// Distance from the origin to the intermediate plane, meters.
inline constexpr double kPlaneDistance = 1.0;

/// Cyclic axis permutation (det +1) taking OBB-frame coordinates to view
/// coordinates with the thinnest box axis along X.
struct AxisPermutation {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
  int thin_axis = 0;

  Eigen::Vector3d forward(const Eigen::Vector3d& p) const { return matrix * p; }
  Eigen::Vector3d inverse(const Eigen::Vector3d& p) const { return matrix.transpose() * p; }
};

struct PlaneFrameCandidate {
  std::vector<Eigen::Vector3d> points;  // on or near x = 1 m
  std::vector<double> intensities;
  std::vector<std::size_t> sources;  // raw-map index of each point
  RigidTransform obb_pose;
  AxisPermutation permutation;
  Eigen::Vector3d extents = Eigen::Vector3d::Zero();  // buffered box extents in the OBB frame
};

/// p_G = R^-1 p - R^-1 t.
inline std::vector<Eigen::Vector3d> to_obb_frame(std::span<const Eigen::Vector3d> points, const RigidTransform& pose) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  const Eigen::Matrix3d rt = pose.rotation.transpose();
  for (const auto& p : points) out.push_back(rt * p - rt * pose.translation);
  return out;
}

inline AxisPermutation permutation_for_thin_axis(int thin_axis) {
  AxisPermutation perm;
  perm.thin_axis = thin_axis;
  perm.matrix.setZero();
  // Cyclic: new (x, y, z) = old (k, k+1, k+2).
  for (int row = 0; row < 3; ++row) perm.matrix(row, (thin_axis + row) % 3) = 1.0;
  return perm;
}

/// Sends the axis with the smallest extent to X so the candidate plane spans Y-Z.
inline std::pair<std::vector<Eigen::Vector3d>, AxisPermutation> align_normal_to_view(
    std::span<const Eigen::Vector3d> points, const Eigen::Vector3d& extents) {
  int thin = 0;
  for (int k = 1; k < 3; ++k)
    if (extents[k] < extents[thin]) thin = k;
  const AxisPermutation perm = permutation_for_thin_axis(thin);
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(perm.forward(p));
  return {std::move(out), perm};
}

inline const Eigen::Vector3d& plane_shift() {
  static const Eigen::Vector3d t_in(kPlaneDistance, 0.0, 0.0);
  return t_in;
}

/// p' = I * p_G + (1 m, 0, 0).
inline std::vector<Eigen::Vector3d> to_intermediate_plane(std::span<const Eigen::Vector3d> points) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p + plane_shift());
  return out;
}

inline std::vector<Eigen::Vector3d> from_intermediate_plane(std::span<const Eigen::Vector3d> points) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p - plane_shift());
  return out;
}

/// Full forward chain for one buffered candidate.
inline PlaneFrameCandidate make_plane_candidate(const IntensityCloud& raw, const BufferedCandidate& buffered) {
  PlaneFrameCandidate c;
  c.obb_pose = buffered.source.pose;
  c.extents = buffered.extents;
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(buffered.points.size());
  for (std::size_t i : buffered.points) {
    pts.push_back(raw.position(i));
    c.intensities.push_back(raw[i].intensity);
    c.sources.push_back(i);
  }
  const auto local = to_obb_frame(pts, c.obb_pose);
  auto [aligned, perm] = align_normal_to_view(local, buffered.source.extents);
  c.permutation = perm;
  c.points = to_intermediate_plane(aligned);
  return c;
}

/// Map-frame position of a plane-frame point (inverse of the forward chain).
inline Eigen::Vector3d plane_to_map(const Eigen::Vector3d& plane_point, const PlaneFrameCandidate& c) {
  const Eigen::Vector3d local = c.permutation.inverse(plane_point - plane_shift());
  return c.obb_pose.apply(local);
}

struct SphericalCoords {
  double azimuth = 0.0;      // theta
  double inclination = 0.0;  // phi
  double range = 0.0;        // r
};

inline SphericalCoords to_spherical(const Eigen::Vector3d& p) {
  const double planar = std::hypot(p.x(), p.y());
  return {std::atan2(p.y(), p.x()), std::atan2(p.z(), planar), p.norm()};
}

/// Continuous image coordinates of a point (before rounding).
inline Eigen::Vector2d project_subpixel(const Eigen::Vector3d& p, const ImageGeometry& g) {
  const SphericalCoords s = to_spherical(p);
  return {s.azimuth / g.res_azimuth + g.u_offset, s.inclination / g.res_inclination + g.v_offset};
}

/// Unit ray direction for continuous image coordinates.
inline Eigen::Vector3d pixel_ray(const Eigen::Vector2d& pixel, const ImageGeometry& g) {
  const double theta = (pixel.x() - g.u_offset) * g.res_azimuth;
  const double phi = (pixel.y() - g.v_offset) * g.res_inclination;
  return {std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi)};
}

/// Nearest-range rasterization; ties go to the lower point index. Points
/// outside the raster are ignored.
inline IntensityImage rasterize(std::span<const Eigen::Vector3d> points, std::span<const double> intensities,
                                const ImageGeometry& g) {
  IntensityImage img(g);
  std::vector<double> depth(img.values.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const SphericalCoords s = to_spherical(points[i]);
    const long u = std::lround(s.azimuth / g.res_azimuth) + g.u_offset;
    const long v = std::lround(s.inclination / g.res_inclination) + g.v_offset;
    if (u < 0 || v < 0 || u >= g.width || v >= g.height) continue;
    const std::size_t o = img.offset(static_cast<int>(u), static_cast<int>(v));
    if (s.range < depth[o]) {
      depth[o] = s.range;
      img.values[o] = intensities[i];
      img.sources[o] = static_cast<std::int64_t>(i);
    }
  }
  return img;
}

/// One synchronous pass: an empty pixel with at least `min_neighbors` filled
/// 8-neighbors takes their median (lower median for even counts) and that
/// neighbor's source. Returns the number of pixels filled.
inline std::size_t fill_holes_once(IntensityImage& img, int min_neighbors) {
  const IntensityImage before = img;
  std::size_t filled = 0;
  std::vector<std::pair<double, std::int64_t>> nb;
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      if (!before.is_empty(u, v)) continue;
      nb.clear();
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          if (du == 0 && dv == 0) continue;
          const int uu = u + du, vv = v + dv;
          if (!img.geometry.contains(uu, vv) || before.is_empty(uu, vv)) continue;
          nb.emplace_back(before.at(uu, vv), before.sources[before.offset(uu, vv)]);
        }
      if (static_cast<int>(nb.size()) < min_neighbors) continue;
      std::sort(nb.begin(), nb.end());
      const auto& m = nb[(nb.size() - 1) / 2];
      img.set(u, v, m.first, m.second);
      ++filled;
    }
  }
  return filled;
}

struct RenderParams {
  double tag_side = 0.2;
  /// Target pixel count across 2a; the finest resolution used.
  double pixels_across = 256.0;
  double min_pixels_across = 64.0;
  double max_pixels_across = 1024.0;
  /// Pixel pitch as a multiple of the candidate's point spacing.
  double spacing_factor = 1.2;
  int hole_passes = 2;
  int hole_min_neighbors = 5;
  int padding = 2;
};

/// Mean in-plane point spacing (1/sqrt(density)) of a plane-frame candidate,
/// from the mean nearest-neighbor distance of its Y-Z projection.
inline double in_plane_spacing(const PlaneFrameCandidate& c) {
  if (c.points.size() < 2) return 0.0;
  IntensityCloud flat;
  flat.points.reserve(c.points.size());
  for (const auto& p : c.points) flat.points.push_back({0.0, p.y(), p.z(), 0.0});
  const SpatialIndex index(flat);
  double sum = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) sum += index.knn(flat.position(i), 2).back().distance;
  // Poisson sampling: mean nearest-neighbor distance = 0.5 / sqrt(density).
  return 2.0 * sum / static_cast<double>(flat.size());
}

/// Geometry whose pixel pitch resolves 2a with `pixels_across` pixels, coarsened
/// to the point spacing, clamped to the allowed range, with offsets centering
/// the candidate's angular footprint.
inline ImageGeometry default_geometry(const PlaneFrameCandidate& c, const RenderParams& params) {
  if (c.points.empty()) throw Error(ErrorCode::DegenerateImage, "empty candidate");
  const double span = 2.0 * params.tag_side / kPlaneDistance;
  double res = span / params.pixels_across;
  res = std::max(res, params.spacing_factor * in_plane_spacing(c) / kPlaneDistance);
  res = std::clamp(res, span / params.max_pixels_across, span / params.min_pixels_across);

  double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin, pmin = tmin, pmax = -tmin;
  for (const auto& p : c.points) {
    const SphericalCoords s = to_spherical(p);
    tmin = std::min(tmin, s.azimuth);
    tmax = std::max(tmax, s.azimuth);
    pmin = std::min(pmin, s.inclination);
    pmax = std::max(pmax, s.inclination);
  }
  ImageGeometry g;
  g.res_azimuth = g.res_inclination = res;
  const long u0 = std::lround(tmin / res), u1 = std::lround(tmax / res);
  const long v0 = std::lround(pmin / res), v1 = std::lround(pmax / res);
  g.u_offset = params.padding - static_cast<int>(u0);
  g.v_offset = params.padding - static_cast<int>(v0);
  g.width = static_cast<int>(u1 - u0) + 1 + 2 * params.padding;
  g.height = static_cast<int>(v1 - v0) + 1 + 2 * params.padding;
  return g;
}

/// Renders the candidate from the origin. The pixel -> source map refers to
/// indices into candidate.points.
inline IntensityImage render_intensity_image(const PlaneFrameCandidate& candidate, const RenderParams& params = {},
                                             const std::optional<ImageGeometry>& geometry = std::nullopt) {
  if (candidate.points.empty()) throw Error(ErrorCode::DegenerateImage, "empty candidate");
  const ImageGeometry g = geometry ? *geometry : default_geometry(candidate, params);
  IntensityImage img = rasterize(candidate.points, candidate.intensities, g);

  int umin = g.width, umax = -1, vmin = g.height, vmax = -1;
  for (int v = 0; v < g.height; ++v)
    for (int u = 0; u < g.width; ++u)
      if (!img.is_empty(u, v)) {
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
  if (umax < 0 || umax - umin + 1 < 8 || vmax - vmin + 1 < 8)
    throw Error(ErrorCode::DegenerateImage, "candidate covers fewer than 8x8 pixels");

  for (int pass = 0; pass < params.hole_passes; ++pass)
    if (fill_holes_once(img, params.hole_min_neighbors) == 0) break;
  return img;
}

/// Intersects the pixel's ray with x = 1 m and runs the inverse chain back to
/// map coordinates.
inline Eigen::Vector3d unproject_vertex(const Eigen::Vector2d& pixel, const ImageGeometry& g,
                                        const PlaneFrameCandidate& candidate) {
  const double theta = (pixel.x() - g.u_offset) * g.res_azimuth;
  const double phi = (pixel.y() - g.v_offset) * g.res_inclination;
  if (std::abs(theta) >= std::numbers::pi / 2 || std::abs(phi) >= std::numbers::pi / 2)
    throw Error(ErrorCode::DegenerateImage, "pixel ray parallel to the intermediate plane");
  const Eigen::Vector3d on_plane(kPlaneDistance, kPlaneDistance * std::tan(theta),
                                 kPlaneDistance * std::tan(phi) / std::cos(theta));
  return plane_to_map(on_plane, candidate);
}

}  // namespace maptag
