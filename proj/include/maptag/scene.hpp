#pragma once

// Synthetic intensity maps with known tag placements, the single-projection
// baseline and scoring against ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maptag/cloud.hpp"
#include "maptag/dictionary.hpp"
#include "maptag/error.hpp"
#include "maptag/geometry.hpp"
#include "maptag/image.hpp"
#include "maptag/parallel.hpp"
#include "maptag/plane_reprojection.hpp"
#include "maptag/pose.hpp"
#include "maptag/spatial_index.hpp"
#include "maptag/tag_layout.hpp"

namespace maptag {

/// Rectangular surface. The front face looks along `normal`; seen from the
/// front, in-plane u points right and v up (v is `up` made orthogonal to the
/// normal).
struct PlaneSpec {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = -Eigen::Vector3d::UnitX();
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  double width = 1.0;
  double height = 1.0;
  double intensity = 120.0;
};

/// Tag printed on the front face of a plane, centered at `offset` (u, v) and
/// turned counter-clockwise by `rotation_deg` as seen from the front.
struct TagSpec {
  std::size_t id = 0;
  std::size_t plane = 0;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  double rotation_deg = 0.0;
  double side = 0.2;
  double black = 30.0;
  double white = 220.0;
};

struct SceneSpec {
  std::vector<PlaneSpec> planes;
  std::vector<TagSpec> tags;
  std::vector<Eigen::Vector3d> viewpoints{Eigen::Vector3d::Zero()};
  double density = 1e4;  // points per square meter
  double range_noise = 0.0;
  double intensity_noise = 5.0;
  TagLayout layout;
};

struct TruthTag {
  std::size_t id = 0;
  double side = 0.0;
  Corners3 vertices;  // outer corners of the black border, tag index order
  RigidTransform pose;
};

struct SceneTruth {
  std::vector<TruthTag> tags;
};

struct SynthResult {
  IntensityCloud cloud;
  SceneTruth truth;
};

/// In-plane axes (u, v) and normal n with u x v = n.
struct PlaneFrame {
  Eigen::Vector3d u, v, n, c;
  double half_w = 0.0, half_h = 0.0;
};

namespace scene_detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// mt19937_64 output is fixed by the standard; the distributions are not, so
/// uniform and normal variates are derived here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    const double u1 = 1.0 - uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

inline bool segment_hits(const PlaneFrame& f, const Eigen::Vector3d& o, const Eigen::Vector3d& p) {
  const Eigen::Vector3d d = p - o;
  const double denom = f.n.dot(d);
  if (std::abs(denom) < 1e-15) return false;
  const double t = f.n.dot(f.c - o) / denom;
  if (t <= 1e-9 || t >= 1.0 - 1e-9) return false;
  const Eigen::Vector3d q = o + t * d - f.c;
  return std::abs(q.dot(f.u)) <= f.half_w && std::abs(q.dot(f.v)) <= f.half_h;
}

}  // namespace scene_detail

inline PlaneFrame plane_frame(const PlaneSpec& p) {
  PlaneFrame f;
  f.n = p.normal.normalized();
  f.v = (p.up - p.up.dot(f.n) * f.n).normalized();
  f.u = f.v.cross(f.n);
  f.c = p.center;
  f.half_w = 0.5 * p.width;
  f.half_h = 0.5 * p.height;
  return f;
}

/// Tag frame in the map: X right, Y up, Z out of the printed face.
inline RigidTransform tag_pose(const SceneSpec& spec, const TagSpec& tag) {
  const PlaneFrame f = plane_frame(spec.planes.at(tag.plane));
  const double a = deg2rad(tag.rotation_deg);
  RigidTransform t;
  t.rotation.col(0) = std::cos(a) * f.u + std::sin(a) * f.v;
  t.rotation.col(1) = -std::sin(a) * f.u + std::cos(a) * f.v;
  t.rotation.col(2) = f.n;
  t.translation = f.c + tag.offset.x() * f.u + tag.offset.y() * f.v;
  return t;
}

inline void validate_scene(const SceneSpec& spec, const TagDictionary& dict) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); };
  spec.layout.validate();
  if (!(spec.density > 0.0)) fail("density must be positive");
  if (!(spec.range_noise >= 0.0) || !(spec.intensity_noise >= 0.0)) fail("noise sigmas must be non-negative");
  if (spec.viewpoints.empty()) fail("at least one viewpoint is required");
  for (std::size_t k = 0; k < spec.planes.size(); ++k) {
    const auto& p = spec.planes[k];
    if (!(p.width > 0.0) || !(p.height > 0.0)) fail("plane " + std::to_string(k) + " needs positive size");
    if (!(p.normal.norm() > 0.0) || p.up.cross(p.normal).norm() < 1e-9 * p.up.norm() * p.normal.norm())
      fail("plane " + std::to_string(k) + " needs a normal and a non-parallel up vector");
    if (!(p.intensity >= 0.0)) fail("plane " + std::to_string(k) + " intensity must be non-negative");
  }
  if (dict.grid != spec.layout.payload) fail("dictionary grid does not match the tag payload size");
  for (std::size_t k = 0; k < spec.tags.size(); ++k) {
    const auto& t = spec.tags[k];
    const std::string name = "tag " + std::to_string(k);
    if (t.plane >= spec.planes.size()) fail(name + " refers to a missing plane");
    if (t.id >= dict.size()) fail(name + " id is not in the dictionary");
    if (!(t.side > 0.0)) fail(name + " side must be positive");
    if (!(t.black >= 0.0) || !(t.white >= 0.0)) fail(name + " intensities must be non-negative");
    const PlaneFrame f = plane_frame(spec.planes[t.plane]);
    const RigidTransform pose = tag_pose(spec, t);
    for (const auto& c : canonical_corners(t.side)) {
      const Eigen::Vector3d q = pose.apply(c) - f.c;
      if (std::abs(q.dot(f.u)) > f.half_w + 1e-9 || std::abs(q.dot(f.v)) > f.half_h + 1e-9)
        fail(name + " does not fit on its plane");
    }
  }
}

/// Printed intensity at tag-frame (x, y), or nullopt outside the sheet.
/// Modules are indexed with row 0 at the top (largest y) and column 0 at the
/// left (smallest x); a set payload bit is white.
inline std::optional<double> tag_intensity(const TagSpec& tag, const BitMatrix& code, const TagLayout& layout,
                                           double x, double y) {
  const double h = 0.5 * tag.side;
  if (std::abs(x) > h || std::abs(y) > h) return std::nullopt;
  const int m = layout.modules_across();
  const double module = tag.side / m;
  const int col = std::clamp(static_cast<int>(std::floor((x + h) / module)), 0, m - 1);
  const int row = std::clamp(static_cast<int>(std::floor((h - y) / module)), 0, m - 1);
  const int inner = layout.margin, payload0 = layout.margin + layout.border;
  if (row < inner || col < inner || row >= m - inner || col >= m - inner) return tag.white;
  if (row < payload0 || col < payload0 || row >= m - payload0 || col >= m - payload0) return tag.black;
  return code.get(row - payload0, col - payload0) ? tag.white : tag.black;
}

/// Samples every plane uniformly at the spec density, textures tags, keeps
/// the points visible from at least one viewpoint (front side and no other
/// plane crossing the ray) and stitches them in plane order. Range noise acts
/// along the ray from the first viewpoint that sees the point.
inline SynthResult synth_scene(const SceneSpec& spec, const TagDictionary& dict, std::uint64_t seed,
                               unsigned threads = 1) {
  validate_scene(spec, dict);
  std::vector<PlaneFrame> frames;
  for (const auto& p : spec.planes) frames.push_back(plane_frame(p));

  std::vector<std::vector<Point3I>> per_plane(spec.planes.size());
  parallel_for(spec.planes.size(), threads, [&](std::size_t k) {
    const PlaneSpec& plane = spec.planes[k];
    const PlaneFrame& f = frames[k];
    scene_detail::Rng rng(scene_detail::splitmix64(seed ^ scene_detail::splitmix64(k + 1)));
    const auto count = static_cast<std::size_t>(std::llround(spec.density * plane.width * plane.height));
    std::vector<std::size_t> tags_here;
    std::vector<RigidTransform> poses;
    for (std::size_t t = 0; t < spec.tags.size(); ++t)
      if (spec.tags[t].plane == k) {
        tags_here.push_back(t);
        poses.push_back(tag_pose(spec, spec.tags[t]));
      }
    auto& out = per_plane[k];
    for (std::size_t i = 0; i < count; ++i) {
      const double su = (rng.uniform() - 0.5) * plane.width;
      const double sv = (rng.uniform() - 0.5) * plane.height;
      const double range_eps = rng.normal() * spec.range_noise;
      const double intensity_eps = rng.normal() * spec.intensity_noise;
      const Eigen::Vector3d p = f.c + su * f.u + sv * f.v;

      const Eigen::Vector3d* seen_from = nullptr;
      for (const auto& o : spec.viewpoints) {
        if (f.n.dot(o - f.c) <= 0.0) continue;
        bool blocked = false;
        for (std::size_t j = 0; j < frames.size() && !blocked; ++j)
          blocked = j != k && scene_detail::segment_hits(frames[j], o, p);
        if (!blocked) {
          seen_from = &o;
          break;
        }
      }
      if (!seen_from) continue;

      double intensity = plane.intensity;
      for (std::size_t n = 0; n < tags_here.size(); ++n) {
        const Eigen::Vector3d local = poses[n].apply_inverse(p);
        const TagSpec& tag = spec.tags[tags_here[n]];
        if (const auto value = tag_intensity(tag, dict.codes[tag.id], spec.layout, local.x(), local.y())) {
          intensity = *value;
          break;
        }
      }
      const Eigen::Vector3d ray = (p - *seen_from).normalized();
      out.push_back(make_point(p + range_eps * ray, std::max(0.0, intensity + intensity_eps)));
    }
  });

  SynthResult result;
  std::size_t total = 0;
  for (const auto& v : per_plane) total += v.size();
  result.cloud.points.reserve(total);
  for (const auto& v : per_plane) result.cloud.points.insert(result.cloud.points.end(), v.begin(), v.end());
  for (const auto& tag : spec.tags) {
    TruthTag t;
    t.id = tag.id;
    t.side = tag.side;
    t.pose = tag_pose(spec, tag);
    const auto corners = canonical_corners(spec.layout.frame_side(tag.side));
    for (int k = 0; k < 4; ++k) t.vertices[k] = t.pose.apply(corners[k]);
    result.truth.tags.push_back(t);
  }
  return result;
}

inline SynthResult synth_scene(const SceneSpec& spec, std::uint64_t seed, unsigned threads = 1) {
  return synth_scene(spec, builtin_dictionary(), seed, threads);
}

/// One global nearest-range image of the whole map seen from the origin.
inline IntensityImage spherical_project_baseline(const IntensityCloud& cloud, const ImageGeometry& geom) {
  std::vector<Eigen::Vector3d> pts;
  std::vector<double> values;
  pts.reserve(cloud.size());
  values.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    pts.push_back(p.position());
    values.push_back(p.intensity);
  }
  return rasterize(pts, values, geom);
}

/// Baseline resolution: `factor` times the `quantile` of per-point angular
/// nearest-neighbor spacing, with the raster covering the angular footprint
/// of the map. The pitch is coarsened if the raster would exceed max_pixels.
inline ImageGeometry baseline_geometry(const IntensityCloud& cloud, double factor = 2.0, double quantile = 0.9,
                                       double max_pixels = 64e6, int padding = 2, unsigned threads = 1) {
  ImageGeometry g;
  if (cloud.empty()) return g;
  IntensityCloud dirs;
  dirs.points.reserve(cloud.size());
  std::vector<SphericalCoords> sph;
  sph.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    const double r = p.position().norm();
    if (r > 0.0) dirs.points.push_back(make_point(p.position() / r, 0.0));
    sph.push_back(to_spherical(p.position()));
  }
  double res = 1e-3;
  if (dirs.size() >= 2) {
    const SpatialIndex index(dirs);
    std::vector<double> spacing(dirs.size());
    parallel_for(dirs.size(), threads, [&](std::size_t i) { spacing[i] = index.knn(dirs.position(i), 2).back().distance; });
    std::sort(spacing.begin(), spacing.end());
    const double pos = quantile * static_cast<double>(spacing.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, spacing.size() - 1);
    const double q = spacing[lo] + (pos - static_cast<double>(lo)) * (spacing[hi] - spacing[lo]);
    if (q > 0.0) res = factor * q;
  }
  double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin, pmin = tmin, pmax = -tmin;
  for (const auto& s : sph) {
    tmin = std::min(tmin, s.azimuth);
    tmax = std::max(tmax, s.azimuth);
    pmin = std::min(pmin, s.inclination);
    pmax = std::max(pmax, s.inclination);
  }
  const double area = (tmax - tmin) * (pmax - pmin);
  if (area / (res * res) > max_pixels) res = std::sqrt(area / max_pixels);
  g.res_azimuth = g.res_inclination = res;
  const long u0 = std::lround(tmin / res), u1 = std::lround(tmax / res);
  const long v0 = std::lround(pmin / res), v1 = std::lround(pmax / res);
  g.u_offset = padding - static_cast<int>(u0);
  g.v_offset = padding - static_cast<int>(v0);
  g.width = static_cast<int>(u1 - u0) + 1 + 2 * padding;
  g.height = static_cast<int>(v1 - v0) + 1 + 2 * padding;
  return g;
}

/// Errors of one detection against the truth tag with the same id.
/// Translation error is detected minus true center, per map axis. Rotation
/// error is the Z-Y-X (yaw, pitch, roll) decomposition of R_true^T R_detected,
/// in degrees.
struct TagError {
  std::size_t id = 0;
  Eigen::Vector3d translation_error = Eigen::Vector3d::Zero();
  std::array<double, 3> rotation_error_deg{0.0, 0.0, 0.0};  // yaw, pitch, roll
  double vertex_rms = 0.0;
  bool duplicate = false;
};

struct EvaluationReport {
  std::size_t detected = 0;  // distinct truth tags found
  std::size_t total = 0;     // truth tags
  std::size_t false_positives = 0;
  bool duplicate_ids = false;
  std::vector<TagError> errors;

  std::string count() const { return std::to_string(detected) + " / " + std::to_string(total); }
};

inline EvaluationReport evaluate(const std::vector<TagDetection>& detections, const SceneTruth& truth) {
  EvaluationReport rep;
  rep.total = truth.tags.size();
  std::map<std::size_t, std::size_t> seen;
  for (const auto& d : detections) ++seen[d.id];
  for (const auto& t : truth.tags) rep.detected += seen.count(t.id) ? 1 : 0;
  for (const auto& d : detections) {
    const auto it = std::find_if(truth.tags.begin(), truth.tags.end(), [&](const TruthTag& t) { return t.id == d.id; });
    if (it == truth.tags.end()) {
      ++rep.false_positives;
      continue;
    }
    TagError e;
    e.id = d.id;
    e.duplicate = seen[d.id] > 1;
    rep.duplicate_ids = rep.duplicate_ids || e.duplicate;
    e.translation_error = d.pose.translation - it->pose.translation;
    const auto zyx = zyx_from_rotation(it->pose.rotation.transpose() * d.pose.rotation);
    for (int k = 0; k < 3; ++k) e.rotation_error_deg[k] = rad2deg(zyx[k]);
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) sum += (d.vertices[k] - it->vertices[k]).squaredNorm();
    e.vertex_rms = std::sqrt(sum / 4.0);
    rep.errors.push_back(e);
  }
  return rep;
}

}  // namespace maptag
