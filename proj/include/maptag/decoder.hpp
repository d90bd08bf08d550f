#pragma once

// 2D square-marker detection on intensity images: adaptive binarization,
// quad finding on dark regions, sub-pixel edge refinement, bit sampling
// through a homography and dictionary matching with rotations and mirrors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "maptag/dictionary.hpp"
#include "maptag/error.hpp"
#include "maptag/image.hpp"

namespace maptag {

namespace decoder_detail {

/// Otsu threshold over the filled pixels (256-bin histogram over [min, max]).
inline double otsu_threshold(const std::vector<double>& values) {
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return lo;
  std::array<double, 256> hist{};
  for (double v : values) hist[std::min<std::size_t>(255, static_cast<std::size_t>((v - lo) / (hi - lo) * 256.0))] += 1;
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[b];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int b = 0; b < 255; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  return lo + (best_bin + 1) * (hi - lo) / 256.0;
}

/// Sliding max or min over a (2r+1) window along rows then columns; empty
/// pixels are ignored (NaN in, NaN out where nothing was filled).
inline std::vector<double> window_extreme(const IntensityImage& img, int r, bool want_max) {
  const int w = img.width(), h = img.height();
  const double none = std::numeric_limits<double>::quiet_NaN();
  auto better = [want_max](double a, double b) {
    if (std::isnan(a)) return b;
    if (std::isnan(b)) return a;
    return want_max ? std::max(a, b) : std::min(a, b);
  };
  std::vector<double> rows(img.values.size(), none), out(img.values.size(), none);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double e = none;
      for (int k = std::max(0, u - r); k <= std::min(w - 1, u + r); ++k) e = better(e, img.at(k, v));
      rows[img.offset(u, v)] = e;
    }
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double e = none;
      for (int k = std::max(0, v - r); k <= std::min(h - 1, v + r); ++k) e = better(e, rows[img.offset(u, k)]);
      out[img.offset(u, v)] = e;
    }
  return out;
}

}  // namespace decoder_detail

struct BinarizeParams {
  int window = 31;
  /// Windows whose value range is below this fraction of the image's robust
  /// range (2nd to 98th percentile) carry no local edge; their pixels are
  /// classified by the global Otsu threshold instead of the local mean.
  double min_contrast = 0.3;
};

/// Adaptive threshold: white iff the value exceeds the mean of the filled
/// pixels in a window x window neighborhood (clamped to the image). Low
/// contrast windows fall back to a global threshold. Empty pixels are black.
inline BinaryImage binarize(const IntensityImage& image, const BinarizeParams& params = {}) {
  const int w = image.width(), h = image.height();
  if (image.filled_pixels() < 64) throw Error(ErrorCode::TooFewPixels, "fewer than 64 filled pixels");
  std::vector<double> filled;
  filled.reserve(image.filled_pixels());
  for (double v : image.values)
    if (!std::isnan(v)) filled.push_back(v);
  const double global = decoder_detail::otsu_threshold(filled);
  std::sort(filled.begin(), filled.end());
  const auto pct = [&](double q) { return filled[static_cast<std::size_t>(q * static_cast<double>(filled.size() - 1))]; };
  const double min_range = params.min_contrast * (pct(0.98) - pct(0.02));

  // Integral images of sums and counts, (w+1) x (h+1).
  std::vector<double> sum(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  std::vector<std::int64_t> cnt(sum.size(), 0);
  auto at = [w](int u, int v) { return static_cast<std::size_t>(v) * (w + 1) + u; };
  for (int v = 0; v < h; ++v) {
    double row_sum = 0.0;
    std::int64_t row_cnt = 0;
    for (int u = 0; u < w; ++u) {
      if (!image.is_empty(u, v)) {
        row_sum += image.at(u, v);
        ++row_cnt;
      }
      sum[at(u + 1, v + 1)] = sum[at(u + 1, v)] + row_sum;
      cnt[at(u + 1, v + 1)] = cnt[at(u + 1, v)] + row_cnt;
    }
  }
  const int r = params.window / 2;
  const auto hi = decoder_detail::window_extreme(image, r, true);
  const auto lo = decoder_detail::window_extreme(image, r, false);
  BinaryImage out{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  for (int v = 0; v < h; ++v) {
    const int v0 = std::max(0, v - r), v1 = std::min(h, v + r + 1);
    for (int u = 0; u < w; ++u) {
      if (image.is_empty(u, v)) continue;
      const std::size_t o = image.offset(u, v);
      double threshold = global;
      if (hi[o] - lo[o] >= min_range) {
        const int u0 = std::max(0, u - r), u1 = std::min(w, u + r + 1);
        const double s = sum[at(u1, v1)] - sum[at(u0, v1)] - sum[at(u1, v0)] + sum[at(u0, v0)];
        const auto c = cnt[at(u1, v1)] - cnt[at(u0, v1)] - cnt[at(u1, v0)] + cnt[at(u0, v0)];
        threshold = s / static_cast<double>(c);
      }
      out.pixels[o] = image.at(u, v) > threshold ? 1 : 0;
    }
  }
  return out;
}

/// Four sub-pixel corners. Detector output is ordered counter-clockwise as
/// displayed (v pointing down), i.e. with negative shoelace area in (u, v).
struct QuadDetection {
  std::array<Eigen::Vector2d, 4> corners;

  double perimeter() const {
    double p = 0.0;
    for (int k = 0; k < 4; ++k) p += (corners[(k + 1) % 4] - corners[k]).norm();
    return p;
  }

  double area() const {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) {
      const auto& a = corners[k];
      const auto& b = corners[(k + 1) % 4];
      s += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * std::abs(s);
  }
};

struct QuadParams {
  double corner_tolerance = 0.03;  // fraction of the quad perimeter
  double min_area = 64.0;
  double max_aspect = 1.5;
  std::size_t min_component = 32;
  int payload_modules = 4;  // used to size the edge search window
  int border_modules = 1;
  int refine_iterations = 2;
};

namespace decoder_detail {

using Vec2 = Eigen::Vector2d;

inline double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

inline double signed_area(const std::array<Vec2, 4>& c) {
  double s = 0.0;
  for (int k = 0; k < 4; ++k) s += c[k].x() * c[(k + 1) % 4].y() - c[(k + 1) % 4].x() * c[k].y();
  return 0.5 * s;
}

inline bool is_convex(const std::array<Vec2, 4>& c) {
  int sign = 0;
  for (int k = 0; k < 4; ++k) {
    const double z = cross(c[k], c[(k + 1) % 4], c[(k + 2) % 4]);
    const int s = z > 0 ? 1 : (z < 0 ? -1 : 0);
    if (s == 0) return false;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

/// Andrew's monotone chain; returns hull in counter-clockwise (math) order.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

/// Orders corners with negative shoelace area, starting at min(u + v).
inline std::array<Vec2, 4> canonical_order(std::array<Vec2, 4> c) {
  if (signed_area(c) > 0) std::swap(c[1], c[3]);
  int start = 0;
  for (int k = 1; k < 4; ++k)
    if (c[k].x() + c[k].y() < c[start].x() + c[start].y()) start = k;
  std::array<Vec2, 4> out;
  for (int k = 0; k < 4; ++k) out[k] = c[(start + k) % 4];
  return out;
}

/// Bilinear sample; nullopt if any contributing pixel is empty or outside.
inline std::optional<double> bilinear(const IntensityImage& img, const Vec2& p) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y());
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width() || y0 + 1 >= img.height()) return std::nullopt;
  const double a = img.at(x0, y0), b = img.at(x0 + 1, y0), c = img.at(x0, y0 + 1), d = img.at(x0 + 1, y0 + 1);
  if (std::isnan(a) || std::isnan(b) || std::isnan(c) || std::isnan(d)) return std::nullopt;
  const double tx = p.x() - fx, ty = p.y() - fy;
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

struct Line {
  Vec2 point;
  Vec2 direction;
};

inline std::optional<Vec2> intersect(const Line& l1, const Line& l2) {
  const double det = l1.direction.x() * (-l2.direction.y()) - l1.direction.y() * (-l2.direction.x());
  if (std::abs(det) < 1e-9) return std::nullopt;
  const Vec2 d = l2.point - l1.point;
  const double t = (d.x() * (-l2.direction.y()) - d.y() * (-l2.direction.x())) / det;
  return l1.point + t * l1.direction;
}

/// Dark-to-light crossings along the side normals, fitted by total least squares.
inline std::optional<Line> refine_side(const IntensityImage& img, const Vec2& a, const Vec2& b, const Vec2& centroid,
                                       double half_window) {
  const Vec2 dir = (b - a).normalized();
  Vec2 normal(-dir.y(), dir.x());
  if (normal.dot(0.5 * (a + b) - centroid) < 0) normal = -normal;
  const double len = (b - a).norm();
  const int samples = std::max(6, static_cast<int>(len / 0.7));
  const double step = 0.25;
  const int steps = static_cast<int>(std::ceil(2 * half_window / step));
  std::vector<Vec2> hits;
  std::vector<double> profile(static_cast<std::size_t>(steps) + 1);
  for (int s = 0; s <= samples; ++s) {
    const double t = 0.12 + 0.76 * static_cast<double>(s) / samples;
    const Vec2 base = a + t * (b - a);
    bool ok = true;
    for (int k = 0; k <= steps && ok; ++k) {
      const auto v = bilinear(img, base + (-half_window + k * step) * normal);
      if (!v) ok = false;
      else profile[static_cast<std::size_t>(k)] = *v;
    }
    if (!ok) continue;
    const double inner = (profile[0] + profile[1] + profile[2]) / 3.0;
    const double outer = (profile[steps] + profile[steps - 1] + profile[steps - 2]) / 3.0;
    if (outer - inner <= 1e-6) continue;
    const double level = 0.5 * (inner + outer);
    for (int k = 1; k <= steps; ++k) {
      const double p0 = profile[static_cast<std::size_t>(k - 1)], p1 = profile[static_cast<std::size_t>(k)];
      if (p0 < level && p1 >= level) {
        const double f = (level - p0) / (p1 - p0);
        hits.push_back(base + (-half_window + (k - 1 + f) * step) * normal);
        break;
      }
    }
  }
  if (hits.size() < 4) return std::nullopt;
  Vec2 mean = Vec2::Zero();
  for (const auto& h : hits) mean += h;
  mean /= static_cast<double>(hits.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& h : hits) cov += (h - mean) * (h - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  return Line{mean, eig.eigenvectors().col(1)};
}

inline std::array<Vec2, 4> refine_corners(const IntensityImage& img, const std::array<Vec2, 4>& coarse,
                                          double half_window) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& c : coarse) centroid += c;
  centroid /= 4.0;
  std::array<std::optional<Line>, 4> sides;
  for (int k = 0; k < 4; ++k) sides[k] = refine_side(img, coarse[k], coarse[(k + 1) % 4], centroid, half_window);
  std::array<Vec2, 4> out = coarse;
  for (int k = 0; k < 4; ++k) {
    const auto& before = sides[(k + 3) % 4];  // side ending at corner k
    const auto& after = sides[k];             // side starting at corner k
    if (!before || !after) continue;
    const auto p = intersect(*before, *after);
    if (p && (*p - coarse[k]).norm() <= 2.0 * half_window + 1.0) out[k] = *p;
  }
  return out;
}

}  // namespace decoder_detail

/// Finds convex quadrilateral outlines of dark regions. With a gray image the
/// corners are refined to sub-pixel accuracy from the intensity edges.
inline std::vector<QuadDetection> detect_quads(const BinaryImage& binary, const IntensityImage* gray = nullptr,
                                               const QuadParams& params = {}) {
  using namespace decoder_detail;
  const int w = binary.width, h = binary.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<QuadDetection> quads;
  std::vector<std::pair<int, int>> stack, members;
  int next_label = 0;
  for (int sv = 0; sv < h; ++sv) {
    for (int su = 0; su < w; ++su) {
      const std::size_t so = static_cast<std::size_t>(sv) * w + su;
      if (binary.pixels[so] || label[so] >= 0) continue;
      const int id = next_label++;
      members.clear();
      stack.assign(1, {su, sv});
      label[so] = id;
      bool touches_border = false;
      int umin = su, umax = su, vmin = sv, vmax = sv;
      while (!stack.empty()) {
        auto [u, v] = stack.back();
        stack.pop_back();
        members.emplace_back(u, v);
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        if (u == 0 || v == 0 || u == w - 1 || v == h - 1) touches_border = true;
        constexpr std::array<std::array<int, 2>, 4> kSteps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (const auto& d : kSteps) {
          const int uu = u + d[0], vv = v + d[1];
          if (uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
          const std::size_t o = static_cast<std::size_t>(vv) * w + uu;
          if (binary.pixels[o] || label[o] >= 0) continue;
          label[o] = id;
          stack.emplace_back(uu, vv);
        }
      }
      if (touches_border || members.size() < params.min_component) continue;

      // Outside = non-member pixels reachable from the padded bounding box edge.
      const int bw = umax - umin + 3, bh = vmax - vmin + 3;
      std::vector<std::uint8_t> outside(static_cast<std::size_t>(bw) * bh, 0);
      auto member = [&](int bu, int bv) {
        const int u = bu + umin - 1, v = bv + vmin - 1;
        if (u < umin || v < vmin || u > umax || v > vmax) return false;
        return label[static_cast<std::size_t>(v) * w + u] == id;
      };
      std::vector<std::pair<int, int>> fill{{0, 0}};
      outside[0] = 1;
      while (!fill.empty()) {
        auto [bu, bv] = fill.back();
        fill.pop_back();
        constexpr std::array<std::array<int, 2>, 4> kSteps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (const auto& d : kSteps) {
          const int nu = bu + d[0], nv = bv + d[1];
          if (nu < 0 || nv < 0 || nu >= bw || nv >= bh) continue;
          const std::size_t o = static_cast<std::size_t>(nv) * bw + nu;
          if (outside[o] || member(nu, nv)) continue;
          outside[o] = 1;
          fill.emplace_back(nu, nv);
        }
      }
      std::vector<Vec2> boundary;
      for (auto [u, v] : members) {
        const int bu = u - umin + 1, bv = v - vmin + 1;
        const bool edge = outside[static_cast<std::size_t>(bv) * bw + bu + 1] ||
                          outside[static_cast<std::size_t>(bv) * bw + bu - 1] ||
                          outside[static_cast<std::size_t>(bv + 1) * bw + bu] ||
                          outside[static_cast<std::size_t>(bv - 1) * bw + bu];
        if (edge) boundary.emplace_back(u, v);
      }
      const auto hull = convex_hull(boundary);
      if (hull.size() < 4) continue;

      Vec2 centroid = Vec2::Zero();
      for (const auto& p : hull) centroid += p;
      centroid /= static_cast<double>(hull.size());
      auto farthest = [&](auto score) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < hull.size(); ++i)
          if (score(hull[i]) > score(hull[best])) best = i;
        return hull[best];
      };
      const Vec2 p0 = farthest([&](const Vec2& p) { return (p - centroid).squaredNorm(); });
      const Vec2 p2 = farthest([&](const Vec2& p) { return (p - p0).squaredNorm(); });
      const Vec2 p1 = farthest([&](const Vec2& p) { return cross(p0, p2, p); });
      const Vec2 p3 = farthest([&](const Vec2& p) { return -cross(p0, p2, p); });
      if (cross(p0, p2, p1) <= 0 || cross(p0, p2, p3) >= 0) continue;
      std::array<Vec2, 4> corners{p0, p1, p2, p3};
      if (!is_convex(corners)) continue;

      double perimeter = 0.0;
      for (int k = 0; k < 4; ++k) perimeter += (corners[(k + 1) % 4] - corners[k]).norm();
      const double tol = std::max(1.5, params.corner_tolerance * perimeter);
      bool fits = true;
      for (const auto& p : boundary) {
        double d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 4; ++k) d = std::min(d, segment_distance(p, corners[k], corners[(k + 1) % 4]));
        if (d > tol) {
          fits = false;
          break;
        }
      }
      if (!fits) continue;

      corners = canonical_order(corners);
      if (gray) {
        const double module = 0.25 * perimeter / (params.payload_modules + 2 * params.border_modules);
        for (int it = 0; it < params.refine_iterations; ++it) {
          const double half = std::max(1.5, 0.6 * module);
          auto refined = refine_corners(*gray, corners, half);
          if (!is_convex(refined)) break;
          corners = canonical_order(refined);
        }
      }
      QuadDetection q{corners};
      const double s01 = (corners[1] - corners[0]).norm(), s12 = (corners[2] - corners[1]).norm();
      const double s23 = (corners[3] - corners[2]).norm(), s30 = (corners[0] - corners[3]).norm();
      const double ratio = (s01 + s23) / std::max(1e-9, s12 + s30);
      if (q.area() < params.min_area || ratio > params.max_aspect || ratio < 1.0 / params.max_aspect) continue;
      quads.push_back(q);
    }
  }
  return quads;
}

/// Scattered intensity samples in continuous image coordinates, e.g. the
/// projected points a raster was rendered from.
struct EdgeSamples {
  std::vector<Eigen::Vector2d> positions;
  std::vector<double> values;
};

/// Re-estimates each quad side from scattered samples instead of the raster.
/// Along the middle of the side, samples within `half_window` of the line are
/// split into bins; in each bin the offset of the best two-level step (dark
/// inside, bright outside) is found, and a total least squares line through
/// those edge points replaces the side. Sides with too little support keep
/// their previous position.
inline QuadDetection refine_quad_from_samples(const QuadDetection& quad, const EdgeSamples& samples,
                                              double half_window, int bins = 8) {
  using namespace decoder_detail;
  Vec2 centroid = Vec2::Zero();
  for (const auto& c : quad.corners) centroid += c;
  centroid /= 4.0;
  std::array<std::optional<Line>, 4> sides;
  for (int k = 0; k < 4; ++k) {
    const Vec2 a = quad.corners[k], b = quad.corners[(k + 1) % 4];
    const double len = (b - a).norm();
    if (!(len > 0.0)) continue;
    const Vec2 dir = (b - a) / len;
    Vec2 normal(-dir.y(), dir.x());
    if (normal.dot(0.5 * (a + b) - centroid) < 0) normal = -normal;
    std::vector<std::vector<std::pair<double, double>>> binned(static_cast<std::size_t>(bins));
    for (std::size_t i = 0; i < samples.positions.size(); ++i) {
      const Vec2 r = samples.positions[i] - a;
      const double t = r.dot(dir) / len, d = r.dot(normal);
      if (t < 0.1 || t > 0.9 || std::abs(d) > half_window) continue;
      const int bin = std::min(bins - 1, static_cast<int>((t - 0.1) / 0.8 * bins));
      binned[static_cast<std::size_t>(bin)].emplace_back(d, samples.values[i]);
    }
    std::vector<Vec2> hits;
    for (int bin = 0; bin < bins; ++bin) {
      auto& v = binned[static_cast<std::size_t>(bin)];
      if (v.size() < 6) continue;
      std::sort(v.begin(), v.end());
      const std::size_t m = v.size();
      std::vector<double> s1(m + 1, 0.0), s2(m + 1, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        s1[i + 1] = s1[i] + v[i].second;
        s2[i + 1] = s2[i] + v[i].second * v[i].second;
      }
      double best = std::numeric_limits<double>::infinity();
      std::size_t split = 0;
      for (std::size_t j = 3; j + 3 <= m; ++j) {
        const double n0 = static_cast<double>(j), n1 = static_cast<double>(m - j);
        const double m0 = s1[j] / n0, m1 = (s1[m] - s1[j]) / n1;
        if (!(m1 > m0)) continue;
        const double cost = (s2[j] - n0 * m0 * m0) + (s2[m] - s2[j] - n1 * m1 * m1);
        if (cost < best) {
          best = cost;
          split = j;
        }
      }
      if (split == 0) continue;
      const double offset = 0.5 * (v[split - 1].first + v[split].first);
      const double t_mid = 0.1 + 0.8 * (bin + 0.5) / bins;
      hits.push_back(a + t_mid * len * dir + offset * normal);
    }
    if (hits.size() < 3) continue;
    Vec2 mean = Vec2::Zero();
    for (const auto& h : hits) mean += h;
    mean /= static_cast<double>(hits.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& h : hits) cov += (h - mean) * (h - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    sides[k] = Line{mean, eig.eigenvectors().col(1)};
  }
  QuadDetection out = quad;
  for (int k = 0; k < 4; ++k) {
    const auto& before = sides[(k + 3) % 4];
    const auto& after = sides[k];
    if (!before || !after) continue;
    const auto p = intersect(*before, *after);
    if (p && (*p - quad.corners[k]).norm() <= 2.0 * half_window) out.corners[k] = *p;
  }
  return out;
}

/// Maps the unit square (s right, t down) onto a quad: (0,0)->c0, (0,1)->c1,
/// (1,1)->c2, (1,0)->c3.
class Homography {
 public:
  explicit Homography(const QuadDetection& quad) {
    static const std::array<Eigen::Vector2d, 4> unit{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 1),
                                                     Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 0)};
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int k = 0; k < 4; ++k) {
      const double s = unit[k].x(), t = unit[k].y();
      const double u = quad.corners[k].x(), v = quad.corners[k].y();
      a.row(2 * k) << s, t, 1, 0, 0, 0, -s * u, -t * u;
      a.row(2 * k + 1) << 0, 0, 0, s, t, 1, -s * v, -t * v;
      b(2 * k) = u;
      b(2 * k + 1) = v;
    }
    const Eigen::Matrix<double, 8, 1> x = a.fullPivLu().solve(b);
    h_ << x(0), x(1), x(2), x(3), x(4), x(5), x(6), x(7), 1.0;
  }

  Eigen::Vector2d operator()(double s, double t) const {
    const Eigen::Vector3d p = h_ * Eigen::Vector3d(s, t, 1.0);
    return p.head<2>() / p.z();
  }

 private:
  Eigen::Matrix3d h_;
};

struct SampleParams {
  int payload = 4;
  int border = 1;
  double min_frame_fraction = 0.8;
};

/// Mean of the filled pixels in the 3x3 patch around a point; NaN when none.
inline double patch_mean(const IntensityImage& image, const Eigen::Vector2d& p) {
  const long cu = std::lround(p.x()), cv = std::lround(p.y());
  double sum = 0.0;
  int n = 0;
  for (long v = cv - 1; v <= cv + 1; ++v)
    for (long u = cu - 1; u <= cu + 1; ++u) {
      if (u < 0 || v < 0 || u >= image.width() || v >= image.height()) continue;
      if (image.is_empty(static_cast<int>(u), static_cast<int>(v))) continue;
      sum += image.at(static_cast<int>(u), static_cast<int>(v));
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

/// Samples the payload bits of a quad whose outline is the outer edge of the
/// black border. Checks the border ring (black) and the one-module margin ring
/// outside the quad (white); throws FrameCheckFailed when either falls under
/// the required fraction.
inline BitMatrix sample_bits(const IntensityImage& image, const QuadDetection& quad, const SampleParams& params = {}) {
  const int n = params.payload, g = n + 2 * params.border;
  const Homography H(quad);
  auto cell = [&](int row, int col) {
    return patch_mean(image, H((col + 0.5) / g, (row + 0.5) / g));
  };
  std::vector<double> border, margin;
  for (int row = -1; row <= g; ++row)
    for (int col = -1; col <= g; ++col) {
      const bool in_margin = row == -1 || col == -1 || row == g || col == g;
      const bool in_border = !in_margin && (row < params.border || col < params.border ||
                                            row >= g - params.border || col >= g - params.border);
      if (in_margin) margin.push_back(cell(row, col));
      else if (in_border) border.push_back(cell(row, col));
    }
  auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  const double black = mean(border), white = mean(margin);  // NaN propagates
  if (!(white > black)) throw Error(ErrorCode::FrameCheckFailed, "no contrast between border and margin");
  const double threshold = 0.5 * (black + white);
  auto fraction = [&](const std::vector<double>& xs, bool want_white) {
    std::size_t ok = 0;
    for (double x : xs) ok += want_white ? (x > threshold) : (x < threshold);
    return static_cast<double>(ok) / static_cast<double>(xs.size());
  };
  if (fraction(border, false) < params.min_frame_fraction)
    throw Error(ErrorCode::FrameCheckFailed, "black border check failed");
  if (fraction(margin, true) < params.min_frame_fraction)
    throw Error(ErrorCode::FrameCheckFailed, "white margin check failed");

  BitMatrix bits(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = cell(i + params.border, j + params.border);
      if (std::isnan(v)) throw Error(ErrorCode::FrameCheckFailed, "payload module has no samples");
      bits.set(i, j, v > threshold);
    }
  return bits;
}

/// The observed bits equal codes[id].transformed(rotation, mirrored) up to
/// `distance` bit errors.
struct DictionaryMatch {
  std::size_t id = 0;
  int rotation = 0;  // clockwise quarter turns
  bool mirrored = false;
  int distance = 0;

  friend bool operator==(const DictionaryMatch&, const DictionaryMatch&) = default;
};

/// Searches every codeword under 4 rotations, plain and mirrored. Requires
/// max_correction <= (D-1)/2 so at most one candidate can qualify.
inline std::optional<DictionaryMatch> match_dictionary(const BitMatrix& bits, const TagDictionary& dict,
                                                       int max_correction, int min_distance = -1) {
  if (bits.size() != dict.grid) throw Error(ErrorCode::InvalidConfig, "bit grid does not match dictionary grid");
  if (min_distance < 0) min_distance = minimum_distance(dict);
  if (max_correction < 0 || 2 * max_correction > min_distance - 1)
    throw Error(ErrorCode::InvalidConfig, "max_correction exceeds (D-1)/2");
  std::optional<DictionaryMatch> found;
  for (std::size_t id = 0; id < dict.codes.size(); ++id)
    for (int mirror = 0; mirror < 2; ++mirror)
      for (int r = 0; r < 4; ++r) {
        const int d = hamming(bits, dict.codes[id].transformed(r, mirror != 0));
        if (d > max_correction) continue;
        if (found) throw Error(ErrorCode::AmbiguousMatch, "bits match more than one codeword transform");
        found = DictionaryMatch{id, r, mirror != 0, d};
      }
  return found;
}

/// Quad index holding each tag corner (0 top-left, 1 bottom-left,
/// 2 bottom-right, 3 top-right of the printed tag) once the observed grid is
/// the codeword mirrored (optionally) then rotated clockwise.
inline std::array<int, 4> corner_positions(int rotation, bool mirrored) {
  constexpr std::array<std::array<int, 2>, 4> kCell{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};  // (row, col)
  std::array<int, 4> out{};
  for (int k = 0; k < 4; ++k) {
    int i = kCell[k][0], j = kCell[k][1];
    if (mirrored) j = 1 - j;
    for (int r = 0; r < ((rotation % 4) + 4) % 4; ++r) {
      const int ni = j, nj = 1 - i;
      i = ni;
      j = nj;
    }
    for (int q = 0; q < 4; ++q)
      if (kCell[q][0] == i && kCell[q][1] == j) out[k] = q;
  }
  return out;
}

struct DecodedTag {
  DictionaryMatch match;
  QuadDetection quad;  // as detected
  /// Corners in decoded order. Plain matches: tag order. Mirrored matches:
  /// index 0 is the tag's top-left and the orientation is reversed, so
  /// swapping indices 1 and 3 restores tag order.
  std::array<Eigen::Vector2d, 4> corners;
};

inline std::array<Eigen::Vector2d, 4> decoded_corner_order(const QuadDetection& quad, const DictionaryMatch& m) {
  const auto pos = corner_positions(m.rotation, m.mirrored);
  std::array<Eigen::Vector2d, 4> tag_order;
  for (int k = 0; k < 4; ++k) tag_order[k] = quad.corners[pos[k]];
  if (m.mirrored) std::swap(tag_order[1], tag_order[3]);
  return tag_order;
}

struct DecodeParams {
  BinarizeParams binarize;
  int max_correction = 1;
  QuadParams quad;
  SampleParams sample;
};

/// Runs binarize -> detect_quads -> sample_bits -> match_dictionary and keeps
/// every quad that decodes.
inline std::vector<DecodedTag> decode_image(const IntensityImage& image, const TagDictionary& dict,
                                            const DecodeParams& params = {}) {
  const BinaryImage binary = binarize(image, params.binarize);
  QuadParams qp = params.quad;
  qp.payload_modules = dict.grid;
  qp.border_modules = params.sample.border;
  SampleParams sp = params.sample;
  sp.payload = dict.grid;
  const int min_distance = minimum_distance(dict);
  std::vector<DecodedTag> out;
  for (const auto& quad : detect_quads(binary, &image, qp)) {
    BitMatrix bits;
    try {
      bits = sample_bits(image, quad, sp);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::FrameCheckFailed) continue;
      throw;
    }
    const auto m = match_dictionary(bits, dict, params.max_correction, min_distance);
    if (!m) continue;
    out.push_back({*m, quad, decoded_corner_order(quad, *m)});
  }
  return out;
}

}  // namespace maptag
