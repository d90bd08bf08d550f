#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace maptag {

/// A map point with its reflectance. Coordinates in meters.
struct Point3I {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  Eigen::Vector3d position() const { return {x, y, z}; }

  bool is_valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) &&
           std::isfinite(intensity) && intensity >= 0.0;
  }

  friend bool operator==(const Point3I&, const Point3I&) = default;
};

inline Point3I make_point(const Eigen::Vector3d& p, double intensity) {
  return {p.x(), p.y(), p.z(), intensity};
}

/// Ordered point set. Index i refers to the same point for the cloud's lifetime.
struct IntensityCloud {
  std::vector<Point3I> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point3I& operator[](std::size_t i) const { return points[i]; }
  Eigen::Vector3d position(std::size_t i) const { return points[i].position(); }

  friend bool operator==(const IntensityCloud&, const IntensityCloud&) = default;
};

/// Copies the listed points, in the listed order.
inline IntensityCloud subset(const IntensityCloud& cloud, const std::vector<std::size_t>& indices) {
  IntensityCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(cloud.points[i]);
  return out;
}

}  // namespace maptag
