#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "maptag/geometry.hpp"

namespace maptag::testutil {

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("maptag_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::Vector3d random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

inline RigidTransform random_pose(std::mt19937_64& rng, double reach = 5.0) {
  return {random_rotation(rng), random_vec(rng, -reach, reach)};
}

inline double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return rad2deg(Eigen::AngleAxisd(a.transpose() * b).angle());
}

}  // namespace maptag::testutil
