#pragma once

// Tag pose from four corresponded corners by least-squares rigid alignment.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "maptag/error.hpp"
#include "maptag/geometry.hpp"

namespace maptag {

using Corners3 = std::array<Eigen::Vector3d, 4>;

/// Tag frame: X right, Y up, Z out of the printed face. Index 0 is top-left,
/// then counter-clockwise seen from the front.
inline Corners3 canonical_corners(double side) {
  const double h = 0.5 * side;
  return {Eigen::Vector3d(-h, h, 0), Eigen::Vector3d(-h, -h, 0), Eigen::Vector3d(h, -h, 0), Eigen::Vector3d(h, h, 0)};
}

struct PoseFit {
  RigidTransform transform;
  double rms_residual = 0.0;
};

/// Rigid T minimizing sum |T(source_i) - target_i|^2, reflections excluded.
template <std::size_t N>
PoseFit solve_pose_svd(const std::array<Eigen::Vector3d, N>& source, const std::array<Eigen::Vector3d, N>& target) {
  static_assert(N >= 3);
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < N; ++i) {
    cs += source[i];
    ct += target[i];
  }
  cs /= static_cast<double>(N);
  ct /= static_cast<double>(N);

  Eigen::Matrix3d target_spread = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < N; ++i) {
    cross += (target[i] - ct) * (source[i] - cs).transpose();
    target_spread += (target[i] - ct) * (target[i] - ct).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> spread(target_spread);
  const Eigen::Vector3d ev = spread.eigenvalues();  // ascending
  if (ev(2) <= 0.0 || ev(1) <= 1e-12 * ev(2)) throw Error(ErrorCode::DegenerateVertices, "detected vertices are collinear");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
  PoseFit fit;
  fit.transform.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  fit.transform.translation = ct - fit.transform.rotation * cs;
  double sum = 0.0;
  for (std::size_t i = 0; i < N; ++i) sum += (fit.transform.apply(source[i]) - target[i]).squaredNorm();
  fit.rms_residual = std::sqrt(sum / static_cast<double>(N));
  return fit;
}

/// Largest distance of a vertex from the least-squares plane through all four.
inline double planarity_deviation(const Corners3& v) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : v) c += p;
  c /= 4.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : v) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d normal = eig.eigenvectors().col(0);
  double worst = 0.0;
  for (const auto& p : v) worst = std::max(worst, std::abs(normal.dot(p - c)));
  return worst;
}

/// One decoded tag in the map frame. `pose` maps tag-frame coordinates into
/// the map (columns of R are the tag axes, t is the tag center); the map to
/// tag direction is pose.inverse().
struct TagDetection {
  std::size_t id = 0;
  bool mirrored = false;
  Corners3 vertices;  // tag index order
  RigidTransform pose;
  double rms_residual = 0.0;
};

/// Restores tag index order for mirrored decodes (swap 1 and 3), validates
/// planarity within 2 * thickness and solves the pose against the canonical
/// corners of the given side.
inline TagDetection assemble_detection(std::size_t id, bool mirrored, Corners3 vertices, double side,
                                       double thickness) {
  if (mirrored) std::swap(vertices[1], vertices[3]);
  const double dev = planarity_deviation(vertices);
  if (dev > 2.0 * thickness)
    throw Error(ErrorCode::PlanarityViolation, "vertex deviation " + std::to_string(dev) + " m exceeds 2 * thickness");
  const PoseFit fit = solve_pose_svd(canonical_corners(side), vertices);
  return {id, mirrored, vertices, fit.transform, fit.rms_residual};
}

}  // namespace maptag
