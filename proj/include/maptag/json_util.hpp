#pragma once

#include <array>
#include <cstdio>
#include <cstdlib>
#include <string>

#include <Eigen/Core>

#include "json.hpp"

#include "maptag/error.hpp"
#include "maptag/geometry.hpp"

namespace maptag {

using Json = nlohmann::json;

/// Rounds to 9 significant digits; the JSON writer then prints the shortest
/// form, so reports never carry more than 9 digits.
inline double round9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

inline Json json_vec3(const Eigen::Vector3d& v) { return Json::array({round9(v.x()), round9(v.y()), round9(v.z())}); }

inline Json json_row_major(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  Json out = Json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out.push_back(round9(m(r, c)));
  return out;
}

inline Eigen::Vector3d read_vec3(const Json& j, const std::string& what, ErrorCode code) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw Error(code, what + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline RigidTransform read_row_major(const Json& j, const std::string& what, ErrorCode code) {
  if (!j.is_array() || j.size() != 16) throw Error(code, what + " must be an array of 16 numbers");
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = j[4 * r + c].get<double>();
    t.translation[r] = j[4 * r + 3].get<double>();
  }
  return t;
}

}  // namespace maptag
