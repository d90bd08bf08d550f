#pragma once

// JSON forms of SceneSpec and SceneTruth.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "maptag/json_util.hpp"
#include "maptag/scene.hpp"

namespace maptag {

namespace scene_io_detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidSpec, where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw Error(ErrorCode::InvalidSpec, where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidSpec, std::string("key '") + key + "' has the wrong type");
  }
}

}  // namespace scene_io_detail

/// Scene files may also carry a "seed" used by the CLI.
struct SceneFile {
  SceneSpec spec;
  std::uint64_t seed = 1;
};

inline SceneFile scene_from_json(const Json& j) {
  using namespace scene_io_detail;
  check_keys(j, {"density", "range_noise", "intensity_noise", "layout", "viewpoints", "planes", "tags", "seed", "comment"},
             "scene");
  SceneFile f;
  SceneSpec& s = f.spec;
  s.density = get_or(j, "density", s.density);
  s.range_noise = get_or(j, "range_noise", s.range_noise);
  s.intensity_noise = get_or(j, "intensity_noise", s.intensity_noise);
  f.seed = get_or<std::uint64_t>(j, "seed", f.seed);
  if (j.contains("layout")) {
    const Json& l = j["layout"];
    check_keys(l, {"payload", "border", "margin"}, "layout");
    s.layout.payload = get_or(l, "payload", s.layout.payload);
    s.layout.border = get_or(l, "border", s.layout.border);
    s.layout.margin = get_or(l, "margin", s.layout.margin);
  }
  if (j.contains("viewpoints")) {
    s.viewpoints.clear();
    for (const auto& v : j["viewpoints"]) s.viewpoints.push_back(read_vec3(v, "viewpoint", ErrorCode::InvalidSpec));
  }
  for (const auto& pj : j.value("planes", Json::array())) {
    check_keys(pj, {"center", "normal", "up", "width", "height", "intensity", "comment"}, "plane");
    PlaneSpec p;
    if (pj.contains("center")) p.center = read_vec3(pj["center"], "plane center", ErrorCode::InvalidSpec);
    if (pj.contains("normal")) p.normal = read_vec3(pj["normal"], "plane normal", ErrorCode::InvalidSpec);
    if (pj.contains("up")) p.up = read_vec3(pj["up"], "plane up", ErrorCode::InvalidSpec);
    p.width = get_or(pj, "width", p.width);
    p.height = get_or(pj, "height", p.height);
    p.intensity = get_or(pj, "intensity", p.intensity);
    s.planes.push_back(p);
  }
  for (const auto& tj : j.value("tags", Json::array())) {
    check_keys(tj, {"id", "plane", "offset", "rotation_deg", "side", "black", "white", "comment"}, "tag");
    TagSpec t;
    t.id = get_or<std::size_t>(tj, "id", t.id);
    t.plane = get_or<std::size_t>(tj, "plane", t.plane);
    if (tj.contains("offset")) {
      const Json& o = tj["offset"];
      if (!o.is_array() || o.size() != 2) throw Error(ErrorCode::InvalidSpec, "tag offset must be [u, v]");
      t.offset = {o[0].get<double>(), o[1].get<double>()};
    }
    t.rotation_deg = get_or(tj, "rotation_deg", t.rotation_deg);
    t.side = get_or(tj, "side", t.side);
    t.black = get_or(tj, "black", t.black);
    t.white = get_or(tj, "white", t.white);
    s.tags.push_back(t);
  }
  return f;
}

inline SceneFile load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open scene '" + path + "'");
  try {
    return scene_from_json(Json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, path + ": " + e.what());
  }
}

inline Json scene_to_json(const SceneSpec& s, std::uint64_t seed) {
  Json j;
  j["seed"] = seed;
  j["density"] = s.density;
  j["range_noise"] = s.range_noise;
  j["intensity_noise"] = s.intensity_noise;
  j["layout"] = {{"payload", s.layout.payload}, {"border", s.layout.border}, {"margin", s.layout.margin}};
  j["viewpoints"] = Json::array();
  for (const auto& v : s.viewpoints) j["viewpoints"].push_back({v.x(), v.y(), v.z()});
  j["planes"] = Json::array();
  for (const auto& p : s.planes)
    j["planes"].push_back({{"center", {p.center.x(), p.center.y(), p.center.z()}},
                           {"normal", {p.normal.x(), p.normal.y(), p.normal.z()}},
                           {"up", {p.up.x(), p.up.y(), p.up.z()}},
                           {"width", p.width},
                           {"height", p.height},
                           {"intensity", p.intensity}});
  j["tags"] = Json::array();
  for (const auto& t : s.tags)
    j["tags"].push_back({{"id", t.id},
                         {"plane", t.plane},
                         {"offset", {t.offset.x(), t.offset.y()}},
                         {"rotation_deg", t.rotation_deg},
                         {"side", t.side},
                         {"black", t.black},
                         {"white", t.white}});
  return j;
}

inline Json vertices_to_json(const Corners3& v) {
  Json out = Json::array();
  for (int k = 0; k < 4; ++k)
    out.push_back({{"index", k}, {"x", round9(v[k].x())}, {"y", round9(v[k].y())}, {"z", round9(v[k].z())}});
  return out;
}

inline Corners3 vertices_from_json(const Json& j, ErrorCode code) {
  if (!j.is_array() || j.size() != 4) throw Error(code, "vertices must list 4 entries");
  Corners3 v;
  for (const auto& e : j) {
    const int k = e.at("index").get<int>();
    if (k < 0 || k > 3) throw Error(code, "vertex index out of range");
    v[k] = {e.at("x").get<double>(), e.at("y").get<double>(), e.at("z").get<double>()};
  }
  return v;
}

inline Json truth_to_json(const SceneTruth& truth) {
  Json tags = Json::array();
  for (const auto& t : truth.tags)
    tags.push_back({{"id", t.id},
                    {"side", round9(t.side)},
                    {"vertices", vertices_to_json(t.vertices)},
                    {"pose_row_major", json_row_major(t.pose)}});
  return {{"tags", tags}};
}

inline SceneTruth truth_from_json(const Json& j) {
  SceneTruth truth;
  try {
    for (const auto& tj : j.at("tags")) {
      TruthTag t;
      t.id = tj.at("id").get<std::size_t>();
      t.side = tj.value("side", 0.0);
      t.vertices = vertices_from_json(tj.at("vertices"), ErrorCode::InvalidSpec);
      t.pose = read_row_major(tj.at("pose_row_major"), "pose_row_major", ErrorCode::InvalidSpec);
      truth.tags.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("truth file: ") + e.what());
  }
  return truth;
}

inline Json evaluation_to_json(const EvaluationReport& rep) {
  Json errors = Json::array();
  for (const auto& e : rep.errors)
    errors.push_back({{"id", e.id},
                      {"duplicate", e.duplicate},
                      {"translation_error", json_vec3(e.translation_error)},
                      {"rotation_error_deg_yaw_pitch_roll",
                       {round9(e.rotation_error_deg[0]), round9(e.rotation_error_deg[1]), round9(e.rotation_error_deg[2])}},
                      {"vertex_rms", round9(e.vertex_rms)}});
  return {{"count", rep.count()},
          {"detected", rep.detected},
          {"total", rep.total},
          {"false_positives", rep.false_positives},
          {"duplicate_ids", rep.duplicate_ids},
          {"tags", errors}};
}

}  // namespace maptag
