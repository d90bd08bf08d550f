#pragma once

// End-to-end detection: gradient downsampling, clustering, box filtering,
// per-candidate re-projection and decoding, pose solving and the JSON report.
// The baseline mode decodes one global spherical image of the map instead.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "maptag/candidate_filter.hpp"
#include "maptag/cloud.hpp"
#include "maptag/cluster_obb.hpp"
#include "maptag/decoder.hpp"
#include "maptag/dictionary.hpp"
#include "maptag/error.hpp"
#include "maptag/gradient.hpp"
#include "maptag/json_util.hpp"
#include "maptag/parallel.hpp"
#include "maptag/pcd_io.hpp"
#include "maptag/plane_reprojection.hpp"
#include "maptag/pose.hpp"
#include "maptag/scene.hpp"
#include "maptag/scene_io.hpp"
#include "maptag/spatial_index.hpp"
#include "maptag/tag_layout.hpp"

namespace maptag {

struct PipelineConfig {
  std::string input;
  double tag_side = 0.2;
  double thickness = 0.03;
  std::string dictionary = "builtin";
  int border_modules = 1;
  int margin_modules = 1;

  std::size_t gradient_neighbors = 20;
  double gradient_quantile = 0.9;
  double gradient_noise_floor = 4.0;
  std::optional<double> gradient_tau;  // absolute threshold; replaces the quantile rule

  // default: factor * mean spacing of the downsampled cloud, at least one module
  std::optional<double> cluster_tolerance;
  double cluster_tolerance_factor = 2.5;
  std::size_t min_cluster = 30;
  std::size_t max_cluster = 0;  // 0 = unlimited

  double diagonal_margin = 0.02;
  std::optional<double> edge_dilation;  // default: mean gradient neighborhood radius
  BufferMode buffer_mode = BufferMode::Floor;
  double buffer = 2.0;

  double pixels_across = 256.0;
  double spacing_factor = 1.2;
  int hole_passes = 2;
  int threshold_window = 31;
  int max_correction = 1;

  double baseline_resolution_factor = 2.0;

  std::string output;
  std::string debug_dir;
  unsigned threads = 1;
  bool baseline = false;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
    TagGeometry{tag_side, thickness}.validate();
    TagLayout{4, border_modules, margin_modules}.validate();
    if (gradient_neighbors < 4) bad("gradient-n must be at least 4");
    if (!(gradient_quantile > 0.0 && gradient_quantile < 1.0)) bad("gradient-quantile must lie in (0, 1)");
    if (!(gradient_noise_floor >= 0.0)) bad("gradient noise floor must be non-negative");
    if (gradient_tau && !(*gradient_tau > 0.0)) bad("gradient tau must be positive");
    if (cluster_tolerance && !(*cluster_tolerance > 0.0)) bad("cluster-tol must be positive");
    if (!(cluster_tolerance_factor > 0.0)) bad("cluster tolerance factor must be positive");
    if (min_cluster < 3) bad("min-cluster must be at least 3");
    if (max_cluster != 0 && max_cluster < min_cluster) bad("max cluster size is below min-cluster");
    if (!(diagonal_margin >= 0.0 && diagonal_margin < 1.0)) bad("diagonal margin must lie in [0, 1)");
    if (edge_dilation && !(*edge_dilation >= 0.0)) bad("edge dilation must be non-negative");
    if (!(buffer > 0.0)) bad("buffer must be positive");
    if (!(pixels_across >= 16.0)) bad("pixels-across must be at least 16");
    if (!(spacing_factor > 0.0)) bad("spacing factor must be positive");
    if (hole_passes < 0) bad("hole passes must be non-negative");
    if (threshold_window < 3 || threshold_window % 2 == 0) bad("threshold window must be odd and >= 3");
    if (max_correction < 0) bad("max-correction must be non-negative");
    if (!(baseline_resolution_factor > 0.0)) bad("baseline resolution factor must be positive");
    if (threads < 1) bad("threads must be at least 1");
  }
};

inline BufferMode parse_buffer_mode(const std::string& s) {
  if (s == "floor") return BufferMode::Floor;
  if (s == "factor") return BufferMode::Factor;
  throw Error(ErrorCode::InvalidConfig, "buffer mode must be 'floor' or 'factor'");
}

inline const char* to_string(BufferMode m) { return m == BufferMode::Floor ? "floor" : "factor"; }

/// Config files are JSON objects whose keys use the same names as the CLI
/// flags (without the leading dashes).
inline void apply_config_json(const Json& j, PipelineConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "input") c.input = v.get<std::string>();
      else if (key == "tag-size") c.tag_side = v.get<double>();
      else if (key == "thickness") c.thickness = v.get<double>();
      else if (key == "dict") c.dictionary = v.get<std::string>();
      else if (key == "border-modules") c.border_modules = v.get<int>();
      else if (key == "margin-modules") c.margin_modules = v.get<int>();
      else if (key == "gradient-n") c.gradient_neighbors = v.get<std::size_t>();
      else if (key == "gradient-quantile") c.gradient_quantile = v.get<double>();
      else if (key == "gradient-noise-floor") c.gradient_noise_floor = v.get<double>();
      else if (key == "gradient-tau") c.gradient_tau = v.get<double>();
      else if (key == "cluster-tol") c.cluster_tolerance = v.get<double>();
      else if (key == "cluster-tol-factor") c.cluster_tolerance_factor = v.get<double>();
      else if (key == "min-cluster") c.min_cluster = v.get<std::size_t>();
      else if (key == "max-cluster") c.max_cluster = v.get<std::size_t>();
      else if (key == "diagonal-margin") c.diagonal_margin = v.get<double>();
      else if (key == "edge-dilation") c.edge_dilation = v.get<double>();
      else if (key == "buffer-mode") c.buffer_mode = parse_buffer_mode(v.get<std::string>());
      else if (key == "buffer") c.buffer = v.get<double>();
      else if (key == "pixels-across") c.pixels_across = v.get<double>();
      else if (key == "spacing-factor") c.spacing_factor = v.get<double>();
      else if (key == "hole-passes") c.hole_passes = v.get<int>();
      else if (key == "threshold-window") c.threshold_window = v.get<int>();
      else if (key == "max-correction") c.max_correction = v.get<int>();
      else if (key == "baseline-resolution-factor") c.baseline_resolution_factor = v.get<double>();
      else if (key == "output") c.output = v.get<std::string>();
      else if (key == "debug-dir") c.debug_dir = v.get<std::string>();
      else if (key == "threads") c.threads = v.get<unsigned>();
      else if (key == "baseline") c.baseline = v.get<bool>();
      else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config value has the wrong type: ") + e.what());
  }
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config '" + path + "'");
  PipelineConfig c;
  try {
    apply_config_json(Json::parse(in), c);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  return c;
}

inline TagDictionary resolve_dictionary(const PipelineConfig& c) {
  return c.dictionary == "builtin" ? builtin_dictionary() : load_dictionary(c.dictionary);
}

struct DetectionReport {
  std::vector<TagDetection> tags;
  Json diagnostics = Json::object();
};

namespace pipeline_detail {

inline std::string candidate_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "candidate_%04zu", k);
  return buf;
}

struct CandidateOutcome {
  std::vector<TagDetection> tags;
  Json record = Json::object();
  std::optional<IntensityImage> image;
};

/// Same id within one tag side of each other: keep the lower residual (the
/// earlier one on ties). Survivors are ordered by id, then center.
inline std::vector<TagDetection> dedupe_and_sort(std::vector<TagDetection> in, double side, std::size_t& dropped) {
  std::vector<TagDetection> out;
  for (auto& d : in) {
    auto same = std::find_if(out.begin(), out.end(), [&](const TagDetection& o) {
      return o.id == d.id && (o.pose.translation - d.pose.translation).norm() < side;
    });
    if (same == out.end()) {
      out.push_back(std::move(d));
    } else {
      ++dropped;
      if (d.rms_residual < same->rms_residual) *same = std::move(d);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const TagDetection& a, const TagDetection& b) {
    if (a.id != b.id) return a.id < b.id;
    const auto &p = a.pose.translation, &q = b.pose.translation;
    return std::lexicographical_compare(p.data(), p.data() + 3, q.data(), q.data() + 3);
  });
  return out;
}

inline DecodeParams decode_params(const PipelineConfig& c, const TagDictionary& dict) {
  DecodeParams p;
  p.binarize.window = c.threshold_window;
  p.max_correction = c.max_correction;
  p.sample.payload = dict.grid;
  p.sample.border = c.border_modules;
  return p;
}

inline Json status(const std::string& stage, const Error& e) {
  return {{"stage", stage}, {"error", to_string(e.code())}};
}

}  // namespace pipeline_detail

/// Runs every stage on an in-memory cloud. Per-candidate failures are
/// recorded in the diagnostics and never abort the run.
inline DetectionReport run_pipeline(const IntensityCloud& cloud, const PipelineConfig& config,
                                    const TagDictionary& dict) {
  using namespace pipeline_detail;
  config.validate();
  const TagLayout layout{dict.grid, config.border_modules, config.margin_modules};
  const TagGeometry geom{config.tag_side, config.thickness};
  DetectionReport report;
  Json& diag = report.diagnostics;
  diag["mode"] = "pipeline";
  diag["input_points"] = cloud.size();
  const bool debug = !config.debug_dir.empty();
  if (debug) std::filesystem::create_directories(config.debug_dir);
  if (cloud.empty()) {
    diag["candidates"] = Json::array();
    return report;
  }

  const SpatialIndex raw_index(cloud);
  DownsampleParams dp;
  dp.neighbors = config.gradient_neighbors;
  dp.quantile = config.gradient_quantile;
  dp.noise_floor = config.gradient_noise_floor;
  dp.threads = config.threads;
  if (config.gradient_tau) {
    dp.relative_mode = false;
    dp.tau = *config.gradient_tau;
  }
  const DownsampleResult down = downsample_by_gradient(cloud, raw_index, dp);
  diag["downsampled_points"] = down.cloud.size();
  diag["gradient_threshold"] = round9(down.diagnostics.effective_tau);
  diag["degenerate_neighborhoods"] = down.diagnostics.skipped_degenerate;
  diag["mean_neighborhood_radius"] = round9(down.diagnostics.mean_neighborhood_radius);
  if (debug) save_pcd(down.cloud, config.debug_dir + "/downsampled.pcd", PcdEncoding::Binary);

  std::vector<ObbCandidate> obbs;
  Json manifest = Json::array();
  if (!down.cloud.empty()) {
    const SpatialIndex down_index(down.cloud);
    // The white margin separates the outer edge band from the frame band by
    // about one module; the default tolerance bridges it at any density.
    const double tol = config.cluster_tolerance
                           ? *config.cluster_tolerance
                           : std::max(config.cluster_tolerance_factor *
                                          mean_nearest_neighbor_spacing(down.cloud, down_index, config.threads),
                                      layout.module_size(config.tag_side));
    diag["cluster_tolerance"] = round9(tol);
    const std::size_t max_size = config.max_cluster ? config.max_cluster : std::numeric_limits<std::size_t>::max();
    const auto clusters = euclidean_cluster(down.cloud, down_index, tol, config.min_cluster, max_size);
    diag["clusters"] = clusters.size();
    std::vector<std::optional<ObbCandidate>> boxes(clusters.size());
    parallel_for(clusters.size(), config.threads, [&](std::size_t k) {
      try {
        boxes[k] = compute_obb(down.cloud, clusters[k]);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateCluster) throw;
      }
    });
    std::size_t degenerate = 0;
    for (auto& b : boxes) {
      if (!b) {
        ++degenerate;
        continue;
      }
      for (auto& m : b->members) m = down.kept[m];  // members now index the raw cloud
      obbs.push_back(*b);
    }
    diag["degenerate_clusters"] = degenerate;
  } else {
    diag["cluster_tolerance"] = 0.0;
    diag["clusters"] = 0;
    diag["degenerate_clusters"] = 0;
  }

  DiagonalTolerance dtol{config.diagonal_margin,
                         config.edge_dilation ? *config.edge_dilation : down.diagnostics.mean_neighborhood_radius};
  std::vector<CriteriaRecord> records;
  filter_candidates(obbs, geom, dtol, &records);
  for (std::size_t k = 0; k < obbs.size(); ++k)
    manifest.push_back({{"cluster", k},
                        {"points", obbs[k].members.size()},
                        {"center", json_vec3(obbs[k].pose.translation)},
                        {"extents", json_vec3(obbs[k].extents)},
                        {"pass_diagonal", records[k].pass_diagonal},
                        {"pass_aspect", records[k].pass_aspect}});
  if (debug) {
    std::ofstream(config.debug_dir + "/obb_manifest.json") << manifest.dump(2) << "\n";
    for (std::size_t k = 0; k < obbs.size(); ++k)
      if (records[k].pass_diagonal && records[k].pass_aspect)
        save_pcd(subset(cloud, obbs[k].members), config.debug_dir + "/cluster_" + std::to_string(k) + ".pcd",
                 PcdEncoding::Binary);
  }
  std::vector<std::size_t> passed;
  for (std::size_t k = 0; k < obbs.size(); ++k)
    if (records[k].pass_diagonal && records[k].pass_aspect) passed.push_back(k);
  diag["candidates_passed"] = passed.size();

  RenderParams rp;
  rp.tag_side = config.tag_side;
  rp.pixels_across = config.pixels_across;
  rp.spacing_factor = config.spacing_factor;
  rp.hole_passes = config.hole_passes;
  const DecodeParams decp = decode_params(config, dict);
  const double frame_side = layout.frame_side(config.tag_side);

  std::vector<CandidateOutcome> outcomes(passed.size());
  parallel_for(passed.size(), config.threads, [&](std::size_t n) {
    const ObbCandidate& obb = obbs[passed[n]];
    CandidateOutcome& out = outcomes[n];
    out.record["cluster"] = passed[n];
    BufferedCandidate buffered;
    try {
      buffered = extract_buffered(cloud, raw_index, obb, geom, config.buffer_mode, config.buffer);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptySelection) throw;
      out.record["status"] = status("extract", e);
      return;
    }
    const PlaneFrameCandidate plane = make_plane_candidate(cloud, buffered);
    std::vector<DecodedTag> decoded;
    try {
      out.image = render_intensity_image(plane, rp);
      decoded = decode_image(*out.image, dict, decp);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateImage && e.code() != ErrorCode::TooFewPixels) throw;
      out.record["status"] = status("render", e);
      return;
    }
    out.record["decoded"] = decoded.size();
    EdgeSamples samples;
    if (!decoded.empty()) {
      samples.positions.reserve(plane.points.size());
      for (const auto& p : plane.points) samples.positions.push_back(project_subpixel(p, out.image->geometry));
      samples.values = plane.intensities;
    }
    Json per_tag = Json::array();
    for (const auto& d : decoded) {
      try {
        const double module_px = 0.25 * d.quad.perimeter() / (dict.grid + 2 * config.border_modules);
        const QuadDetection refined = refine_quad_from_samples(d.quad, samples, 0.6 * module_px);
        const auto corners = decoded_corner_order(refined, d.match);
        Corners3 vertices;
        for (int k = 0; k < 4; ++k) vertices[k] = unproject_vertex(corners[k], out.image->geometry, plane);
        out.tags.push_back(assemble_detection(d.match.id, d.match.mirrored, vertices, frame_side, config.thickness));
        per_tag.push_back({{"id", d.match.id}, {"mirrored", d.match.mirrored}, {"bit_errors", d.match.distance}});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::PlanarityViolation && e.code() != ErrorCode::DegenerateVertices &&
            e.code() != ErrorCode::DegenerateImage)
          throw;
        per_tag.push_back({{"id", d.match.id}, {"error", to_string(e.code())}});
      }
    }
    out.record["tags"] = per_tag;
    out.record["status"] = decoded.empty() ? Json("no_match") : Json("decoded");
  });

  std::vector<TagDetection> all;
  Json cand = Json::array();
  for (std::size_t n = 0; n < outcomes.size(); ++n) {
    for (auto& t : outcomes[n].tags) all.push_back(t);
    cand.push_back(outcomes[n].record);
    if (debug && outcomes[n].image)
      write_pgm(*outcomes[n].image, config.debug_dir + "/" + candidate_name(passed[n]) + ".pgm");
  }
  diag["candidates"] = cand;
  std::size_t dropped = 0;
  report.tags = dedupe_and_sort(std::move(all), config.tag_side, dropped);
  diag["duplicates_dropped"] = dropped;
  return report;
}

/// Pixels of a global image can mix surfaces at different ranges. Seeded
/// RANSAC finds planes holding at least 30% of the points within `thickness`;
/// the nearest such plane is refitted by least squares. Returns (point, normal).
inline std::optional<std::pair<Eigen::Vector3d, Eigen::Vector3d>> nearest_support_plane(
    const std::vector<Eigen::Vector3d>& pts, double thickness, int iterations = 256) {
  if (pts.size() < 3) return std::nullopt;
  scene_detail::Rng rng(0x5eed);
  const std::size_t needed = std::max<std::size_t>(3, (3 * pts.size() + 9) / 10);
  double best_range = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_inliers, inliers;
  for (int it = 0; it < iterations; ++it) {
    auto pick = [&] { return std::min(pts.size() - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(pts.size()))); };
    const auto& p0 = pts[pick()];
    const auto& p1 = pts[pick()];
    const auto& p2 = pts[pick()];
    const Eigen::Vector3d n = (p1 - p0).cross(p2 - p0);
    if (n.norm() < 1e-12) continue;
    const Eigen::Vector3d unit = n.normalized();
    inliers.clear();
    double range_sum = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (std::abs(unit.dot(pts[i] - p0)) <= thickness) {
        inliers.push_back(i);
        range_sum += pts[i].norm();
      }
    if (inliers.size() < needed) continue;
    const double range = range_sum / static_cast<double>(inliers.size());
    if (range < best_range) {
      best_range = range;
      best_inliers = inliers;
    }
  }
  if (best_inliers.size() < 3) return std::nullopt;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (std::size_t i : best_inliers) c += pts[i];
  c /= static_cast<double>(best_inliers.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : best_inliers) cov += (pts[i] - c) * (pts[i] - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  return std::make_pair(c, Eigen::Vector3d(eig.eigenvectors().col(0)));
}

/// Decodes one nearest-range image of the whole map seen from the origin.
/// Each corner ray is intersected with the least-squares plane of the points
/// whose pixels fall inside the quad.
inline DetectionReport run_baseline(const IntensityCloud& cloud, const PipelineConfig& config,
                                    const TagDictionary& dict) {
  using namespace pipeline_detail;
  config.validate();
  const TagLayout layout{dict.grid, config.border_modules, config.margin_modules};
  DetectionReport report;
  Json& diag = report.diagnostics;
  diag["mode"] = "baseline";
  diag["input_points"] = cloud.size();
  if (cloud.empty()) return report;

  const ImageGeometry g =
      baseline_geometry(cloud, config.baseline_resolution_factor, 0.9, 64e6, 2, config.threads);
  IntensityImage image = spherical_project_baseline(cloud, g);
  for (int pass = 0; pass < config.hole_passes; ++pass)
    if (fill_holes_once(image, 5) == 0) break;
  diag["image_width"] = g.width;
  diag["image_height"] = g.height;
  diag["angular_resolution"] = round9(g.res_azimuth);
  if (!config.debug_dir.empty()) {
    std::filesystem::create_directories(config.debug_dir);
    write_pgm(image, config.debug_dir + "/baseline.pgm");
  }

  std::vector<DecodedTag> decoded;
  try {
    decoded = decode_image(image, dict, decode_params(config, dict));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewPixels) throw;
    diag["status"] = status("decode", e);
  }
  diag["decoded"] = decoded.size();

  const double frame_side = layout.frame_side(config.tag_side);
  std::vector<TagDetection> all;
  Json per_tag = Json::array();
  for (const auto& d : decoded) {
    // Points behind the pixels inside the quad define the tag plane.
    std::vector<Eigen::Vector3d> support;
    int umin = image.width(), umax = 0, vmin = image.height(), vmax = 0;
    for (const auto& c : d.quad.corners) {
      umin = std::min(umin, static_cast<int>(std::floor(c.x())));
      umax = std::max(umax, static_cast<int>(std::ceil(c.x())));
      vmin = std::min(vmin, static_cast<int>(std::floor(c.y())));
      vmax = std::max(vmax, static_cast<int>(std::ceil(c.y())));
    }
    for (int v = std::max(0, vmin); v <= std::min(image.height() - 1, vmax); ++v)
      for (int u = std::max(0, umin); u <= std::min(image.width() - 1, umax); ++u) {
        const auto src = image.sources[image.offset(u, v)];
        if (src < 0) continue;
        const Eigen::Vector2d p(u, v);
        bool inside = true;
        for (int k = 0; k < 4 && inside; ++k) {
          const auto& a = d.quad.corners[k];
          const auto& b = d.quad.corners[(k + 1) % 4];
          inside = decoder_detail::cross(a, b, p) <= 0.0;  // corners run with negative area
        }
        if (inside) support.push_back(cloud.position(static_cast<std::size_t>(src)));
      }
    if (support.size() < 3) {
      per_tag.push_back({{"id", d.match.id}, {"error", "TooFewPixels"}});
      continue;
    }
    const auto plane = nearest_support_plane(support, config.thickness);
    if (!plane) {
      per_tag.push_back({{"id", d.match.id}, {"error", "DegenerateVertices"}});
      continue;
    }
    const Eigen::Vector3d c = plane->first, normal = plane->second;
    try {
      Corners3 vertices;
      for (int k = 0; k < 4; ++k) {
        const Eigen::Vector3d ray = pixel_ray(d.corners[k], g);
        const double denom = normal.dot(ray);
        if (std::abs(denom) < 1e-12) throw Error(ErrorCode::DegenerateVertices, "ray parallel to tag plane");
        vertices[k] = (normal.dot(c) / denom) * ray;
      }
      all.push_back(assemble_detection(d.match.id, d.match.mirrored, vertices, frame_side, config.thickness));
      per_tag.push_back({{"id", d.match.id}, {"mirrored", d.match.mirrored}, {"bit_errors", d.match.distance}});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PlanarityViolation && e.code() != ErrorCode::DegenerateVertices) throw;
      per_tag.push_back({{"id", d.match.id}, {"error", to_string(e.code())}});
    }
  }
  diag["tags"] = per_tag;
  std::size_t dropped = 0;
  report.tags = dedupe_and_sort(std::move(all), config.tag_side, dropped);
  diag["duplicates_dropped"] = dropped;
  return report;
}

/// pose_row_major maps tag-frame coordinates into the map (columns of the
/// rotation are the tag axes, the translation is the tag center);
/// pose_inverse_row_major maps map coordinates into the tag frame.
inline Json report_to_json(const DetectionReport& report) {
  Json tags = Json::array();
  for (const auto& t : report.tags)
    tags.push_back({{"id", t.id},
                    {"mirrored", t.mirrored},
                    {"vertices", vertices_to_json(t.vertices)},
                    {"pose_row_major", json_row_major(t.pose)},
                    {"pose_inverse_row_major", json_row_major(t.pose.inverse())},
                    {"rms_residual", round9(t.rms_residual)}});
  return {{"tags", tags}, {"diagnostics", report.diagnostics}};
}

inline std::string report_to_string(const DetectionReport& report) { return report_to_json(report).dump(2) + "\n"; }

inline std::vector<TagDetection> detections_from_json(const Json& j) {
  std::vector<TagDetection> out;
  try {
    for (const auto& tj : j.at("tags")) {
      TagDetection d;
      d.id = tj.at("id").get<std::size_t>();
      d.mirrored = tj.value("mirrored", false);
      d.vertices = vertices_from_json(tj.at("vertices"), ErrorCode::InvalidConfig);
      d.pose = read_row_major(tj.at("pose_row_major"), "pose_row_major", ErrorCode::InvalidConfig);
      d.rms_residual = tj.value("rms_residual", 0.0);
      out.push_back(d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("report: ") + e.what());
  }
  return out;
}

/// Loads the input named by the config, runs the selected mode and writes the
/// report when an output path is set.
inline DetectionReport run_from_config(const PipelineConfig& config) {
  config.validate();
  if (config.input.empty()) throw Error(ErrorCode::InvalidConfig, "no input cloud given");
  const TagDictionary dict = resolve_dictionary(config);
  const IntensityCloud cloud = load_pcd(config.input);
  DetectionReport report = config.baseline ? run_baseline(cloud, config, dict) : run_pipeline(cloud, config, dict);
  if (!config.output.empty()) {
    std::ofstream out(config.output, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + config.output + "' for writing");
    out << report_to_string(report);
    if (!out) throw Error(ErrorCode::IoFailure, "write to '" + config.output + "' failed");
  }
  return report;
}

}  // namespace maptag
