// maptag: detect fiducial tags in intensity point-cloud maps.
//
//   maptag detect   --input map.pcd [--config cfg.json] [flags] [--output report.json]
//   maptag synth    --scene scene.json --output cloud.pcd [--truth truth.json]
//   maptag evaluate --report report.json --truth truth.json
//   maptag dict     [--output dict.txt] [--check dict.txt]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "maptag/maptag.hpp"

namespace {

using namespace maptag;

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw Error(ErrorCode::IoFailure, "cannot write '" + path + "'");
}

struct DetectFlags {
  std::string config;
  std::optional<std::string> input, dict, buffer_mode, output, debug_dir;
  std::optional<double> tag_size, thickness, gradient_quantile, gradient_tau, cluster_tol;
  std::optional<std::size_t> gradient_n, min_cluster;
  std::optional<int> max_correction;
  std::optional<unsigned> threads;
  bool baseline = false;
};

int run_detect(const DetectFlags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  if (f.input) c.input = *f.input;
  if (f.tag_size) c.tag_side = *f.tag_size;
  if (f.thickness) c.thickness = *f.thickness;
  if (f.dict) c.dictionary = *f.dict;
  if (f.gradient_n) c.gradient_neighbors = *f.gradient_n;
  if (f.gradient_quantile) c.gradient_quantile = *f.gradient_quantile;
  if (f.gradient_tau) c.gradient_tau = *f.gradient_tau;
  if (f.cluster_tol) c.cluster_tolerance = *f.cluster_tol;
  if (f.min_cluster) c.min_cluster = *f.min_cluster;
  if (f.buffer_mode) c.buffer_mode = parse_buffer_mode(*f.buffer_mode);
  if (f.max_correction) c.max_correction = *f.max_correction;
  if (f.output) c.output = *f.output;
  if (f.debug_dir) c.debug_dir = *f.debug_dir;
  if (f.threads) c.threads = *f.threads;
  if (f.baseline) c.baseline = true;

  const bool to_stdout = c.output.empty() || c.output == "-";
  if (to_stdout) c.output.clear();
  const DetectionReport report = run_from_config(c);
  if (to_stdout) std::cout << report_to_string(report);
  std::cerr << report.tags.size() << " tag(s) detected\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fiducial tag localization on intensity point-cloud maps"};
  app.require_subcommand(1);

  DetectFlags df;
  auto* detect = app.add_subcommand("detect", "Detect tags and write a JSON report");
  detect->add_option("--config", df.config, "JSON config; flags override its values")->check(CLI::ExistingFile);
  detect->add_option("--input", df.input, "Input PCD map");
  detect->add_option("--tag-size", df.tag_size, "Tag side length a in meters (outer edge of the white margin)");
  detect->add_option("--thickness", df.thickness, "Thickness allowance delta in meters");
  detect->add_option("--dict", df.dict, "Dictionary file or 'builtin'");
  detect->add_option("--gradient-n", df.gradient_n, "Neighbors per gradient fit");
  detect->add_option("--gradient-quantile", df.gradient_quantile, "Gradient-norm quantile kept");
  detect->add_option("--gradient-tau", df.gradient_tau, "Absolute gradient threshold (replaces the quantile rule)");
  detect->add_option("--cluster-tol", df.cluster_tol, "Euclidean cluster tolerance in meters");
  detect->add_option("--min-cluster", df.min_cluster, "Minimum cluster size");
  detect->add_option("--buffer-mode", df.buffer_mode, "Box enlargement: floor or factor")
      ->check(CLI::IsMember({"floor", "factor"}));
  detect->add_option("--max-correction", df.max_correction, "Bit errors corrected when matching");
  detect->add_option("--output", df.output, "Report path ('-' or omitted: stdout)");
  detect->add_option("--debug-dir", df.debug_dir, "Directory for per-stage dumps");
  detect->add_option("--threads", df.threads, "Worker threads");
  detect->add_flag("--baseline", df.baseline, "Decode one global spherical image instead");

  std::string scene_path, cloud_out, truth_out;
  std::optional<std::uint64_t> seed;
  bool ascii = false;
  unsigned synth_threads = 1;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic map and its ground truth");
  synth->add_option("--scene", scene_path, "Scene JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--output", cloud_out, "Output PCD")->required();
  synth->add_option("--truth", truth_out, "Ground-truth JSON");
  synth->add_option("--seed", seed, "Override the scene seed");
  synth->add_flag("--ascii", ascii, "Write ASCII PCD (full precision) instead of binary");
  synth->add_option("--threads", synth_threads, "Worker threads");

  std::string report_path, truth_path, eval_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a report against ground truth");
  evaluate_cmd->add_option("--report", report_path, "Detection report JSON")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--truth", truth_path, "Ground-truth JSON")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--output", eval_out, "Evaluation JSON ('-' or omitted: stdout)");

  std::string dict_out, dict_check;
  auto* dict = app.add_subcommand("dict", "Write the builtin dictionary or check a dictionary file");
  dict->add_option("--output", dict_out, "Output path ('-' or omitted: stdout)");
  dict->add_option("--check", dict_check, "Dictionary file to check")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (detect->parsed()) return run_detect(df);
    if (synth->parsed()) {
      SceneFile scene = load_scene(scene_path);
      const SynthResult r = synth_scene(scene.spec, seed.value_or(scene.seed), synth_threads);
      save_pcd(r.cloud, cloud_out, ascii ? PcdEncoding::Ascii : PcdEncoding::Binary);
      if (!truth_out.empty()) write_text(truth_out, truth_to_json(r.truth).dump(2) + "\n");
      std::cerr << r.cloud.size() << " points, " << r.truth.tags.size() << " tag(s)\n";
      return 0;
    }
    if (evaluate_cmd->parsed()) {
      const auto detections = detections_from_json(read_json(report_path));
      const SceneTruth truth = truth_from_json(read_json(truth_path));
      const EvaluationReport rep = evaluate(detections, truth);
      write_text(eval_out, evaluation_to_json(rep).dump(2) + "\n");
      std::cerr << "detected " << rep.count() << (rep.duplicate_ids ? " (duplicate ids)" : "") << "\n";
      return 0;
    }
    if (dict->parsed()) {
      if (!dict_check.empty()) {
        const TagDictionary d = load_dictionary(dict_check);
        const int dist = minimum_distance(d);
        std::cout << d.size() << " codewords, grid " << d.grid << ", minimum distance " << dist << "\n";
        return dist >= 4 ? 0 : 2;
      }
      write_text(dict_out, format_dictionary(builtin_dictionary()));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
