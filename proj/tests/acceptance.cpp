// Runs every acceptance criterion and prints one PASS/FAIL line each.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "maptag/maptag.hpp"

using namespace maptag;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Eigen::Vector3d random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

RigidTransform random_pose(std::mt19937_64& rng, double reach) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return {q.normalized().toRotationMatrix(), random_vec(rng, -reach, reach)};
}

double percentile95(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(xs.size()))) - 1];
}

SynthResult shipped(const std::string& name) {
  const auto file = load_scene(std::string(MAPTAG_SCENES_DIR) + "/" + name);
  return synth_scene(file.spec, file.seed, 4);
}

std::set<std::size_t> ids(const DetectionReport& r) {
  std::set<std::size_t> out;
  for (const auto& t : r.tags) out.insert(t.id);
  return out;
}

// 1 -------------------------------------------------------------------------

Outcome occlusion_superiority() {
  const auto r = shipped("occlusion_two_tags.json");
  // Back board points sharing a 0.05 degree bin with the front board, seen from the origin.
  const double bin = deg2rad(0.05);
  auto key = [&](const Eigen::Vector3d& p) {
    const auto s = to_spherical(p);
    return std::make_pair(std::lround(s.azimuth / bin), std::lround(s.inclination / bin));
  };
  std::set<std::pair<long, long>> front;
  std::size_t back = 0, shared = 0;
  for (std::size_t i = 0; i < r.cloud.size(); ++i)
    if (r.cloud.points[i].x < 3.5) front.insert(key(r.cloud.position(i)));
  for (std::size_t i = 0; i < r.cloud.size(); ++i)
    if (r.cloud.points[i].x >= 3.5) {
      ++back;
      shared += front.count(key(r.cloud.position(i)));
    }
  const double occluded = back ? static_cast<double>(shared) / static_cast<double>(back) : 0.0;

  PipelineConfig single;
  single.threads = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto pipe = run_pipeline(r.cloud, single, builtin_dictionary());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto base = run_baseline(r.cloud, single, builtin_dictionary());
  const auto pe = evaluate(pipe.tags, r.truth), be = evaluate(base.tags, r.truth);

  const bool ok = r.cloud.size() >= 1000000 && occluded >= 0.95 && ids(pipe) == std::set<std::size_t>{7, 12} &&
                  pe.false_positives == 0 && be.detected == 1 && be.false_positives == 0 && base.tags.size() == 1 &&
                  seconds <= 30.0;
  return {ok, "pipeline " + pe.count() + ", baseline " + be.count() + ", back board " + fmt("%.1f", 100 * occluded) +
                  "% occluded, " + std::to_string(r.cloud.size()) + " points in " + fmt("%.1f", seconds) + " s"};
}

// 2 -------------------------------------------------------------------------

SceneSpec pose_scene(double distance, double range_noise) {
  SceneSpec s;
  s.density = 1e5;
  s.range_noise = range_noise;
  PlaneSpec p;
  const Eigen::Matrix3d turn = rotation_from_zyx(deg2rad(25), deg2rad(10), 0);
  p.center = distance * Eigen::Vector3d(1, 0.15, 0.05).normalized();
  p.normal = turn * -Eigen::Vector3d::UnitX();
  p.up = turn * Eigen::Vector3d::UnitZ();
  p.width = p.height = 0.6;
  s.planes = {p};
  TagSpec t;
  t.id = 21;
  t.side = 0.167;
  t.rotation_deg = 12;
  t.offset = {0.03, -0.02};
  s.tags = {t};
  return s;
}

Outcome pose_accuracy() {
  bool ok = true;
  std::ostringstream detail;
  for (const double noise : {0.0, 0.005}) {
    PipelineConfig c;
    c.tag_side = 0.167;
    c.threads = 4;
    if (noise > 0) c.thickness = 0.05;  // 5 mm range noise spreads the sheet to about +-15 mm
    double worst_t = 0, worst_r = 0;
    std::size_t misses = 0;
    for (const double d : {2.0, 3.0, 4.0}) {
      std::array<std::vector<double>, 3> t_err, r_err;
      for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r = synth_scene(pose_scene(d, noise), seed, 4);
        const auto rep = evaluate(run_pipeline(r.cloud, c, builtin_dictionary()).tags, r.truth);
        if (rep.detected != 1 || rep.errors.size() != 1) {
          ++misses;
          continue;
        }
        for (int k = 0; k < 3; ++k) {
          t_err[k].push_back(std::abs(rep.errors[0].translation_error[k]));
          r_err[k].push_back(std::abs(rep.errors[0].rotation_error_deg[k]));
        }
      }
      for (int k = 0; k < 3 && misses == 0; ++k) {
        // Noiseless: every seed; noisy: 95th percentile.
        const double t = noise > 0 ? percentile95(t_err[k]) : *std::max_element(t_err[k].begin(), t_err[k].end());
        const double rr = noise > 0 ? percentile95(r_err[k]) : *std::max_element(r_err[k].begin(), r_err[k].end());
        worst_t = std::max(worst_t, t);
        worst_r = std::max(worst_r, rr);
      }
    }
    const double t_bound = noise > 0 ? 0.02 : 0.01, r_bound = noise > 0 ? 1.0 : 0.5;
    ok = ok && misses == 0 && worst_t <= t_bound && worst_r <= r_bound;
    detail << (noise > 0 ? "; 5 mm noise p95 " : "noiseless max ") << fmt("%.4f", worst_t) << " m / "
           << fmt("%.3f", worst_r) << " deg";
    if (misses) detail << " (" << misses << " missed)";
  }
  return {ok, detail.str()};
}

// 3 -------------------------------------------------------------------------

// Cloud whose point 0 is p0 and the rest are p0 + scale * offsets.
IntensityCloud neighborhood(const Eigen::Vector3d& p0, const std::vector<Eigen::Vector3d>& offsets, double scale,
                            const std::function<double(const Eigen::Vector3d&)>& field) {
  IntensityCloud c;
  c.points.push_back(make_point(p0, field(p0)));
  for (const auto& o : offsets) {
    const Eigen::Vector3d p = p0 + scale * o;
    c.points.push_back(make_point(p, field(p)));
  }
  return c;
}

Eigen::Vector3d fitted_gradient(const IntensityCloud& c) {
  return fit_local_model(c, SpatialIndex(c), 0, c.size()).gradient;
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(3);
  double linear_full = 0, linear_planar = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d p0 = random_vec(rng, -5, 5);
    const Eigen::Vector3d g = random_vec(rng, -50, 50);
    const double b = 100;
    std::vector<Eigen::Vector3d> offsets;
    for (int i = 0; i < 19; ++i) offsets.push_back(random_vec(rng, -1, 1));
    auto linear = [&](const Eigen::Vector3d& p) { return b + g.dot(p - p0); };
    linear_full = std::max(linear_full, (fitted_gradient(neighborhood(p0, offsets, 0.05, linear)) - g).norm() / g.norm());

    // Planar neighborhood on a random plane; the field varies only within it.
    const Eigen::Matrix3d frame = random_pose(rng, 0).rotation;
    for (auto& o : offsets) o = frame * Eigen::Vector3d(o.x(), o.y(), 0.0);
    const Eigen::Vector3d gp = frame * Eigen::Vector3d(g.x(), g.y(), 0.0);
    auto planar = [&](const Eigen::Vector3d& p) { return b + gp.dot(p - p0); };
    linear_planar = std::max(linear_planar, (fitted_gradient(neighborhood(p0, offsets, 0.05, planar)) - gp).norm() / gp.norm());
  }

  auto smooth = [](const Eigen::Vector3d& p) {
    return 100 + 40 * std::sin(3 * p.x()) + 25 * std::cos(2 * p.y()) + 15 * p.x() * p.z() + 10 * std::exp(0.5 * p.z());
  };
  double worst_rel = 0, worst_ratio = 1e9;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d p0 = random_vec(rng, -1, 1);
    Eigen::Vector3d fd;
    const double h = 1e-5;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d e = Eigen::Vector3d::Unit(k) * h;
      fd[k] = (smooth(p0 + e) - smooth(p0 - e)) / (2 * h);
    }
    std::vector<Eigen::Vector3d> offsets;
    while (offsets.size() < 19) {
      const Eigen::Vector3d o = random_vec(rng, -1, 1);
      if (o.norm() <= 1) offsets.push_back(o);
    }
    const double coarse = (fitted_gradient(neighborhood(p0, offsets, 0.01, smooth)) - fd).norm() / fd.norm();
    const double fine = (fitted_gradient(neighborhood(p0, offsets, 0.005, smooth)) - fd).norm() / fd.norm();
    worst_rel = std::max(worst_rel, coarse);
    worst_ratio = std::min(worst_ratio, coarse / fine);
  }
  const bool ok = linear_full <= 1e-9 && linear_planar <= 1e-9 && worst_rel <= 0.05 && worst_ratio >= 1.7;
  return {ok, "linear " + fmt("%.1e", linear_full) + " full-rank, " + fmt("%.1e", linear_planar) +
                  " planar; smooth field " + fmt("%.2f", 100 * worst_rel) + "% at r=1 cm, halving ratio >= " +
                  fmt("%.2f", worst_ratio)};
}

// 4 -------------------------------------------------------------------------

double bounding_square_area(double a, double theta) {
  double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
  for (const auto& [cx, cy] : {std::pair{0.5, 0.5}, std::pair{-0.5, 0.5}, std::pair{-0.5, -0.5}, std::pair{0.5, -0.5}}) {
    const double x = a * (std::cos(theta) * cx - std::sin(theta) * cy);
    const double y = a * (std::sin(theta) * cx + std::cos(theta) * cy);
    lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
  }
  return (hi_x - lo_x) * (hi_y - lo_y);
}

Outcome diagonal_bound() {
  const double a = 0.2;
  bool bound_ok = true;
  for (int step = 0; step < 3600; ++step) {
    const double s = bounding_square_area(a, deg2rad(0.1 * step));
    bound_ok = bound_ok && s >= a * a - 1e-12 && s <= 2 * a * a + 1e-12;
  }
  for (int k = 0; k < 4; ++k) {
    bound_ok = bound_ok && std::abs(bounding_square_area(a, k * std::numbers::pi / 2) - a * a) <= 1e-9;
    bound_ok = bound_ok && std::abs(bounding_square_area(a, std::numbers::pi / 4 + k * std::numbers::pi / 2) - 2 * a * a) <= 1e-9;
  }

  // Noiseless tags at every in-plane turn, clustered the way the pipeline does.
  const PipelineConfig defaults;
  const TagLayout layout;
  const TagGeometry geom{defaults.tag_side, defaults.thickness};
  int tried = 0, passed = 0;
  double worst = 0;
  for (int deg = 0; deg < 90; deg += 5) {
    SceneSpec s;
    PlaneSpec wall;
    wall.center = {3, 0.1, 0};
    wall.normal = Eigen::Vector3d(-1, 0.1, 0.05).normalized();
    wall.width = wall.height = 0.8;
    s.planes = {wall};
    s.density = 1e5;
    s.intensity_noise = 0;
    TagSpec t;
    t.id = static_cast<std::size_t>(deg / 5);
    t.rotation_deg = deg;
    s.tags = {t};
    const auto r = synth_scene(s, static_cast<std::uint64_t>(deg + 1), 4);
    DownsampleParams dp;
    dp.threads = 4;
    const auto down = downsample_by_gradient(r.cloud, dp);
    const SpatialIndex index(down.cloud);
    const double tol = std::max(defaults.cluster_tolerance_factor * mean_nearest_neighbor_spacing(down.cloud, index, 4),
                                layout.module_size(defaults.tag_side));
    const DiagonalTolerance dt{defaults.diagonal_margin, down.diagnostics.mean_neighborhood_radius};
    const Eigen::Vector3d center = r.truth.tags[0].pose.translation;
    for (const auto& cl : euclidean_cluster(down.cloud, index, tol, defaults.min_cluster)) {
      const auto obb = compute_obb(down.cloud, cl);
      if ((obb.pose.translation - center).norm() > 0.05) continue;
      ++tried;
      passed += criterion_diagonal(obb, geom, dt) ? 1 : 0;
      worst = std::max(worst, obb.diagonal() / diagonal_bounds(geom, dt).upper);
    }
  }
  const bool ok = bound_ok && tried == 18 && passed == tried;
  return {ok, std::string(bound_ok ? "area bound holds" : "area bound violated") + " over 3600 angles; " +
                  std::to_string(passed) + "/" + std::to_string(tried) +
                  " rotated tag clusters pass the diagonal test (largest diagonal at " + fmt("%.1f", 100 * worst) +
                  "% of the upper bound)"};
}

// 5 -------------------------------------------------------------------------

Outcome transform_round_trips() {
  std::mt19937_64 rng(5);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    PlaneFrameCandidate c;
    c.obb_pose = random_pose(rng, 50);
    c.permutation = permutation_for_thin_axis(i % 3);
    const Eigen::Vector3d p = random_vec(rng, -50, 50);
    const std::vector<Eigen::Vector3d> one{p};
    const auto local = to_obb_frame(one, c.obb_pose);
    const auto [aligned, perm] = align_normal_to_view(local, Eigen::Vector3d::Unit(i % 3) * 0.01 + Eigen::Vector3d::Ones());
    const auto plane = to_intermediate_plane(aligned);
    const Eigen::Vector3d back = c.obb_pose.apply(perm.inverse(from_intermediate_plane(plane)[0]));
    worst = std::max(worst, (back - p).norm());
    worst = std::max(worst, (plane_to_map(c.permutation.forward(c.obb_pose.apply_inverse(p)) + plane_shift(), c) - p).norm());
  }

  // Dense noiseless tag at 2 m: pixel centers unproject within the quantization bound.
  SceneSpec s;
  PlaneSpec wall;
  wall.center = {2, 0.2, -0.1};
  wall.normal = Eigen::Vector3d(-1, 0.3, 0.1).normalized();
  wall.width = wall.height = 0.8;
  s.planes = {wall};
  TagSpec t;
  t.id = 11;
  t.rotation_deg = 15;
  s.tags = {t};
  s.density = 1e6;
  s.intensity_noise = 0;
  const auto r = synth_scene(s, 10, 4);
  ObbCandidate obb;
  obb.pose = r.truth.tags[0].pose;
  obb.extents = {0.2, 0.2, 0.0};
  const auto cand = make_plane_candidate(r.cloud, extract_buffered(r.cloud, SpatialIndex(r.cloud), obb, TagGeometry{}));
  const auto img = render_intensity_image(cand);
  double render_worst = 0;
  for (std::size_t i = 0; i < cand.points.size(); i += 7) {
    const Eigen::Vector2d px = project_subpixel(cand.points[i], img.geometry);
    const Eigen::Vector2d center(std::round(px.x()), std::round(px.y()));
    render_worst = std::max(render_worst, (unproject_vertex(center, img.geometry, cand) - r.cloud.position(cand.sources[i])).norm());
  }
  const bool ok = worst <= 1e-12 && render_worst <= 1.5e-3;
  return {ok, "10^4 round trips within " + fmt("%.1e", worst) + " m; render->unproject within " +
                  fmt("%.2f", 1e3 * render_worst) + " mm"};
}

// 6 -------------------------------------------------------------------------

// Naive bit grid: cell (i, j) at index i * n + j.
using Grid = std::vector<int>;

Grid grid_of(const BitMatrix& m) {
  Grid g;
  for (int i = 0; i < m.size(); ++i)
    for (int j = 0; j < m.size(); ++j) g.push_back(m.get(i, j) ? 1 : 0);
  return g;
}

Grid naive_transform(const Grid& g, int n, int quarter_turns, bool mirror) {
  Grid cur = g;
  if (mirror) {
    Grid m(cur.size());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m[i * n + j] = cur[i * n + (n - 1 - j)];
    cur = m;
  }
  for (int r = 0; r < quarter_turns; ++r) {
    Grid t(cur.size());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) t[i * n + j] = cur[(n - 1 - j) * n + i];
    cur = t;
  }
  return cur;
}

int naive_distance(const Grid& a, const Grid& b) {
  int d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += a[k] != b[k];
  return d;
}

Outcome decoder_closure() {
  const auto& dict = builtin_dictionary();
  const int n = dict.grid;
  std::vector<Grid> codes;
  for (const auto& c : dict.codes) codes.push_back(grid_of(c));

  int naive_d = n * n + 1;
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = i; j < codes.size(); ++j)
      for (int m = 0; m < 2; ++m)
        for (int r = 0; r < 4; ++r)
          if (!(i == j && r == 0 && m == 0))
            naive_d = std::min(naive_d, naive_distance(codes[i], naive_transform(codes[j], n, r, m != 0)));

  std::size_t cases = 0, agree = 0;
  for (std::size_t id = 0; id < codes.size(); ++id)
    for (int m = 0; m < 2; ++m)
      for (int r = 0; r < 4; ++r)
        for (int flip = -1; flip < n * n; ++flip) {
          Grid observed = naive_transform(codes[id], n, r, m != 0);
          if (flip >= 0) observed[flip] ^= 1;
          // Oracle: every (id, rotation, mirror) within one bit.
          std::vector<DictionaryMatch> within;
          for (std::size_t k = 0; k < codes.size(); ++k)
            for (int mm = 0; mm < 2; ++mm)
              for (int rr = 0; rr < 4; ++rr) {
                const int d = naive_distance(observed, naive_transform(codes[k], n, rr, mm != 0));
                if (d <= 1) within.push_back({k, rr, mm != 0, d});
              }
          BitMatrix bits(n);
          for (int k = 0; k < n * n; ++k) bits.set(k / n, k % n, observed[k] != 0);
          ++cases;
          const DictionaryMatch expected{id, r, m != 0, flip >= 0 ? 1 : 0};
          const auto got = match_dictionary(bits, dict, 1);
          agree += within.size() == 1 && within[0] == expected && got && *got == expected;
        }
  const bool ok = naive_d >= 4 && minimum_distance(dict) == naive_d && agree == cases;
  return {ok, std::to_string(agree) + "/" + std::to_string(cases) + " cases match the oracle; D = " +
                  std::to_string(naive_d) + " over " + std::to_string(codes.size()) + " codewords"};
}

// 7 -------------------------------------------------------------------------

Outcome svd_recovery() {
  std::mt19937_64 rng(7);
  const auto canonical = canonical_corners(0.2);
  double worst = 0, det_dev = 0;
  for (int i = 0; i < 1000; ++i) {
    const RigidTransform truth = random_pose(rng, 20);
    Corners3 target, mirrored;
    for (int k = 0; k < 4; ++k) {
      target[k] = truth.apply(canonical[k]);
      mirrored[k] = truth.apply(Eigen::Vector3d(-canonical[k].x(), canonical[k].y(), canonical[k].z()));
    }
    const auto fit = solve_pose_svd(canonical, target);
    worst = std::max(worst, (fit.transform.rotation - truth.rotation).cwiseAbs().maxCoeff());
    worst = std::max(worst, (fit.transform.translation - truth.translation).cwiseAbs().maxCoeff());
    det_dev = std::max(det_dev, std::abs(fit.transform.rotation.determinant() - 1.0));
    // A general mirror image (not planar) must still give a proper rotation.
    Corners3 bent = mirrored;
    bent[0] += truth.rotation.col(2) * 0.03;
    det_dev = std::max(det_dev, std::abs(solve_pose_svd(canonical, mirrored).transform.rotation.determinant() - 1.0));
    det_dev = std::max(det_dev, std::abs(solve_pose_svd(canonical, bent).transform.rotation.determinant() - 1.0));
  }
  const bool ok = worst <= 1e-9 && det_dev <= 1e-12;
  return {ok, "max error " + fmt("%.1e", worst) + " over 1000 motions; |det - 1| <= " + fmt("%.1e", det_dev)};
}

// 8 -------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "maptag_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_pcd(shipped("occlusion_two_tags.json").cloud, (dir / "map.pcd").string(), PcdEncoding::Binary);
  std::vector<std::string> reports;
  for (const unsigned threads : {1u, 1u, 4u, 8u}) {
    PipelineConfig c;
    c.input = (dir / "map.pcd").string();
    c.output = (dir / ("report_" + std::to_string(reports.size()) + ".json")).string();
    c.threads = threads;
    run_from_config(c);
    reports.push_back(slurp(c.output));
  }
  bool same = !reports[0].empty();
  for (const auto& r : reports) same = same && r == reports[0];
  const auto tags = Json::parse(reports[0])["tags"].size();
  return {same && tags == 2, std::to_string(reports.size()) + " reports (threads 1, 1, 4, 8) " +
                                 (same ? "byte-identical" : "differ") + ", " + std::to_string(reports[0].size()) +
                                 " bytes, " + std::to_string(tags) + " tags"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"occlusion superiority", occlusion_superiority},
      {"pose accuracy", pose_accuracy},
      {"gradient correctness", gradient_correctness},
      {"diagonal criterion bound", diagonal_bound},
      {"transform round trips", transform_round_trips},
      {"decoder closure", decoder_closure},
      {"SVD pose recovery", svd_recovery},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
