#include <algorithm>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "maptag/pcd_io.hpp"
#include "maptag/spatial_index.hpp"
#include "test_util.hpp"

using namespace maptag;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

const char* kHeaderXyzi =
    "VERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n"
    "WIDTH 1\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS 1\nDATA ascii\n";

// Float-representable values so binary files round-trip exactly.
IntensityCloud random_float_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> pos(-10.0f, 10.0f), inten(0.0f, 255.0f);
  IntensityCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({pos(rng), pos(rng), pos(rng), inten(rng)});
  return c;
}

std::vector<Neighbor> brute_knn(const IntensityCloud& c, const Eigen::Vector3d& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < c.size(); ++i) all.emplace_back(squared_distance(q, c.position(i)), i);
  std::sort(all.begin(), all.end());
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back({all[i].second, std::sqrt(all[i].first)});
  return out;
}

}  // namespace

TEST(Pcd, AsciiSinglePoint) {
  auto dir = testutil::scratch_dir("pcd_ascii");
  write_text(dir / "one.pcd", std::string(kHeaderXyzi) + "0 0 1 128\n");
  const auto c = load_pcd((dir / "one.pcd").string());
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (Point3I{0, 0, 1, 128}));
}

TEST(Pcd, ExtraFieldsIgnoredAndColumnOrderRespected) {
  auto dir = testutil::scratch_dir("pcd_extra");
  write_text(dir / "x.pcd",
             "VERSION 0.7\nFIELDS intensity ring x y z\nSIZE 4 2 4 4 4\nTYPE F U F F F\nCOUNT 1 1 1 1 1\n"
             "WIDTH 2\nHEIGHT 1\nPOINTS 2\nDATA ascii\n7 3 1 2 3\n9 4 -1 -2 -3\n");
  const auto c = load_pcd((dir / "x.pcd").string());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], (Point3I{1, 2, 3, 7}));
  EXPECT_EQ(c[1], (Point3I{-1, -2, -3, 9}));
}

TEST(Pcd, MissingIntensityField) {
  auto dir = testutil::scratch_dir("pcd_missing");
  write_text(dir / "m.pcd",
             "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 1\nHEIGHT 1\n"
             "POINTS 1\nDATA ascii\n0 0 1\n");
  try {
    load_pcd((dir / "m.pcd").string());
    FAIL() << "expected MissingField";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingField);
    EXPECT_NE(std::string(e.what()).find("intensity"), std::string::npos);
  }
}

TEST(Pcd, MalformedHeader) {
  auto dir = testutil::scratch_dir("pcd_malformed");
  write_text(dir / "h.pcd", "VERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4\nTYPE F F F F\nPOINTS 1\nDATA ascii\n0 0 0 0\n");
  try {
    load_pcd((dir / "h.pcd").string());
    FAIL() << "expected MalformedHeader";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedHeader);
  }
}

TEST(Pcd, TruncatedAscii) {
  auto dir = testutil::scratch_dir("pcd_trunc_ascii");
  std::string text = kHeaderXyzi;
  text.replace(text.find("POINTS 1"), 8, "POINTS 3");
  text.replace(text.find("WIDTH 1"), 7, "WIDTH 3");
  write_text(dir / "t.pcd", text + "0 0 1 128\n1 1 1\n");
  try {
    load_pcd((dir / "t.pcd").string());
    FAIL() << "expected TruncatedData";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncatedData);
    EXPECT_NE(std::string(e.what()).find("point 1"), std::string::npos);
  }
}

TEST(Pcd, TruncatedBinary) {
  auto dir = testutil::scratch_dir("pcd_trunc_bin");
  const auto path = (dir / "b.pcd").string();
  save_pcd(random_float_cloud(10, 3), path, PcdEncoding::Binary);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  try {
    load_pcd(path);
    FAIL() << "expected TruncatedData";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncatedData);
  }
}

TEST(Pcd, RejectsNonFinite) {
  auto dir = testutil::scratch_dir("pcd_nan");
  write_text(dir / "n.pcd", std::string(kHeaderXyzi) + "nan 0 1 128\n");
  EXPECT_THROW(load_pcd((dir / "n.pcd").string()), Error);
}

TEST(Pcd, MissingFileIsIoFailure) {
  try {
    load_pcd("/nonexistent/dir/file.pcd");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
  }
}

TEST(Pcd, SaveToUnwritablePath) {
  try {
    save_pcd(IntensityCloud{}, "/nonexistent/dir/out.pcd", PcdEncoding::Ascii);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
  }
}

TEST(Pcd, EmptyCloudRoundTrip) {
  auto dir = testutil::scratch_dir("pcd_empty");
  for (auto enc : {PcdEncoding::Ascii, PcdEncoding::Binary}) {
    const auto path = (dir / "e.pcd").string();
    save_pcd(IntensityCloud{}, path, enc);
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    EXPECT_NE(text.find("POINTS 0"), std::string::npos);
    EXPECT_TRUE(load_pcd(path).empty());
  }
}

TEST(Pcd, AsciiFileCarriesPointValues) {
  auto dir = testutil::scratch_dir("pcd_ascii_one");
  const auto path = (dir / "a.pcd").string();
  IntensityCloud c;
  c.points.push_back({1.5, -2.25, 3.125, 42});
  save_pcd(c, path, PcdEncoding::Ascii);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_NE(text.find("1.5 -2.25 3.125 42"), std::string::npos);
  EXPECT_EQ(load_pcd(path), c);
}

TEST(Pcd, RoundTripBothEncodings) {
  auto dir = testutil::scratch_dir("pcd_roundtrip");
  const auto small = random_float_cloud(100, 11);
  const auto big = random_float_cloud(10000, 12);
  for (auto enc : {PcdEncoding::Ascii, PcdEncoding::Binary}) {
    const auto path = (dir / "r.pcd").string();
    save_pcd(small, path, enc);
    EXPECT_EQ(load_pcd(path), small);
    save_pcd(big, path, enc);
    EXPECT_EQ(load_pcd(path), big);
  }
}

TEST(Pcd, AsciiKeepsDoublePrecision) {
  auto dir = testutil::scratch_dir("pcd_double");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-100, 100);
  IntensityCloud c;
  for (int i = 0; i < 200; ++i) c.points.push_back({u(rng), u(rng), u(rng), std::abs(u(rng))});
  const auto path = (dir / "d.pcd").string();
  save_pcd(c, path, PcdEncoding::Ascii);
  EXPECT_EQ(load_pcd(path), c);
}

TEST(Knn, SinglePoint) {
  IntensityCloud c;
  c.points.push_back({0, 0, 0, 1});
  const SpatialIndex index(c);
  const auto r = knn(index, {0, 0, 0}, 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], (Neighbor{0, 0.0}));
}

TEST(Knn, LatticeCenterFaceNeighbors) {
  IntensityCloud c;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 3; ++z) c.points.push_back({double(x), double(y), double(z), 0});
  const SpatialIndex index(c);
  const auto r = index.knn({1, 1, 1}, 7);
  ASSERT_EQ(r.size(), 7u);
  EXPECT_EQ(r[0].index, 13u);
  EXPECT_EQ(r[0].distance, 0.0);
  for (int i = 1; i < 7; ++i) EXPECT_EQ(r[i].distance, 1.0);
  EXPECT_EQ(r, brute_knn(c, {1, 1, 1}, 7));
  // Ties broken by ascending index.
  EXPECT_TRUE(std::is_sorted(r.begin() + 1, r.end(), [](auto& a, auto& b) { return a.index < b.index; }));
}

TEST(Knn, ClampsToCloudSize) {
  IntensityCloud c;
  for (int i = 0; i < 27; ++i) c.points.push_back({double(i % 3), double(i / 3 % 3), double(i / 9), 0});
  const SpatialIndex index(c);
  const auto r = index.knn({0.3, 0.2, 0.1}, 100);
  EXPECT_EQ(r.size(), 27u);
  EXPECT_EQ(r, brute_knn(c, {0.3, 0.2, 0.1}, 100));
}

TEST(Knn, EmptyCloudThrows) {
  const SpatialIndex index(IntensityCloud{});
  try {
    index.knn({0, 0, 0}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCloud);
  }
}

TEST(Knn, MatchesBruteForceOnRandomClouds) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 2000;
    IntensityCloud c;
    for (std::size_t i = 0; i < n; ++i) {
      auto p = testutil::random_vec(rng, -1, 1);
      // Snap some points to a coarse grid to force exact distance ties.
      if (trial % 2 == 0) p = (p * 4).array().round() / 4;
      c.points.push_back(make_point(p, 0));
    }
    const SpatialIndex index(c, 1 + trial % 8);
    for (int q = 0; q < 30; ++q) {
      Eigen::Vector3d query = testutil::random_vec(rng, -1.2, 1.2);
      if (q % 3 == 0) query = c.position(rng() % n);
      const std::size_t k = 1 + rng() % 40;
      ASSERT_EQ(index.knn(query, k), brute_knn(c, query, k)) << "trial " << trial << " query " << q;
    }
  }
}

TEST(RadiusSearch, MatchesBruteForce) {
  std::mt19937_64 rng(77);
  IntensityCloud c;
  for (int i = 0; i < 1500; ++i) c.points.push_back(make_point(testutil::random_vec(rng, -1, 1), 0));
  const SpatialIndex index(c);
  for (int q = 0; q < 50; ++q) {
    const auto query = testutil::random_vec(rng, -1, 1);
    const double r = 0.05 + 0.3 * (q % 5) / 4.0;
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (squared_distance(query, c.position(i)) <= r * r) expect.push_back(i);
    EXPECT_EQ(index.radius_search(query, r), expect);
  }
}

TEST(SpatialIndex, TraversalOrderIsPermutation) {
  std::mt19937_64 rng(9);
  IntensityCloud c;
  for (int i = 0; i < 500; ++i) c.points.push_back(make_point(testutil::random_vec(rng, -1, 1), 0));
  const SpatialIndex index(c);
  std::vector<std::uint32_t> order = index.traversal_order();
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) ASSERT_EQ(order[i], i);
}
