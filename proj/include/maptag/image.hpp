#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "maptag/error.hpp"

namespace maptag {

/// Spherical projection geometry: u = round(theta / res_azimuth) + u_offset,
/// v = round(phi / res_inclination) + v_offset. Pixel centers sit at integer
/// (u, v); u indexes columns and v rows.
struct ImageGeometry {
  double res_azimuth = 0.001;
  double res_inclination = 0.001;
  int u_offset = 0;
  int v_offset = 0;
  int width = 0;
  int height = 0;

  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
};

/// Row-major intensity raster. Empty pixels hold NaN and have no source.
struct IntensityImage {
  ImageGeometry geometry;
  std::vector<double> values;
  std::vector<std::int64_t> sources;  // index of the contributing point, -1 if empty

  static constexpr double kEmpty = std::numeric_limits<double>::quiet_NaN();

  IntensityImage() = default;
  explicit IntensityImage(const ImageGeometry& g)
      : geometry(g),
        values(static_cast<std::size_t>(g.width) * static_cast<std::size_t>(g.height), kEmpty),
        sources(values.size(), -1) {}

  int width() const { return geometry.width; }
  int height() const { return geometry.height; }
  std::size_t offset(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(geometry.width) + static_cast<std::size_t>(u);
  }
  double at(int u, int v) const { return values[offset(u, v)]; }
  bool is_empty(int u, int v) const { return std::isnan(values[offset(u, v)]); }
  void set(int u, int v, double value, std::int64_t source) {
    values[offset(u, v)] = value;
    sources[offset(u, v)] = source;
  }

  std::size_t filled_pixels() const {
    std::size_t n = 0;
    for (double v : values) n += std::isnan(v) ? 0 : 1;
    return n;
  }
};

/// Binary raster, 1 = white.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  bool white(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u] != 0; }
};

/// 8-bit binary PGM. Values are scaled by `scale` and clamped; empty pixels are 0.
inline void write_pgm(const IntensityImage& image, const std::string& path, double scale = 1.0) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width()));
  for (int v = 0; v < image.height(); ++v) {
    for (int u = 0; u < image.width(); ++u) {
      const double x = image.at(u, v);
      row[static_cast<std::size_t>(u)] =
          std::isnan(x) ? 0 : static_cast<unsigned char>(std::lround(std::clamp(x * scale, 0.0, 255.0)));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write to '" + path + "' failed");
}

}  // namespace maptag
