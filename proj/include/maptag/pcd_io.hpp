#pragma once

// PCD v0.7 reader/writer for clouds carrying x, y, z and intensity.
// Reads ASCII and binary (little-endian) data with any scalar width; extra
// fields are skipped. Writes 4-byte floats.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "maptag/cloud.hpp"
#include "maptag/error.hpp"

namespace maptag {

enum class PcdEncoding { Ascii, Binary };

namespace pcd_detail {

struct Field {
  std::string name;
  int size = 4;
  char type = 'F';
  int count = 1;
  std::size_t offset = 0;  // byte offset within a binary record
  std::size_t column = 0;  // first token index within an ASCII line
};

struct Header {
  std::vector<Field> fields;
  std::size_t width = 0;
  std::size_t height = 1;
  std::size_t points = 0;
  bool have_points = false;
  std::string data;
  std::size_t record_bytes = 0;
  std::size_t tokens_per_line = 0;
};

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

inline std::size_t parse_count(const std::string& token, const std::string& key, std::size_t line_no) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw Error(ErrorCode::MalformedHeader,
                "header line " + std::to_string(line_no) + ": bad " + key + " value '" + token + "'");
  return value;
}

inline Header parse_header(std::istream& in) {
  Header h;
  std::vector<std::string> sizes, types, counts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    const std::string& key = tokens[0];
    std::vector<std::string> values(tokens.begin() + 1, tokens.end());
    if (key == "VERSION") {
      continue;
    } else if (key == "FIELDS") {
      for (const auto& v : values) h.fields.push_back(Field{v});
    } else if (key == "SIZE") {
      sizes = values;
    } else if (key == "TYPE") {
      types = values;
    } else if (key == "COUNT") {
      counts = values;
    } else if (key == "WIDTH") {
      if (values.size() != 1) throw Error(ErrorCode::MalformedHeader, "header line " + std::to_string(line_no) + ": WIDTH");
      h.width = parse_count(values[0], key, line_no);
    } else if (key == "HEIGHT") {
      if (values.size() != 1) throw Error(ErrorCode::MalformedHeader, "header line " + std::to_string(line_no) + ": HEIGHT");
      h.height = parse_count(values[0], key, line_no);
    } else if (key == "VIEWPOINT") {
      continue;
    } else if (key == "POINTS") {
      if (values.size() != 1) throw Error(ErrorCode::MalformedHeader, "header line " + std::to_string(line_no) + ": POINTS");
      h.points = parse_count(values[0], key, line_no);
      h.have_points = true;
    } else if (key == "DATA") {
      if (values.size() != 1) throw Error(ErrorCode::MalformedHeader, "header line " + std::to_string(line_no) + ": DATA");
      h.data = values[0];
      break;
    } else {
      throw Error(ErrorCode::MalformedHeader,
                  "header line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (h.data.empty()) throw Error(ErrorCode::MalformedHeader, "no DATA line in header");
  if (h.data != "ascii" && h.data != "binary")
    throw Error(ErrorCode::MalformedHeader, "unsupported DATA encoding '" + h.data + "'");
  if (h.fields.empty()) throw Error(ErrorCode::MalformedHeader, "no FIELDS line in header");
  if (sizes.size() != h.fields.size() || types.size() != h.fields.size())
    throw Error(ErrorCode::MalformedHeader, "SIZE/TYPE entries do not match FIELDS");
  if (!counts.empty() && counts.size() != h.fields.size())
    throw Error(ErrorCode::MalformedHeader, "COUNT entries do not match FIELDS");
  if (!h.have_points) h.points = h.width * h.height;
  if (h.points != h.width * h.height)
    throw Error(ErrorCode::MalformedHeader, "POINTS " + std::to_string(h.points) +
                                                " disagrees with WIDTH*HEIGHT");

  std::size_t offset = 0, column = 0;
  for (std::size_t i = 0; i < h.fields.size(); ++i) {
    Field& f = h.fields[i];
    f.size = static_cast<int>(parse_count(sizes[i], "SIZE", 0));
    if (types[i].size() != 1) throw Error(ErrorCode::MalformedHeader, "bad TYPE '" + types[i] + "'");
    f.type = types[i][0];
    f.count = counts.empty() ? 1 : static_cast<int>(parse_count(counts[i], "COUNT", 0));
    const bool ok = (f.type == 'F' && (f.size == 4 || f.size == 8)) ||
                    ((f.type == 'I' || f.type == 'U') &&
                     (f.size == 1 || f.size == 2 || f.size == 4 || f.size == 8));
    if (!ok || f.count < 1)
      throw Error(ErrorCode::MalformedHeader, "field '" + f.name + "' has unsupported TYPE/SIZE/COUNT");
    f.offset = offset;
    f.column = column;
    offset += static_cast<std::size_t>(f.size) * static_cast<std::size_t>(f.count);
    column += static_cast<std::size_t>(f.count);
  }
  h.record_bytes = offset;
  h.tokens_per_line = column;
  return h;
}

inline std::uint64_t load_le(const unsigned char* p, int size) {
  std::uint64_t v = 0;
  for (int b = size - 1; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

inline double decode_scalar(const unsigned char* p, const Field& f) {
  const std::uint64_t raw = load_le(p, f.size);
  if (f.type == 'F') {
    if (f.size == 4) return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)));
    return std::bit_cast<double>(raw);
  }
  if (f.type == 'U') return static_cast<double>(raw);
  // sign-extend
  const int shift = 64 - 8 * f.size;
  return static_cast<double>(static_cast<std::int64_t>(raw << shift) >> shift);
}

inline const Field* find_field(const Header& h, std::string_view name) {
  for (const auto& f : h.fields)
    if (f.name == name) return &f;
  return nullptr;
}

inline void check_point(const Point3I& p, std::size_t index) {
  if (!p.is_valid())
    throw Error(ErrorCode::InvalidPoint, "point " + std::to_string(index) +
                                             " has a non-finite coordinate or invalid intensity");
}

}  // namespace pcd_detail

/// Loads a PCD v0.7 file. Throws Error with MissingField, MalformedHeader,
/// TruncatedData, InvalidPoint or IoFailure.
inline IntensityCloud load_pcd(const std::string& path) {
  using namespace pcd_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "'");
  const Header h = parse_header(in);

  std::array<const Field*, 4> used{find_field(h, "x"), find_field(h, "y"), find_field(h, "z"),
                                   find_field(h, "intensity")};
  constexpr std::array<const char*, 4> names{"x", "y", "z", "intensity"};
  for (std::size_t k = 0; k < used.size(); ++k)
    if (!used[k]) throw Error(ErrorCode::MissingField, path + ": no '" + names[k] + "' field");

  IntensityCloud cloud;
  cloud.points.resize(h.points);
  if (h.data == "binary") {
    std::vector<unsigned char> record(h.record_bytes);
    for (std::size_t i = 0; i < h.points; ++i) {
      in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(record.size()));
      if (in.gcount() != static_cast<std::streamsize>(record.size()))
        throw Error(ErrorCode::TruncatedData, path + ": binary data ends inside point " + std::to_string(i) +
                                                  " of " + std::to_string(h.points));
      Point3I& p = cloud.points[i];
      p.x = decode_scalar(record.data() + used[0]->offset, *used[0]);
      p.y = decode_scalar(record.data() + used[1]->offset, *used[1]);
      p.z = decode_scalar(record.data() + used[2]->offset, *used[2]);
      p.intensity = decode_scalar(record.data() + used[3]->offset, *used[3]);
      check_point(p, i);
    }
    return cloud;
  }

  std::string line;
  std::size_t i = 0;
  std::vector<double> values(h.tokens_per_line);
  while (i < h.points && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char* cur = line.data();
    const char* end = line.data() + line.size();
    std::size_t got = 0;
    while (got < values.size()) {
      while (cur < end && (*cur == ' ' || *cur == '\t')) ++cur;
      if (cur == end) break;
      auto [ptr, ec] = std::from_chars(cur, end, values[got]);
      if (ec != std::errc())
        throw Error(ErrorCode::TruncatedData, path + ": unparsable value in point " + std::to_string(i));
      cur = ptr;
      ++got;
    }
    if (got == 0) continue;  // blank line
    if (got < values.size())
      throw Error(ErrorCode::TruncatedData, path + ": point " + std::to_string(i) + " has " +
                                                std::to_string(got) + " of " +
                                                std::to_string(values.size()) + " values");
    Point3I& p = cloud.points[i];
    p.x = values[used[0]->column];
    p.y = values[used[1]->column];
    p.z = values[used[2]->column];
    p.intensity = values[used[3]->column];
    check_point(p, i);
    ++i;
  }
  if (i < h.points)
    throw Error(ErrorCode::TruncatedData, path + ": expected " + std::to_string(h.points) +
                                              " points, found " + std::to_string(i));
  return cloud;
}

/// Writes x, y, z, intensity as 4-byte floats. ASCII output carries 17
/// significant digits so it reloads to the same doubles; binary output is
/// exact for float-representable values.
inline void save_pcd(const IntensityCloud& cloud, const std::string& path, PcdEncoding encoding) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  const std::size_t n = cloud.size();
  out << "# .PCD v0.7 - Point Cloud Data file format\n"
      << "VERSION 0.7\n"
      << "FIELDS x y z intensity\n"
      << "SIZE 4 4 4 4\n"
      << "TYPE F F F F\n"
      << "COUNT 1 1 1 1\n"
      << "WIDTH " << n << "\n"
      << "HEIGHT 1\n"
      << "VIEWPOINT 0 0 0 1 0 0 0\n"
      << "POINTS " << n << "\n"
      << "DATA " << (encoding == PcdEncoding::Ascii ? "ascii" : "binary") << "\n";
  if (encoding == PcdEncoding::Ascii) {
    char buf[128];
    for (const auto& p : cloud.points) {
      const int len = std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", p.x, p.y, p.z, p.intensity);
      out.write(buf, len);
    }
  } else {
    std::vector<unsigned char> bytes(n * 16);
    unsigned char* dst = bytes.data();
    for (const auto& p : cloud.points) {
      for (double v : {p.x, p.y, p.z, p.intensity}) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int b = 0; b < 4; ++b) *dst++ = static_cast<unsigned char>(bits >> (8 * b));
      }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write to '" + path + "' failed");
}

}  // namespace maptag
