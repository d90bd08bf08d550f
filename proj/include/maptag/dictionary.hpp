#pragma once

// Square-marker bit grids and codeword dictionaries.
//
// Text format: first line "GRID n", then one codeword per line as n*n
// characters of 0/1, row-major. Lines starting with '#' are comments.
// A 1 bit is a white module.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "maptag/error.hpp"

namespace maptag {

/// n x n bit grid packed row-major into 64 bits (bit i*n + j), 4 <= n <= 8.
class BitMatrix {
 public:
  BitMatrix() = default;
  explicit BitMatrix(int n, std::uint64_t bits = 0) : n_(n), bits_(bits & mask(n)) {
    if (n < 1 || n > 8) throw Error(ErrorCode::InvalidDictionary, "grid size must lie in [1, 8]");
  }

  int size() const { return n_; }
  std::uint64_t bits() const { return bits_; }

  bool get(int row, int col) const { return (bits_ >> (row * n_ + col)) & 1u; }
  void set(int row, int col, bool value) {
    const std::uint64_t bit = std::uint64_t{1} << (row * n_ + col);
    bits_ = value ? (bits_ | bit) : (bits_ & ~bit);
  }

  /// Quarter turn clockwise: out(i, j) = in(n-1-j, i).
  BitMatrix rotated_cw() const {
    BitMatrix out(n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out.set(i, j, get(n_ - 1 - j, i));
    return out;
  }

  BitMatrix rotated_cw(int quarter_turns) const {
    BitMatrix out = *this;
    for (int k = 0; k < ((quarter_turns % 4) + 4) % 4; ++k) out = out.rotated_cw();
    return out;
  }

  /// Left-right flip: out(i, j) = in(i, n-1-j).
  BitMatrix mirrored() const {
    BitMatrix out(n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out.set(i, j, get(i, n_ - 1 - j));
    return out;
  }

  /// rotated_cw(r) applied after an optional mirror.
  BitMatrix transformed(int quarter_turns, bool mirror) const {
    return (mirror ? mirrored() : *this).rotated_cw(quarter_turns);
  }

  std::string to_string() const {
    std::string s;
    for (int i = 0; i < n_ * n_; ++i) s.push_back(((bits_ >> i) & 1u) ? '1' : '0');
    return s;
  }

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

 private:
  static std::uint64_t mask(int n) {
    const int count = n * n;
    return count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << count) - 1);
  }

  int n_ = 4;
  std::uint64_t bits_ = 0;
};

inline int hamming(const BitMatrix& a, const BitMatrix& b) { return std::popcount(a.bits() ^ b.bits()); }

struct TagDictionary {
  int grid = 4;
  std::vector<BitMatrix> codes;

  std::size_t size() const { return codes.size(); }
};

/// Minimum Hamming distance over every pair of codewords under all rotations
/// and mirrors, including each codeword against its own non-identity
/// transforms. Returns n*n + 1 for an empty dictionary.
inline int minimum_distance(const TagDictionary& dict) {
  int best = dict.grid * dict.grid + 1;
  for (std::size_t i = 0; i < dict.codes.size(); ++i) {
    for (std::size_t j = i; j < dict.codes.size(); ++j) {
      for (int mirror = 0; mirror < 2; ++mirror) {
        for (int r = 0; r < 4; ++r) {
          if (i == j && r == 0 && mirror == 0) continue;
          best = std::min(best, hamming(dict.codes[i], dict.codes[j].transformed(r, mirror != 0)));
        }
      }
    }
  }
  return best;
}

namespace dict_detail {

inline bool far_from(const BitMatrix& candidate, const std::vector<BitMatrix>& accepted, int min_dist) {
  for (int mirror = 0; mirror < 2; ++mirror)
    for (int r = 0; r < 4; ++r) {
      const BitMatrix t = candidate.transformed(r, mirror != 0);
      if (!(r == 0 && mirror == 0) && hamming(candidate, t) < min_dist) return false;
      for (const auto& a : accepted)
        if (hamming(a, t) < min_dist) return false;
    }
  return true;
}

}  // namespace dict_detail

/// Greedy random search for `count` codewords with the requested minimum
/// distance. Deterministic for a given seed (mt19937_64 output is specified
/// by the standard). Throws InvalidDictionary if the search budget runs out.
inline TagDictionary generate_dictionary(int grid, std::size_t count, int min_dist, std::uint64_t seed,
                                         std::size_t max_attempts = 2'000'000) {
  TagDictionary dict;
  dict.grid = grid;
  std::mt19937_64 rng(seed);
  const int bits = grid * grid;
  for (std::size_t attempt = 0; attempt < max_attempts && dict.codes.size() < count; ++attempt) {
    const BitMatrix candidate(grid, rng());
    // Skip nearly uniform payloads; they give the detector little structure.
    const int ones = std::popcount(candidate.bits());
    if (ones < bits / 4 || ones > bits - bits / 4) continue;
    if (dict_detail::far_from(candidate, dict.codes, min_dist)) dict.codes.push_back(candidate);
  }
  if (dict.codes.size() < count) throw Error(ErrorCode::InvalidDictionary, "dictionary search budget exhausted");
  return dict;
}

inline constexpr std::uint64_t kBuiltinDictionarySeed = 0x6d61707461672d31ULL;

/// 50 codewords, 4x4 payload, minimum distance 4 across rotations and mirrors.
inline const TagDictionary& builtin_dictionary() {
  static const TagDictionary dict = generate_dictionary(4, 50, 4, kBuiltinDictionarySeed);
  return dict;
}

inline TagDictionary parse_dictionary(std::istream& in, const std::string& origin = "dictionary") {
  TagDictionary dict;
  std::string line;
  bool have_grid = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream tokens(line.substr(first));
    if (!have_grid) {
      std::string key;
      int n = 0;
      if (!(tokens >> key >> n) || key != "GRID" || n < 4 || n > 8)
        throw Error(ErrorCode::InvalidDictionary, origin + ":" + std::to_string(line_no) + ": expected 'GRID n' with 4 <= n <= 8");
      dict.grid = n;
      have_grid = true;
      continue;
    }
    std::string word;
    tokens >> word;
    if (static_cast<int>(word.size()) != dict.grid * dict.grid ||
        word.find_first_not_of("01") != std::string::npos)
      throw Error(ErrorCode::InvalidDictionary,
                  origin + ":" + std::to_string(line_no) + ": codeword must be n*n characters of 0/1");
    BitMatrix code(dict.grid);
    for (int k = 0; k < dict.grid * dict.grid; ++k) code.set(k / dict.grid, k % dict.grid, word[k] == '1');
    dict.codes.push_back(code);
  }
  if (!have_grid) throw Error(ErrorCode::InvalidDictionary, origin + ": missing GRID line");
  return dict;
}

inline TagDictionary load_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open dictionary '" + path + "'");
  return parse_dictionary(in, path);
}

inline std::string format_dictionary(const TagDictionary& dict) {
  std::ostringstream out;
  out << "GRID " << dict.grid << "\n";
  for (const auto& c : dict.codes) out << c.to_string() << "\n";
  return out.str();
}

}  // namespace maptag
