/*
 * Copyright 2026 The finnlite Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace finnlite {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

// ---------------------------------------------------------------------------
// Errors. One base type so callers can catch everything from this library,
// plus specific types carrying structured context.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonBipolarValue : Error {
  int64_t index;
  explicit NonBipolarValue(int64_t i)
      : Error("value at flat index " + std::to_string(i) + " is not +1/-1"),
        index(i) {}
};

struct InvalidBits : Error {
  int bits;
  explicit InvalidBits(int b)
      : Error("unsupported bit width " + std::to_string(b)), bits(b) {}
};

struct NonPositiveScale : Error {
  double scale;
  explicit NonPositiveScale(double s)
      : Error("scale must be > 0, got " + std::to_string(s)), scale(s) {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg)
      : Error("shape mismatch: " + msg) {}
  ShapeMismatch(const std::string& where, const Shape& expected,
                const Shape& found)
      : Error("shape mismatch at " + where + ": expected " +
              shape_str(expected) + ", found " + shape_str(found)) {}
};

struct LengthMismatch : Error {
  explicit LengthMismatch(const std::string& msg)
      : Error("length mismatch: " + msg) {}
};

struct ThresholdsNotIncreasing : Error {
  std::string node;
  explicit ThresholdsNotIncreasing(const std::string& n)
      : Error("thresholds not strictly increasing in node '" + n + "'"),
        node(n) {}
};

struct MalformedStream : Error {
  size_t offset;
  std::string reason;
  MalformedStream(size_t off, const std::string& r)
      : Error("malformed stream at offset " + std::to_string(off) + ": " + r),
        offset(off),
        reason(r) {}
};

struct ManifestMismatch : Error {
  std::string tensor, expected, found;
  ManifestMismatch(const std::string& t, const std::string& exp,
                   const std::string& got)
      : Error("manifest mismatch for tensor '" + t + "': expected " + exp +
              ", found " + got),
        tensor(t),
        expected(exp),
        found(got) {}
};

struct FrameTooSmall : Error {
  FrameTooSmall(int64_t w, int64_t h)
      : Error("frame " + std::to_string(w) + "x" + std::to_string(h) +
              " is smaller than one 32x32 tile") {}
};

struct EmptySplit : Error {
  explicit EmptySplit(const std::string& split)
      : Error("split '" + split + "' contains no tiles") {}
};

struct EmptyTimings : Error {
  EmptyTimings() : Error("timing list is empty") {}
};

struct NumericalOverflow : Error {
  explicit NumericalOverflow(const std::string& msg)
      : Error("numerical overflow: " + msg) {}
};

struct InvalidFolding : Error {
  explicit InvalidFolding(const std::string& msg)
      : Error("invalid folding: " + msg) {}
};

struct UnsupportedBits : Error {
  int bits;
  explicit UnsupportedBits(int b)
      : Error("no builder variant for " + std::to_string(b) + "-bit weights"),
        bits(b) {}
};

struct FixpointNotReached : Error {
  int limit;
  explicit FixpointNotReached(int lim)
      : Error("streamline fixpoint not reached after " + std::to_string(lim) +
              " iterations"),
        limit(lim) {}
};

struct NodeError : Error {
  std::string node;
  NodeError(const std::string& n, const std::string& inner)
      : Error("node '" + n + "': " + inner), node(n) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 with bound reduction by 128-bit multiply;
// bit-stable across platforms, unlike <random> distributions.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). Bias < 2^-64, deterministic.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Uniform integer in [lo, hi] inclusive.
  int64_t range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Uniform in [0, 1) with 53 random bits.
  double real01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace finnlite
