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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "finnlite/common.hpp"

namespace finnlite {

// Dense real tensor, row-major. Used pre-streamlining and in oracle paths.
struct FTensor {
  Shape shape;
  std::vector<double> data;

  FTensor() = default;
  explicit FTensor(Shape s) : shape(std::move(s)), data(numel(shape), 0.0) {}
  FTensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel(shape))
      throw ShapeMismatch("FTensor data size " + std::to_string(data.size()) +
                          " vs shape " + shape_str(shape));
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Signed-integer tensor with bit-width and scale metadata. zero_point is 0
// throughout (symmetric quantization); dequantized value = data * scale.
// Per-channel scales index dim 0 (weight tensors); values use one scale.
struct QTensor {
  Shape shape;
  std::vector<int32_t> data;
  int bits = 8;
  std::vector<double> scale{1.0};
  // Values are +1/-1 and the logical width is one bit. Stored in two's
  // complement (so bits >= 2), flagged for the XNOR kernel path.
  bool bipolar = false;

  QTensor() = default;
  QTensor(Shape s, int b, double sc)
      : shape(std::move(s)), data(numel(shape), 0), bits(b), scale{sc} {}

  int64_t size() const { return static_cast<int64_t>(data.size()); }

  double scale_for_channel(int64_t c) const {
    return scale.size() == 1 ? scale[0] : scale[static_cast<size_t>(c)];
  }

  int32_t qmin() const { return static_cast<int32_t>(-(1ll << (bits - 1))); }
  int32_t qmax() const {
    return static_cast<int32_t>((1ll << (bits - 1)) - 1);
  }

  void check_invariants() const {
    if (bits != 1 && bits != 2 && bits != 4 && bits != 8 && bits != 16 &&
        bits != 32)
      throw InvalidBits(bits);
    for (double s : scale)
      if (!(s > 0.0)) throw NonPositiveScale(s);
    if (scale.size() != 1 &&
        static_cast<int64_t>(scale.size()) != (shape.empty() ? 1 : shape[0]))
      throw LengthMismatch("per-channel scale length " +
                           std::to_string(scale.size()) + " vs channel dim " +
                           std::to_string(shape.empty() ? 1 : shape[0]));
    const int64_t lo = qmin(), hi = qmax();
    for (size_t i = 0; i < data.size(); ++i)
      if (data[i] < lo || data[i] > hi)
        throw Error("QTensor value " + std::to_string(data[i]) +
                    " out of range for " + std::to_string(bits) + " bits");
  }
};

// Bit-packed +1/-1 tensor. The innermost dimension is the packing unit: each
// logical row is padded to a 64-bit word boundary, LSB holds the lowest
// index, padding bits are zero.
struct PackedBitTensor {
  Shape shape;
  std::vector<uint64_t> words;

  PackedBitTensor() = default;
  explicit PackedBitTensor(Shape s) : shape(std::move(s)) {
    words.assign(static_cast<size_t>(rows() * words_per_row()), 0);
  }

  int64_t row_length() const { return shape.empty() ? 0 : shape.back(); }
  int64_t rows() const {
    return shape.empty() ? 0 : numel(shape) / row_length();
  }
  int64_t words_per_row() const { return ceil_div(row_length(), 64); }

  std::span<const uint64_t> row(int64_t r) const {
    return {words.data() + r * words_per_row(),
            static_cast<size_t>(words_per_row())};
  }
  std::span<uint64_t> row(int64_t r) {
    return {words.data() + r * words_per_row(),
            static_cast<size_t>(words_per_row())};
  }

  // +1 -> true, -1 -> false
  bool get(int64_t r, int64_t i) const {
    return (words[static_cast<size_t>(r * words_per_row() + i / 64)] >>
            (i % 64)) &
           1u;
  }
  void set(int64_t r, int64_t i, bool plus_one) {
    uint64_t& w = words[static_cast<size_t>(r * words_per_row() + i / 64)];
    if (plus_one)
      w |= (uint64_t{1} << (i % 64));
    else
      w &= ~(uint64_t{1} << (i % 64));
  }

  bool padding_clear() const {
    const int64_t n = row_length();
    if (n % 64 == 0) return true;
    const uint64_t live_mask = (uint64_t{1} << (n % 64)) - 1;
    for (int64_t r = 0; r < rows(); ++r)
      if (row(r)[static_cast<size_t>(words_per_row() - 1)] & ~live_mask)
        return false;
    return true;
  }
};

inline PackedBitTensor pack_bipolar(const FTensor& t) {
  PackedBitTensor out(t.shape);
  const int64_t n = out.row_length();
  for (int64_t r = 0; r < out.rows(); ++r)
    for (int64_t i = 0; i < n; ++i) {
      const double v = t.data[static_cast<size_t>(r * n + i)];
      if (v == 1.0)
        out.set(r, i, true);
      else if (v != -1.0)
        throw NonBipolarValue(r * n + i);
    }
  return out;
}

inline FTensor unpack_bipolar(const PackedBitTensor& p) {
  FTensor out(p.shape);
  const int64_t n = p.row_length();
  for (int64_t r = 0; r < p.rows(); ++r)
    for (int64_t i = 0; i < n; ++i)
      out.data[static_cast<size_t>(r * n + i)] = p.get(r, i) ? 1.0 : -1.0;
  return out;
}

// Integer views of a packed tensor, used by the quantized kernels and the
// weight bundle round trip.
inline QTensor unpack_bipolar_q(const PackedBitTensor& p) {
  QTensor out(p.shape, 2, 1.0);
  out.bipolar = true;
  const int64_t n = p.row_length();
  for (int64_t r = 0; r < p.rows(); ++r)
    for (int64_t i = 0; i < n; ++i)
      out.data[static_cast<size_t>(r * n + i)] = p.get(r, i) ? 1 : -1;
  return out;
}

inline PackedBitTensor pack_bipolar_q(const QTensor& t) {
  PackedBitTensor out(t.shape);
  const int64_t n = out.row_length();
  for (int64_t r = 0; r < out.rows(); ++r)
    for (int64_t i = 0; i < n; ++i) {
      const int32_t v = t.data[static_cast<size_t>(r * n + i)];
      if (v == 1)
        out.set(r, i, true);
      else if (v != -1)
        throw NonBipolarValue(r * n + i);
    }
  return out;
}

// Uniform symmetric quantizer: clamp(round(t/scale)) into `bits` two's
// complement. Rounding is half away from zero.
inline QTensor quantize_uniform(const FTensor& t, int bits, double scale) {
  if (bits != 2 && bits != 4 && bits != 8) throw InvalidBits(bits);
  if (!(scale > 0.0)) throw NonPositiveScale(scale);
  QTensor q(t.shape, bits, scale);
  const double lo = q.qmin(), hi = q.qmax();
  for (size_t i = 0; i < t.data.size(); ++i) {
    double r = std::round(t.data[i] / scale);
    if (r < lo) r = lo;
    if (r > hi) r = hi;
    q.data[i] = static_cast<int32_t>(r);
  }
  return q;
}

inline FTensor dequantize(const QTensor& q) {
  FTensor out(q.shape);
  if (q.scale.size() == 1) {
    const double s = q.scale[0];
    for (size_t i = 0; i < q.data.size(); ++i) out.data[i] = q.data[i] * s;
  } else {
    const int64_t per_channel = numel(q.shape) / q.shape[0];
    for (int64_t c = 0; c < q.shape[0]; ++c) {
      const double s = q.scale[static_cast<size_t>(c)];
      for (int64_t i = 0; i < per_channel; ++i)
        out.data[static_cast<size_t>(c * per_channel + i)] =
            q.data[static_cast<size_t>(c * per_channel + i)] * s;
    }
  }
  return out;
}

}  // namespace finnlite
