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

#include <bit>
#include <cstring>
#include <limits>
#include <span>

#include "finnlite/tensor.hpp"

namespace finnlite::kernels {

// --------------------------------------------------------------------------
// XNOR-popcount dot product over packed +1/-1 rows.
// 2*popcount(XNOR(a,b)) - n equals the signed integer dot product.
// --------------------------------------------------------------------------

inline int64_t xnor_popcount_dot(std::span<const uint64_t> a,
                                 std::span<const uint64_t> b, int64_t n) {
  const int64_t words = ceil_div(n, 64);
  if (static_cast<int64_t>(a.size()) < words ||
      static_cast<int64_t>(b.size()) < words ||
      static_cast<int64_t>(a.size()) != static_cast<int64_t>(b.size()))
    throw LengthMismatch("xnor_popcount_dot: rows hold " +
                         std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " words for n=" +
                         std::to_string(n));
  int64_t pop = 0;
  for (int64_t w = 0; w < words; ++w) {
    uint64_t x = ~(a[static_cast<size_t>(w)] ^ b[static_cast<size_t>(w)]);
    if (w == words - 1 && n % 64 != 0)
      x &= (uint64_t{1} << (n % 64)) - 1;  // live bits only
    pop += std::popcount(x);
  }
  return 2 * pop - n;
}

inline int64_t xnor_popcount_dot(const PackedBitTensor& a, int64_t row_a,
                                 const PackedBitTensor& b, int64_t row_b) {
  if (a.row_length() != b.row_length())
    throw LengthMismatch("xnor_popcount_dot: row lengths differ");
  return xnor_popcount_dot(a.row(row_a), b.row(row_b), a.row_length());
}

// --------------------------------------------------------------------------
// Threshold counting. Shared by the float quantizer and the integer
// MultiThreshold node; thresholds must be sorted ascending.
// --------------------------------------------------------------------------

template <typename T>
int64_t count_thresholds_crossed(T x, std::span<const T> thresholds) {
  int64_t c = 0;
  for (T t : thresholds) c += (x >= t) ? 1 : 0;
  return c;
}

// --------------------------------------------------------------------------
// Oracle kernels: naive loops over doubles, the slow reference flavor.
// --------------------------------------------------------------------------

namespace oracle {

inline FTensor conv2d(const FTensor& x, const FTensor& w, int64_t stride,
                      int64_t pad) {
  if (x.shape.size() != 4 || w.shape.size() != 4 || x.shape[1] != w.shape[1])
    throw ShapeMismatch("conv2d oracle: x " + shape_str(x.shape) + " w " +
                        shape_str(w.shape));
  const int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
  const int64_t OH = (H + 2 * pad - KH) / stride + 1;
  const int64_t OW = (W + 2 * pad - KW) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeMismatch("conv2d oracle: empty output");
  FTensor out({1, OC, OH, OW});
  for (int64_t oc = 0; oc < OC; ++oc)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        double acc = 0.0;
        for (int64_t c = 0; c < C; ++c)
          for (int64_t ky = 0; ky < KH; ++ky)
            for (int64_t kx = 0; kx < KW; ++kx) {
              const int64_t iy = oy * stride + ky - pad;
              const int64_t ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x.data[static_cast<size_t>(((c * H) + iy) * W + ix)] *
                     w.data[static_cast<size_t>(
                         (((oc * C) + c) * KH + ky) * KW + kx)];
            }
        out.data[static_cast<size_t>(((oc * OH) + oy) * OW + ox)] = acc;
      }
  return out;
}

inline FTensor depthwise_conv2d(const FTensor& x, const FTensor& w,
                                int64_t stride, int64_t pad) {
  if (x.shape.size() != 4 || w.shape.size() != 4 || w.shape[1] != 1 ||
      x.shape[1] != w.shape[0])
    throw ShapeMismatch("depthwise oracle: x " + shape_str(x.shape) + " w " +
                        shape_str(w.shape));
  const int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t KH = w.shape[2], KW = w.shape[3];
  const int64_t OH = (H + 2 * pad - KH) / stride + 1;
  const int64_t OW = (W + 2 * pad - KW) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeMismatch("depthwise oracle: empty output");
  FTensor out({1, C, OH, OW});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        double acc = 0.0;
        for (int64_t ky = 0; ky < KH; ++ky)
          for (int64_t kx = 0; kx < KW; ++kx) {
            const int64_t iy = oy * stride + ky - pad;
            const int64_t ix = ox * stride + kx - pad;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            acc += x.data[static_cast<size_t>(((c * H) + iy) * W + ix)] *
                   w.data[static_cast<size_t>((c * KH + ky) * KW + kx)];
          }
        out.data[static_cast<size_t>(((c * OH) + oy) * OW + ox)] = acc;
      }
  return out;
}

inline FTensor maxpool2d(const FTensor& x, int64_t k = 2, int64_t stride = 2) {
  if (x.shape.size() != 4) throw ShapeMismatch("maxpool oracle wants NCHW");
  const int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeMismatch("maxpool oracle: empty output");
  FTensor out({1, C, OH, OW});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        double m = -std::numeric_limits<double>::infinity();
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx) {
            const double v = x.data[static_cast<size_t>(
                ((c * H) + oy * stride + ky) * W + ox * stride + kx)];
            if (v > m) m = v;
          }
        out.data[static_cast<size_t>(((c * OH) + oy) * OW + ox)] = m;
      }
  return out;
}

inline FTensor avgpool_global(const FTensor& x) {
  if (x.shape.size() != 4) throw ShapeMismatch("avgpool oracle wants NCHW");
  const int64_t C = x.shape[1], HW = x.shape[2] * x.shape[3];
  FTensor out({1, C, 1, 1});
  for (int64_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (int64_t i = 0; i < HW; ++i)
      s += x.data[static_cast<size_t>(c * HW + i)];
    out.data[static_cast<size_t>(c)] = s / static_cast<double>(HW);
  }
  return out;
}

inline FTensor fully_connected(const FTensor& x, const FTensor& w,
                               const std::vector<double>& bias = {}) {
  if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[1])
    throw ShapeMismatch("fc oracle: x " + shape_str(x.shape) + " w " +
                        shape_str(w.shape));
  const int64_t N = x.shape[1], OUT = w.shape[0];
  if (!bias.empty() && static_cast<int64_t>(bias.size()) != OUT)
    throw ShapeMismatch("fc oracle: bias length");
  FTensor out({1, OUT});
  for (int64_t o = 0; o < OUT; ++o) {
    double acc = 0.0;
    for (int64_t i = 0; i < N; ++i)
      acc += x.data[static_cast<size_t>(i)] *
             w.data[static_cast<size_t>(o * N + i)];
    if (!bias.empty()) acc += bias[static_cast<size_t>(o)];
    out.data[static_cast<size_t>(o)] = acc;
  }
  return out;
}

// out = out_offset + out_scale * #{k : x >= T[c,k]}
inline FTensor multithreshold(const FTensor& x,
                              const std::vector<std::vector<double>>& T,
                              double out_scale, double out_offset) {
  const int64_t C = static_cast<int64_t>(T.size());
  const int64_t ch = x.shape.size() >= 2 ? x.shape[1] : x.shape[0];
  if (ch != C) throw ShapeMismatch("multithreshold oracle: channel count");
  for (const auto& row : T)
    for (size_t k = 1; k < row.size(); ++k)
      if (row[k] <= row[k - 1]) throw ThresholdsNotIncreasing("oracle");
  const int64_t per = x.size() / C;
  FTensor out(x.shape);
  for (int64_t c = 0; c < C; ++c) {
    std::span<const double> row{T[static_cast<size_t>(c)].data(),
                                T[static_cast<size_t>(c)].size()};
    for (int64_t i = 0; i < per; ++i) {
      const size_t idx = static_cast<size_t>(c * per + i);
      out.data[idx] =
          out_offset + out_scale * static_cast<double>(count_thresholds_crossed(
                                       x.data[idx], row));
    }
  }
  return out;
}

}  // namespace oracle

// --------------------------------------------------------------------------
// Fast quantized kernels: im2col + integer GEMM, XNOR-popcount when both
// operands are bipolar. Accumulators are 32-bit signed.
// --------------------------------------------------------------------------

namespace fast {

struct Patches {
  std::vector<int32_t> data;  // P x K row-major
  int64_t P = 0, K = 0;
};

// Lower NCHW input to patch rows; padding contributes zeros.
inline void im2col(const QTensor& x, int64_t kh, int64_t kw, int64_t stride,
                   int64_t pad, Patches& out) {
  const int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t OH = (H + 2 * pad - kh) / stride + 1;
  const int64_t OW = (W + 2 * pad - kw) / stride + 1;
  out.P = OH * OW;
  out.K = C * kh * kw;
  out.data.assign(static_cast<size_t>(out.P * out.K), 0);
  for (int64_t oy = 0; oy < OH; ++oy)
    for (int64_t ox = 0; ox < OW; ++ox) {
      int32_t* row = out.data.data() + (oy * OW + ox) * out.K;
      int64_t k = 0;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t ky = 0; ky < kh; ++ky)
          for (int64_t kx = 0; kx < kw; ++kx, ++k) {
            const int64_t iy = oy * stride + ky - pad;
            const int64_t ix = ox * stride + kx - pad;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            row[k] = x.data[static_cast<size_t>(((c * H) + iy) * W + ix)];
          }
    }
}

// Weight matrix view prepared by the executor: `ints` always present
// (row-major rows x cols); `packed` present for bipolar weights.
struct GemmWeights {
  int64_t rows = 0, cols = 0;
  const int32_t* ints = nullptr;
  const PackedBitTensor* packed = nullptr;
};

inline void gemm_int(const Patches& col, const GemmWeights& w,
                     int32_t* out /* rows x P, row-major */) {
  if (col.K != w.cols)
    throw ShapeMismatch("gemm_int: K " + std::to_string(col.K) + " vs " +
                        std::to_string(w.cols));
  for (int64_t r = 0; r < w.rows; ++r) {
    const int32_t* wr = w.ints + r * w.cols;
    int32_t* or_ = out + r * col.P;
    for (int64_t p = 0; p < col.P; ++p) {
      const int32_t* cr = col.data.data() + p * col.K;
      int32_t acc = 0;
      for (int64_t k = 0; k < col.K; ++k) acc += wr[k] * cr[k];
      or_[p] = acc;
    }
  }
}

// Both operands +1/-1: pack patch rows and run XNOR-popcount dots.
inline void gemm_xnor(const Patches& col, const GemmWeights& w, int32_t* out) {
  if (col.K != w.cols) throw ShapeMismatch("gemm_xnor: K mismatch");
  const int64_t wpr = ceil_div(col.K, 64);
  std::vector<uint64_t> packed_col(static_cast<size_t>(col.P * wpr), 0);
  for (int64_t p = 0; p < col.P; ++p) {
    const int32_t* cr = col.data.data() + p * col.K;
    uint64_t* dst = packed_col.data() + p * wpr;
    for (int64_t k = 0; k < col.K; ++k)
      if (cr[k] == 1) dst[k / 64] |= (uint64_t{1} << (k % 64));
  }
  for (int64_t r = 0; r < w.rows; ++r) {
    std::span<const uint64_t> wrow = w.packed->row(r);
    for (int64_t p = 0; p < col.P; ++p) {
      std::span<const uint64_t> crow{packed_col.data() + p * wpr,
                                     static_cast<size_t>(wpr)};
      out[r * col.P + p] =
          static_cast<int32_t>(xnor_popcount_dot(wrow, crow, col.K));
    }
  }
}

// Integer convolution; returns raw accumulators with composed scale.
inline QTensor conv2d(const QTensor& x, const GemmWeights& w,
                      double weight_scale, int64_t kh, int64_t kw,
                      int64_t stride, int64_t pad, bool weights_bipolar) {
  if (x.shape.size() != 4) throw ShapeMismatch("conv2d fast wants NCHW");
  const int64_t H = x.shape[2], W = x.shape[3];
  const int64_t OH = (H + 2 * pad - kh) / stride + 1;
  const int64_t OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeMismatch("conv2d fast: empty output");
  Patches col;
  im2col(x, kh, kw, stride, pad, col);
  QTensor out({1, w.rows, OH, OW}, 32, x.scale[0] * weight_scale);
  if (weights_bipolar && x.bipolar && pad == 0 && w.packed != nullptr)
    gemm_xnor(col, w, out.data.data());
  else
    gemm_int(col, w, out.data.data());
  return out;
}

inline QTensor depthwise_conv2d(const QTensor& x, const GemmWeights& w,
                                double weight_scale, int64_t kh, int64_t kw,
                                int64_t stride, int64_t pad) {
  if (x.shape.size() != 4) throw ShapeMismatch("depthwise fast wants NCHW");
  const int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (w.rows != C)
    throw ShapeMismatch("depthwise fast: channel count " + std::to_string(C) +
                        " vs filters " + std::to_string(w.rows));
  const int64_t OH = (H + 2 * pad - kh) / stride + 1;
  const int64_t OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeMismatch("depthwise fast: empty output");
  QTensor out({1, C, OH, OW}, 32, x.scale[0] * weight_scale);
  for (int64_t c = 0; c < C; ++c) {
    const int32_t* wr = w.ints + c * (kh * kw);
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        int32_t acc = 0;
        int64_t k = 0;
        for (int64_t ky = 0; ky < kh; ++ky)
          for (int64_t kx = 0; kx < kw; ++kx, ++k) {
            const int64_t iy = oy * stride + ky - pad;
            const int64_t ix = ox * stride + kx - pad;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            acc += wr[k] *
                   x.data[static_cast<size_t>(((c * H) + iy) * W + ix)];
          }
        out.data[static_cast<size_t>(((c * OH) + oy) * OW + ox)] = acc;
      }
  }
  return out;
}

inline QTensor fully_connected(const QTensor& x, const GemmWeights& w,
                               double weight_scale, bool weights_bipolar) {
  if (x.shape.size() != 2 || x.shape[1] != w.cols)
    throw ShapeMismatch("fc fast: x " + shape_str(x.shape) + " vs cols " +
                        std::to_string(w.cols));
  QTensor out({1, w.rows}, 32, x.scale[0] * weight_scale);
  if (weights_bipolar && x.bipolar && w.packed != nullptr) {
    const int64_t wpr = ceil_div(w.cols, 64);
    std::vector<uint64_t> px(static_cast<size_t>(wpr), 0);
    for (int64_t k = 0; k < w.cols; ++k)
      if (x.data[static_cast<size_t>(k)] == 1)
        px[static_cast<size_t>(k / 64)] |= (uint64_t{1} << (k % 64));
    for (int64_t r = 0; r < w.rows; ++r)
      out.data[static_cast<size_t>(r)] = static_cast<int32_t>(
          xnor_popcount_dot(w.packed->row(r), px, w.cols));
  } else {
    for (int64_t r = 0; r < w.rows; ++r) {
      const int32_t* wr = w.ints + r * w.cols;
      int32_t acc = 0;
      for (int64_t k = 0; k < w.cols; ++k)
        acc += wr[k] * x.data[static_cast<size_t>(k)];
      out.data[static_cast<size_t>(r)] = acc;
    }
  }
  return out;
}

inline QTensor maxpool2d(const QTensor& x, int64_t k, int64_t stride) {
  if (x.shape.size() != 4) throw ShapeMismatch("maxpool fast wants NCHW");
  const int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeMismatch("maxpool fast: empty output");
  QTensor out({1, C, OH, OW}, x.bits, x.scale[0]);
  out.bipolar = x.bipolar;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        int32_t m = std::numeric_limits<int32_t>::min();
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx)
            m = std::max(m, x.data[static_cast<size_t>(
                                ((c * H) + oy * stride + ky) * W + ox * stride +
                                kx)]);
        out.data[static_cast<size_t>(((c * OH) + oy) * OW + ox)] = m;
      }
  return out;
}

// Integer global average pool: emits per-channel sums; the value scale of
// the result is input scale / (H*W) so dequantized values are true means.
inline QTensor avgpool_global_sum(const QTensor& x) {
  if (x.shape.size() != 4) throw ShapeMismatch("avgpool fast wants NCHW");
  const int64_t C = x.shape[1], HW = x.shape[2] * x.shape[3];
  QTensor out({1, C, 1, 1}, 32, x.scale[0] / static_cast<double>(HW));
  for (int64_t c = 0; c < C; ++c) {
    int64_t s = 0;
    for (int64_t i = 0; i < HW; ++i)
      s += x.data[static_cast<size_t>(c * HW + i)];
    out.data[static_cast<size_t>(c)] = static_cast<int32_t>(s);
  }
  return out;
}

}  // namespace fast
}  // namespace finnlite::kernels
