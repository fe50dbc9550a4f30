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

#include <chrono>
#include <cmath>
#include <variant>

#include "finnlite/grid.hpp"
#include "finnlite/kernels.hpp"

namespace finnlite {

// Fast: integer GEMM / XNOR-popcount wherever values are quantized.
// Oracle: naive floating-point loops over dequantized operands.
// Both paths produce identical outputs: all scales are powers of two, so
// every quantized value and accumulator is exactly representable in double.
enum class ExecMode { Fast, Oracle };

struct NodeTiming {
  std::string node;
  int64_t ns = 0;
};

struct ExecResult {
  FTensor output;
  std::vector<NodeTiming> timings;
  int64_t total_ns = 0;
};

using Value = std::variant<FTensor, QTensor>;

namespace detail {

inline FTensor to_float(const Value& v) {
  if (const auto* f = std::get_if<FTensor>(&v)) return *f;
  return dequantize(std::get<QTensor>(v));
}

inline int storage_bits(int64_t lo, int64_t hi) {
  for (int b : {2, 4, 8, 16, 32})
    if (lo >= -(int64_t{1} << (b - 1)) && hi <= (int64_t{1} << (b - 1)) - 1)
      return b;
  return 32;
}

}  // namespace detail

// One executor instance holds prepared weights and per-run scratch; create
// one per worker thread. The underlying graph is copied at construction and
// never mutated afterwards.
class Executor {
 public:
  explicit Executor(DataflowGraph g, ExecMode mode = ExecMode::Fast)
      : g_(std::move(g)), mode_(mode) {
    auto order = g_.topo_order();
    if (!order) throw Error("executor: graph has a cycle");
    order_ = *order;
    grids_ = infer_grids(g_);  // also runs the accumulator static check
    prepare_weights();
  }

  const DataflowGraph& graph() const { return g_; }

  ExecResult run(const FTensor& image, bool collect_timing = false) {
    std::map<std::string, Value> values;
    ExecResult res;
    const auto t0 = std::chrono::steady_clock::now();
    for (const Node* n : order_) {
      const auto n0 = std::chrono::steady_clock::now();
      Value in;
      if (n->kind != NodeKind::Input) {
        auto prods = g_.producers(n->id);
        if (prods.size() != 1)
          throw NodeError(n->id, "expected exactly one producer");
        in = values.at(prods[0]->id);
      }
      try {
        values[n->id] = eval(*n, in, image);
      } catch (const Error& e) {
        throw NodeError(n->id, e.what());
      }
      if (collect_timing) {
        const auto n1 = std::chrono::steady_clock::now();
        res.timings.push_back(
            {n->id, std::chrono::duration_cast<std::chrono::nanoseconds>(n1 -
                                                                         n0)
                        .count()});
      }
    }
    const Node* out = g_.output_node();
    if (!out) throw Error("executor: no Output node");
    res.output = detail::to_float(values.at(out->id));
    res.total_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    return res;
  }

 private:
  struct PreparedWeight {
    std::vector<int32_t> ints;          // row-major rows x cols
    const PackedBitTensor* packed = nullptr;
    FTensor floats;                     // dequantized, logical shape
    int64_t rows = 0, cols = 0;
    bool bipolar = false;
  };

  void prepare_weights() {
    for (const auto& n : g_.nodes) {
      std::string wname;
      double wscale = 1.0;
      Shape logical;  // float-view shape for the oracle path
      if (n.kind == NodeKind::Conv) {
        const auto& a = n.as<ConvAttrs>();
        wname = a.weight;
        wscale = a.weight_scale;
        logical = {a.out_channels, a.in_channels, a.kh, a.kw};
      } else if (n.kind == NodeKind::DepthwiseConv) {
        const auto& a = n.as<DepthwiseConvAttrs>();
        wname = a.weight;
        wscale = a.weight_scale;
        logical = {a.channels, 1, a.kh, a.kw};
      } else if (n.kind == NodeKind::FC) {
        const auto& a = n.as<FCAttrs>();
        wname = a.weight;
        wscale = a.weight_scale;
        logical = {a.out_dim, a.in_dim};
      } else {
        continue;
      }
      const WeightTensor& wt = g_.weight(wname);
      PreparedWeight pw;
      QTensor ints;
      if (const auto* p = std::get_if<PackedBitTensor>(&wt)) {
        ints = unpack_bipolar_q(*p);
        pw.packed = p;
        pw.bipolar = true;
      } else {
        ints = std::get<QTensor>(wt);
      }
      if (numel(ints.shape) != numel(logical))
        throw ShapeMismatch("weight '" + wname + "'", logical, ints.shape);
      pw.rows = logical[0];
      pw.cols = numel(logical) / logical[0];
      pw.ints.assign(ints.data.begin(), ints.data.end());
      FTensor f(logical);
      for (size_t i = 0; i < f.data.size(); ++i)
        f.data[i] = ints.data[i] * wscale;
      pw.floats = std::move(f);
      weights_[n.id] = std::move(pw);
    }
  }

  kernels::fast::GemmWeights gemm_view(const PreparedWeight& pw) const {
    kernels::fast::GemmWeights w;
    w.rows = pw.rows;
    w.cols = pw.cols;
    w.ints = pw.ints.data();
    w.packed = pw.packed;
    return w;
  }

  // Per-channel affine with broadcast, the one float evaluation order used
  // everywhere: y = (a*x) + b.
  static FTensor apply_affine(const FTensor& x, const std::vector<double>& a,
                              const std::vector<double>& b) {
    const int64_t ch = detail_channels(x.shape);
    if (!(a.size() == 1 || static_cast<int64_t>(a.size()) == ch) ||
        !(b.size() == 1 || static_cast<int64_t>(b.size()) == ch))
      throw ShapeMismatch("affine parameter length vs channels " +
                          std::to_string(ch));
    FTensor out(x.shape);
    const int64_t per = x.size() / ch;
    for (int64_t c = 0; c < ch; ++c) {
      const double ac = a.size() == 1 ? a[0] : a[static_cast<size_t>(c)];
      const double bc = b.size() == 1 ? b[0] : b[static_cast<size_t>(c)];
      for (int64_t i = 0; i < per; ++i) {
        const size_t idx = static_cast<size_t>(c * per + i);
        out.data[idx] = ac * x.data[idx] + bc;
      }
    }
    return out;
  }

  static int64_t detail_channels(const Shape& s) {
    return s.size() >= 2 ? s[1] : 1;
  }

  Value eval(const Node& n, const Value& in, const FTensor& image) {
    switch (n.kind) {
      case NodeKind::Input:
        return eval_input(n, image);
      case NodeKind::Output:
        return in;
      case NodeKind::Flatten: {
        if (const auto* q = std::get_if<QTensor>(&in)) {
          QTensor out = *q;
          out.shape = {q->shape[0], numel(q->shape) / q->shape[0]};
          return out;
        }
        const auto& f = std::get<FTensor>(in);
        FTensor out = f;
        out.shape = {f.shape[0], numel(f.shape) / f.shape[0]};
        return out;
      }
      case NodeKind::Conv: {
        const auto& a = n.as<ConvAttrs>();
        const auto& pw = weights_.at(n.id);
        if (mode_ == ExecMode::Fast)
          if (const auto* q = std::get_if<QTensor>(&in))
            return kernels::fast::conv2d(*q, gemm_view(pw), a.weight_scale,
                                         a.kh, a.kw, a.stride, a.pad,
                                         pw.bipolar);
        return kernels::oracle::conv2d(detail::to_float(in), pw.floats,
                                       a.stride, a.pad);
      }
      case NodeKind::DepthwiseConv: {
        const auto& a = n.as<DepthwiseConvAttrs>();
        const auto& pw = weights_.at(n.id);
        if (mode_ == ExecMode::Fast)
          if (const auto* q = std::get_if<QTensor>(&in))
            return kernels::fast::depthwise_conv2d(*q, gemm_view(pw),
                                                   a.weight_scale, a.kh, a.kw,
                                                   a.stride, a.pad);
        return kernels::oracle::depthwise_conv2d(detail::to_float(in),
                                                 pw.floats, a.stride, a.pad);
      }
      case NodeKind::FC: {
        const auto& a = n.as<FCAttrs>();
        const auto& pw = weights_.at(n.id);
        if (mode_ == ExecMode::Fast) {
          if (const auto* q = std::get_if<QTensor>(&in)) {
            QTensor acc = kernels::fast::fully_connected(
                *q, gemm_view(pw), a.weight_scale, pw.bipolar);
            if (a.bias.empty()) return acc;
            FTensor out({1, a.out_dim});
            for (int64_t o = 0; o < a.out_dim; ++o)
              out.data[static_cast<size_t>(o)] =
                  acc.data[static_cast<size_t>(o)] * acc.scale[0] +
                  a.bias[static_cast<size_t>(o)];
            return out;
          }
        }
        return kernels::oracle::fully_connected(detail::to_float(in),
                                                pw.floats, a.bias);
      }
      case NodeKind::MaxPool: {
        const auto& a = n.as<MaxPoolAttrs>();
        if (mode_ == ExecMode::Fast)
          if (const auto* q = std::get_if<QTensor>(&in))
            return kernels::fast::maxpool2d(*q, a.k, a.stride);
        return kernels::oracle::maxpool2d(detail::to_float(in), a.k, a.stride);
      }
      case NodeKind::AvgPool: {
        if (mode_ == ExecMode::Fast)
          if (const auto* q = std::get_if<QTensor>(&in))
            return kernels::fast::avgpool_global_sum(*q);
        return kernels::oracle::avgpool_global(detail::to_float(in));
      }
      case NodeKind::BatchNorm: {
        const auto& a = n.as<BatchNormAttrs>();
        std::vector<double> sc, ad;
        bn_affine(a, sc, ad);
        return apply_affine(detail::to_float(in), sc, ad);
      }
      case NodeKind::Scale: {
        const auto& a = n.as<ScaleAttrs>();
        return apply_affine(detail::to_float(in), a.factor, {0.0});
      }
      case NodeKind::Add: {
        const auto& a = n.as<AddAttrs>();
        return apply_affine(detail::to_float(in), {1.0}, a.addend);
      }
      case NodeKind::QuantActivation:
        return eval_quant_act(n.as<QuantActAttrs>(), detail::to_float(in));
      case NodeKind::Sign: {
        QuantActAttrs a;
        a.bits = 1;
        a.kind = QuantKind::Bipolar;
        a.scale = 1.0;
        return eval_quant_act(a, detail::to_float(in));
      }
      case NodeKind::MultiThreshold:
        return eval_multithreshold(n, in);
    }
    throw Error("unreachable");
  }

  Value eval_input(const Node& n, const FTensor& image) {
    const auto& a = n.as<InputAttrs>();
    if (image.shape != a.shape)
      throw ShapeMismatch("Input", a.shape, image.shape);
    if (!image.all_finite()) throw Error("input contains non-finite values");
    QTensor q(a.shape, detail::storage_bits(0, (int64_t{1} << a.bits) - 1),
              a.scale);
    const double inv = 1.0 / a.scale;
    const double hi = static_cast<double>((int64_t{1} << a.bits) - 1);
    for (size_t i = 0; i < image.data.size(); ++i) {
      const double k = image.data[i] * inv;
      const double r = std::nearbyint(k);
      if (k != r || r < 0.0 || r > hi)
        throw Error("input value " + std::to_string(image.data[i]) +
                    " is not on the " + std::to_string(a.bits) +
                    "-bit input grid");
      q.data[i] = static_cast<int32_t>(r);
    }
    if (mode_ == ExecMode::Oracle) return image;  // floats straight through
    return q;
  }

  Value eval_quant_act(const QuantActAttrs& a, const FTensor& x) {
    const auto thresholds = a.float_thresholds();
    std::span<const double> t{thresholds.data(), thresholds.size()};
    // bipolar maps count {0,1} to {-1,+1}; the uniform kinds step by one
    // level per crossed threshold starting at qmin.
    const int64_t base = a.kind == QuantKind::Bipolar ? -1 : a.qmin();
    const int64_t step = a.kind == QuantKind::Bipolar ? 2 : 1;
    if (mode_ == ExecMode::Oracle) {
      FTensor out(x.shape);
      for (size_t i = 0; i < x.data.size(); ++i) {
        const int64_t level =
            base + step * kernels::count_thresholds_crossed(x.data[i], t);
        out.data[i] = a.scale * static_cast<double>(level);
      }
      return out;
    }
    QTensor q(x.shape, detail::storage_bits(a.qmin(), a.qmax()), a.scale);
    q.bipolar = (a.kind == QuantKind::Bipolar);
    for (size_t i = 0; i < x.data.size(); ++i)
      q.data[i] = static_cast<int32_t>(
          base + step * kernels::count_thresholds_crossed(x.data[i], t));
    return q;
  }

  Value eval_multithreshold(const Node& n, const Value& in) {
    const auto& a = n.as<MultiThresholdAttrs>();
    // Integer levels of the incoming value; in oracle mode values are floats
    // on the producer grid, so recover the level index exactly.
    const QTensor* q = std::get_if<QTensor>(&in);
    QTensor recovered;
    if (!q) {
      const auto& f = std::get<FTensor>(in);
      const auto& grid = grids_.at(g_.producers(n.id)[0]->id);
      if (!grid)
        throw Error("MultiThreshold input carries no integer grid");
      recovered = QTensor(f.shape, 32, grid->scale);
      const double inv = 1.0 / grid->scale;
      for (size_t i = 0; i < f.data.size(); ++i) {
        const double k = f.data[i] * inv;
        const double r = std::nearbyint(k);
        if (k != r)
          throw Error("MultiThreshold input off its value grid");
        recovered.data[i] = static_cast<int32_t>(r);
      }
      q = &recovered;
    }
    const int64_t ch = q->shape.size() >= 2 ? q->shape[1] : 1;
    if (ch != a.channels)
      throw ShapeMismatch("MultiThreshold channels", {a.channels},
                          {ch});
    const int64_t per = q->size() / ch;
    QTensor out(q->shape,
                detail::storage_bits(a.out_offset,
                                     a.out_offset + a.out_scale * (a.levels - 1)),
                a.value_scale);
    out.bipolar = a.bipolar;
    for (int64_t c = 0; c < ch; ++c) {
      auto row = a.channel_thresholds(c);
      for (int64_t i = 0; i < per; ++i) {
        const size_t idx = static_cast<size_t>(c * per + i);
        const int64_t count = kernels::count_thresholds_crossed(
            static_cast<int64_t>(q->data[idx]), row);
        out.data[idx] =
            static_cast<int32_t>(a.out_offset + a.out_scale * count);
      }
    }
    if (mode_ == ExecMode::Oracle) {
      FTensor f(out.shape);
      for (size_t i = 0; i < out.data.size(); ++i)
        f.data[i] = out.data[i] * a.value_scale;
      return f;
    }
    return out;
  }

  DataflowGraph g_;
  ExecMode mode_;
  std::vector<const Node*> order_;
  GridMap grids_;
  std::map<std::string, PreparedWeight> weights_;
};

// Convenience wrapper matching the one-shot call sites.
inline ExecResult execute(const DataflowGraph& g, const FTensor& input,
                          ExecMode mode = ExecMode::Fast,
                          bool collect_timing = false) {
  Executor ex(g, mode);
  return ex.run(input, collect_timing);
}

}  // namespace finnlite
