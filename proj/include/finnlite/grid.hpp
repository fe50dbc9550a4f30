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

#include <map>
#include <optional>

#include "finnlite/graph.hpp"

namespace finnlite {

// A node output lies on a value grid when every element equals k*scale for
// an integer k in [lo, hi]. Quantized activations, integer accumulators and
// threshold outputs all carry one; outputs of real-valued affine nodes do
// not. All in-scope scales are powers of two, so grid values are exact in
// double and integer accumulation commutes with dequantization.
struct ValueGrid {
  double scale = 1.0;
  int64_t lo = 0, hi = 0;
};

using GridMap = std::map<std::string, std::optional<ValueGrid>>;

namespace detail {

// Exact worst-case accumulator interval of sum(w_k * x_k) with every x_k
// ranging over [lo, hi], maximized/minimized over matrix rows.
inline std::pair<int64_t, int64_t> matrix_acc_interval(
    const int32_t* w, int64_t rows, int64_t cols, int64_t lo, int64_t hi) {
  int64_t worst_lo = 0, worst_hi = 0;
  for (int64_t r = 0; r < rows; ++r) {
    int64_t rlo = 0, rhi = 0;
    for (int64_t c = 0; c < cols; ++c) {
      const int64_t wv = w[r * cols + c];
      rlo += std::min(wv * lo, wv * hi);
      rhi += std::max(wv * lo, wv * hi);
    }
    worst_lo = std::min(worst_lo, rlo);
    worst_hi = std::max(worst_hi, rhi);
  }
  return {worst_lo, worst_hi};
}

inline std::pair<int64_t, int64_t> weight_acc_interval(const WeightTensor& wt,
                                                       int64_t lo, int64_t hi,
                                                       bool include_zero_pad) {
  // Padding zeros can only widen the reachable set toward 0, which the
  // interval already contains, so no adjustment is needed.
  (void)include_zero_pad;
  if (const auto* q = std::get_if<QTensor>(&wt)) {
    const int64_t rows = q->shape[0];
    const int64_t cols = numel(q->shape) / rows;
    return matrix_acc_interval(q->data.data(), rows, cols, lo, hi);
  }
  const auto& p = std::get<PackedBitTensor>(wt);
  QTensor ints = unpack_bipolar_q(p);
  const int64_t rows = ints.shape[0];
  const int64_t cols = numel(ints.shape) / rows;
  return matrix_acc_interval(ints.data.data(), rows, cols, lo, hi);
}

}  // namespace detail

// Static accumulator check: every matrix-lowered layer must keep its
// worst-case accumulation inside 32-bit signed range.
inline void check_accumulators(const std::string& node_id, int64_t lo,
                               int64_t hi) {
  constexpr int64_t kLimit = int64_t{1} << 31;
  if (lo <= -kLimit || hi >= kLimit)
    throw NumericalOverflow("layer '" + node_id +
                            "' worst-case accumulation [" + std::to_string(lo) +
                            ", " + std::to_string(hi) +
                            "] exceeds 32-bit signed range");
}

// Propagate value grids from the Input node. Returns one entry per node id
// (its output grid, or nullopt past real-valued affine nodes).
inline GridMap infer_grids(const DataflowGraph& g) {
  auto order = g.topo_order();
  if (!order) throw Error("infer_grids: graph has a cycle");
  const DataflowGraph shaped = infer_shapes(g);
  GridMap grids;
  for (const Node* n : *order) {
    std::optional<ValueGrid> in;
    if (n->kind != NodeKind::Input) {
      auto prods = g.producers(n->id);
      if (prods.size() == 1) in = grids.at(prods[0]->id);
    }
    std::optional<ValueGrid> out;
    switch (n->kind) {
      case NodeKind::Input: {
        const auto& a = n->as<InputAttrs>();
        out = ValueGrid{a.scale, 0, (int64_t{1} << a.bits) - 1};
        break;
      }
      case NodeKind::Conv: {
        const auto& a = n->as<ConvAttrs>();
        if (in) {
          auto [lo, hi] = detail::weight_acc_interval(g.weight(a.weight),
                                                      in->lo, in->hi, a.pad > 0);
          check_accumulators(n->id, lo, hi);
          out = ValueGrid{in->scale * a.weight_scale, lo, hi};
        }
        break;
      }
      case NodeKind::DepthwiseConv: {
        const auto& a = n->as<DepthwiseConvAttrs>();
        if (in) {
          auto [lo, hi] = detail::weight_acc_interval(g.weight(a.weight),
                                                      in->lo, in->hi, a.pad > 0);
          check_accumulators(n->id, lo, hi);
          out = ValueGrid{in->scale * a.weight_scale, lo, hi};
        }
        break;
      }
      case NodeKind::FC: {
        const auto& a = n->as<FCAttrs>();
        if (in) {
          auto [lo, hi] = detail::weight_acc_interval(g.weight(a.weight),
                                                      in->lo, in->hi, false);
          check_accumulators(n->id, lo, hi);
          if (a.bias.empty())
            out = ValueGrid{in->scale * a.weight_scale, lo, hi};
          // A real-valued bias leaves the integer grid; downstream nodes see
          // plain floats. (Only the final logit layer carries a bias.)
        }
        break;
      }
      case NodeKind::MaxPool:
      case NodeKind::Flatten:
      case NodeKind::Output:
        out = in;
        break;
      case NodeKind::AvgPool: {
        if (in) {
          const Shape& s = shaped.out_edge(g.producers(n->id)[0]->id)->shape;
          const int64_t hw = s[2] * s[3];
          out = ValueGrid{in->scale / static_cast<double>(hw), in->lo * hw,
                          in->hi * hw};
        }
        break;
      }
      case NodeKind::MultiThreshold: {
        const auto& a = n->as<MultiThresholdAttrs>();
        out = ValueGrid{a.value_scale, a.out_offset,
                        a.out_offset + a.out_scale * (a.levels - 1)};
        break;
      }
      case NodeKind::QuantActivation: {
        const auto& a = n->as<QuantActAttrs>();
        out = ValueGrid{a.scale, a.qmin(), a.qmax()};
        break;
      }
      case NodeKind::Sign:
        out = ValueGrid{1.0, -1, 1};
        break;
      case NodeKind::BatchNorm:
      case NodeKind::Scale:
      case NodeKind::Add:
        out = std::nullopt;
        break;
    }
    grids[n->id] = out;
  }
  return grids;
}

// Canonical batchnorm-to-affine conversion shared by the executor and the
// collapse pass, so replacing a BatchNorm with Scale+Add is bit-exact.
inline void bn_affine(const BatchNormAttrs& bn, std::vector<double>& a,
                      std::vector<double>& b) {
  const size_t c = bn.gamma.size();
  a.resize(c);
  b.resize(c);
  for (size_t i = 0; i < c; ++i) {
    a[i] = bn.gamma[i] / bn.stddev[i];
    b[i] = bn.beta[i] - a[i] * bn.mean[i];
  }
}

}  // namespace finnlite
