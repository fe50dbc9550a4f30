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

#include "finnlite/graph.hpp"
#include "finnlite/graph_json.hpp"

namespace finnlite {

// Three model variants, named w<weight bits>a<activation bits>. All take a
// 1x3x32x32 8-bit image and emit one logit; grape iff logit >= 0.
struct ModelSpec {
  std::string name;
  int weight_bits = 1;
  int act_bits = 1;
};

inline const std::vector<ModelSpec>& model_specs() {
  static const std::vector<ModelSpec> specs = {
      {"cnv_w1a1", 1, 1}, {"cnv_w2a2", 2, 2}, {"mobilenet_w4a4", 4, 4}};
  return specs;
}

namespace detail {

constexpr double kInputScale = 1.0 / 256.0;

// Dyadic parameter grid (multiples of 1/256) keeps every affine evaluation
// exact in double for builder-initialized graphs.
inline double dyadic(Rng& rng, double lo, double hi) {
  const int64_t klo = static_cast<int64_t>(lo * 256.0);
  const int64_t khi = static_cast<int64_t>(hi * 256.0);
  return static_cast<double>(rng.range(klo, khi)) / 256.0;
}

inline BatchNormAttrs random_bn(Rng& rng, int64_t channels, double gamma_hi) {
  BatchNormAttrs bn;
  bn.gamma.resize(static_cast<size_t>(channels));
  bn.beta.resize(static_cast<size_t>(channels));
  bn.mean.resize(static_cast<size_t>(channels));
  bn.stddev.resize(static_cast<size_t>(channels));
  for (int64_t c = 0; c < channels; ++c) {
    bn.gamma[static_cast<size_t>(c)] = dyadic(rng, 0.25, gamma_hi);
    bn.beta[static_cast<size_t>(c)] = dyadic(rng, -0.5, 0.5);
    bn.mean[static_cast<size_t>(c)] = dyadic(rng, -0.5, 0.5);
    bn.stddev[static_cast<size_t>(c)] = 1.0;
  }
  return bn;
}

// Signed uniform draw over the representable grid of `bits`.
inline WeightTensor random_weight(Rng& rng, const Shape& logical, int bits) {
  if (bits == 1) {
    // packed rows are the GEMM rows: [rows, cols]
    const int64_t rows = logical[0];
    const int64_t cols = numel(logical) / rows;
    PackedBitTensor p({rows, cols});
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) p.set(r, c, rng.below(2) == 1);
    return p;
  }
  QTensor q(logical, bits, 1.0);
  const int64_t lo = q.qmin(), hi = q.qmax();
  for (auto& v : q.data) v = static_cast<int32_t>(rng.range(lo, hi));
  return q;
}

struct LayerScales {
  double weight = 1.0;  // per-tensor weight scale
  double act = 1.0;     // activation scale
};

inline LayerScales scales_for_bits(int weight_bits, int act_bits) {
  LayerScales s;
  s.weight = weight_bits == 1 ? 1.0 : 1.0 / static_cast<double>(int64_t{1}
                                                                << (weight_bits - 1));
  s.act = act_bits == 1 ? 1.0 : 1.0 / static_cast<double>(int64_t{1}
                                                          << act_bits);
  return s;
}

}  // namespace detail

// CNV: six 3x3 stride-1 unpadded convolutions with two 2x2 max pools, then
// three dense layers; quantizers between all layers at the variant's bit
// width. Spatial flow: 32 -> 30 -> 28 -> 14 -> 12 -> 10 -> 5 -> 3 -> 1.
inline DataflowGraph build_cnv(int bits, uint64_t seed = 1) {
  if (bits != 1 && bits != 2) throw UnsupportedBits(bits);
  Rng rng(seed ^ 0xC0FFEEull);
  const auto sc = detail::scales_for_bits(bits, bits);
  GraphBuilder b;
  b.append({"input", NodeKind::Input,
            InputAttrs{{1, 3, 32, 32}, 8, detail::kInputScale}});

  const int64_t conv_ch[6] = {64, 64, 128, 128, 256, 256};
  int64_t in_ch = 3;
  int conv_idx = 0;
  auto quant_node = [&](const std::string& id) {
    QuantActAttrs qa;
    if (bits == 1) {
      qa.bits = 1;
      qa.kind = QuantKind::Bipolar;
      qa.scale = 1.0;
    } else {
      qa.bits = bits;
      qa.kind = QuantKind::Symmetric;
      qa.scale = sc.act;
    }
    return Node{id, NodeKind::QuantActivation, qa};
  };
  // gamma bound keeps every quantizer level reachable on the input grid (one
  // integer step of the accumulator never jumps two activation levels)
  const double gamma_hi = bits == 1 ? 1.75 : 1.75;

  for (int blk = 0; blk < 6; ++blk) {
    const std::string cid = "conv" + std::to_string(conv_idx);
    ConvAttrs ca;
    ca.out_channels = conv_ch[blk];
    ca.in_channels = in_ch;
    ca.kh = ca.kw = 3;
    ca.stride = 1;
    ca.pad = 0;
    ca.weight = cid + ".weight";
    ca.weight_bits = bits;
    ca.weight_scale = sc.weight;
    // packed bipolar weights live as GEMM-ready [rows, K]; integer weights
    // keep the logical 4D shape (same row-major memory)
    const Shape wshape = bits == 1 ? Shape{conv_ch[blk], in_ch * 9}
                                   : Shape{conv_ch[blk], in_ch, 3, 3};
    b.set_weight(ca.weight, detail::random_weight(rng, wshape, bits));
    b.append({cid, NodeKind::Conv, ca});
    b.append({cid + "/bn", NodeKind::BatchNorm,
              detail::random_bn(rng, conv_ch[blk], gamma_hi)});
    b.append(quant_node(cid + "/q"));
    ++conv_idx;
    in_ch = conv_ch[blk];
    if (blk == 1 || blk == 3)
      b.append({std::string("pool") + (blk == 1 ? "0" : "1"),
                NodeKind::MaxPool, MaxPoolAttrs{2, 2}});
  }

  b.append({"flatten", NodeKind::Flatten, FlattenAttrs{}});
  const int64_t fc_dims[3][2] = {{256, 512}, {512, 512}, {512, 1}};
  for (int i = 0; i < 3; ++i) {
    const std::string fid = "fc" + std::to_string(i);
    FCAttrs fa;
    fa.in_dim = fc_dims[i][0];
    fa.out_dim = fc_dims[i][1];
    fa.weight = fid + ".weight";
    fa.weight_bits = bits;
    fa.weight_scale = sc.weight;
    if (i == 2) fa.bias = {0.0};  // trainable logit bias
    b.set_weight(fa.weight, detail::random_weight(
                                rng, {fa.out_dim, fa.in_dim}, bits));
    b.append({fid, NodeKind::FC, fa});
    if (i < 2) {
      b.append({fid + "/bn", NodeKind::BatchNorm,
                detail::random_bn(rng, fc_dims[i][1], gamma_hi)});
      b.append(quant_node(fid + "/q"));
    }
  }
  b.append({"output", NodeKind::Output, OutputAttrs{}});
  return b.finalize();
}

// MobileNet v1 style depthwise-separable stack sized for 32x32 inputs:
// a 3x3 stem then eight dw/pw blocks with strides [1,1,2,1,2,1,2,1], all at
// 4-bit weights and 4-bit ReLU activations. Head: global average pool,
// 4-bit ReLU quantizer, then the logit layer.
inline DataflowGraph build_mobilenet_w4a4(uint64_t seed = 1) {
  Rng rng(seed ^ 0xB0B1ull);
  const auto sc = detail::scales_for_bits(4, 4);
  const double gamma_hi = 1.75;
  GraphBuilder b;
  b.append({"input", NodeKind::Input,
            InputAttrs{{1, 3, 32, 32}, 8, detail::kInputScale}});

  auto qrelu = [&](const std::string& id) {
    QuantActAttrs qa;
    qa.bits = 4;
    qa.kind = QuantKind::Relu;
    qa.scale = sc.act;
    return Node{id, NodeKind::QuantActivation, qa};
  };
  auto add_conv = [&](const std::string& id, int64_t in, int64_t out,
                      int64_t stride, int64_t pad) {
    ConvAttrs ca;
    ca.out_channels = out;
    ca.in_channels = in;
    ca.kh = ca.kw = (pad > 0 || in == 3) ? 3 : 1;
    ca.stride = stride;
    ca.pad = pad;
    ca.weight = id + ".weight";
    ca.weight_bits = 4;
    ca.weight_scale = sc.weight;
    b.set_weight(ca.weight, detail::random_weight(
                                rng, {out, in, ca.kh, ca.kw}, 4));
    b.append({id, NodeKind::Conv, ca});
    b.append({id + "/bn", NodeKind::BatchNorm,
              detail::random_bn(rng, out, gamma_hi)});
    b.append(qrelu(id + "/q"));
  };

  add_conv("conv00", 3, 32, 1, 1);  // stem, keeps 32x32

  const int64_t strides[8] = {1, 1, 2, 1, 2, 1, 2, 1};
  const int64_t out_ch[8] = {64, 64, 128, 128, 256, 256, 512, 512};
  int64_t in_ch = 32;
  for (int i = 0; i < 8; ++i) {
    const std::string base =
        "block" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    DepthwiseConvAttrs da;
    da.channels = in_ch;
    da.kh = da.kw = 3;
    da.stride = strides[i];
    da.pad = 1;
    da.weight = base + ".dw.weight";
    da.weight_bits = 4;
    da.weight_scale = sc.weight;
    b.set_weight(da.weight,
                 detail::random_weight(rng, {in_ch, 1, 3, 3}, 4));
    b.append({base + "/dw", NodeKind::DepthwiseConv, da});
    b.append({base + "/dw/bn", NodeKind::BatchNorm,
              detail::random_bn(rng, in_ch, gamma_hi)});
    b.append(qrelu(base + "/dw/q"));

    ConvAttrs pa;
    pa.out_channels = out_ch[i];
    pa.in_channels = in_ch;
    pa.kh = pa.kw = 1;
    pa.stride = 1;
    pa.pad = 0;
    pa.weight = base + ".pw.weight";
    pa.weight_bits = 4;
    pa.weight_scale = sc.weight;
    b.set_weight(pa.weight,
                 detail::random_weight(rng, {out_ch[i], in_ch, 1, 1}, 4));
    b.append({base + "/pw", NodeKind::Conv, pa});
    b.append({base + "/pw/bn", NodeKind::BatchNorm,
              detail::random_bn(rng, out_ch[i], gamma_hi)});
    b.append(qrelu(base + "/pw/q"));
    in_ch = out_ch[i];
  }

  b.append({"avgpool", NodeKind::AvgPool, AvgPoolAttrs{}});
  b.append({"flatten", NodeKind::Flatten, FlattenAttrs{}});
  b.append(qrelu("head/q"));
  FCAttrs fa;
  fa.in_dim = in_ch;
  fa.out_dim = 1;
  fa.weight = "head.fc.weight";
  fa.weight_bits = 4;
  fa.weight_scale = sc.weight;
  fa.bias = {0.0};
  b.set_weight(fa.weight,
               detail::random_weight(rng, {1, fa.in_dim}, 4));
  b.append({"head/fc", NodeKind::FC, fa});
  b.append({"output", NodeKind::Output, OutputAttrs{}});
  return b.finalize();
}

inline DataflowGraph build_model(const std::string& name, uint64_t seed = 1) {
  if (name == "cnv_w1a1") return build_cnv(1, seed);
  if (name == "cnv_w2a2") return build_cnv(2, seed);
  if (name == "mobilenet_w4a4") return build_mobilenet_w4a4(seed);
  throw Error("unknown model '" + name + "'");
}

// --------------------------------------------------------------------------
// Weight bundle round trip against a graph's expectations
// --------------------------------------------------------------------------

namespace detail {

struct WeightExpectation {
  std::string name;
  Shape shape;
  int bits = 8;
  double scale = 1.0;
};

inline std::vector<WeightExpectation> weight_expectations(
    const DataflowGraph& g) {
  std::vector<WeightExpectation> out;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::Conv) {
      const auto& a = n.as<ConvAttrs>();
      const Shape s = a.weight_bits == 1
                          ? Shape{a.out_channels, a.in_channels * a.kh * a.kw}
                          : Shape{a.out_channels, a.in_channels, a.kh, a.kw};
      out.push_back({a.weight, s, a.weight_bits, a.weight_scale});
    } else if (n.kind == NodeKind::DepthwiseConv) {
      const auto& a = n.as<DepthwiseConvAttrs>();
      const Shape s = a.weight_bits == 1 ? Shape{a.channels, a.kh * a.kw}
                                         : Shape{a.channels, 1, a.kh, a.kw};
      out.push_back({a.weight, s, a.weight_bits, a.weight_scale});
    } else if (n.kind == NodeKind::FC) {
      const auto& a = n.as<FCAttrs>();
      out.push_back(
          {a.weight, {a.out_dim, a.in_dim}, a.weight_bits, a.weight_scale});
    }
  }
  return out;
}

}  // namespace detail

inline void save_weights(const DataflowGraph& g,
                         const std::filesystem::path& dir) {
  save_bundle(*g.weights, dir);
}

// Returns a copy of `g` whose weight store comes from the bundle at `dir`,
// after checking every referenced tensor's shape and bit width.
inline DataflowGraph load_weights(const DataflowGraph& g,
                                  const std::filesystem::path& dir) {
  WeightStore store = load_bundle(dir);
  for (const auto& exp : detail::weight_expectations(g)) {
    auto it = store.find(exp.name);
    if (it == store.end())
      throw ManifestMismatch(exp.name, shape_str(exp.shape) + " present",
                             "missing");
    const Shape found_shape = std::holds_alternative<QTensor>(it->second)
                                  ? std::get<QTensor>(it->second).shape
                                  : std::get<PackedBitTensor>(it->second).shape;
    if (found_shape != exp.shape)
      throw ManifestMismatch(exp.name, shape_str(exp.shape),
                             shape_str(found_shape));
    const int found_bits = std::holds_alternative<QTensor>(it->second)
                               ? std::get<QTensor>(it->second).bits
                               : 1;
    if ((exp.bits == 1) != (found_bits == 1) ||
        (exp.bits != 1 && found_bits != exp.bits))
      throw ManifestMismatch(exp.name, std::to_string(exp.bits) + " bits",
                             std::to_string(found_bits) + " bits");
  }
  DataflowGraph out = g;
  out.weights = std::make_shared<WeightStore>(std::move(store));
  return out;
}

}  // namespace finnlite
