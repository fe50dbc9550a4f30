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

#include <json.hpp>

#include "finnlite/graph.hpp"

namespace finnlite {

// Per-layer parallelism assignment. For each matrix-lowered layer the PE
// count must divide the output-feature dimension H and the SIMD width must
// divide the kernel-expanded input-feature dimension W.
struct LayerFold {
  std::string node;
  int64_t pe = 1, simd = 1;
};

struct FoldingConfig {
  double clock_hz = 100e6;
  std::vector<LayerFold> layers;

  const LayerFold* find(const std::string& node) const {
    for (const auto& l : layers)
      if (l.node == node) return &l;
    return nullptr;
  }
};

// Folding dimensions of one layer: H = output features, W = input features
// (kernel-expanded), spatial = output positions the matrix op repeats over.
struct FoldDims {
  std::string node;
  int64_t H = 0, W = 0, spatial = 1;
};

struct FoldViolation {
  std::string node;
  std::string message;
};

struct ThroughputEstimate {
  struct LayerCycles {
    std::string node;
    int64_t pe = 1, simd = 1;
    int64_t cycles = 0;
  };
  std::vector<LayerCycles> layers;
  std::string bottleneck;
  int64_t bottleneck_cycles = 0;
  double fps_estimate = 0.0;
};

// Foldable layers of a (streamlined) graph in execution order.
inline std::vector<FoldDims> foldable_layers(const DataflowGraph& g) {
  const DataflowGraph shaped = infer_shapes(g);
  auto order = shaped.topo_order();
  if (!order) throw Error("foldable_layers: graph has a cycle");
  std::vector<FoldDims> out;
  for (const Node* n : *order) {
    const Edge* oe = shaped.out_edge(n->id);
    switch (n->kind) {
      case NodeKind::Conv: {
        const auto& a = n->as<ConvAttrs>();
        out.push_back({n->id, a.out_channels, a.in_channels * a.kh * a.kw,
                       oe->shape[2] * oe->shape[3]});
        break;
      }
      case NodeKind::DepthwiseConv: {
        const auto& a = n->as<DepthwiseConvAttrs>();
        out.push_back(
            {n->id, a.channels, a.kh * a.kw, oe->shape[2] * oe->shape[3]});
        break;
      }
      case NodeKind::FC: {
        const auto& a = n->as<FCAttrs>();
        out.push_back({n->id, a.out_dim, a.in_dim, 1});
        break;
      }
      default:
        break;
    }
  }
  return out;
}

inline std::vector<FoldViolation> validate_folding(const DataflowGraph& g,
                                                   const FoldingConfig& f) {
  std::vector<FoldViolation> v;
  const auto layers = foldable_layers(g);
  for (const auto& d : layers) {
    const LayerFold* lf = f.find(d.node);
    if (!lf) {
      v.push_back({d.node, "no folding entry for layer"});
      continue;
    }
    if (lf->pe < 1 || lf->simd < 1)
      v.push_back({d.node, "pe and simd must be >= 1"});
    if (lf->pe > d.H)
      v.push_back({d.node, "pe " + std::to_string(lf->pe) + " exceeds H " +
                               std::to_string(d.H)});
    if (lf->simd > d.W)
      v.push_back({d.node, "simd " + std::to_string(lf->simd) + " exceeds W " +
                               std::to_string(d.W)});
    if (lf->pe >= 1 && d.H % lf->pe != 0)
      v.push_back({d.node, "H " + std::to_string(d.H) + " mod PE " +
                               std::to_string(lf->pe) + " = " +
                               std::to_string(d.H % lf->pe) + " != 0"});
    if (lf->simd >= 1 && d.W % lf->simd != 0)
      v.push_back({d.node, "W " + std::to_string(d.W) + " mod SIMD " +
                               std::to_string(lf->simd) + " = " +
                               std::to_string(d.W % lf->simd) + " != 0"});
  }
  for (const auto& l : f.layers) {
    bool known = false;
    for (const auto& d : layers) known = known || d.node == l.node;
    if (!known) v.push_back({l.node, "folding entry for unknown layer"});
  }
  return v;
}

// cycles = (H/pe) * (W/simd) * spatial, exact integer arithmetic.
inline int64_t estimate_cycles(const FoldDims& d, int64_t pe, int64_t simd) {
  if (pe < 1 || simd < 1 || pe > d.H || simd > d.W || d.H % pe != 0 ||
      d.W % simd != 0)
    throw InvalidFolding("layer '" + d.node + "': pe=" + std::to_string(pe) +
                         " simd=" + std::to_string(simd) + " for H=" +
                         std::to_string(d.H) + " W=" + std::to_string(d.W));
  return (d.H / pe) * (d.W / simd) * d.spatial;
}

inline ThroughputEstimate report_throughput(const DataflowGraph& g,
                                            const FoldingConfig& f,
                                            double clock_hz) {
  if (!(clock_hz > 0.0)) throw Error("clock_hz must be > 0");
  auto violations = validate_folding(g, f);
  if (!violations.empty())
    throw InvalidFolding(violations.front().node + ": " +
                         violations.front().message);
  ThroughputEstimate est;
  for (const auto& d : foldable_layers(g)) {
    const LayerFold* lf = f.find(d.node);
    const int64_t cyc = estimate_cycles(d, lf->pe, lf->simd);
    est.layers.push_back({d.node, lf->pe, lf->simd, cyc});
    if (cyc > est.bottleneck_cycles) {
      est.bottleneck_cycles = cyc;
      est.bottleneck = d.node;
    }
  }
  if (est.bottleneck_cycles == 0)
    throw InvalidFolding("graph has no foldable layers");
  est.fps_estimate = clock_hz / static_cast<double>(est.bottleneck_cycles);
  return est;
}

namespace detail {

inline std::vector<int64_t> divisors(int64_t n) {
  std::vector<int64_t> d;
  for (int64_t i = 1; i <= n; ++i)
    if (n % i == 0) d.push_back(i);
  return d;
}

}  // namespace detail

// Greedy allocation: repeatedly give the layer with the most cycles its next
// divisor step on PE or SIMD (whichever lowers its cycles more), while the
// total lane budget sum(pe*simd) allows. Layers are processed sorted by id,
// ties on cycles break toward the smaller id, so the result is independent
// of enumeration order and monotone in budget.
inline FoldingConfig auto_fold_dims(std::vector<FoldDims> layers,
                                    int64_t budget, double clock_hz = 100e6) {
  std::sort(layers.begin(), layers.end(),
            [](const FoldDims& a, const FoldDims& b) { return a.node < b.node; });
  const int64_t n = static_cast<int64_t>(layers.size());
  if (budget < n)
    throw InvalidFolding("budget " + std::to_string(budget) +
                         " below layer count " + std::to_string(n));
  struct State {
    size_t pe_idx = 0, simd_idx = 0;
    std::vector<int64_t> pe_divs, simd_divs;
    int64_t cycles = 0;
  };
  std::vector<State> st(static_cast<size_t>(n));
  int64_t lanes = 0;
  for (size_t i = 0; i < st.size(); ++i) {
    st[i].pe_divs = detail::divisors(layers[i].H);
    st[i].simd_divs = detail::divisors(layers[i].W);
    st[i].cycles = estimate_cycles(layers[i], 1, 1);
    lanes += 1;
  }
  auto pe_of = [&](size_t i) { return st[i].pe_divs[st[i].pe_idx]; };
  auto simd_of = [&](size_t i) { return st[i].simd_divs[st[i].simd_idx]; };

  // Both the layer selection and the move choice ignore the budget; the
  // budget only decides where the move sequence stops. Configurations for
  // growing budgets are therefore prefixes of one another, which makes the
  // fps estimate monotone in the budget.
  while (true) {
    int64_t best = -1;
    for (size_t i = 0; i < st.size(); ++i) {
      const bool movable = st[i].pe_idx + 1 < st[i].pe_divs.size() ||
                           st[i].simd_idx + 1 < st[i].simd_divs.size();
      if (!movable) continue;
      if (best < 0 || st[i].cycles > st[static_cast<size_t>(best)].cycles)
        best = static_cast<int64_t>(i);
    }
    if (best < 0) break;  // every layer fully parallel
    const size_t bi = static_cast<size_t>(best);
    State& s = st[bi];
    int64_t cyc_pe = -1, cyc_simd = -1;
    if (s.pe_idx + 1 < s.pe_divs.size())
      cyc_pe = estimate_cycles(layers[bi], s.pe_divs[s.pe_idx + 1], simd_of(bi));
    if (s.simd_idx + 1 < s.simd_divs.size())
      cyc_simd =
          estimate_cycles(layers[bi], pe_of(bi), s.simd_divs[s.simd_idx + 1]);
    // fewer resulting cycles wins; tie prefers the PE step
    const bool move_pe = (cyc_simd < 0) || (cyc_pe >= 0 && cyc_pe <= cyc_simd);
    const int64_t new_pe = move_pe ? s.pe_divs[s.pe_idx + 1] : pe_of(bi);
    const int64_t new_simd =
        move_pe ? simd_of(bi) : s.simd_divs[s.simd_idx + 1];
    const int64_t new_lanes = lanes - pe_of(bi) * simd_of(bi) + new_pe * new_simd;
    if (new_lanes > budget) break;  // budget exhausted
    lanes = new_lanes;
    if (move_pe)
      ++s.pe_idx;
    else
      ++s.simd_idx;
    s.cycles = estimate_cycles(layers[bi], pe_of(bi), simd_of(bi));
  }

  FoldingConfig cfg;
  cfg.clock_hz = clock_hz;
  for (size_t i = 0; i < st.size(); ++i)
    cfg.layers.push_back({layers[i].node, pe_of(i), simd_of(i)});
  return cfg;
}

inline FoldingConfig auto_fold(const DataflowGraph& g, int64_t budget,
                               double clock_hz = 100e6) {
  return auto_fold_dims(foldable_layers(g), budget, clock_hz);
}

// ---------------------------------------------------------------------------
// JSON artifacts for the `fold` CLI subcommand
// ---------------------------------------------------------------------------

inline nlohmann::json folding_to_json(const FoldingConfig& f) {
  nlohmann::json j;
  j["schema"] = 1;
  j["clock_hz"] = f.clock_hz;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : f.layers)
    j["layers"].push_back({{"node", l.node}, {"pe", l.pe}, {"simd", l.simd}});
  return j;
}

inline FoldingConfig folding_from_json(const nlohmann::json& j) {
  FoldingConfig f;
  f.clock_hz = j.at("clock_hz").get<double>();
  for (const auto& l : j.at("layers"))
    f.layers.push_back({l.at("node").get<std::string>(),
                        l.at("pe").get<int64_t>(),
                        l.at("simd").get<int64_t>()});
  return f;
}

inline nlohmann::json throughput_to_json(const ThroughputEstimate& e) {
  nlohmann::json j;
  j["schema"] = 1;
  j["bottleneck"] = e.bottleneck;
  j["bottleneck_cycles"] = e.bottleneck_cycles;
  j["fps_estimate"] = e.fps_estimate;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : e.layers)
    j["layers"].push_back({{"node", l.node},
                           {"pe", l.pe},
                           {"simd", l.simd},
                           {"cycles", l.cycles}});
  return j;
}

}  // namespace finnlite
