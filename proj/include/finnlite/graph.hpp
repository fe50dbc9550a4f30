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

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "finnlite/bundle.hpp"
#include "finnlite/tensor.hpp"

namespace finnlite {

enum class NodeKind {
  Input,
  Output,
  Conv,
  DepthwiseConv,
  FC,
  MaxPool,
  AvgPool,
  BatchNorm,
  QuantActivation,
  MultiThreshold,
  Scale,
  Add,
  Sign,
  Flatten,
};

inline const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "Input";
    case NodeKind::Output: return "Output";
    case NodeKind::Conv: return "Conv";
    case NodeKind::DepthwiseConv: return "DepthwiseConv";
    case NodeKind::FC: return "FC";
    case NodeKind::MaxPool: return "MaxPool";
    case NodeKind::AvgPool: return "AvgPool";
    case NodeKind::BatchNorm: return "BatchNorm";
    case NodeKind::QuantActivation: return "QuantActivation";
    case NodeKind::MultiThreshold: return "MultiThreshold";
    case NodeKind::Scale: return "Scale";
    case NodeKind::Add: return "Add";
    case NodeKind::Sign: return "Sign";
    case NodeKind::Flatten: return "Flatten";
  }
  return "?";
}

inline std::optional<NodeKind> kind_from_name(const std::string& s) {
  static const std::map<std::string, NodeKind> table = {
      {"Input", NodeKind::Input},
      {"Output", NodeKind::Output},
      {"Conv", NodeKind::Conv},
      {"DepthwiseConv", NodeKind::DepthwiseConv},
      {"FC", NodeKind::FC},
      {"MaxPool", NodeKind::MaxPool},
      {"AvgPool", NodeKind::AvgPool},
      {"BatchNorm", NodeKind::BatchNorm},
      {"QuantActivation", NodeKind::QuantActivation},
      {"MultiThreshold", NodeKind::MultiThreshold},
      {"Scale", NodeKind::Scale},
      {"Add", NodeKind::Add},
      {"Sign", NodeKind::Sign},
      {"Flatten", NodeKind::Flatten},
  };
  auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

// --------------------------------------------------------------------------
// Per-kind attributes
// --------------------------------------------------------------------------

// The graph input: integer image grid. Accepted values are k*scale for
// integer k in [0, 2^bits).
struct InputAttrs {
  Shape shape;       // e.g. [1,3,32,32]
  int bits = 8;      // pixel bit width
  double scale = 1.0 / 256.0;
};

struct OutputAttrs {};

struct ConvAttrs {
  int64_t out_channels = 0, in_channels = 0;
  int64_t kh = 3, kw = 3, stride = 1, pad = 0;
  std::string weight;        // name in the weight bundle
  int weight_bits = 8;       // 1 => packed bipolar weights
  double weight_scale = 1.0; // per-tensor
};

struct DepthwiseConvAttrs {
  int64_t channels = 0;
  int64_t kh = 3, kw = 3, stride = 1, pad = 0;
  std::string weight;  // shape [C,1,kh,kw]
  int weight_bits = 8;
  double weight_scale = 1.0;
};

struct FCAttrs {
  int64_t in_dim = 0, out_dim = 0;
  std::string weight;  // shape [out,in]
  int weight_bits = 8;
  double weight_scale = 1.0;
  std::vector<double> bias;  // optional, per output; empty = none
};

struct MaxPoolAttrs {
  int64_t k = 2, stride = 2;
};

struct AvgPoolAttrs {};  // global average pool

struct BatchNormAttrs {
  // Per channel; normalized y = gamma*(x-mean)/stddev + beta, stddev > 0.
  std::vector<double> gamma, beta, mean, stddev;
};

enum class QuantKind { Bipolar, Symmetric, Relu };

inline const char* quant_kind_name(QuantKind k) {
  switch (k) {
    case QuantKind::Bipolar: return "bipolar";
    case QuantKind::Symmetric: return "symmetric";
    case QuantKind::Relu: return "relu";
  }
  return "?";
}

// Uniform quantized activation, defined by threshold counting:
//   level index = #{ k : x >= t_k },   t_k = scale*(qmin + k + 0.5)
//   output value = scale * (qmin + level index)
// bipolar: output in {-1,+1} with the single threshold at 0 and scale 1.
// symmetric a-bit: qmin = -(2^(a-1)-1), qmax = 2^(a-1)-1  (2^a - 1 levels)
// relu a-bit:      qmin = 0,            qmax = 2^a - 1    (2^a levels)
struct QuantActAttrs {
  int bits = 1;
  QuantKind kind = QuantKind::Bipolar;
  double scale = 1.0;

  int64_t qmin() const {
    if (kind == QuantKind::Bipolar) return -1;
    if (kind == QuantKind::Relu) return 0;
    return -((int64_t{1} << (bits - 1)) - 1);
  }
  int64_t qmax() const {
    if (kind == QuantKind::Bipolar) return 1;
    if (kind == QuantKind::Relu) return (int64_t{1} << bits) - 1;
    return (int64_t{1} << (bits - 1)) - 1;
  }
  int64_t levels() const {
    return kind == QuantKind::Bipolar ? 2 : qmax() - qmin() + 1;
  }
  // Float decision thresholds, strictly increasing, levels()-1 of them.
  std::vector<double> float_thresholds() const {
    std::vector<double> t;
    if (kind == QuantKind::Bipolar) {
      t.push_back(0.0);
      return t;
    }
    const int64_t n = levels();
    t.reserve(static_cast<size_t>(n - 1));
    for (int64_t k = 0; k < n - 1; ++k)
      t.push_back(scale * (static_cast<double>(qmin() + k) + 0.5));
    return t;
  }
};

// Integer threshold activation: out = out_offset + out_scale * count, where
// count is the number of thresholds <= x per channel. Thresholds are on the
// producer's integer accumulator grid; value_scale maps the integer output
// back to real values downstream.
struct MultiThresholdAttrs {
  int64_t channels = 0;
  int64_t levels = 2;  // count ranges over [0, levels-1]
  std::vector<int64_t> thresholds;  // channels x (levels-1), row-major
  int64_t out_offset = 0;
  int64_t out_scale = 1;
  double value_scale = 1.0;
  int out_bits = 2;
  bool bipolar = false;

  std::span<const int64_t> channel_thresholds(int64_t c) const {
    const int64_t per = levels - 1;
    return {thresholds.data() + c * per, static_cast<size_t>(per)};
  }
};

struct ScaleAttrs {
  std::vector<double> factor;  // size 1 or per-channel
};

struct AddAttrs {
  std::vector<double> addend;  // size 1 or per-channel
};

struct SignAttrs {};  // x >= 0 -> +1 else -1; alias of bipolar quantization

struct FlattenAttrs {};

using NodeAttrs =
    std::variant<InputAttrs, OutputAttrs, ConvAttrs, DepthwiseConvAttrs,
                 FCAttrs, MaxPoolAttrs, AvgPoolAttrs, BatchNormAttrs,
                 QuantActAttrs, MultiThresholdAttrs, ScaleAttrs, AddAttrs,
                 SignAttrs, FlattenAttrs>;

struct Node {
  std::string id;
  NodeKind kind = NodeKind::Input;
  NodeAttrs attrs;

  template <typename T>
  const T& as() const {
    return std::get<T>(attrs);
  }
  template <typename T>
  T& as() {
    return std::get<T>(attrs);
  }
};

struct Edge {
  std::string from, to;
  Shape shape;  // annotation filled by infer_shapes; empty = unannotated
};

// --------------------------------------------------------------------------
// Graph
// --------------------------------------------------------------------------

struct Violation {
  enum class Code {
    CycleDetected,
    ThresholdsNotIncreasing,
    MissingInput,
    MissingOutput,
    MultipleInputs,
    MultipleOutputs,
    DanglingEdge,
    AttrDomain,
    ShapeAnnotationMismatch,
    FloatNodeRemains,
  };
  Code code;
  std::string where;
  std::string message;
};

inline const char* violation_name(Violation::Code c) {
  switch (c) {
    case Violation::Code::CycleDetected: return "CycleDetected";
    case Violation::Code::ThresholdsNotIncreasing:
      return "ThresholdsNotIncreasing";
    case Violation::Code::MissingInput: return "MissingInput";
    case Violation::Code::MissingOutput: return "MissingOutput";
    case Violation::Code::MultipleInputs: return "MultipleInputs";
    case Violation::Code::MultipleOutputs: return "MultipleOutputs";
    case Violation::Code::DanglingEdge: return "DanglingEdge";
    case Violation::Code::AttrDomain: return "AttrDomain";
    case Violation::Code::ShapeAnnotationMismatch:
      return "ShapeAnnotationMismatch";
    case Violation::Code::FloatNodeRemains: return "FloatNodeRemains";
  }
  return "?";
}

// Immutable after finalize; transformation passes copy the structure and
// share the weight store.
class DataflowGraph {
 public:
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::shared_ptr<const WeightStore> weights =
      std::make_shared<WeightStore>();

  const Node* find(const std::string& id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
  Node* find(const std::string& id) {
    for (auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }

  std::vector<const Node*> producers(const std::string& id) const {
    std::vector<const Node*> out;
    for (const auto& e : edges)
      if (e.to == id) out.push_back(find(e.from));
    return out;
  }
  std::vector<const Node*> consumers(const std::string& id) const {
    std::vector<const Node*> out;
    for (const auto& e : edges)
      if (e.from == id) out.push_back(find(e.to));
    return out;
  }
  const Edge* out_edge(const std::string& id) const {
    for (const auto& e : edges)
      if (e.from == id) return &e;
    return nullptr;
  }

  const Node* input_node() const {
    for (const auto& n : nodes)
      if (n.kind == NodeKind::Input) return &n;
    return nullptr;
  }
  const Node* output_node() const {
    for (const auto& n : nodes)
      if (n.kind == NodeKind::Output) return &n;
    return nullptr;
  }

  const WeightTensor& weight(const std::string& name) const {
    auto it = weights->find(name);
    if (it == weights->end()) throw Error("weight '" + name + "' not in store");
    return it->second;
  }

  // Kahn's algorithm; deterministic (insertion order among ready nodes).
  // Returns nullopt if the graph has a cycle.
  std::optional<std::vector<const Node*>> topo_order() const {
    std::map<std::string, int> indeg;
    for (const auto& n : nodes) indeg[n.id] = 0;
    for (const auto& e : edges) {
      auto it = indeg.find(e.to);
      if (it != indeg.end()) ++it->second;
    }
    std::vector<const Node*> order;
    std::vector<bool> done(nodes.size(), false);
    order.reserve(nodes.size());
    bool progressed = true;
    while (progressed) {
      progressed = false;
      for (size_t i = 0; i < nodes.size(); ++i) {
        if (done[i] || indeg[nodes[i].id] != 0) continue;
        done[i] = true;
        progressed = true;
        order.push_back(&nodes[i]);
        for (const auto& e : edges)
          if (e.from == nodes[i].id) --indeg[e.to];
      }
    }
    if (order.size() != nodes.size()) return std::nullopt;
    return order;
  }
};

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride,
                            int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int64_t channel_dim(const Shape& s) {
  // NCHW: dim 1; [1,N]: dim 1
  return s.size() >= 2 ? s[1] : s.empty() ? 1 : s[0];
}

inline bool broadcast_len_ok(size_t len, const Shape& s) {
  return len == 1 || static_cast<int64_t>(len) == channel_dim(s);
}

}  // namespace detail

// Output shape of `n` given its input shape. Throws ShapeMismatch when the
// input is inconsistent with the node's attributes.
inline Shape node_output_shape(const Node& n, const Shape& in) {
  using detail::conv_out_dim;
  switch (n.kind) {
    case NodeKind::Input:
      return n.as<InputAttrs>().shape;
    case NodeKind::Output:
      return in;
    case NodeKind::Conv: {
      const auto& a = n.as<ConvAttrs>();
      if (in.size() != 4 || in[1] != a.in_channels)
        throw ShapeMismatch(n.id,
                            {in.empty() ? 0 : in[0], a.in_channels, -1, -1}, in);
      const int64_t oh = conv_out_dim(in[2], a.kh, a.stride, a.pad);
      const int64_t ow = conv_out_dim(in[3], a.kw, a.stride, a.pad);
      if (oh <= 0 || ow <= 0)
        throw ShapeMismatch(n.id + ": kernel larger than padded input");
      return {in[0], a.out_channels, oh, ow};
    }
    case NodeKind::DepthwiseConv: {
      const auto& a = n.as<DepthwiseConvAttrs>();
      if (in.size() != 4 || in[1] != a.channels)
        throw ShapeMismatch(n.id, {in.empty() ? 0 : in[0], a.channels, -1, -1},
                            in);
      const int64_t oh = conv_out_dim(in[2], a.kh, a.stride, a.pad);
      const int64_t ow = conv_out_dim(in[3], a.kw, a.stride, a.pad);
      if (oh <= 0 || ow <= 0)
        throw ShapeMismatch(n.id + ": kernel larger than padded input");
      return {in[0], a.channels, oh, ow};
    }
    case NodeKind::FC: {
      const auto& a = n.as<FCAttrs>();
      if (in.size() != 2 || in[1] != a.in_dim)
        throw ShapeMismatch(n.id, {in.empty() ? 0 : in[0], a.in_dim}, in);
      return {in[0], a.out_dim};
    }
    case NodeKind::MaxPool: {
      const auto& a = n.as<MaxPoolAttrs>();
      if (in.size() != 4) throw ShapeMismatch(n.id + ": MaxPool wants NCHW");
      const int64_t oh = (in[2] - a.k) / a.stride + 1;
      const int64_t ow = (in[3] - a.k) / a.stride + 1;
      if (oh <= 0 || ow <= 0)
        throw ShapeMismatch(n.id + ": pool window larger than input");
      return {in[0], in[1], oh, ow};
    }
    case NodeKind::AvgPool:
      if (in.size() != 4) throw ShapeMismatch(n.id + ": AvgPool wants NCHW");
      return {in[0], in[1], 1, 1};
    case NodeKind::Flatten: {
      if (in.size() < 2) throw ShapeMismatch(n.id + ": Flatten wants rank>=2");
      int64_t rest = 1;
      for (size_t i = 1; i < in.size(); ++i) rest *= in[i];
      return {in[0], rest};
    }
    case NodeKind::BatchNorm:
    case NodeKind::QuantActivation:
    case NodeKind::MultiThreshold:
    case NodeKind::Scale:
    case NodeKind::Add:
    case NodeKind::Sign:
      return in;
  }
  throw Error("unreachable");
}

// Fill every edge's shape annotation by propagating from the Input node.
// Idempotent; throws ShapeMismatch when an existing annotation disagrees.
inline DataflowGraph infer_shapes(const DataflowGraph& g) {
  DataflowGraph out = g;
  auto order = out.topo_order();
  if (!order) throw Error("infer_shapes: graph has a cycle");
  std::map<std::string, Shape> shape_of;  // node id -> output shape
  for (const Node* n : *order) {
    Shape in_shape;
    if (n->kind != NodeKind::Input) {
      auto prods = out.producers(n->id);
      if (prods.size() != 1)
        throw ShapeMismatch(n->id + ": expected exactly one producer, got " +
                            std::to_string(prods.size()));
      in_shape = shape_of.at(prods[0]->id);
    }
    shape_of[n->id] = node_output_shape(*n, in_shape);
  }
  for (auto& e : out.edges) {
    const Shape& s = shape_of.at(e.from);
    if (!e.shape.empty() && e.shape != s)
      throw ShapeMismatch("edge " + e.from + "->" + e.to, e.shape, s);
    e.shape = s;
  }
  return out;
}

// Structural and attribute invariants. Returns violations instead of
// throwing; empty result means the graph is well formed.
inline std::vector<Violation> validate(const DataflowGraph& g) {
  std::vector<Violation> v;
  auto add = [&](Violation::Code c, const std::string& where,
                 const std::string& msg) {
    v.push_back({c, where, msg});
  };

  int inputs = 0, outputs = 0;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::Input) ++inputs;
    if (n.kind == NodeKind::Output) ++outputs;
  }
  if (inputs == 0) add(Violation::Code::MissingInput, "", "no Input node");
  if (outputs == 0) add(Violation::Code::MissingOutput, "", "no Output node");
  if (inputs > 1) add(Violation::Code::MultipleInputs, "", "multiple Inputs");
  if (outputs > 1)
    add(Violation::Code::MultipleOutputs, "", "multiple Outputs");

  for (const auto& e : g.edges)
    if (!g.find(e.from) || !g.find(e.to))
      add(Violation::Code::DanglingEdge, e.from + "->" + e.to,
          "edge references missing node");

  if (!g.topo_order())
    add(Violation::Code::CycleDetected, "", "graph contains a cycle");

  for (const auto& n : g.nodes) {
    switch (n.kind) {
      case NodeKind::MultiThreshold: {
        const auto& a = n.as<MultiThresholdAttrs>();
        if (a.levels < 2 || a.channels < 1 ||
            static_cast<int64_t>(a.thresholds.size()) !=
                a.channels * (a.levels - 1)) {
          add(Violation::Code::AttrDomain, n.id,
              "threshold matrix size does not match channels x (levels-1)");
          break;
        }
        for (int64_t c = 0; c < a.channels; ++c) {
          auto row = a.channel_thresholds(c);
          for (size_t k = 1; k < row.size(); ++k)
            if (row[k] <= row[k - 1]) {
              add(Violation::Code::ThresholdsNotIncreasing, n.id,
                  "channel " + std::to_string(c));
              c = a.channels;  // one report per node
              break;
            }
        }
        break;
      }
      case NodeKind::BatchNorm: {
        const auto& a = n.as<BatchNormAttrs>();
        const size_t c = a.gamma.size();
        if (c == 0 || a.beta.size() != c || a.mean.size() != c ||
            a.stddev.size() != c)
          add(Violation::Code::AttrDomain, n.id,
              "batchnorm parameter vectors disagree in length");
        for (double s : a.stddev)
          if (!(s > 0.0))
            add(Violation::Code::AttrDomain, n.id, "stddev must be > 0");
        break;
      }
      case NodeKind::QuantActivation: {
        const auto& a = n.as<QuantActAttrs>();
        if (!(a.scale > 0.0))
          add(Violation::Code::AttrDomain, n.id, "scale must be > 0");
        if (a.bits < 1 || a.bits > 8)
          add(Violation::Code::AttrDomain, n.id, "bits out of range");
        if (a.kind == QuantKind::Bipolar && a.bits != 1)
          add(Violation::Code::AttrDomain, n.id, "bipolar requires bits=1");
        break;
      }
      case NodeKind::Conv: {
        const auto& a = n.as<ConvAttrs>();
        if (a.kh < 1 || a.kw < 1 || a.stride < 1 || a.pad < 0 ||
            a.out_channels < 1 || a.in_channels < 1)
          add(Violation::Code::AttrDomain, n.id, "bad conv geometry");
        if (!(a.weight_scale > 0.0))
          add(Violation::Code::AttrDomain, n.id, "weight_scale must be > 0");
        break;
      }
      case NodeKind::Input: {
        const auto& a = n.as<InputAttrs>();
        if (!(a.scale > 0.0) || a.bits < 1)
          add(Violation::Code::AttrDomain, n.id, "bad input spec");
        break;
      }
      case NodeKind::Scale: {
        if (n.as<ScaleAttrs>().factor.empty())
          add(Violation::Code::AttrDomain, n.id, "empty factor");
        break;
      }
      case NodeKind::Add: {
        if (n.as<AddAttrs>().addend.empty())
          add(Violation::Code::AttrDomain, n.id, "empty addend");
        break;
      }
      default:
        break;
    }
  }

  // Shape annotations, when present, must match recomputation.
  if (v.empty()) {
    try {
      infer_shapes(g);
    } catch (const Error& e) {
      add(Violation::Code::ShapeAnnotationMismatch, "", e.what());
    }
  }
  return v;
}

// Census helper used by streamlining checks: kinds that carry real-valued
// computation and must be gone after streamline_all.
inline bool is_float_domain_kind(NodeKind k) {
  return k == NodeKind::BatchNorm || k == NodeKind::Scale ||
         k == NodeKind::Add || k == NodeKind::QuantActivation ||
         k == NodeKind::Sign;
}

inline int count_kind(const DataflowGraph& g, NodeKind k) {
  int c = 0;
  for (const auto& n : g.nodes) c += (n.kind == k);
  return c;
}

// --------------------------------------------------------------------------
// Builder: assembles a chain/DAG, then finalize() validates and freezes it.
// --------------------------------------------------------------------------

class GraphBuilder {
 public:
  GraphBuilder& add(Node n) {
    g_.nodes.push_back(std::move(n));
    return *this;
  }
  GraphBuilder& connect(const std::string& from, const std::string& to) {
    g_.edges.push_back({from, to, {}});
    return *this;
  }
  // Convenience: append node and connect from the previous appended node.
  GraphBuilder& append(Node n) {
    if (!g_.nodes.empty() && !detached_) connect(g_.nodes.back().id, n.id);
    detached_ = false;
    g_.nodes.push_back(std::move(n));
    return *this;
  }
  GraphBuilder& set_weight(const std::string& name, WeightTensor t) {
    store_[name] = std::move(t);
    return *this;
  }

  DataflowGraph finalize() {
    g_.weights = std::make_shared<WeightStore>(std::move(store_));
    auto violations = validate(g_);
    if (!violations.empty())
      throw Error("finalize: " + violations.front().message + " (" +
                  violation_name(violations.front().code) + " at '" +
                  violations.front().where + "')");
    return infer_shapes(g_);
  }

 private:
  DataflowGraph g_;
  WeightStore store_;
  bool detached_ = false;
};

}  // namespace finnlite
