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

#include <fstream>
#include <string>

#include <json.hpp>

#include "finnlite/graph.hpp"

namespace finnlite {

// Graph text format: a JSON document listing nodes, edges and attributes.
// Weights stay in the bundle and are referenced by name. Doubles round-trip
// exactly (shortest-representation printing).

namespace detail {

using nlohmann::json;

inline json attrs_to_json(const Node& n) {
  json j;
  switch (n.kind) {
    case NodeKind::Input: {
      const auto& a = n.as<InputAttrs>();
      j["shape"] = a.shape;
      j["bits"] = a.bits;
      j["scale"] = a.scale;
      break;
    }
    case NodeKind::Output:
    case NodeKind::Flatten:
    case NodeKind::Sign:
    case NodeKind::AvgPool:
      break;
    case NodeKind::Conv: {
      const auto& a = n.as<ConvAttrs>();
      j["out_channels"] = a.out_channels;
      j["in_channels"] = a.in_channels;
      j["kh"] = a.kh;
      j["kw"] = a.kw;
      j["stride"] = a.stride;
      j["pad"] = a.pad;
      j["weight"] = a.weight;
      j["weight_bits"] = a.weight_bits;
      j["weight_scale"] = a.weight_scale;
      break;
    }
    case NodeKind::DepthwiseConv: {
      const auto& a = n.as<DepthwiseConvAttrs>();
      j["channels"] = a.channels;
      j["kh"] = a.kh;
      j["kw"] = a.kw;
      j["stride"] = a.stride;
      j["pad"] = a.pad;
      j["weight"] = a.weight;
      j["weight_bits"] = a.weight_bits;
      j["weight_scale"] = a.weight_scale;
      break;
    }
    case NodeKind::FC: {
      const auto& a = n.as<FCAttrs>();
      j["in_dim"] = a.in_dim;
      j["out_dim"] = a.out_dim;
      j["weight"] = a.weight;
      j["weight_bits"] = a.weight_bits;
      j["weight_scale"] = a.weight_scale;
      if (!a.bias.empty()) j["bias"] = a.bias;
      break;
    }
    case NodeKind::MaxPool: {
      const auto& a = n.as<MaxPoolAttrs>();
      j["k"] = a.k;
      j["stride"] = a.stride;
      break;
    }
    case NodeKind::BatchNorm: {
      const auto& a = n.as<BatchNormAttrs>();
      j["gamma"] = a.gamma;
      j["beta"] = a.beta;
      j["mean"] = a.mean;
      j["stddev"] = a.stddev;
      break;
    }
    case NodeKind::QuantActivation: {
      const auto& a = n.as<QuantActAttrs>();
      j["bits"] = a.bits;
      j["quant_kind"] = quant_kind_name(a.kind);
      j["scale"] = a.scale;
      break;
    }
    case NodeKind::MultiThreshold: {
      const auto& a = n.as<MultiThresholdAttrs>();
      j["channels"] = a.channels;
      j["levels"] = a.levels;
      j["thresholds"] = a.thresholds;
      j["out_offset"] = a.out_offset;
      j["out_scale"] = a.out_scale;
      j["value_scale"] = a.value_scale;
      j["out_bits"] = a.out_bits;
      j["bipolar"] = a.bipolar;
      break;
    }
    case NodeKind::Scale:
      j["factor"] = n.as<ScaleAttrs>().factor;
      break;
    case NodeKind::Add:
      j["addend"] = n.as<AddAttrs>().addend;
      break;
  }
  return j;
}

inline NodeAttrs attrs_from_json(NodeKind kind, const json& j) {
  switch (kind) {
    case NodeKind::Input: {
      InputAttrs a;
      a.shape = j.at("shape").get<Shape>();
      a.bits = j.at("bits").get<int>();
      a.scale = j.at("scale").get<double>();
      return a;
    }
    case NodeKind::Output: return OutputAttrs{};
    case NodeKind::Flatten: return FlattenAttrs{};
    case NodeKind::Sign: return SignAttrs{};
    case NodeKind::AvgPool: return AvgPoolAttrs{};
    case NodeKind::Conv: {
      ConvAttrs a;
      a.out_channels = j.at("out_channels").get<int64_t>();
      a.in_channels = j.at("in_channels").get<int64_t>();
      a.kh = j.at("kh").get<int64_t>();
      a.kw = j.at("kw").get<int64_t>();
      a.stride = j.at("stride").get<int64_t>();
      a.pad = j.at("pad").get<int64_t>();
      a.weight = j.at("weight").get<std::string>();
      a.weight_bits = j.at("weight_bits").get<int>();
      a.weight_scale = j.at("weight_scale").get<double>();
      return a;
    }
    case NodeKind::DepthwiseConv: {
      DepthwiseConvAttrs a;
      a.channels = j.at("channels").get<int64_t>();
      a.kh = j.at("kh").get<int64_t>();
      a.kw = j.at("kw").get<int64_t>();
      a.stride = j.at("stride").get<int64_t>();
      a.pad = j.at("pad").get<int64_t>();
      a.weight = j.at("weight").get<std::string>();
      a.weight_bits = j.at("weight_bits").get<int>();
      a.weight_scale = j.at("weight_scale").get<double>();
      return a;
    }
    case NodeKind::FC: {
      FCAttrs a;
      a.in_dim = j.at("in_dim").get<int64_t>();
      a.out_dim = j.at("out_dim").get<int64_t>();
      a.weight = j.at("weight").get<std::string>();
      a.weight_bits = j.at("weight_bits").get<int>();
      a.weight_scale = j.at("weight_scale").get<double>();
      if (j.contains("bias")) a.bias = j.at("bias").get<std::vector<double>>();
      return a;
    }
    case NodeKind::MaxPool: {
      MaxPoolAttrs a;
      a.k = j.at("k").get<int64_t>();
      a.stride = j.at("stride").get<int64_t>();
      return a;
    }
    case NodeKind::BatchNorm: {
      BatchNormAttrs a;
      a.gamma = j.at("gamma").get<std::vector<double>>();
      a.beta = j.at("beta").get<std::vector<double>>();
      a.mean = j.at("mean").get<std::vector<double>>();
      a.stddev = j.at("stddev").get<std::vector<double>>();
      return a;
    }
    case NodeKind::QuantActivation: {
      QuantActAttrs a;
      a.bits = j.at("bits").get<int>();
      const std::string k = j.at("quant_kind").get<std::string>();
      if (k == "bipolar")
        a.kind = QuantKind::Bipolar;
      else if (k == "symmetric")
        a.kind = QuantKind::Symmetric;
      else if (k == "relu")
        a.kind = QuantKind::Relu;
      else
        throw MalformedStream(0, "unknown quant_kind '" + k + "'");
      a.scale = j.at("scale").get<double>();
      return a;
    }
    case NodeKind::MultiThreshold: {
      MultiThresholdAttrs a;
      a.channels = j.at("channels").get<int64_t>();
      a.levels = j.at("levels").get<int64_t>();
      a.thresholds = j.at("thresholds").get<std::vector<int64_t>>();
      a.out_offset = j.at("out_offset").get<int64_t>();
      a.out_scale = j.at("out_scale").get<int64_t>();
      a.value_scale = j.at("value_scale").get<double>();
      a.out_bits = j.at("out_bits").get<int>();
      a.bipolar = j.at("bipolar").get<bool>();
      return a;
    }
    case NodeKind::Scale: {
      ScaleAttrs a;
      a.factor = j.at("factor").get<std::vector<double>>();
      return a;
    }
    case NodeKind::Add: {
      AddAttrs a;
      a.addend = j.at("addend").get<std::vector<double>>();
      return a;
    }
  }
  throw MalformedStream(0, "unhandled node kind");
}

}  // namespace detail

inline std::string serialize(const DataflowGraph& g) {
  auto violations = validate(g);
  if (!violations.empty())
    throw Error("serialize: graph invalid: " + violations.front().message);
  nlohmann::json j;
  j["schema"] = 1;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nlohmann::json nj;
    nj["id"] = n.id;
    nj["kind"] = kind_name(n.kind);
    nj["attrs"] = detail::attrs_to_json(n);
    j["nodes"].push_back(nj);
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges) {
    nlohmann::json ej;
    ej["from"] = e.from;
    ej["to"] = e.to;
    if (!e.shape.empty()) ej["shape"] = e.shape;
    j["edges"].push_back(ej);
  }
  return j.dump(1);
}

inline DataflowGraph deserialize(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedStream(e.byte, e.what());
  }
  DataflowGraph g;
  try {
    if (j.at("schema").get<int>() != 1)
      throw MalformedStream(0, "unsupported schema version");
    for (const auto& nj : j.at("nodes")) {
      Node n;
      n.id = nj.at("id").get<std::string>();
      const std::string kname = nj.at("kind").get<std::string>();
      auto k = kind_from_name(kname);
      if (!k) throw MalformedStream(0, "unknown node kind '" + kname + "'");
      n.kind = *k;
      n.attrs = detail::attrs_from_json(*k, nj.at("attrs"));
      g.nodes.push_back(std::move(n));
    }
    for (const auto& ej : j.at("edges")) {
      Edge e;
      e.from = ej.at("from").get<std::string>();
      e.to = ej.at("to").get<std::string>();
      if (ej.contains("shape")) e.shape = ej.at("shape").get<Shape>();
      g.edges.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedStream(0, e.what());
  }
  auto violations = validate(g);
  if (!violations.empty())
    throw MalformedStream(0, "deserialized graph invalid: " +
                                 violations.front().message);
  return g;
}

inline void save_graph(const DataflowGraph& g,
                       const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open for writing: " + path.string());
  f << serialize(g) << '\n';
}

inline DataflowGraph load_graph(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open for reading: " + path.string());
  std::string text{std::istreambuf_iterator<char>(f),
                   std::istreambuf_iterator<char>()};
  return deserialize(text);
}

}  // namespace finnlite
