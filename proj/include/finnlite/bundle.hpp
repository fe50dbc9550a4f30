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

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <variant>

#include <json.hpp>

#include "finnlite/tensor.hpp"

namespace finnlite {

// On-disk tensor container: a directory holding manifest.json plus one raw
// file per tensor.
//   encoding "int-le":         little-endian two's complement, smallest byte
//                              width that holds `bits` (1, 2 or 4 bytes)
//   encoding "packed-bipolar": the PackedBitTensor word stream, 64-bit words,
//                              little-endian
using WeightTensor = std::variant<QTensor, PackedBitTensor>;
using WeightStore = std::map<std::string, WeightTensor>;

namespace detail {

inline int int_byte_width(int bits) { return bits <= 8 ? 1 : bits <= 16 ? 2 : 4; }

inline void write_file(const std::filesystem::path& p,
                       const std::vector<uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + p.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open for reading: " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline void save_bundle(const WeightStore& store,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, tensor] : store) {
    nlohmann::json entry;
    entry["name"] = name;
    const std::string file = name + ".bin";
    entry["file"] = file;
    std::vector<uint8_t> bytes;
    if (const auto* q = std::get_if<QTensor>(&tensor)) {
      entry["shape"] = q->shape;
      entry["bits"] = q->bits;
      if (q->scale.size() == 1)
        entry["scale"] = q->scale[0];
      else
        entry["scale"] = q->scale;
      entry["encoding"] = "int-le";
      const int w = detail::int_byte_width(q->bits);
      bytes.reserve(q->data.size() * static_cast<size_t>(w));
      for (int32_t v : q->data) {
        const uint32_t u = static_cast<uint32_t>(v);
        for (int b = 0; b < w; ++b)
          bytes.push_back(static_cast<uint8_t>((u >> (8 * b)) & 0xff));
      }
    } else {
      const auto& p = std::get<PackedBitTensor>(tensor);
      entry["shape"] = p.shape;
      entry["bits"] = 1;
      entry["scale"] = 1.0;
      entry["encoding"] = "packed-bipolar";
      bytes.reserve(p.words.size() * 8);
      for (uint64_t wo : p.words)
        for (int b = 0; b < 8; ++b)
          bytes.push_back(static_cast<uint8_t>((wo >> (8 * b)) & 0xff));
    }
    detail::write_file(dir / file, bytes);
    manifest.push_back(entry);
  }
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
}

inline WeightStore load_bundle(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  nlohmann::json manifest;
  {
    std::ifstream mf(mpath);
    if (!mf) throw Error("no manifest.json in " + dir.string());
    try {
      manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedStream(e.byte, e.what());
    }
  }
  if (!manifest.is_array()) throw MalformedStream(0, "manifest is not an array");
  WeightStore store;
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::string encoding = entry.at("encoding").get<std::string>();
    const auto bytes = detail::read_file(dir / entry.at("file").get<std::string>());
    if (encoding == "packed-bipolar") {
      PackedBitTensor p(shape);
      const size_t expect = p.words.size() * 8;
      if (bytes.size() != expect)
        throw MalformedStream(bytes.size(), "packed tensor '" + name +
                                                "' has wrong byte count");
      for (size_t i = 0; i < p.words.size(); ++i) {
        uint64_t w = 0;
        for (int b = 0; b < 8; ++b)
          w |= static_cast<uint64_t>(bytes[i * 8 + static_cast<size_t>(b)])
               << (8 * b);
        p.words[i] = w;
      }
      if (!p.padding_clear())
        throw MalformedStream(0, "packed tensor '" + name +
                                     "' has nonzero padding bits");
      store.emplace(name, std::move(p));
    } else if (encoding == "int-le") {
      const int bits = entry.at("bits").get<int>();
      QTensor q(shape, bits, 1.0);
      if (entry.at("scale").is_array())
        q.scale = entry.at("scale").get<std::vector<double>>();
      else
        q.scale = {entry.at("scale").get<double>()};
      const int w = detail::int_byte_width(bits);
      const size_t expect = q.data.size() * static_cast<size_t>(w);
      if (bytes.size() != expect)
        throw MalformedStream(bytes.size(),
                              "tensor '" + name + "' has wrong byte count");
      for (size_t i = 0; i < q.data.size(); ++i) {
        uint32_t u = 0;
        for (int b = 0; b < w; ++b)
          u |= static_cast<uint32_t>(bytes[i * static_cast<size_t>(w) +
                                           static_cast<size_t>(b)])
               << (8 * b);
        // sign-extend from the stored byte width
        const int shift = 32 - 8 * w;
        q.data[i] = static_cast<int32_t>(u << shift) >> shift;
      }
      q.check_invariants();
      store.emplace(name, std::move(q));
    } else {
      throw MalformedStream(0, "unknown encoding '" + encoding + "'");
    }
  }
  return store;
}

}  // namespace finnlite
