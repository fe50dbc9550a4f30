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
#include <charconv>

#include "finnlite/image.hpp"

namespace finnlite {

constexpr int64_t kTileSize = 32;

enum class Label { Grape, NoGrape, Unlabeled };

inline const char* label_dir(Label l) {
  switch (l) {
    case Label::Grape: return "grape";
    case Label::NoGrape: return "no_grape";
    case Label::Unlabeled: return "unlabeled";
  }
  return "?";
}

// One 32x32 chunk of a frame: grid position, pixel rect, label, and the
// prediction fields filled during evaluation.
struct TileRecord {
  std::string frame_id;
  int64_t row = 0, col = 0;
  int64_t x0 = 0, y0 = 0;  // pixel rect origin; extent is kTileSize square
  Label label = Label::Unlabeled;
  int prediction = -1;  // 1 grape, 0 no_grape, -1 not evaluated
  double score = 0.0;   // logit
  int64_t infer_ns = 0;
};

// Non-overlapping 32x32 grid, row-major; partial right/bottom strips are
// dropped.
inline std::vector<TileRecord> split_frame(int64_t width, int64_t height,
                                           const std::string& frame_id = "") {
  if (width < kTileSize || height < kTileSize)
    throw FrameTooSmall(width, height);
  const int64_t cols = width / kTileSize, rows = height / kTileSize;
  std::vector<TileRecord> out;
  out.reserve(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      TileRecord t;
      t.frame_id = frame_id;
      t.row = r;
      t.col = c;
      t.x0 = c * kTileSize;
      t.y0 = r * kTileSize;
      out.push_back(std::move(t));
    }
  return out;
}

inline std::vector<TileRecord> split_frame(const Image& img,
                                           const std::string& frame_id = "") {
  return split_frame(img.width, img.height, frame_id);
}

inline Image tile_pixels(const Image& frame, const TileRecord& t) {
  return frame.crop(t.x0, t.y0, kTileSize, kTileSize);
}

// Colour-threshold pre-labeler: grape iff the fraction of pixels inside the
// HSV range reaches min_fraction.
inline Label prelabel_color_threshold(const Image& tile,
                                      const HsvRange& range = {},
                                      double min_fraction = 0.25) {
  if (min_fraction < 0.0 || min_fraction > 1.0)
    throw Error("min_fraction must be within [0, 1]");
  const int64_t total = tile.width * tile.height;
  int64_t inside = 0;
  for (int64_t y = 0; y < tile.height; ++y)
    for (int64_t x = 0; x < tile.width; ++x) {
      const uint8_t* p = tile.pixel(x, y);
      if (range.contains(rgb_to_hsv(p[0], p[1], p[2]))) ++inside;
    }
  return static_cast<double>(inside) >=
                 min_fraction * static_cast<double>(total)
             ? Label::Grape
             : Label::NoGrape;
}

// --------------------------------------------------------------------------
// Dataset index: <root>/<split>/<grape|no_grape>/<frame>_<row>_<col>.png
// --------------------------------------------------------------------------

struct TileEntry {
  std::filesystem::path path;
  Label label = Label::Unlabeled;
  std::string frame_id;
  int64_t row = 0, col = 0;
};

struct DatasetIndex {
  std::vector<TileEntry> train, val, test;

  const std::vector<TileEntry>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw Error("unknown split '" + name + "'");
  }
};

// Contiguous 60/20/20 split by acquisition sequence: train takes the first
// ceil(0.6 n) frames, validation the next floor(0.2 n), test the remainder.
// All tiles of a frame share its split.
struct SplitSizes {
  int64_t train = 0, val = 0, test = 0;
};

inline SplitSizes split_sizes(int64_t n_frames) {
  SplitSizes s;
  s.train = (6 * n_frames + 9) / 10;  // ceil(0.6 n)
  s.val = (2 * n_frames) / 10;        // floor(0.2 n)
  s.test = n_frames - s.train - s.val;
  return s;
}

template <typename Frame>
inline void make_splits(const std::vector<Frame>& frames_in_order,
                        std::vector<Frame>& train, std::vector<Frame>& val,
                        std::vector<Frame>& test) {
  const auto sz = split_sizes(static_cast<int64_t>(frames_in_order.size()));
  train.assign(frames_in_order.begin(), frames_in_order.begin() + sz.train);
  val.assign(frames_in_order.begin() + sz.train,
             frames_in_order.begin() + sz.train + sz.val);
  test.assign(frames_in_order.begin() + sz.train + sz.val,
              frames_in_order.end());
}

namespace detail {

// "<frame>_<row>_<col>" with the two trailing fields numeric; frames may
// contain underscores themselves. Falls back to (stem, 0, 0).
inline void parse_tile_stem(const std::string& stem, std::string& frame,
                            int64_t& row, int64_t& col) {
  frame = stem;
  row = col = 0;
  const auto p2 = stem.rfind('_');
  if (p2 == std::string::npos) return;
  const auto p1 = stem.rfind('_', p2 - 1);
  if (p1 == std::string::npos) return;
  int64_t r = 0, c = 0;
  const char* rbeg = stem.data() + p1 + 1;
  const char* rend = stem.data() + p2;
  const char* cbeg = stem.data() + p2 + 1;
  const char* cend = stem.data() + stem.size();
  auto rr = std::from_chars(rbeg, rend, r);
  auto cc = std::from_chars(cbeg, cend, c);
  if (rr.ec != std::errc{} || rr.ptr != rend || cc.ec != std::errc{} ||
      cc.ptr != cend)
    return;
  frame = stem.substr(0, p1);
  row = r;
  col = c;
}

inline void scan_class_dir(const std::filesystem::path& dir, Label label,
                           std::vector<TileEntry>& out) {
  if (!std::filesystem::exists(dir)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    TileEntry t;
    t.path = p;
    t.label = label;
    parse_tile_stem(p.stem().string(), t.frame_id, t.row, t.col);
    out.push_back(std::move(t));
  }
}

}  // namespace detail

inline DatasetIndex load_dataset(const std::filesystem::path& root) {
  DatasetIndex idx;
  for (const char* split : {"train", "val", "test"}) {
    auto& dst = split == std::string("train")
                    ? idx.train
                    : split == std::string("val") ? idx.val : idx.test;
    detail::scan_class_dir(root / split / "grape", Label::Grape, dst);
    detail::scan_class_dir(root / split / "no_grape", Label::NoGrape, dst);
  }
  return idx;
}

inline std::filesystem::path tile_path(const std::filesystem::path& root,
                                       const std::string& split,
                                       const TileRecord& t) {
  return root / split / label_dir(t.label) /
         (t.frame_id + "_" + std::to_string(t.row) + "_" +
          std::to_string(t.col) + ".png");
}

inline void write_tile(const std::filesystem::path& root,
                       const std::string& split, const TileRecord& t,
                       const Image& pixels) {
  const auto path = tile_path(root, split, t);
  std::filesystem::create_directories(path.parent_path());
  write_png(pixels, path);
}

}  // namespace finnlite
