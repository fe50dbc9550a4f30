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

#include <atomic>
#include <iomanip>
#include <thread>

#include "finnlite/executor.hpp"
#include "finnlite/tile.hpp"

namespace finnlite {

// Default tiles-per-frame for FullHD frames: floor(1920/32)*floor(1080/32).
constexpr int64_t kDefaultTilesPerFrame = 60 * 33;

// Real-time reference frame rate of the camera; speedups are reported
// against this.
constexpr double kRealTimeFps = 25.0;

struct FpsReport {
  double fps_chunk = 0.0;
  double fps_image = 0.0;
  double t_avg_ns = 0.0;
  int64_t n_c = 0;
};

inline FpsReport fps_report(const std::vector<int64_t>& timings_ns,
                            int64_t n_c) {
  if (timings_ns.empty()) throw EmptyTimings();
  if (n_c < 1) throw Error("n_c must be >= 1");
  double sum = 0.0;
  for (int64_t t : timings_ns) sum += static_cast<double>(t);
  FpsReport r;
  r.t_avg_ns = sum / static_cast<double>(timings_ns.size());
  r.fps_chunk = 1e9 / r.t_avg_ns;
  r.fps_image = r.fps_chunk * static_cast<double>(n_c);
  r.n_c = n_c;
  return r;
}

struct EvalReport {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  FpsReport compute;      // kernel time only
  FpsReport end_to_end;   // including tile decode and conversion
  int64_t n_tiles = 0;

  void finalize_metrics() {
    precision = (tp + fp) > 0
                    ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                    : 0.0;
    recall = (tp + fn) > 0
                 ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                 : 0.0;
    f1 = (precision + recall) > 0.0
             ? 2.0 * precision * recall / (precision + recall)
             : 0.0;
    n_tiles = tp + fp + fn + tn;
  }
};

inline nlohmann::json eval_report_json(const EvalReport& r) {
  nlohmann::json j;
  j["schema"] = 1;
  j["confusion"] = {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn}};
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["n_tiles"] = r.n_tiles;
  j["timing"] = {
      {"compute",
       {{"t_avg_ns", r.compute.t_avg_ns},
        {"fps_chunk", r.compute.fps_chunk},
        {"fps_image", r.compute.fps_image},
        {"n_c", r.compute.n_c}}},
      {"end_to_end",
       {{"t_avg_ns", r.end_to_end.t_avg_ns},
        {"fps_chunk", r.end_to_end.fps_chunk},
        {"fps_image", r.end_to_end.fps_image},
        {"n_c", r.end_to_end.n_c}}},
      {"speedup_vs_realtime", r.compute.fps_chunk / kRealTimeFps}};
  return j;
}

inline std::string eval_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << "tiles " << r.n_tiles << "  TP " << r.tp << "  FP " << r.fp << "  FN "
     << r.fn << "  TN " << r.tn << '\n'
     << std::fixed << std::setprecision(4) << "precision " << r.precision
     << "  recall " << r.recall << "  f1 " << r.f1 << '\n'
     << std::setprecision(2) << "fps_chunk " << r.compute.fps_chunk
     << "  fps_image " << r.compute.fps_image << " (n_c " << r.compute.n_c
     << ")" << '\n';
  return os.str();
}

// Bar-chart data mirroring the metric and frame-rate figures.
inline std::string eval_plot_csv(const std::string& model,
                                 const EvalReport& r) {
  std::ostringstream os;
  os << "model,metric,value\n";
  os << model << ",precision," << r.precision * 100.0 << '\n';
  os << model << ",recall," << r.recall * 100.0 << '\n';
  os << model << ",f1," << r.f1 * 100.0 << '\n';
  os << model << ",fps_chunk," << r.compute.fps_chunk << '\n';
  os << model << ",fps_image," << r.compute.fps_image << '\n';
  return os.str();
}

// --------------------------------------------------------------------------
// Batch inference over tiles with a deterministic worker pool. Tiles are
// processed in any order but merged by index, so worker count never changes
// predictions or counts.
// --------------------------------------------------------------------------

struct TilePrediction {
  std::string frame_id;
  int64_t row = 0, col = 0;
  Label label = Label::Unlabeled;
  int prediction = 0;
  double score = 0.0;
  int64_t compute_ns = 0;
  int64_t total_ns = 0;
};

// In-memory tile source so evaluation works for both on-disk datasets and
// synthetic sets.
struct TileSample {
  Image pixels;
  Label label = Label::Unlabeled;
  std::string frame_id;
  int64_t row = 0, col = 0;
};

inline std::vector<TilePrediction> predict_tiles(
    const DataflowGraph& g, const std::vector<TileSample>& tiles, int workers,
    ExecMode mode = ExecMode::Fast) {
  if (workers < 1) workers = 1;
  std::vector<TilePrediction> out(tiles.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    Executor ex(g, mode);
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tiles.size()) break;
      const auto t0 = std::chrono::steady_clock::now();
      const FTensor input = image_to_tensor(tiles[i].pixels);
      const ExecResult r = ex.run(input);
      const auto t1 = std::chrono::steady_clock::now();
      TilePrediction& p = out[i];
      p.frame_id = tiles[i].frame_id;
      p.row = tiles[i].row;
      p.col = tiles[i].col;
      p.label = tiles[i].label;
      p.score = r.output.data.at(0);
      p.prediction = p.score >= 0.0 ? 1 : 0;
      p.compute_ns = r.total_ns;
      p.total_ns =
          std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)
              .count();
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

inline EvalReport score_predictions(const std::vector<TilePrediction>& preds,
                                    int64_t n_c) {
  EvalReport rep;
  std::vector<int64_t> compute, total;
  compute.reserve(preds.size());
  total.reserve(preds.size());
  for (const auto& p : preds) {
    const bool truth = p.label == Label::Grape;
    const bool pred = p.prediction == 1;
    rep.tp += truth && pred;
    rep.fp += !truth && pred;
    rep.fn += truth && !pred;
    rep.tn += !truth && !pred;
    compute.push_back(p.compute_ns);
    total.push_back(p.total_ns);
  }
  rep.finalize_metrics();
  rep.compute = fps_report(compute, n_c);
  rep.end_to_end = fps_report(total, n_c);
  return rep;
}

inline std::vector<TileSample> load_tile_samples(
    const std::vector<TileEntry>& entries) {
  std::vector<TileSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    TileSample s;
    s.pixels = read_image(e.path);
    s.label = e.label;
    s.frame_id = e.frame_id;
    s.row = e.row;
    s.col = e.col;
    out.push_back(std::move(s));
  }
  return out;
}

// Evaluate a graph over one split of an on-disk dataset.
inline EvalReport evaluate(const DataflowGraph& g, const DatasetIndex& index,
                           const std::string& split, int workers = 1,
                           int64_t n_c = kDefaultTilesPerFrame,
                           std::vector<TilePrediction>* predictions = nullptr) {
  const auto& entries = index.split(split);
  if (entries.empty()) throw EmptySplit(split);
  auto samples = load_tile_samples(entries);
  auto preds = predict_tiles(g, samples, workers);
  EvalReport rep = score_predictions(preds, n_c);
  if (predictions) *predictions = std::move(preds);
  return rep;
}

}  // namespace finnlite
