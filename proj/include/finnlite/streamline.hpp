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

#include <functional>

#include "finnlite/grid.hpp"

namespace finnlite {

struct PassLogEntry {
  std::string pass;
  std::vector<std::string> node_ids;
  int iteration = 0;
};
using PassLog = std::vector<PassLogEntry>;

// Patterns the pass grammar cannot absorb are left in place and reported.
struct PassReport {
  std::string pass;
  std::string node;
  std::string reason;
};

namespace detail {

inline bool is_affine_kind(NodeKind k) {
  return k == NodeKind::Scale || k == NodeKind::Add || k == NodeKind::BatchNorm;
}

inline int64_t graph_channels(const DataflowGraph& g, const std::string& id) {
  const DataflowGraph shaped = infer_shapes(g);
  const Edge* e = shaped.out_edge(id);
  if (!e) throw Error("node '" + id + "' has no out edge");
  return e->shape.size() >= 2 ? e->shape[1] : 1;
}

// Per-channel (a, b) with broadcast semantics matching Executor::apply_affine.
struct AffineStage {
  std::vector<double> a{1.0}, b{0.0};
  double a_at(int64_t c) const {
    return a.size() == 1 ? a[0] : a[static_cast<size_t>(c)];
  }
  double b_at(int64_t c) const {
    return b.size() == 1 ? b[0] : b[static_cast<size_t>(c)];
  }
};

inline AffineStage stage_of(const Node& n) {
  AffineStage s;
  switch (n.kind) {
    case NodeKind::Scale:
      s.a = n.as<ScaleAttrs>().factor;
      break;
    case NodeKind::Add:
      s.b = n.as<AddAttrs>().addend;
      break;
    case NodeKind::BatchNorm:
      bn_affine(n.as<BatchNormAttrs>(), s.a, s.b);
      break;
    default:
      throw Error("stage_of: not an affine node");
  }
  return s;
}

}  // namespace detail

// --------------------------------------------------------------------------
// collapse_affine: fold runs of two or more adjacent Scale/Add/BatchNorm
// nodes into the canonical minimal form (Scale, Add, or Scale followed by
// Add). Single affine nodes stay put; absorb_into_threshold consumes them
// later. Composition arithmetic is exact on the dyadic parameter grids the
// builders emit.
// --------------------------------------------------------------------------

inline DataflowGraph collapse_affine(const DataflowGraph& g, PassLog* log = nullptr,
                                     int iteration = 0, bool* changed_out = nullptr);

// --------------------------------------------------------------------------
// move_scale_past_maxpool: positive scaling commutes with max, so hoist the
// Scale node below the pool. Bit-exact: double multiplication by a positive
// constant is monotone.
// --------------------------------------------------------------------------

inline DataflowGraph move_scale_past_maxpool(const DataflowGraph& g,
                                             PassLog* log = nullptr,
                                             int iteration = 0,
                                             bool* changed_out = nullptr);

// --------------------------------------------------------------------------
// absorb_into_threshold: replace [affine*; QuantActivation|Sign] fed by an
// integer-grid producer with one MultiThreshold over the producer's integer
// levels. The integer threshold for each quantizer decision t is the exact
// crossover of the executor's own double evaluation, found by monotone
// binary search, so the rewrite is bit-exact for arbitrary parameters.
// --------------------------------------------------------------------------

inline DataflowGraph absorb_into_threshold(
    const DataflowGraph& g, PassLog* log = nullptr, int iteration = 0,
    bool* changed_out = nullptr, std::vector<PassReport>* reports = nullptr);

struct StreamlineResult {
  DataflowGraph graph;
  PassLog log;
  std::vector<PassReport> reports;
  int iterations = 0;
};

StreamlineResult streamline_all(const DataflowGraph& g, int max_iterations = 100);

// ===========================================================================
// implementation
// ===========================================================================

namespace detail {

// Rebuild a graph replacing the linear segment `ids` with `replacement`.
// The segment must have exactly one incoming and at most one outgoing edge.
inline DataflowGraph replace_segment(const DataflowGraph& g,
                                     const std::vector<std::string>& ids,
                                     const std::vector<Node>& replacement) {
  auto in_ids = [&](const std::string& s) {
    return std::count(ids.begin(), ids.end(), s) > 0;
  };
  std::string producer, consumer;
  for (const auto& e : g.edges) {
    if (!in_ids(e.from) && in_ids(e.to)) producer = e.from;
    if (in_ids(e.from) && !in_ids(e.to)) consumer = e.to;
  }
  DataflowGraph out;
  out.weights = g.weights;
  for (const auto& n : g.nodes) {
    if (in_ids(n.id)) {
      if (n.id == ids.front())
        for (const auto& r : replacement) out.nodes.push_back(r);
      continue;
    }
    out.nodes.push_back(n);
  }
  for (const auto& e : g.edges)
    if (!in_ids(e.from) && !in_ids(e.to))
      out.edges.push_back({e.from, e.to, {}});
  std::vector<std::string> seq;
  if (!producer.empty()) seq.push_back(producer);
  for (const auto& r : replacement) seq.push_back(r.id);
  if (!consumer.empty()) seq.push_back(consumer);
  for (size_t i = 0; i + 1 < seq.size(); ++i)
    out.edges.push_back({seq[i], seq[i + 1], {}});
  return out;
}

// Nodes with exactly one producer and one consumer can take part in chain
// rewrites.
inline bool single_use(const DataflowGraph& g, const std::string& id) {
  return g.producers(id).size() == 1 && g.consumers(id).size() == 1;
}

inline std::vector<double> broadcast_mul(const std::vector<double>& x,
                                         const std::vector<double>& y) {
  const size_t n = std::max(x.size(), y.size());
  std::vector<double> r(n);
  for (size_t i = 0; i < n; ++i)
    r[i] = (x.size() == 1 ? x[0] : x[i]) * (y.size() == 1 ? y[0] : y[i]);
  return r;
}

inline std::vector<double> broadcast_mul_add(const std::vector<double>& a,
                                             const std::vector<double>& x,
                                             const std::vector<double>& b) {
  const size_t n = std::max({a.size(), x.size(), b.size()});
  std::vector<double> r(n);
  for (size_t i = 0; i < n; ++i)
    r[i] = (a.size() == 1 ? a[0] : a[i]) * (x.size() == 1 ? x[0] : x[i]) +
           (b.size() == 1 ? b[0] : b[i]);
  return r;
}

inline bool all_equal(const std::vector<double>& v, double c) {
  for (double x : v)
    if (x != c) return false;
  return true;
}

}  // namespace detail

inline DataflowGraph collapse_affine(const DataflowGraph& g, PassLog* log,
                                     int iteration, bool* changed_out) {
  DataflowGraph cur = g;
  bool any_change = false;
  bool progress = true;
  while (progress) {
    progress = false;
    auto order = cur.topo_order();
    if (!order) throw Error("collapse_affine: graph has a cycle");
    for (const Node* start : *order) {
      if (!detail::is_affine_kind(start->kind)) continue;
      // maximal affine run from `start`
      std::vector<std::string> run{start->id};
      const Node* walk = start;
      while (true) {
        auto cons = cur.consumers(walk->id);
        if (cons.size() != 1 || !detail::is_affine_kind(cons[0]->kind)) break;
        if (cur.producers(cons[0]->id).size() != 1) break;
        walk = cons[0];
        run.push_back(walk->id);
      }
      // only rewrite a run that begins the chain (so each run is handled once)
      auto prods = cur.producers(start->id);
      if (prods.size() == 1 && detail::is_affine_kind(prods[0]->kind) &&
          cur.consumers(prods[0]->id).size() == 1)
        continue;
      if (run.size() < 2) continue;
      // already canonical [Scale, Add]?
      if (run.size() == 2 && cur.find(run[0])->kind == NodeKind::Scale &&
          cur.find(run[1])->kind == NodeKind::Add)
        continue;
      // compose left to right: y = a*x + b
      std::vector<double> a{1.0}, b{0.0};
      for (const auto& id : run) {
        detail::AffineStage s = detail::stage_of(*cur.find(id));
        a = detail::broadcast_mul(s.a, a);
        b = detail::broadcast_mul_add(s.a, b, s.b);
      }
      std::vector<Node> repl;
      const std::string base = run.front();
      if (!detail::all_equal(a, 1.0) || detail::all_equal(b, 0.0))
        repl.push_back({base + "/scale", NodeKind::Scale, ScaleAttrs{a}});
      if (!detail::all_equal(b, 0.0))
        repl.push_back({base + "/add", NodeKind::Add, AddAttrs{b}});
      cur = detail::replace_segment(cur, run, repl);
      if (log) {
        PassLogEntry e{"collapse_affine", run, iteration};
        log->push_back(std::move(e));
      }
      any_change = true;
      progress = true;
      break;  // topo order invalidated; rescan
    }
  }
  if (changed_out) *changed_out = any_change;
  return cur;
}

inline DataflowGraph move_scale_past_maxpool(const DataflowGraph& g,
                                             PassLog* log, int iteration,
                                             bool* changed_out) {
  DataflowGraph cur = g;
  bool any_change = false;
  bool progress = true;
  while (progress) {
    progress = false;
    for (const auto& n : cur.nodes) {
      if (n.kind != NodeKind::Scale) continue;
      auto cons = cur.consumers(n.id);
      if (cons.size() != 1 || cons[0]->kind != NodeKind::MaxPool) continue;
      if (!detail::single_use(cur, n.id) ||
          cur.producers(cons[0]->id).size() != 1)
        continue;
      const auto& factors = n.as<ScaleAttrs>().factor;
      bool positive = true;
      for (double f : factors) positive = positive && (f > 0.0);
      if (!positive) continue;  // max only commutes with positive scaling
      const Node pool = *cons[0];
      const Node scale = n;
      cur = detail::replace_segment(cur, {scale.id, pool.id}, {pool, scale});
      if (log)
        log->push_back({"move_scale_past_maxpool", {scale.id, pool.id},
                        iteration});
      any_change = true;
      progress = true;
      break;
    }
  }
  if (changed_out) *changed_out = any_change;
  return cur;
}

namespace detail {

// Executor-faithful evaluation of the affine chain on grid index v:
// x = v*scale, then per stage x = (a*x) + b. Monotone in v when every stage
// scale is positive.
inline double eval_chain(int64_t v, double grid_scale,
                         const std::vector<AffineStage>& stages, int64_t c) {
  double x = static_cast<double>(v) * grid_scale;
  for (const auto& s : stages) x = s.a_at(c) * x + s.b_at(c);
  return x;
}

// Smallest v in [lo, hi] with f(v) >= t; hi+1 when none.
inline int64_t crossover(double t, double grid_scale,
                         const std::vector<AffineStage>& stages, int64_t c,
                         int64_t lo, int64_t hi) {
  if (eval_chain(hi, grid_scale, stages, c) < t) return hi + 1;
  if (eval_chain(lo, grid_scale, stages, c) >= t) return lo;
  int64_t bad = lo, good = hi;  // f(bad) < t <= f(good)
  while (good - bad > 1) {
    const int64_t mid = bad + (good - bad) / 2;
    if (eval_chain(mid, grid_scale, stages, c) >= t)
      good = mid;
    else
      bad = mid;
  }
  return good;
}

}  // namespace detail

inline DataflowGraph absorb_into_threshold(const DataflowGraph& g,
                                           PassLog* log, int iteration,
                                           bool* changed_out,
                                           std::vector<PassReport>* reports) {
  DataflowGraph cur = g;
  bool any_change = false;
  bool progress = true;
  std::vector<std::string> skipped;  // do not retry reported patterns
  while (progress) {
    progress = false;
    auto order = cur.topo_order();
    if (!order) throw Error("absorb_into_threshold: graph has a cycle");
    GridMap grids = infer_grids(cur);
    for (const Node* q : *order) {
      const bool is_quant = q->kind == NodeKind::QuantActivation;
      const bool is_sign = q->kind == NodeKind::Sign;
      if (!is_quant && !is_sign) continue;
      if (std::count(skipped.begin(), skipped.end(), q->id)) continue;

      // walk the affine chain upwards
      std::vector<std::string> chain{q->id};
      std::vector<detail::AffineStage> stages;
      const Node* walk = q;
      while (true) {
        auto prods = cur.producers(walk->id);
        if (prods.size() != 1) break;
        const Node* p = prods[0];
        if (!detail::is_affine_kind(p->kind)) break;
        if (cur.consumers(p->id).size() != 1) break;
        stages.insert(stages.begin(), detail::stage_of(*p));
        chain.insert(chain.begin(), p->id);
        walk = p;
      }
      auto prods = cur.producers(chain.front());
      if (prods.size() != 1) continue;
      const auto& grid = grids.at(prods[0]->id);
      auto report = [&](const std::string& reason) {
        if (reports) reports->push_back({"absorb_into_threshold", q->id, reason});
        skipped.push_back(q->id);
      };
      if (!grid) {
        report("producer output carries no integer grid");
        continue;
      }

      const int64_t channels = detail::graph_channels(cur, prods[0]->id);
      // positivity of every stage scale, per channel
      bool monotone = true;
      for (const auto& s : stages)
        for (int64_t c = 0; c < channels && monotone; ++c)
          monotone = s.a_at(c) > 0.0;
      if (!monotone) {
        report("NonMonotoneAffine: affine scale <= 0 on some channel");
        continue;
      }

      QuantActAttrs qa;
      if (is_sign) {
        qa.bits = 1;
        qa.kind = QuantKind::Bipolar;
        qa.scale = 1.0;
      } else {
        qa = q->as<QuantActAttrs>();
      }
      const auto float_t = qa.float_thresholds();
      const int64_t nthr = static_cast<int64_t>(float_t.size());

      MultiThresholdAttrs mt;
      mt.channels = channels;
      mt.levels = nthr + 1;
      mt.thresholds.assign(static_cast<size_t>(channels * nthr), 0);
      mt.out_offset = qa.kind == QuantKind::Bipolar ? -1 : qa.qmin();
      mt.out_scale = qa.kind == QuantKind::Bipolar ? 2 : 1;
      mt.value_scale = qa.scale;
      mt.bipolar = qa.kind == QuantKind::Bipolar;
      mt.out_bits = qa.kind == QuantKind::Bipolar ? 1 : qa.bits;

      bool representable = true;
      for (int64_t c = 0; c < channels && representable; ++c) {
        std::vector<int64_t> T(static_cast<size_t>(nthr));
        for (int64_t k = 0; k < nthr; ++k)
          T[static_cast<size_t>(k)] =
              detail::crossover(float_t[static_cast<size_t>(k)], grid->scale,
                                stages, c, grid->lo, grid->hi);
        // enforce strict monotonicity; spreading is behavior-neutral only
        // outside the reachable range
        for (int64_t k = 1; k < nthr; ++k) {
          auto& tk = T[static_cast<size_t>(k)];
          const auto& prev = T[static_cast<size_t>(k - 1)];
          if (tk > prev) continue;
          if (prev >= grid->hi + 1)
            tk = prev + 1;  // both never crossed
          else
            representable = false;  // genuine multi-level jump
        }
        for (int64_t k = nthr - 2; k >= 0; --k) {
          auto& tk = T[static_cast<size_t>(k)];
          const auto& next = T[static_cast<size_t>(k + 1)];
          if (tk < next) continue;
          if (next <= grid->lo)
            tk = next - 1;  // both always crossed
          else
            representable = false;
        }
        if (!representable) break;
        for (int64_t k = 0; k < nthr; ++k)
          mt.thresholds[static_cast<size_t>(c * nthr + k)] =
              T[static_cast<size_t>(k)];
      }
      if (!representable) {
        report("threshold levels collapse on the input grid");
        continue;
      }

      Node mtn{chain.front() + "/mt", NodeKind::MultiThreshold, mt};
      cur = detail::replace_segment(cur, chain, {mtn});
      if (log) log->push_back({"absorb_into_threshold", chain, iteration});
      any_change = true;
      progress = true;
      break;  // graph changed; rebuild order and grids
    }
  }
  if (changed_out) *changed_out = any_change;
  return cur;
}

inline StreamlineResult streamline_all(const DataflowGraph& g,
                                       int max_iterations) {
  {
    auto violations = validate(g);
    if (!violations.empty())
      throw Error("streamline_all: invalid graph: " +
                  violations.front().message);
  }
  StreamlineResult res;
  res.graph = g;
  for (int it = 0; it < max_iterations; ++it) {
    bool c1 = false, c2 = false, c3 = false;
    res.graph = collapse_affine(res.graph, &res.log, it, &c1);
    res.graph = move_scale_past_maxpool(res.graph, &res.log, it, &c2);
    res.graph =
        absorb_into_threshold(res.graph, &res.log, it, &c3, &res.reports);
    res.iterations = it + 1;
    if (!c1 && !c2 && !c3) return res;
    res.reports.clear();  // only keep reports from the final sweep
  }
  throw FixpointNotReached(max_iterations);
}

// JSON view of the pass log for --dump-pass-log.
inline std::string pass_log_json(const PassLog& log) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : log) {
    nlohmann::json je;
    je["pass"] = e.pass;
    je["node_ids"] = e.node_ids;
    je["iteration"] = e.iteration;
    j.push_back(je);
  }
  return j.dump(1);
}

}  // namespace finnlite
