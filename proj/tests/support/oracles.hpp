#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <set>
#include <vector>

#include "topotune/kernel.hpp"
#include "topotune/search.hpp"

namespace topotune::oracle {

// Slice sizes reachable by single tile-steps from `start` without overshooting the extent.
inline std::vector<int> grid_1d(int start, int step, int extent) {
  std::vector<int> out{start};
  while (out.back() < extent) out.push_back(out.back() + step);
  return out;
}

struct ExhaustiveResult {
  Schedule best;
  std::size_t max_grid_points = 0;
  std::size_t evaluated = 0;
};

// Brute force over (MK, poly, slice grid anchored at the fast-start slice of each MK).
inline std::optional<ExhaustiveResult> exhaustive_schedule(const GemmShape& shape, const std::vector<MicroKernel>& mks, int nthreads,
                                                           Profiler& prof, const SimdDesc& simd) {
  std::optional<ExhaustiveResult> res;
  for (const auto& mk : mks) {
    if (!mk_fits(mk, shape)) continue;
    Slice s0 = fast_start(shape, mk, nthreads, prof, simd);
    auto gm = grid_1d(s0.b_M, mk.mu_M, shape.M);
    auto gn = grid_1d(s0.b_N, mk.mu_N, shape.N);
    auto gk = grid_1d(s0.b_K, simd.k_step(), shape.K);
    for (const auto& poly : enumerate_polymerizations(shape, nthreads)) {
      std::size_t points = 0;
      for (int bm : gm)
        for (int bn : gn)
          for (int bk : gk) {
            Schedule s;
            s.shape = shape;
            s.slice = {bm, bn, bk, mk};
            s.poly = poly;
            if (!feasible(shape, s.slice, poly)) continue;
            ++points;
            s.gflops = prof.profile(s);
            if (!res) res = ExhaustiveResult{s, 0, 0};
            else if (better(s, res->best)) res->best = s;
            ++res->evaluated;
          }
      if (res) res->max_grid_points = std::max(res->max_grid_points, points);
    }
  }
  return res;
}

// `roots` followed by every removal descendant, canonical-digest deduplicated.
inline std::vector<TopoTree> with_removal_descendants(std::vector<TopoTree> out) {
  std::set<TreeDigest> seen;
  for (const auto& t : out) seen.insert(canonical_digest(t));
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < out.size(); ++i) queue.push_back(i);
  while (!queue.empty()) {
    const TopoTree t = out[queue.front()];
    queue.pop_front();
    for (const auto& op : candidate_removes(t)) {
      TopoTree c = apply_remove(t, op);
      if (seen.insert(canonical_digest(c)).second) {
        queue.push_back(out.size());
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

inline std::vector<TopoTree> all_transformed_trees(const TopoTree& fundamental) {
  return with_removal_descendants(enumerate_group_closure(fundamental));
}

struct ExhaustiveConfig {
  Evaluation best;
  std::size_t trees = 0;
  std::size_t evaluations = 0;
};

// Every valid config of every tree, ranked by latency then config key.
inline ExhaustiveConfig exhaustive_config(const std::vector<TopoTree>& trees, const ModelConfig& model, ConfigSimulator& sim) {
  ExhaustiveConfig res;
  res.trees = trees.size();
  std::set<std::string> keys;
  bool have = false;
  for (const auto& t : trees) {
    for (const auto& c : enumerate_configs(t)) {
      if (!validate_tp(c, model) || !keys.insert(config_key(c)).second) continue;
      Evaluation e = sim.evaluate(c);
      ++res.evaluations;
      if (!have || e.latency_s < res.best.latency_s ||
          (e.latency_s == res.best.latency_s && config_key(e.config) < config_key(res.best.config))) {
        res.best = e;
        have = true;
      }
    }
  }
  return res;
}

}  // namespace topotune::oracle
