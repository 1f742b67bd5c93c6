#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "topotune/profiler.hpp"
#include "topotune/schedule.hpp"

namespace topotune {

/// Register-feasible micro-kernels, densest first (regs, then area, then mu_N).
std::vector<MicroKernel> gen_micro_kernels(const SimdDesc& simd = {});
bool mk_fits(const MicroKernel& mk, const GemmShape& shape);

/// Factor triples of nthreads bounded by the shape, t_K ascending then t_M descending.
std::vector<Polymerization> enumerate_polymerizations(const GemmShape& shape, int nthreads);

/// Analytic cost used where nothing is profiled.
double poly_cost(const GemmShape& shape, const Slice& slice, const Polymerization& poly);
std::optional<Polymerization> cheapest_poly(const GemmShape& shape, const Slice& slice, int nthreads);

Slice fast_start(const GemmShape& shape, const MicroKernel& mk, int nthreads, Profiler& profiler, const SimdDesc& simd = {});

struct FinetuneOptions {
  std::optional<Slice> fixed_slice;
  std::optional<Polymerization> fixed_poly;
};

Schedule finetune(const GemmShape& shape, const std::vector<MicroKernel>& candidates, int nthreads, Profiler& profiler,
                  const SimdDesc& simd = {}, const FinetuneOptions& opts = {});

/// Strict order used for every tie: higher GFLOPS, fewer tiles, then lexicographic fields.
bool better(const Schedule& a, const Schedule& b);

struct TuneParams {
  int sigma = 16;
  double reuse_tol = 0.05;
  int reuse_patience = 4;
  // per shape, only the densest fitting micro-kernels are tried; 0 keeps all
  std::size_t max_micro_kernels = 0;
};

struct ShapeTuneRecord {
  GemmShape shape;
  std::vector<MicroKernel> candidates;
  bool slice_frozen = false;
  bool poly_frozen = false;
  bool cached = false;
  std::size_t profiler_calls = 0;
};

struct TuneResult {
  std::map<GemmShape, Schedule> schedules;
  std::vector<ShapeTuneRecord> records;
  std::size_t profiler_calls = 0;
};

TuneResult tune_shape_group(const std::vector<GemmShape>& shapes, const TuneParams& params, int nthreads, Profiler& profiler,
                            const SimdDesc& simd = {});

Schedule extend_schedule(const Schedule& frozen, const GemmShape& larger);

Schedule default_schedule(const GemmShape& shape, int nthreads, const SimdDesc& simd = {});

}  // namespace topotune
