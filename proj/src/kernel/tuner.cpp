#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <tuple>

#include "topotune/error.hpp"
#include "topotune/kernel.hpp"

namespace topotune {

namespace {

int total_tiles(const Schedule& s) {
  return ceil_div(s.shape.M, s.slice.b_M) * ceil_div(s.shape.N, s.slice.b_N) * ceil_div(s.shape.K, s.slice.b_K);
}

auto lex(const Schedule& s) {
  return std::make_tuple(s.slice.b_M, s.slice.b_N, s.slice.b_K, s.poly.t_M, s.poly.t_N, s.poly.t_K, s.slice.mk.mu_M, s.slice.mk.mu_N);
}

using Key = std::tuple<int, int, int, int, int, int, int, int, int, int, int>;

Key key_of(const Schedule& s) {
  return {s.shape.M, s.shape.N, s.shape.K, s.slice.mk.mu_M, s.slice.mk.mu_N, s.slice.b_M, s.slice.b_N, s.slice.b_K, s.poly.t_M, s.poly.t_N, s.poly.t_K};
}

// Profiles each distinct schedule once per tuning call.
class Memo {
 public:
  explicit Memo(Profiler& p) : p_(p) {}
  double operator()(const Schedule& s) {
    auto k = key_of(s);
    auto it = seen_.find(k);
    if (it != seen_.end()) return it->second;
    double g = p_.profile(s);
    seen_.emplace(k, g);
    return g;
  }

 private:
  Profiler& p_;
  std::map<Key, double> seen_;
};

Schedule with(const GemmShape& shape, const Slice& slice, const Polymerization& poly) {
  Schedule s;
  s.shape = shape;
  s.slice = slice;
  s.poly = poly;
  return s;
}

int& dim_of(Slice& s, int d) { return d == 0 ? s.b_M : d == 1 ? s.b_N : s.b_K; }
int extent_of(const GemmShape& sh, int d) { return d == 0 ? sh.M : d == 1 ? sh.N : sh.K; }
int step_of(const Slice& s, int d, const SimdDesc& simd) { return d == 0 ? s.mk.mu_M : d == 1 ? s.mk.mu_N : simd.k_step(); }

Slice fast_start_memo(const GemmShape& shape, const MicroKernel& mk, int nthreads, Memo& prof, const SimdDesc& simd) {
  if (!mk_fits(mk, shape)) throw KernelError("micro-kernel does not fit the shape");
  Slice s{mk.mu_M, mk.mu_N, simd.k_step(), mk};
  auto score = [&](const Slice& sl) {
    auto poly = cheapest_poly(shape, sl, nthreads);
    return poly ? prof(with(shape, sl, *poly)) : -std::numeric_limits<double>::infinity();
  };
  double g = score(s);
  int accepted[3] = {0, 0, 0};
  bool frozen[3] = {false, false, false};
  const int order[3] = {0, 2, 1};
  while (!(frozen[0] && frozen[1] && frozen[2])) {
    for (int d : order) {
      if (frozen[d]) continue;
      Slice cand = s;
      const int next = dim_of(cand, d) + (1 << accepted[d]) * step_of(s, d, simd);
      if (next > ceil_div(extent_of(shape, d), nthreads)) {
        frozen[d] = true;
        continue;
      }
      dim_of(cand, d) = next;
      const double gc = score(cand);
      if (gc > g) {
        s = cand;
        g = gc;
        ++accepted[d];
      } else {
        frozen[d] = true;
      }
    }
  }
  return s;
}

}  // namespace

std::vector<MicroKernel> gen_micro_kernels(const SimdDesc& simd) {
  std::vector<MicroKernel> out;
  const int vw = simd.vector_width_elems;
  for (int nr = vw; regs_for(1, nr, vw) <= simd.vector_registers; nr += vw) {
    for (int mr = 1; regs_for(mr, nr, vw) <= simd.vector_registers; ++mr) out.push_back(make_mk(mr, nr, simd));
  }
  std::sort(out.begin(), out.end(), [](const MicroKernel& a, const MicroKernel& b) {
    return std::make_tuple(a.regs_used, a.mu_M * a.mu_N, a.mu_N) > std::make_tuple(b.regs_used, b.mu_M * b.mu_N, b.mu_N);
  });
  return out;
}

bool mk_fits(const MicroKernel& mk, const GemmShape& shape) { return mk.mu_M <= shape.M && mk.mu_N <= shape.N; }

std::vector<Polymerization> enumerate_polymerizations(const GemmShape& shape, int nthreads) {
  if (nthreads < 1) throw KernelError("nthreads must be positive");
  std::vector<Polymerization> out;
  for (int tk = 1; tk <= nthreads; ++tk) {
    if (nthreads % tk) continue;
    const int rest = nthreads / tk;
    for (int tm = rest; tm >= 1; --tm) {
      if (rest % tm) continue;
      Polymerization p{tm, rest / tm, tk};
      if (p.t_M <= shape.M && p.t_N <= shape.N && p.t_K <= shape.K) out.push_back(p);
    }
  }
  return out;
}

double poly_cost(const GemmShape& shape, const Slice& slice, const Polymerization& poly) {
  const double per_thread = static_cast<double>(ceil_div(ceil_div(shape.M, slice.b_M), poly.t_M)) *
                            ceil_div(ceil_div(shape.N, slice.b_N), poly.t_N) * ceil_div(ceil_div(shape.K, slice.b_K), poly.t_K);
  const double tile_flops = 2.0 * slice.b_M * slice.b_N * slice.b_K;
  return per_thread * tile_flops + (poly.t_K - 1) * static_cast<double>(shape.M) * shape.N;
}

std::optional<Polymerization> cheapest_poly(const GemmShape& shape, const Slice& slice, int nthreads) {
  std::optional<Polymerization> best;
  double best_cost = 0;
  for (const auto& p : enumerate_polymerizations(shape, nthreads)) {
    if (!feasible(shape, slice, p)) continue;
    const double c = poly_cost(shape, slice, p);
    if (!best || c < best_cost) {
      best = p;
      best_cost = c;
    }
  }
  return best;
}

bool better(const Schedule& a, const Schedule& b) {
  if (a.gflops != b.gflops) return a.gflops > b.gflops;
  const int ta = total_tiles(a), tb = total_tiles(b);
  if (ta != tb) return ta < tb;
  return lex(a) < lex(b);
}

Slice fast_start(const GemmShape& shape, const MicroKernel& mk, int nthreads, Profiler& profiler, const SimdDesc& simd) {
  Memo memo(profiler);
  return fast_start_memo(shape, mk, nthreads, memo, simd);
}

Schedule finetune(const GemmShape& shape, const std::vector<MicroKernel>& candidates, int nthreads, Profiler& profiler,
                  const SimdDesc& simd, const FinetuneOptions& opts) {
  if (candidates.empty() && !opts.fixed_slice) throw KernelError("finetune needs at least one micro-kernel");
  Memo prof(profiler);
  std::optional<Schedule> best;
  std::vector<Slice> starts;
  if (opts.fixed_slice) {
    starts.push_back(*opts.fixed_slice);
  } else {
    for (const auto& mk : candidates) {
      if (mk_fits(mk, shape)) starts.push_back(fast_start_memo(shape, mk, nthreads, prof, simd));
    }
  }
  std::vector<Polymerization> polys = opts.fixed_poly ? std::vector<Polymerization>{*opts.fixed_poly} : enumerate_polymerizations(shape, nthreads);
  for (const Slice& s0 : starts) {
    for (const auto& poly : polys) {
      if (poly.threads() != nthreads || !feasible(shape, s0, poly)) continue;
      Schedule cur = with(shape, s0, poly);
      cur.gflops = prof(cur);
      while (!opts.fixed_slice) {
        std::optional<Schedule> step;
        for (int d = 0; d < 3; ++d) {
          Slice grown = cur.slice;
          if (dim_of(grown, d) >= extent_of(shape, d)) continue;
          dim_of(grown, d) += step_of(grown, d, simd);
          if (!feasible(shape, grown, poly)) continue;
          Schedule cand = with(shape, grown, poly);
          cand.gflops = prof(cand);
          if (cand.gflops > cur.gflops && (!step || cand.gflops > step->gflops)) step = cand;
        }
        if (!step) break;
        cur = *step;
      }
      if (!best || better(cur, *best)) best = cur;
    }
  }
  if (!best) throw KernelError("no feasible schedule for shape " + std::to_string(shape.M) + "x" + std::to_string(shape.N) + "x" + std::to_string(shape.K));
  return *best;
}

Schedule extend_schedule(const Schedule& frozen, const GemmShape& larger) {
  if (larger.M < frozen.shape.M || larger.N != frozen.shape.N || larger.K != frozen.shape.K) {
    throw KernelError("extend_schedule needs a shape with larger M and equal N, K");
  }
  Schedule s = frozen;
  s.shape = larger;
  s.gflops = 0.0;
  SimdDesc simd;
  simd.vector_width_elems = 1;
  simd.vector_registers = std::numeric_limits<int>::max();
  validate_schedule(s, simd);
  return s;
}

Schedule default_schedule(const GemmShape& shape, int nthreads, const SimdDesc& simd) {
  auto mks = gen_micro_kernels(simd);
  MicroKernel mk = mks.back();
  for (const auto& m : mks) {
    if (mk_fits(m, shape)) {
      mk = m;
      break;
    }
  }
  for (int scale : {2, 1}) {
    Slice s{scale * mk.mu_M, scale * mk.mu_N, simd.k_step(), mk};
    if (auto p = cheapest_poly(shape, s, nthreads)) return with(shape, s, *p);
  }
  throw KernelError("no feasible default schedule for " + std::to_string(nthreads) + " threads");
}

TuneResult tune_shape_group(const std::vector<GemmShape>& shapes, const TuneParams& params, int nthreads, Profiler& profiler,
                            const SimdDesc& simd) {
  if (params.sigma < 1 || params.reuse_tol <= 0 || params.reuse_tol >= 1 || params.reuse_patience < 1) {
    throw KernelError("invalid tuning parameters");
  }
  const std::vector<MicroKernel> all = gen_micro_kernels(simd);
  auto densest_fitting = [&](const GemmShape& shape) {
    std::vector<MicroKernel> out;
    for (const auto& mk : all) {
      if (params.max_micro_kernels > 0 && out.size() >= params.max_micro_kernels) break;
      if (mk_fits(mk, shape)) out.push_back(mk);
    }
    return out;
  };

  TuneResult out;
  std::deque<MicroKernel> window;
  std::optional<Slice> frozen_slice;
  std::optional<Polymerization> frozen_poly;
  std::vector<Schedule> optima;
  int slice_streak = 0, poly_streak = 0;
  std::size_t tuned = 0;
  const std::size_t calls_before = profiler.calls();

  for (const GemmShape& shape : shapes) {
    ShapeTuneRecord rec;
    rec.shape = shape;
    if (out.schedules.count(shape)) {
      rec.cached = true;
      out.records.push_back(rec);
      continue;
    }
    const std::size_t c0 = profiler.calls();
    std::vector<MicroKernel> cands;
    if (tuned < static_cast<std::size_t>(params.sigma)) {
      cands = params.max_micro_kernels > 0 ? densest_fitting(shape) : all;
    } else {
      for (const auto& mk : all) {
        if (std::find(window.begin(), window.end(), mk) != window.end()) cands.push_back(mk);
      }
    }
    rec.candidates = cands;
    rec.slice_frozen = frozen_slice.has_value();
    rec.poly_frozen = frozen_poly.has_value();

    Schedule s;
    if (frozen_slice && frozen_poly) {
      s = extend_schedule(optima.back(), shape);
      s.gflops = profiler.profile(s);
    } else {
      FinetuneOptions o;
      o.fixed_slice = frozen_slice;
      o.fixed_poly = frozen_poly;
      std::vector<MicroKernel> fit;
      for (const auto& mk : cands) {
        if (mk_fits(mk, shape)) fit.push_back(mk);
      }
      if (fit.empty() && !frozen_slice) fit = densest_fitting(shape);
      s = finetune(shape, fit, nthreads, profiler, simd, o);
    }

    if (!optima.empty()) {
      const std::size_t n = std::min(optima.size(), static_cast<std::size_t>(params.reuse_patience));
      double avg = 0;
      for (std::size_t i = optima.size() - n; i < optima.size(); ++i) avg += optima[i].gflops;
      avg /= static_cast<double>(n);
      const bool steady = avg > 0 && std::abs(s.gflops - avg) / avg < params.reuse_tol;
      slice_streak = (steady && s.slice == optima.back().slice) ? slice_streak + 1 : 0;
      poly_streak = (steady && s.poly == optima.back().poly) ? poly_streak + 1 : 0;
      if (!frozen_slice && slice_streak >= params.reuse_patience) frozen_slice = s.slice;
      if (!frozen_poly && poly_streak >= params.reuse_patience) frozen_poly = s.poly;
    }
    optima.push_back(s);
    window.push_back(s.slice.mk);
    if (window.size() > static_cast<std::size_t>(params.sigma)) window.pop_front();
    ++tuned;

    rec.profiler_calls = profiler.calls() - c0;
    out.schedules[shape] = s;
    out.records.push_back(rec);
  }
  out.profiler_calls = profiler.calls() - calls_before;
  return out;
}

}  // namespace topotune
