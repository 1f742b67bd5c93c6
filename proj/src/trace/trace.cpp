#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "topotune/error.hpp"
#include "topotune/kernel.hpp"
#include "topotune/trace.hpp"

namespace topotune {

std::vector<PayloadGemm> payload_gemms(const ModelConfig& model, int tp_degree, int token_count) {
  if (!validate_tp(tp_degree, model)) throw ConfigError("tp degree " + std::to_string(tp_degree) + " is invalid for the model");
  if (token_count < 1) throw ConfigError("token count must be positive");
  if (model.intermediate % tp_degree != 0) throw ConfigError("intermediate size does not split over tp degree");
  const int M = token_count;
  const int q = model.q_heads * model.head_dim / tp_degree;
  const int kv = model.kv_heads * model.head_dim / tp_degree;
  const int ff = model.intermediate / tp_degree;
  return {
      {"q_proj", {M, q, model.hidden}, 1},      {"k_proj", {M, kv, model.hidden}, 1}, {"v_proj", {M, kv, model.hidden}, 1},
      {"o_proj", {M, model.hidden, q}, 1},      {"gate_proj", {M, ff, model.hidden}, 1}, {"up_proj", {M, ff, model.hidden}, 1},
      {"down_proj", {M, model.hidden, ff}, 1}, {"lm_head", {M, model.vocab, model.hidden}, 0},
  };
}

std::vector<GemmShape> payload_shapes(const ModelConfig& model, int tp_degree, int token_count) {
  std::vector<GemmShape> out;
  for (const auto& g : payload_gemms(model, tp_degree, token_count)) {
    if (std::find(out.begin(), out.end(), g.shape) == out.end()) out.push_back(g.shape);
  }
  return out;
}

std::vector<TraceRequest> parse_trace(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  int lineno = 0;
  bool header = false;
  std::vector<TraceRequest> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "arrival_s,prompt_len,output_len") throw ParseError(lineno, "expected header arrival_s,prompt_len,output_len");
      header = true;
      continue;
    }
    TraceRequest r;
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> r.arrival_s >> c1 >> r.prompt_len >> c2 >> r.output_len) || c1 != ',' || c2 != ',') {
      throw ParseError(lineno, "malformed trace row");
    }
    std::string rest;
    if (ls >> rest) throw ParseError(lineno, "trailing data");
    if (r.arrival_s < 0 || r.prompt_len < 1 || r.output_len < 1) throw ParseError(lineno, "trace values out of range");
    out.push_back(r);
  }
  if (!header) throw ParseError(lineno, "missing trace header");
  return out;
}

std::vector<TraceRequest> load_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open trace file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_trace(ss.str());
}

std::string format_trace(const std::vector<TraceRequest>& requests) {
  std::string out = "arrival_s,prompt_len,output_len\n";
  char buf[96];
  for (const auto& r : requests) {
    std::snprintf(buf, sizeof buf, "%.6f,%d,%d\n", r.arrival_s, r.prompt_len, r.output_len);
    out += buf;
  }
  return out;
}

namespace {

template <class Draw>
Workload sample(WorkloadMode mode, double rate, int n, std::uint64_t seed, Draw draw) {
  if (n < 0) throw ConfigError("request count must be non-negative");
  if (mode == WorkloadMode::batched && !(rate > 0)) throw ConfigError("batched workloads need a positive rate");
  Workload w;
  w.mode = mode;
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(mode == WorkloadMode::batched ? rate : 1.0);
  double t = 0;
  for (int i = 0; i < n; ++i) {
    TraceRequest r = draw(rng);
    if (mode == WorkloadMode::batched) {
      t += gap(rng);
      r.arrival_s = t;
    } else {
      r.arrival_s = 0;
    }
    w.requests.push_back(r);
  }
  return w;
}

}  // namespace

Workload sample_workload(const std::vector<TraceRequest>& pool, WorkloadMode mode, double rate, int n, std::uint64_t seed) {
  if (pool.empty() && n > 0) throw ConfigError("empty trace pool");
  return sample(mode, rate, n, seed, [&](std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
  });
}

Workload sample_workload(const LengthGenerator& gen, WorkloadMode mode, double rate, int n, std::uint64_t seed) {
  if (gen.prompt_min < 1 || gen.output_min < 1 || gen.prompt_max < gen.prompt_min || gen.output_max < gen.output_min) {
    throw ConfigError("invalid length generator");
  }
  return sample(mode, rate, n, seed, [&](std::mt19937_64& rng) {
    std::uniform_int_distribution<int> p(gen.prompt_min, gen.prompt_max), o(gen.output_min, gen.output_max);
    TraceRequest r;
    r.prompt_len = p(rng);
    r.output_len = o(rng);
    return r;
  });
}

Schedule default_schedule_upto(const GemmShape& shape, int nthreads) {
  for (int t = nthreads; t >= 1; --t) {
    try {
      return default_schedule(shape, t);
    } catch (const KernelError&) {
    }
  }
  throw KernelError("no default schedule for shape");
}

ScheduleLatency::ScheduleLatency(Profiler& profiler, int nthreads, const std::map<GemmShape, Schedule>* tuned)
    : profiler_(profiler), nthreads_(nthreads), tuned_(tuned) {
  if (nthreads < 1) throw ConfigError("thread count must be positive");
}

Schedule ScheduleLatency::pick(const GemmShape& shape) const {
  if (!tuned_) return default_schedule_upto(shape, nthreads_);
  if (auto it = tuned_->find(shape); it != tuned_->end()) return it->second;
  const Schedule* base = nullptr;
  for (const auto& [sh, s] : *tuned_) {
    if (sh.N == shape.N && sh.K == shape.K && sh.M <= shape.M && (!base || sh.M > base->shape.M)) base = &s;
  }
  if (!base) {
    throw KernelError("no schedule for " + std::to_string(shape.M) + "x" + std::to_string(shape.N) + "x" + std::to_string(shape.K) +
                      " and no smaller-M schedule to extend");
  }
  return extend_schedule(*base, shape);
}

double ScheduleLatency::seconds(const GemmShape& shape) {
  if (auto it = memo_.find(shape); it != memo_.end()) return it->second;
  Schedule s = pick(shape);
  double g = s.gflops;
  if (!(g > 0)) g = profiler_.profile(s);
  if (!(g > 0)) throw ExecError("profiler returned a non-positive rate");
  s.gflops = g;
  used_[shape] = s;
  const double sec = shape.flops() / (g * 1e9);
  memo_[shape] = sec;
  return sec;
}

namespace {

struct StepCost {
  double compute = 0;
  double comm = 0;
};

class Stepper {
 public:
  Stepper(const ServiceConfig& c, const ModelConfig& m, GemmLatency& lat, const SimOptions& o) : cfg_(c), model_(m), lat_(lat), opts_(o) {}

  // Dense GEMMs and all-reduces for `tokens` rows, memoized by token count.
  StepCost dense(int tokens) {
    if (auto it = dense_.find(tokens); it != dense_.end()) return it->second;
    StepCost c;
    double layer = 0;
    double lm = 0;
    for (const auto& g : payload_gemms(model_, cfg_.tp_degree, tokens)) {
      const double s = lat_.seconds(g.shape);
      if (g.per_layer > 0) layer += g.per_layer * s;
      else lm += s;
    }
    c.compute = model_.layers * layer + lm;
    if (cfg_.tp_degree > 1) {
      c.comm = model_.layers * 2.0 * opts_.comm.seconds(static_cast<double>(tokens) * model_.hidden * 4.0);
    }
    dense_[tokens] = c;
    return c;
  }

  // Score and context products for `rows` queries over `ctx` keys, at the q-projection rate.
  double attention(int rows, int ctx) {
    const GemmShape q{rows, model_.q_heads * model_.head_dim / cfg_.tp_degree, model_.hidden};
    const double rate = q.flops() / lat_.seconds(q);
    const double heads = static_cast<double>(model_.q_heads) / cfg_.tp_degree;
    const double flops = 4.0 * rows * static_cast<double>(ctx) * model_.head_dim * heads;
    return model_.layers * flops / rate;
  }

 private:
  const ServiceConfig& cfg_;
  const ModelConfig& model_;
  GemmLatency& lat_;
  const SimOptions& opts_;
  std::map<int, StepCost> dense_;
};

void run_single(Stepper& st, const Workload& w, LatencyReport& rep) {
  for (const auto& r : w.requests) {
    RequestLatency out;
    StepCost pre = st.dense(r.prompt_len);
    double pre_attn = st.attention(r.prompt_len, r.prompt_len);
    out.ttft_s = pre.compute + pre_attn + pre.comm;
    rep.prefill_s += pre.compute + pre_attn;
    rep.comm_s += pre.comm;
    StepCost dec = st.dense(1);
    for (int i = 1; i < r.output_len; ++i) {
      const double attn = st.attention(1, r.prompt_len + i);
      out.tpot_s.push_back(dec.compute + attn + dec.comm);
      rep.decode_s += dec.compute + attn;
      rep.comm_s += dec.comm;
    }
    rep.requests.push_back(std::move(out));
  }
}

void run_batched(Stepper& st, const Workload& w, const SimOptions& opts, LatencyReport& rep) {
  struct Live {
    std::size_t idx;
    int generated;
    double last;
  };
  std::vector<std::size_t> order(w.requests.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w.requests[a].arrival_s < w.requests[b].arrival_s; });
  rep.requests.assign(w.requests.size(), {});
  std::deque<std::size_t> pending(order.begin(), order.end());
  std::vector<Live> live;
  double t = 0;
  while (!pending.empty() || !live.empty()) {
    std::vector<std::size_t> fresh;
    while (!pending.empty() && static_cast<int>(live.size() + fresh.size()) < opts.max_batch && w.requests[pending.front()].arrival_s <= t) {
      fresh.push_back(pending.front());
      pending.pop_front();
    }
    if (live.empty() && fresh.empty()) {
      t = w.requests[pending.front()].arrival_s;
      continue;
    }
    int tokens = 0;
    double attn = 0;
    for (std::size_t i : fresh) {
      const auto& r = w.requests[i];
      tokens += r.prompt_len;
      attn = std::max(attn, st.attention(r.prompt_len, r.prompt_len));
    }
    for (const auto& l : live) {
      tokens += 1;
      attn = std::max(attn, st.attention(1, w.requests[l.idx].prompt_len + l.generated));
    }
    StepCost c = st.dense(tokens);
    const double dt = c.compute + attn + c.comm;
    t += dt;
    if (fresh.empty()) rep.decode_s += c.compute + attn;
    else rep.prefill_s += c.compute + attn;
    rep.comm_s += c.comm;
    std::vector<Live> next;
    for (auto& l : live) {
      rep.requests[l.idx].tpot_s.push_back(t - l.last);
      l.last = t;
      ++l.generated;
      if (l.generated < w.requests[l.idx].output_len) next.push_back(l);
    }
    for (std::size_t i : fresh) {
      rep.requests[i].ttft_s = t - w.requests[i].arrival_s;
      if (w.requests[i].output_len > 1) next.push_back({i, 1, t});
    }
    live = std::move(next);
  }
}

}  // namespace

LatencyReport simulate(const ServiceConfig& config, const ModelConfig& model, GemmLatency& latency, const Workload& workload,
                       const SimOptions& opts) {
  if (!validate_tp(config, model)) throw ConfigError("config tp degree is invalid for the model");
  if (opts.max_batch < 1) throw ConfigError("max batch must be positive");
  LatencyReport rep;
  rep.mode = workload.mode;
  Stepper st(config, model, latency, opts);
  if (workload.mode == WorkloadMode::single_sequence) run_single(st, workload, rep);
  else run_batched(st, workload, opts, rep);
  return rep;
}

double LatencyReport::total_latency_s() const {
  double s = 0;
  for (const auto& r : requests) {
    s += r.ttft_s;
    for (double x : r.tpot_s) s += x;
  }
  return s;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double LatencyReport::p90_ttft_s() const {
  std::vector<double> v;
  for (const auto& r : requests) v.push_back(r.ttft_s);
  return percentile(v, 0.9);
}

double LatencyReport::p90_tpot_s() const {
  std::vector<double> v;
  for (const auto& r : requests) v.insert(v.end(), r.tpot_s.begin(), r.tpot_s.end());
  return percentile(v, 0.9);
}

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

bool request_passes(const RequestLatency& r, const SloSpec& slo) {
  return r.ttft_s <= slo.ttft_limit_s() && mean(r.tpot_s) <= slo.tpot_limit_s();
}

double slo_attainment(const LatencyReport& report, const SloSpec& slo) {
  if (report.requests.empty()) return 1.0;
  const double n = static_cast<double>(report.requests.size());
  if (report.mode == WorkloadMode::single_sequence) {
    double pass = 0;
    for (const auto& r : report.requests) pass += request_passes(r, slo) ? 1 : 0;
    return pass / n;
  }
  double ttft_ok = 0, tpot_ok = 0, tpot_n = 0;
  for (const auto& r : report.requests) {
    ttft_ok += r.ttft_s <= slo.ttft_limit_s() ? 1 : 0;
    for (double x : r.tpot_s) {
      tpot_ok += x <= slo.tpot_limit_s() ? 1 : 0;
      tpot_n += 1;
    }
  }
  const double tpot_frac = tpot_n > 0 ? tpot_ok / tpot_n : 1.0;
  return std::min(ttft_ok / n, tpot_frac);
}

double goodput(const std::function<double(double)>& attainment_at, const std::vector<double>& rates, double goal) {
  if (!std::is_sorted(rates.begin(), rates.end())) throw ConfigError("rates must be ascending");
  double best = 0;
  for (double r : rates) {
    if (attainment_at(r) < goal) break;
    best = r;
  }
  return best;
}

std::string format_report(const LatencyReport& report, const SloSpec& slo) {
  std::string out = "req,ttft_s,p50_tpot_s,p90_tpot_s,pass\n";
  char buf[160];
  for (std::size_t i = 0; i < report.requests.size(); ++i) {
    const auto& r = report.requests[i];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%d\n", i, r.ttft_s, percentile(r.tpot_s, 0.5), percentile(r.tpot_s, 0.9),
                  request_passes(r, slo) ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace topotune
