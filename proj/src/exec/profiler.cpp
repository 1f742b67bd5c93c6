#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "topotune/error.hpp"
#include "topotune/exec.hpp"

namespace topotune {

namespace {

// Slices past the matrix edge compute padding, so their reward is scaled by dim/b.
double locality(double b, double reach, double dim, double threads) {
  const double used = std::min(b, dim);
  return (used / (used + reach)) / (1.0 + used * threads / (2.0 * dim)) * std::min(1.0, dim / b);
}

}  // namespace

CostParams parse_cost_params(std::string_view json_text) {
  CostParams p;
  try {
    auto j = nlohmann::json::parse(json_text);
    p.seconds_per_flop = j.value("seconds_per_flop", p.seconds_per_flop);
    p.reach_M = j.value("reach_M", p.reach_M);
    p.reach_N = j.value("reach_N", p.reach_N);
    p.reach_K = j.value("reach_K", p.reach_K);
    p.split_k_cost = j.value("split_k_cost", p.split_k_cost);
    p.memory_knee = j.value("memory_knee", p.memory_knee);
    p.contention_penalty = j.value("contention_penalty", p.contention_penalty);
    p.speed_floor = j.value("speed_floor", p.speed_floor);
    if (j.contains("domain_depth")) p.domain_depth = j.at("domain_depth").get<int>();
    p.domain_capacity = j.value("domain_capacity", p.domain_capacity);
    if (j.contains("domains")) {
      for (const auto& d : j.at("domains")) {
        ContentionDomain cd;
        cd.cores = d.at("cores").get<std::vector<CoreId>>();
        cd.capacity = d.at("capacity").get<int>();
        p.domains.push_back(std::move(cd));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cost params: ") + e.what());
  }
  if (p.seconds_per_flop <= 0 || p.reach_M <= 0 || p.reach_N <= 0 || p.reach_K <= 0) throw ConfigError("cost params must be positive");
  if (p.contention_penalty < 0) throw ConfigError("contention penalty must be non-negative");
  if (p.speed_floor <= 0 || p.speed_floor > 1) throw ConfigError("speed floor must be in (0,1]");
  if (p.domain_depth && (*p.domain_depth < 0 || p.domain_capacity < 1)) throw ConfigError("domain depth and capacity out of range");
  for (const auto& d : p.domains) {
    if (d.capacity < 1 || d.cores.empty()) throw ConfigError("contention domains need cores and capacity >= 1");
  }
  return p;
}

CostParams load_cost_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cost params " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_cost_params(ss.str());
}

std::vector<ContentionDomain> domains_at(const TopoTree& tree, int depth, int capacity) {
  std::vector<ContentionDomain> out;
  for (const TopoNode* n : tree.nodes_at(depth)) out.push_back({leaf_ids(*n), capacity});
  return out;
}

CostParams bind_domains(CostParams p, const TopoTree& tree) {
  if (!p.domain_depth) return p;
  if (*p.domain_depth > tree.leaf_depth()) throw ConfigError("domain depth exceeds the tree height");
  for (auto& d : domains_at(tree, *p.domain_depth, p.domain_capacity)) p.domains.push_back(std::move(d));
  p.domain_depth.reset();
  return p;
}

double domain_speed(const CostParams& p, const CoreContext& ctx) {
  const std::set<CoreId> active(ctx.active_cores.begin(), ctx.active_cores.end());
  const std::set<CoreId> mine(ctx.process_cores.begin(), ctx.process_cores.end());
  double speed = 1.0;
  for (const auto& d : p.domains) {
    bool touches = false;
    int a = 0;
    for (CoreId c : d.cores) {
      touches = touches || mine.count(c) > 0;
      a += static_cast<int>(active.count(c));
    }
    if (!touches || a == 0) continue;
    const double useful = std::min(a, d.capacity) - p.contention_penalty * std::max(0, a - d.capacity);
    speed = std::min(speed, std::max(p.speed_floor, useful / a));
  }
  return speed;
}

double synthetic_seconds(const Schedule& s, const CostParams& p, double speed) {
  const auto& sh = s.shape;
  const auto& sl = s.slice;
  const auto& po = s.poly;
  const double threads = po.threads();
  const double h = locality(sl.b_M, p.reach_M, sh.M, po.t_M) * locality(sl.b_N, p.reach_N, sh.N, po.t_N) *
                   locality(sl.b_K, p.reach_K, sh.K, po.t_K);
  const double compute = sh.flops() / threads * p.seconds_per_flop / h;
  const double reduce = (po.t_K - 1) * static_cast<double>(sh.M) * sh.N * p.split_k_cost * p.seconds_per_flop / threads;
  const double beta = p.memory_knee / (p.memory_knee + sh.M);
  const double rate = (1.0 - beta) + beta * speed;
  return (compute + reduce) / rate;
}

double synthetic_gflops(const Schedule& s, const CostParams& p, double speed) {
  return s.shape.flops() / synthetic_seconds(s, p, speed) * 1e-9;
}

SyntheticProfiler::SyntheticProfiler(CostParams p, CoreContext ctx) : params_(std::move(p)), speed_(domain_speed(params_, ctx)) {}

double SyntheticProfiler::measure(const Schedule& s) { return synthetic_gflops(s, params_, speed_); }

RealProfiler::RealProfiler(int warmups, int reps, double budget_s) : warmups_(warmups), reps_(reps), budget_s_(budget_s) {
  if (warmups < 0 || reps < 1 || budget_s < 0) throw ConfigError("real profiler needs warmups >= 0, reps >= 1, budget >= 0");
}

double RealProfiler::measure(const Schedule& s) {
  auto it = inputs_.find(s.shape);
  if (it == inputs_.end()) {
    Inputs in{Matrix::random(s.shape.M, s.shape.K, 1), Matrix::random(s.shape.K, s.shape.N, 2), Matrix(s.shape.M, s.shape.N)};
    it = inputs_.emplace(s.shape, std::move(in)).first;
  }
  auto& in = it->second;
  const int nt = s.poly.threads();
  auto over = [&](std::chrono::steady_clock::time_point since) {
    return budget_s_ > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count() >= budget_s_;
  };
  const auto w0 = std::chrono::steady_clock::now();
  for (int i = 0; i < warmups_; ++i) {
    exec_schedule_into(in.A, in.B, s, nt, in.C);
    if (over(w0)) break;
  }
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps_));
  const auto r0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps_; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    exec_schedule_into(in.A, in.B, s, nt, in.C);
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (over(r0)) break;
  }
  std::nth_element(times.begin(), times.begin() + static_cast<long>(times.size() / 2), times.end());
  const double med = std::max(times[times.size() / 2], 1e-9);
  return s.shape.flops() / med * 1e-9;
}

}  // namespace topotune
