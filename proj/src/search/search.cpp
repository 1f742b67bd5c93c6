#include <algorithm>
#include <cstdio>
#include <deque>
#include <limits>

#include "topotune/error.hpp"
#include "topotune/search.hpp"

namespace topotune {

void SearchParams::validate() const {
  if (topk < 1) throw ConfigError("topk must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_trees < 1) throw ConfigError("max_trees must be at least 1");
  if (prune_tol < 0 || prune_tol >= 1) throw ConfigError("prune tolerance must be in [0,1)");
}

std::vector<TransformationNode> remove_search(const TopoTree& grouped, const TreeEvaluator& evaluate, const SearchParams& params,
                                              std::set<TreeDigest>* seen) {
  params.validate();
  std::set<TreeDigest> local;
  std::set<TreeDigest>& visited = seen ? *seen : local;
  std::vector<TransformationNode> out;
  const TreeDigest root_key = canonical_digest(grouped);
  if (!visited.insert(root_key).second) return out;
  out.push_back({grouped, std::nullopt, evaluate(grouped), false});
  std::deque<std::size_t> queue{0};
  while (!queue.empty()) {
    const std::size_t at = queue.front();
    queue.pop_front();
    const TopoTree parent_tree = out[at].tree;
    const std::optional<Evaluation> parent_eval = out[at].best_eval;
    const TreeDigest parent_key = digest(parent_tree);
    for (const RemoveOp& op : candidate_removes(parent_tree)) {
      TopoTree child = apply_remove(parent_tree, op);
      if (!visited.insert(canonical_digest(child)).second) continue;
      if (out.size() >= params.max_trees) throw LimitError("removal search exceeded " + std::to_string(params.max_trees) + " trees");
      TransformationNode node{std::move(child), parent_key, std::nullopt, true};
      node.best_eval = evaluate(node.tree);
      if (node.best_eval && (!parent_eval || node.best_eval->latency_s < parent_eval->latency_s * (1.0 - params.prune_tol))) {
        node.pruned = false;
        queue.push_back(out.size());
      }
      out.push_back(std::move(node));
    }
  }
  return out;
}

namespace {

using GroupKey = std::pair<int, std::vector<std::vector<int>>>;

GroupKey group_key(const ServiceConfig& c) {
  std::vector<std::vector<int>> numa;
  for (const auto& p : c.processes) numa.push_back(p.numa_ids);
  std::sort(numa.begin(), numa.end());
  return {c.tp_degree, numa};
}

bool ranked_before(const Evaluation& a, const Evaluation& b) {
  if (a.latency_s != b.latency_s) return a.latency_s < b.latency_s;
  return config_key(a.config) < config_key(b.config);
}

}  // namespace

std::vector<Evaluation> rank_with_early_stop(const std::vector<ServiceConfig>& configs, const ConfigEvaluator& evaluate,
                                             const SearchParams& params) {
  params.validate();
  std::vector<GroupKey> order;
  std::map<GroupKey, std::vector<const ServiceConfig*>> groups;
  for (const auto& c : configs) {
    GroupKey k = group_key(c);
    auto [it, fresh] = groups.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(&c);
  }
  std::vector<Evaluation> out;
  for (const auto& k : order) {
    double best = std::numeric_limits<double>::infinity();
    int misses = 0;
    for (const ServiceConfig* c : groups[k]) {
      Evaluation e = evaluate(*c);
      if (e.latency_s < best) {
        best = e.latency_s;
        misses = 0;
      } else {
        ++misses;
      }
      out.push_back(std::move(e));
      if (misses >= params.patience) break;
    }
  }
  std::sort(out.begin(), out.end(), ranked_before);
  if (out.size() > static_cast<std::size_t>(params.topk)) out.resize(static_cast<std::size_t>(params.topk));
  return out;
}

ConfigSimulator::ConfigSimulator(ModelConfig model, Workload workload, Backend backend, CostParams cost, SimOptions sim, int real_reps,
                                 double real_budget_s)
    : model_(std::move(model)), workload_(std::move(workload)), backend_(backend), cost_(std::move(cost)), sim_(sim) {
  model_.validate();
  if (backend_ == Backend::real) real_ = std::make_unique<RealProfiler>(std::max(1, real_reps / 5), std::max(1, real_reps), real_budget_s);
}

ScheduleLatency& ConfigSimulator::latency_for(const ServiceConfig& config) {
  const int threads = static_cast<int>(config.cores_per_process());
  double speed = 1.0;
  Profiler* prof = real_.get();
  std::pair<int, double> key{threads, 1.0};
  if (backend_ == Backend::synthetic) {
    std::vector<CoreId> active;
    for (const auto& p : config.processes) active.insert(active.end(), p.cores.begin(), p.cores.end());
    // tensor-parallel steps wait for the slowest process
    CoreContext slowest;
    for (const auto& p : config.processes) {
      CoreContext ctx{p.cores, active};
      const double s = domain_speed(cost_, ctx);
      if (slowest.process_cores.empty() || s < speed) {
        speed = s;
        slowest = ctx;
      }
    }
    key = {threads, speed};
    auto& slot = synthetic_[key];
    if (!slot) slot = std::make_unique<SyntheticProfiler>(cost_, slowest);
    prof = slot.get();
  }
  auto& lat = latencies_[key];
  if (!lat) lat = std::make_unique<ScheduleLatency>(*prof, threads);
  return *lat;
}

Evaluation ConfigSimulator::evaluate(const ServiceConfig& config) {
  const std::string key = config_key(config);
  if (auto it = memo_.find(key); it != memo_.end()) {
    Evaluation e = it->second;
    e.config = config;
    return e;
  }
  ++simulations_;
  LatencyReport rep = simulate(config, model_, latency_for(config), workload_, sim_);
  Evaluation e{config, rep.total_latency_s(), rep.prefill_s, rep.decode_s, rep.comm_s};
  if (!(e.latency_s > 0)) throw ConfigError("simulated latency must be positive; the workload may be empty");
  memo_[key] = e;
  return e;
}

namespace {

std::vector<ServiceConfig> valid_configs(const std::vector<const TopoTree*>& trees, const ModelConfig& model) {
  std::vector<ServiceConfig> all;
  for (const TopoTree* t : trees) {
    for (auto& c : enumerate_configs(*t)) {
      if (validate_tp(c, model)) all.push_back(std::move(c));
    }
  }
  return dedupe_configs(all);
}

}  // namespace

SearchResult search_configurations(const TopoTree& fundamental, const ModelConfig& model, const SearchParams& params,
                                   ConfigSimulator& sim) {
  params.validate();
  if (!is_symmetric(fundamental) || !is_tileable(fundamental)) throw TopoError("search needs a symmetric, tileable tree");
  ClosureOptions copts;
  copts.max_trees = params.max_trees;
  const std::vector<TopoTree> closure = enumerate_group_closure(fundamental, copts);
  SearchResult res;
  res.closure_trees = closure.size();
  ConfigEvaluator eval = [&](const ServiceConfig& c) { return sim.evaluate(c); };

  std::vector<const TopoTree*> grouped;
  for (const auto& t : closure) grouped.push_back(&t);
  const std::vector<ServiceConfig> prefill = valid_configs(grouped, model);
  if (prefill.empty()) throw ConfigError("no configuration satisfies the model's tensor-parallel limits");
  res.prefill = rank_with_early_stop(prefill, eval, params);

  TreeEvaluator tree_eval = [&](const TopoTree& t) -> std::optional<Evaluation> {
    std::optional<Evaluation> best;
    for (const auto& c : valid_configs({&t}, model)) {
      Evaluation e = sim.evaluate(c);
      if (!best || ranked_before(e, *best)) best = std::move(e);
    }
    return best;
  };
  std::set<TreeDigest> seen;
  std::vector<TransformationNode> visited;
  for (const auto& t : closure) {
    SearchParams left = params;
    if (visited.size() >= params.max_trees) throw LimitError("removal search exceeded " + std::to_string(params.max_trees) + " trees");
    left.max_trees = params.max_trees - visited.size();
    for (auto& node : remove_search(t, tree_eval, left, &seen)) visited.push_back(std::move(node));
  }
  res.removal_trees = visited.size();
  // every visited tree is already simulated, so candidates go best tree first
  std::stable_sort(visited.begin(), visited.end(), [](const TransformationNode& a, const TransformationNode& b) {
    if (!a.best_eval || !b.best_eval) return a.best_eval.has_value() && !b.best_eval.has_value();
    return a.best_eval->latency_s < b.best_eval->latency_s;
  });
  std::vector<const TopoTree*> decode_trees;
  for (const auto& n : visited) decode_trees.push_back(&n.tree);
  res.decode = rank_with_early_stop(valid_configs(decode_trees, model), eval, params);
  return res;
}

std::string format_ranking(const std::vector<Evaluation>& ranked) {
  std::string out = "digest,tp,cut,latency_s,prefill_s,decode_s,comm_s\n";
  char buf[256];
  for (const auto& e : ranked) {
    std::snprintf(buf, sizeof buf, ",%d,%d,%.9g,%.9g,%.9g,%.9g\n", e.config.tp_degree, e.config.cut_depth, e.latency_s, e.prefill_s,
                  e.decode_s, e.comm_s);
    out += to_hex(e.config.source_digest) + buf;
  }
  return out;
}

}  // namespace topotune
