#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "topotune/config.hpp"
#include "topotune/exec.hpp"
#include "topotune/topo.hpp"
#include "topotune/trace.hpp"

namespace topotune {

struct SearchParams {
  int topk = 10;
  int patience = 3;
  std::size_t max_trees = 100000;
  std::uint64_t seed = 0;
  // a removal child must beat its parent by more than this fraction to be expanded
  double prune_tol = 0.005;

  void validate() const;
};

struct Evaluation {
  ServiceConfig config;
  double latency_s = 0;
  double prefill_s = 0;
  double decode_s = 0;
  double comm_s = 0;
};

using ConfigEvaluator = std::function<Evaluation(const ServiceConfig&)>;
// Best evaluation over the tree's valid configs; nullopt when none is valid.
using TreeEvaluator = std::function<std::optional<Evaluation>(const TopoTree&)>;

struct TransformationNode {
  TopoTree tree;
  std::optional<TreeDigest> parent_digest;
  std::optional<Evaluation> best_eval;
  bool pruned = false;
};

/// Breadth-first removal descendants of `grouped`, expanding only children that
/// improve on their parent. `seen` holds canonical digests shared across calls.
std::vector<TransformationNode> remove_search(const TopoTree& grouped, const TreeEvaluator& evaluate, const SearchParams& params,
                                              std::set<TreeDigest>* seen = nullptr);

/// Groups by (tp degree, numa multiset) in first-occurrence order; a group stops after
/// `patience` consecutive evaluations that fail to beat its best.
std::vector<Evaluation> rank_with_early_stop(const std::vector<ServiceConfig>& configs, const ConfigEvaluator& evaluate,
                                             const SearchParams& params);

enum class Backend { synthetic, real };

// Memoized config scoring by trace simulation with default schedules.
class ConfigSimulator {
 public:
  ConfigSimulator(ModelConfig model, Workload workload, Backend backend, CostParams cost = {}, SimOptions sim = {},
                  int real_reps = 10, double real_budget_s = 0.25);

  Evaluation evaluate(const ServiceConfig& config);
  std::size_t simulations() const { return simulations_; }
  Backend backend() const { return backend_; }
  const ModelConfig& model() const { return model_; }

 private:
  ScheduleLatency& latency_for(const ServiceConfig& config);

  ModelConfig model_;
  Workload workload_;
  Backend backend_;
  CostParams cost_;
  SimOptions sim_;
  std::unique_ptr<Profiler> real_;
  std::map<std::pair<int, double>, std::unique_ptr<Profiler>> synthetic_;
  std::map<std::pair<int, double>, std::unique_ptr<ScheduleLatency>> latencies_;
  std::map<std::string, Evaluation> memo_;
  std::size_t simulations_ = 0;
};

struct SearchResult {
  std::vector<Evaluation> prefill;
  std::vector<Evaluation> decode;
  std::size_t closure_trees = 0;
  std::size_t removal_trees = 0;
};

SearchResult search_configurations(const TopoTree& fundamental, const ModelConfig& model, const SearchParams& params,
                                   ConfigSimulator& sim);

// CSV digest,tp,cut,latency_s,prefill_s,decode_s,comm_s
std::string format_ranking(const std::vector<Evaluation>& ranked);

}  // namespace topotune
