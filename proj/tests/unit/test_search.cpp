#include <algorithm>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "topotune/error.hpp"
#include "topotune/search.hpp"

using namespace topotune;

namespace {

ModelConfig planted_model() {
  ModelConfig m;
  m.name = "planted";
  m.hidden = 512;
  m.intermediate = 1536;
  m.layers = 4;
  m.q_heads = 8;
  m.kv_heads = 4;
  m.head_dim = 64;
  m.vocab = 4096;
  m.max_seq = 1024;
  return m;
}

CostParams planted_cost() {
  CostParams p;
  p.domain_depth = 1;
  for (int g = 0; g < 4; ++g) p.domains.push_back({{4 * g, 4 * g + 1, 4 * g + 2, 4 * g + 3}, 3});
  return p;
}

Workload planted_workload() {
  return sample_workload(LengthGenerator{16, 64, 16, 64}, WorkloadMode::single_sequence, 0, 4, 11);
}

std::vector<CoreId> cores_of(const ServiceConfig& c) {
  std::vector<CoreId> all;
  for (const auto& p : c.processes) all.insert(all.end(), p.cores.begin(), p.cores.end());
  std::sort(all.begin(), all.end());
  return all;
}

ServiceConfig config_with(int tp, int per) {
  ServiceConfig c;
  c.tp_degree = tp;
  int id = 0;
  for (int i = 0; i < tp; ++i) {
    ProcessSpec p;
    for (int j = 0; j < per; ++j) p.cores.push_back(id++);
    p.numa_ids = {0};
    c.processes.push_back(p);
  }
  return c;
}

}  // namespace

std::vector<CoreId> planted_cores() {
  std::vector<CoreId> out;
  for (int g = 0; g < 4; ++g)
    for (int j = 0; j < 3; ++j) out.push_back(4 * g + j);
  return out;
}

TEST_CASE("planted contention optimum matches exhaustive enumeration") {
  CostParams cost = bind_domains(planted_cost(), flat_tree(16));
  CHECK(cost.domains.size() == 4 + 16);
  cost = planted_cost();
  cost.domain_depth.reset();
  const TopoTree flat = flat_tree(16);
  const ModelConfig model = planted_model();
  ConfigSimulator sim(model, planted_workload(), Backend::synthetic, cost);
  SearchResult res = search_configurations(flat, model, SearchParams{}, sim);
  REQUIRE(!res.decode.empty());
  REQUIRE(!res.prefill.empty());
  CHECK(cores_of(res.decode[0].config) == planted_cores());
  CHECK(res.prefill[0].config.total_cores() == 16);
  for (const auto& e : res.prefill) CHECK(e.config.total_cores() == 16);
  CHECK(res.decode.size() == 10);
  CHECK(std::is_sorted(res.decode.begin(), res.decode.end(), [](auto& a, auto& b) { return a.latency_s < b.latency_s; }));

  ConfigSimulator fresh(model, planted_workload(), Backend::synthetic, cost);
  auto ex = oracle::exhaustive_config(oracle::all_transformed_trees(flat), model, fresh);
  CHECK(ex.evaluations <= 10000);
  CHECK(config_key(ex.best.config) == config_key(res.decode[0].config));
  CHECK(ex.best.latency_s == res.decode[0].latency_s);
}

TEST_CASE("unbounded patience returns the exhaustive top-k") {
  CostParams cost = planted_cost();
  cost.domain_depth.reset();
  const TopoTree flat = flat_tree(8);
  cost.domains.resize(2);
  const ModelConfig model = planted_model();
  SearchParams params;
  params.patience = 1 << 20;
  params.topk = 5;
  ConfigSimulator sim(model, planted_workload(), Backend::synthetic, cost);
  SearchResult res = search_configurations(flat, model, params, sim);

  // exhaustive ranking over closure trees only, for the prefill list
  auto closure = enumerate_group_closure(flat);
  std::vector<Evaluation> all;
  std::set<std::string> keys;
  for (const auto& t : closure)
    for (const auto& c : enumerate_configs(t))
      if (validate_tp(c, model) && keys.insert(config_key(c)).second) all.push_back(sim.evaluate(c));
  std::sort(all.begin(), all.end(), [](auto& a, auto& b) {
    return a.latency_s != b.latency_s ? a.latency_s < b.latency_s : config_key(a.config) < config_key(b.config);
  });
  REQUIRE(res.prefill.size() == std::min<std::size_t>(5, all.size()));
  for (std::size_t i = 0; i < res.prefill.size(); ++i) CHECK(config_key(res.prefill[i].config) == config_key(all[i].config));
}

TEST_CASE("search output is deterministic") {
  CostParams cost = planted_cost();
  cost.domain_depth.reset();
  const ModelConfig model = planted_model();
  std::string first;
  for (int run = 0; run < 2; ++run) {
    ConfigSimulator sim(model, planted_workload(), Backend::synthetic, cost);
    SearchResult res = search_configurations(flat_tree(16), model, SearchParams{}, sim);
    std::string text = format_ranking(res.prefill) + format_ranking(res.decode);
    if (run == 0) first = text;
    else CHECK(text == first);
  }
}

TEST_CASE("trivial searches") {
  ModelConfig model = planted_model();
  ConfigSimulator sim(model, planted_workload(), Backend::synthetic);
  SearchResult one = search_configurations(flat_tree(1), model, SearchParams{}, sim);
  REQUIRE(one.prefill.size() == 1);
  REQUIRE(one.decode.size() == 1);
  CHECK(one.prefill[0].config.processes.size() == 1);
  CHECK(one.decode[0].config.processes[0].cores == std::vector<CoreId>{0});

  ModelConfig mqa = model;
  mqa.kv_heads = 1;
  ConfigSimulator sim1(mqa, planted_workload(), Backend::synthetic);
  SearchResult r = search_configurations(flat_tree(8), mqa, SearchParams{}, sim1);
  for (const auto& e : r.prefill) CHECK(e.config.tp_degree == 1);
  for (const auto& e : r.decode) CHECK(e.config.tp_degree == 1);

  SearchParams tiny;
  tiny.max_trees = 5;
  ConfigSimulator sim2(model, planted_workload(), Backend::synthetic);
  CHECK_THROWS_AS(search_configurations(flat_tree(16), model, tiny, sim2), LimitError);
  SearchParams bad;
  bad.topk = 0;
  CHECK_THROWS_AS(search_configurations(flat_tree(4), model, bad, sim2), ConfigError);
}

TEST_CASE("removal search pruning and dedup") {
  const TopoTree grouped = apply_group(flat_tree(8), {2, 1, 1, {}});
  int calls = 0;
  auto constant = [&](const TopoTree& t) -> std::optional<Evaluation> {
    ++calls;
    return Evaluation{cross_section(t, 0), 1.0, 0, 0, 0};
  };
  auto nodes = remove_search(grouped, constant, SearchParams{});
  CHECK(!nodes[0].pruned);
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    CHECK(nodes[i].pruned);
    CHECK(nodes[i].parent_digest == digest(grouped));
  }
  CHECK(nodes.size() == 1 + candidate_removes(grouped).size());
  CHECK(calls == static_cast<int>(nodes.size()));

  // fewer cores always improves, so every descendant is expanded
  calls = 0;
  auto shrinking = [&](const TopoTree& t) -> std::optional<Evaluation> {
    ++calls;
    return Evaluation{cross_section(t, 0), static_cast<double>(t.pu_count()), 0, 0, 0};
  };
  nodes = remove_search(grouped, shrinking, SearchParams{});
  CHECK(calls == static_cast<int>(nodes.size()));
  std::set<TreeDigest> digests;
  for (const auto& n : nodes) CHECK(digests.insert(canonical_digest(n.tree)).second);
  // remove(1,d=2) then remove(1,d=1) meets remove(1,d=1) then remove(1,d=2)
  TopoTree a = apply_remove(apply_remove(grouped, {1, 2}), {1, 1});
  TopoTree b = apply_remove(apply_remove(grouped, {1, 1}), {1, 2});
  CHECK(canonical_digest(a) == canonical_digest(b));
  CHECK(digests.count(canonical_digest(a)) == 1);
  CHECK(nodes.size() == oracle::with_removal_descendants({grouped}).size());

  SearchParams cap;
  cap.max_trees = 3;
  CHECK_THROWS_AS(remove_search(grouped, shrinking, cap), LimitError);
}

TEST_CASE("early stop within process groups") {
  std::vector<ServiceConfig> configs;
  for (int i = 0; i < 10; ++i) {
    ServiceConfig c = config_with(2, 1 + i);
    configs.push_back(c);
  }
  int calls = 0;
  auto worsening = [&](const ServiceConfig& c) {
    ++calls;
    return Evaluation{c, static_cast<double>(c.cores_per_process()), 0, 0, 0};
  };
  SearchParams p;
  auto out = rank_with_early_stop(configs, worsening, p);
  CHECK(calls == 4);
  CHECK(out.size() == 4);

  calls = 0;
  p.patience = 10;
  CHECK(rank_with_early_stop(configs, worsening, p).size() == 10);
  CHECK(calls == 10);

  calls = 0;
  auto improving = [&](const ServiceConfig& c) {
    ++calls;
    return Evaluation{c, 100.0 - static_cast<double>(c.cores_per_process()), 0, 0, 0};
  };
  p.patience = 1;
  out = rank_with_early_stop(configs, improving, p);
  CHECK(calls == 10);
  CHECK(out.size() == 10);
  CHECK(out.front().config.cores_per_process() == 10);
  CHECK(std::is_sorted(out.begin(), out.end(), [](auto& a, auto& b) { return a.latency_s < b.latency_s; }));

  // separate groups stop independently
  std::vector<ServiceConfig> mixed = configs;
  ServiceConfig other = config_with(1, 4);
  mixed.push_back(other);
  calls = 0;
  p.patience = 3;
  p.topk = 2;
  out = rank_with_early_stop(mixed, worsening, p);
  CHECK(calls == 5);
  CHECK(out.size() == 2);
}

TEST_CASE("decode cost ordering follows the synthetic model") {
  CostParams cost = planted_cost();
  cost.domain_depth.reset();
  const ModelConfig model = planted_model();
  ConfigSimulator sim(model, planted_workload(), Backend::synthetic, cost);
  ServiceConfig full = cross_section(flat_tree(16), 0);
  ServiceConfig trimmed = full;
  trimmed.processes[0].cores = planted_cores();
  Evaluation a = sim.evaluate(full), b = sim.evaluate(trimmed);
  CHECK(b.decode_s < a.decode_s);
  CHECK(b.latency_s < a.latency_s);
  CHECK(sim.simulations() == 2);
  sim.evaluate(full);
  CHECK(sim.simulations() == 2);
}
