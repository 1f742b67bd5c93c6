#include <algorithm>
#include <set>

#include "doctest.h"
#include "topotune/config.hpp"
#include "topotune/error.hpp"

using namespace topotune;

namespace {

const std::string kData = TOPOTUNE_DATA_DIR;

ModelConfig heads(int q, int kv) {
  ModelConfig m;
  m.hidden = q * 64;
  m.intermediate = 256;
  m.layers = 1;
  m.q_heads = q;
  m.kv_heads = kv;
  m.head_dim = 64;
  m.vocab = 100;
  m.max_seq = 128;
  return m;
}

void check_partition(const TopoTree& t, const ServiceConfig& c) {
  std::vector<CoreId> all;
  for (const auto& p : c.processes) {
    CHECK(p.cores.size() == c.cores_per_process());
    CHECK(!p.numa_ids.empty());
    all.insert(all.end(), p.cores.begin(), p.cores.end());
  }
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(all == t.cores());
}

}  // namespace

TEST_CASE("cross sections of the clustered tree") {
  TopoTree t = load_topology(kData + "/ccl144.topo");
  auto configs = enumerate_configs(t);
  std::vector<int> counts;
  for (const auto& c : configs) counts.push_back(c.tp_degree);
  CHECK(counts == std::vector<int>{1, 4, 8, 48, 144});

  ServiceConfig ccl = cross_section(t, 3);
  CHECK(ccl.tp_degree == 48);
  CHECK(ccl.cores_per_process() == 3);
  CHECK(ccl.processes[1].cores == std::vector<CoreId>{4, 5, 6});
  CHECK(ccl.processes[7].numa_ids == std::vector<int>{1});

  ServiceConfig sccl = cross_section(t, 2);
  CHECK(sccl.tp_degree == 8);
  CHECK(sccl.cores_per_process() == 18);

  ServiceConfig root = cross_section(t, 0);
  CHECK(root.tp_degree == 1);
  CHECK(root.cores_per_process() == 144);
  CHECK(root.processes[0].numa_ids == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

  ServiceConfig leaf = cross_section(t, t.leaf_depth());
  CHECK(leaf.tp_degree == 144);
  CHECK(leaf.cores_per_process() == 1);

  for (const auto& c : configs) check_partition(t, c);
  CHECK_THROWS_AS(cross_section(t, 5), ConfigError);
  CHECK_THROWS_AS(cross_section(t, -1), ConfigError);
}

TEST_CASE("single leaf tree gives one config") {
  auto configs = enumerate_configs(flat_tree(1));
  REQUIRE(configs.size() == 1);
  CHECK(configs[0].tp_degree == 1);
  CHECK(configs[0].processes[0].cores == std::vector<CoreId>{0});
  CHECK(configs[0].processes[0].numa_ids == std::vector<int>{0});
}

TEST_CASE("determinism and dedup") {
  TopoTree k = load_topology(kData + "/kunpeng920.topo");
  TopoTree k2 = parse_topology(format_topology(k));
  REQUIRE(digest(k) == digest(k2));
  auto a = enumerate_configs(k);
  auto b = enumerate_configs(k2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(format_config(a[i]) == format_config(b[i]));

  std::vector<ServiceConfig> both = a;
  both.insert(both.end(), b.begin(), b.end());
  CHECK(dedupe_configs(both).size() == a.size());
  CHECK(dedupe_configs({}).empty());
  CHECK(dedupe_configs({a[0]}).size() == 1);

  // unary whole-level group repeats the root cut
  TopoTree g = apply_group(flat_tree(4), {4, 1, 1, {}});
  CHECK(enumerate_configs(g).size() == 2);
}

TEST_CASE("tensor parallel limits") {
  TopoTree t = load_topology(kData + "/ccl144.topo");
  ModelConfig llama3 = load_model(kData + "/llama3-8b.json");
  CHECK(validate_tp(cross_section(t, 2), llama3));
  CHECK(validate_tp(cross_section(t, 0), heads(7, 7)));
  CHECK_FALSE(validate_tp(cross_section(t, 3), llama3));
  CHECK_FALSE(validate_tp(3, llama3));
  CHECK_FALSE(validate_tp(16, llama3));

  for (int kv : {1, 2, 4, 8, 16}) {
    ModelConfig m = heads(16, kv);
    for (int k = 1; k <= 16; ++k) {
      if (!validate_tp(k, m)) continue;
      for (int d = 1; d <= k; ++d) {
        if (k % d == 0 && kv % d == 0) CHECK(validate_tp(d, m));
      }
    }
  }
}

TEST_CASE("model file validation") {
  ModelConfig m = load_model(kData + "/llama-1.3b.json");
  CHECK(m.hidden == 2048);
  CHECK(m.intermediate == 5504);
  CHECK_THROWS_AS(parse_model(R"({"hidden": 100})"), ConfigError);
  CHECK_THROWS_AS(parse_model(R"({"hidden":64,"intermediate":1,"layers":1,"q_heads":3,"kv_heads":2,"head_dim":8,"vocab":1,"max_seq":1})"), ConfigError);
  CHECK_THROWS_AS(parse_model("not json"), ConfigError);
}

TEST_CASE("config serialization round trip") {
  TopoTree t = load_topology(kData + "/ccl144.topo");
  for (const auto& c : enumerate_configs(t)) {
    std::string text = format_config(c);
    ServiceConfig back = parse_config(text);
    CHECK(format_config(back) == text);
    CHECK(config_key(back) == config_key(c));
  }
  CHECK_THROWS_AS(parse_config("config tp=1 cut=0 tree=00\n"), ParseError);
  CHECK_THROWS_AS(parse_config("proc 0 numa=0 cores=1\n"), ParseError);
}
