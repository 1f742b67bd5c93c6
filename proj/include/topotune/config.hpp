#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "topotune/topo.hpp"

namespace topotune {

struct ModelConfig {
  std::string name;
  int hidden = 0;
  int intermediate = 0;
  int layers = 0;
  int q_heads = 0;
  int kv_heads = 0;
  int head_dim = 0;
  int vocab = 0;
  int max_seq = 0;

  void validate() const;
};

ModelConfig parse_model(std::string_view json_text);
ModelConfig load_model(const std::string& path);

struct ProcessSpec {
  std::vector<CoreId> cores;
  std::vector<int> numa_ids;
};

struct ServiceConfig {
  std::vector<ProcessSpec> processes;
  int tp_degree = 1;
  TreeDigest source_digest{};
  int cut_depth = 0;

  std::size_t cores_per_process() const { return processes.empty() ? 0 : processes.front().cores.size(); }
  std::size_t total_cores() const;
};

ServiceConfig cross_section(const TopoTree& tree, int depth);
std::vector<ServiceConfig> enumerate_configs(const TopoTree& tree);

/// Identity used for dedup and memoization: sorted core sets plus tp degree.
std::string config_key(const ServiceConfig& config);
std::vector<ServiceConfig> dedupe_configs(const std::vector<ServiceConfig>& configs);

bool validate_tp(const ServiceConfig& config, const ModelConfig& model);
bool validate_tp(int tp_degree, const ModelConfig& model);

std::string format_config(const ServiceConfig& config);
ServiceConfig parse_config(std::string_view text);
ServiceConfig load_config(const std::string& path);

}  // namespace topotune
