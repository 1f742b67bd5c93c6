#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "topotune/config.hpp"
#include "topotune/error.hpp"

namespace topotune {

namespace {

void gather(const TopoNode& n, std::vector<CoreId>& cores, std::set<int>& numa) {
  if (n.kind == NodeKind::numa) numa.insert(n.index);
  if (n.is_leaf()) {
    cores.push_back(n.index);
    return;
  }
  for (const auto& c : n.children) gather(c, cores, numa);
}

void cut(const TopoNode& n, int depth, int target, int numa_above, bool tree_has_numa, std::vector<ProcessSpec>& out) {
  if (n.kind == NodeKind::numa) numa_above = n.index;
  if (depth < target) {
    for (const auto& c : n.children) cut(c, depth + 1, target, numa_above, tree_has_numa, out);
    return;
  }
  ProcessSpec p;
  std::set<int> numa;
  gather(n, p.cores, numa);
  std::sort(p.cores.begin(), p.cores.end());
  if (numa.empty()) numa.insert(tree_has_numa ? numa_above : 0);
  p.numa_ids.assign(numa.begin(), numa.end());
  out.push_back(std::move(p));
}

bool has_numa(const TopoNode& n) {
  if (n.kind == NodeKind::numa) return true;
  return std::any_of(n.children.begin(), n.children.end(), has_numa);
}

std::vector<int> parse_csv_ints(const std::string& s, int line) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ParseError(line, "bad integer list '" + s + "'");
    }
  }
  return out;
}

std::string field(const std::string& tok, const std::string& key, int line) {
  if (!tok.starts_with(key + "=")) throw ParseError(line, "expected " + key + "=");
  return tok.substr(key.size() + 1);
}

}  // namespace

void ModelConfig::validate() const {
  if (hidden <= 0 || intermediate <= 0 || layers <= 0 || q_heads <= 0 || kv_heads <= 0 || head_dim <= 0 || vocab <= 0 || max_seq <= 0) {
    throw ConfigError("model fields must be positive");
  }
  if (q_heads % kv_heads != 0) throw ConfigError("q_heads must be a multiple of kv_heads");
  if (hidden != q_heads * head_dim) throw ConfigError("hidden must equal q_heads * head_dim");
}

ModelConfig parse_model(std::string_view json_text) {
  ModelConfig m;
  try {
    auto j = nlohmann::json::parse(json_text);
    m.name = j.value("name", std::string("model"));
    m.hidden = j.at("hidden").get<int>();
    m.intermediate = j.at("intermediate").get<int>();
    m.layers = j.at("layers").get<int>();
    m.q_heads = j.at("q_heads").get<int>();
    m.kv_heads = j.at("kv_heads").get<int>();
    m.head_dim = j.at("head_dim").get<int>();
    m.vocab = j.at("vocab").get<int>();
    m.max_seq = j.at("max_seq").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model file: ") + e.what());
  }
  m.validate();
  return m;
}

ModelConfig load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::size_t ServiceConfig::total_cores() const {
  std::size_t n = 0;
  for (const auto& p : processes) n += p.cores.size();
  return n;
}

ServiceConfig cross_section(const TopoTree& tree, int depth) {
  if (depth < 0 || depth >= tree.height()) throw ConfigError("cross-section depth out of range: " + std::to_string(depth));
  ServiceConfig c;
  cut(tree.root(), 0, depth, -1, has_numa(tree.root()), c.processes);
  c.tp_degree = static_cast<int>(c.processes.size());
  c.source_digest = digest(tree);
  c.cut_depth = depth;
  return c;
}

std::vector<ServiceConfig> enumerate_configs(const TopoTree& tree) {
  std::vector<ServiceConfig> all;
  for (int d = 0; d < tree.height(); ++d) all.push_back(cross_section(tree, d));
  return dedupe_configs(all);
}

std::string config_key(const ServiceConfig& config) {
  std::vector<std::vector<CoreId>> sets;
  for (const auto& p : config.processes) {
    auto s = p.cores;
    std::sort(s.begin(), s.end());
    sets.push_back(std::move(s));
  }
  std::sort(sets.begin(), sets.end());
  std::string key = "tp" + std::to_string(config.tp_degree);
  for (const auto& s : sets) {
    key += '|';
    for (auto c : s) key += std::to_string(c) + ',';
  }
  return key;
}

std::vector<ServiceConfig> dedupe_configs(const std::vector<ServiceConfig>& configs) {
  std::vector<ServiceConfig> out;
  std::set<std::string> seen;
  for (const auto& c : configs) {
    if (seen.insert(config_key(c)).second) out.push_back(c);
  }
  return out;
}

bool validate_tp(int tp, const ModelConfig& model) {
  return tp >= 1 && tp <= model.kv_heads && model.kv_heads % tp == 0 && model.q_heads % tp == 0;
}

bool validate_tp(const ServiceConfig& config, const ModelConfig& model) { return validate_tp(config.tp_degree, model); }

std::string format_config(const ServiceConfig& config) {
  std::ostringstream out;
  out << "config tp=" << config.tp_degree << " cut=" << config.cut_depth << " tree=" << to_hex(config.source_digest) << '\n';
  for (std::size_t i = 0; i < config.processes.size(); ++i) {
    const auto& p = config.processes[i];
    out << "proc " << i << " numa=";
    for (std::size_t k = 0; k < p.numa_ids.size(); ++k) out << (k ? "," : "") << p.numa_ids[k];
    out << " cores=";
    for (std::size_t k = 0; k < p.cores.size(); ++k) out << (k ? "," : "") << p.cores[k];
    out << '\n';
  }
  return out.str();
}

ServiceConfig parse_config(std::string_view text) {
  ServiceConfig c;
  std::istringstream in{std::string(text)};
  int lineno = 0;
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string w; ls >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 4 || tok[0] != "config") throw ParseError(lineno, "expected 'config tp= cut= tree='");
      c.tp_degree = parse_csv_ints(field(tok[1], "tp", lineno), lineno).at(0);
      c.cut_depth = parse_csv_ints(field(tok[2], "cut", lineno), lineno).at(0);
      std::string hex = field(tok[3], "tree", lineno);
      if (hex.size() != 64) throw ParseError(lineno, "tree digest must be 64 hex digits");
      for (std::size_t i = 0; i < 32; ++i) {
        try {
          c.source_digest[i] = static_cast<std::uint8_t>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
        } catch (const std::exception&) {
          throw ParseError(lineno, "bad tree digest");
        }
      }
      header = true;
      continue;
    }
    if (tok.size() != 4 || tok[0] != "proc") throw ParseError(lineno, "expected 'proc <idx> numa= cores='");
    if (tok[1] != std::to_string(c.processes.size())) throw ParseError(lineno, "process indices must be consecutive from 0");
    ProcessSpec p;
    p.numa_ids = parse_csv_ints(field(tok[2], "numa", lineno), lineno);
    p.cores = parse_csv_ints(field(tok[3], "cores", lineno), lineno);
    if (p.cores.empty()) throw ParseError(lineno, "process without cores");
    c.processes.push_back(std::move(p));
  }
  if (!header) throw ParseError(lineno, "missing config header");
  if (static_cast<int>(c.processes.size()) != c.tp_degree) throw ConfigError("tp degree does not match process count");
  return c;
}

ServiceConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace topotune
