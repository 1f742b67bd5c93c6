#include <fstream>
#include <sstream>

#include "json.hpp"
#include "topotune/cli.hpp"
#include "topotune/error.hpp"
#include "topotune/topo.hpp"

namespace topotune::cli {

std::string tool_version() { return TOPOTUNE_VERSION; }

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return to_hex(sha256_of(ss.str()));
}

void RunManifest::add_input(const std::string& path) { inputs.emplace_back(path, file_sha256(path)); }

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["tool"] = "topotune";
  j["version"] = tool_version();
  j["command"] = command;
  j["seed"] = seed;
  j["params"] = params;
  j["inputs"] = nlohmann::json::array();
  for (const auto& [path, sha] : inputs) j["inputs"].push_back({{"path", path}, {"sha256", sha}});
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

}  // namespace topotune::cli
