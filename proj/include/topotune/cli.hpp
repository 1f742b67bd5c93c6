#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace topotune::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct RunManifest {
  std::string command;
  // input path as given, with the SHA-256 of its contents
  std::vector<std::pair<std::string, std::string>> inputs;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;
  // relative to the output directory
  std::vector<std::string> outputs;

  void add_input(const std::string& path);
  std::string to_json() const;
};

std::string tool_version();
std::string file_sha256(const std::string& path);

/// Runs one subcommand; `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace topotune::cli
