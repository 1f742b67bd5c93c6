#pragma once

#include <stdexcept>
#include <string>

namespace topotune {

// Base for every recoverable data error; the CLI maps these to exit code 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(int line, const std::string& msg)
      : Error("line " + std::to_string(line) + ": " + msg), line(line) {}
  int line;
};

struct TopoError : Error {
  using Error::Error;
};

struct TransformError : Error {
  using Error::Error;
};

struct LimitError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct KernelError : Error {
  using Error::Error;
};

struct ExecError : Error {
  using Error::Error;
};

}  // namespace topotune
