#pragma once

#include <cstddef>
#include <functional>

#include "topotune/schedule.hpp"

namespace topotune {

/// Measurement contract: returns GFLOPS = 2*M*N*K / seconds for a schedule.
class Profiler {
 public:
  virtual ~Profiler() = default;

  double profile(const Schedule& s) {
    ++calls_;
    return measure(s);
  }
  std::size_t calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }
  virtual bool deterministic() const { return false; }

 protected:
  virtual double measure(const Schedule& s) = 0;

 private:
  std::size_t calls_ = 0;
};

class FunctionProfiler : public Profiler {
 public:
  explicit FunctionProfiler(std::function<double(const Schedule&)> fn, bool deterministic = true)
      : fn_(std::move(fn)), deterministic_(deterministic) {}
  bool deterministic() const override { return deterministic_; }

 protected:
  double measure(const Schedule& s) override { return fn_(s); }

 private:
  std::function<double(const Schedule&)> fn_;
  bool deterministic_;
};

}  // namespace topotune
