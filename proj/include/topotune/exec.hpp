#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "topotune/profiler.hpp"
#include "topotune/schedule.hpp"
#include "topotune/topo.hpp"

namespace topotune {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(int r, int c, float fill = 0.0f) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  float& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  float at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

  static Matrix random(int r, int c, std::uint64_t seed);
  static Matrix identity(int n);
};

Matrix naive_gemm(const Matrix& A, const Matrix& B);

/// Blocked execution of `s` with t_M*t_N*t_K OpenMP workers.
Matrix exec_schedule(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads);
void exec_schedule_into(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads, Matrix& C);
// Same loop nest with the workers run one after another on the calling thread.
Matrix exec_schedule_serial(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads);

/// max |got - ref| / max(|ref|, 1) over all entries.
double max_rel_error(const Matrix& got, const Matrix& ref);

struct TileRange {
  int m0, m1, n0, n1, k0, k1;
};
// Output region and reduction range owned by worker `w` of the polymerization grid.
TileRange worker_range(const Schedule& s, int w);

struct ContentionDomain {
  std::vector<CoreId> cores;
  int capacity = 1;
};

// Deterministic stand-in for hardware. Per-dimension locality factor
// h(b) = b/(b+reach) / (1 + b/(2E)), where E is the per-thread extent, with b
// clamped to the dimension and a dim/b padding factor past it.
struct CostParams {
  double seconds_per_flop = 5e-11;
  double reach_M = 4.0;
  double reach_N = 16.0;
  double reach_K = 64.0;
  double split_k_cost = 1.0;
  double memory_knee = 16.0;
  std::vector<ContentionDomain> domains;
  // when set, bind_domains adds one domain per node at this depth
  std::optional<int> domain_depth;
  int domain_capacity = 1;
  double contention_penalty = 0.5;
  double speed_floor = 0.05;
};

CostParams parse_cost_params(std::string_view json_text);
CostParams load_cost_params(const std::string& path);
// One domain per node at `depth` covering that node's leaves.
std::vector<ContentionDomain> domains_at(const TopoTree& tree, int depth, int capacity);
CostParams bind_domains(CostParams p, const TopoTree& tree);

struct CoreContext {
  std::vector<CoreId> process_cores;
  std::vector<CoreId> active_cores;
};

/// Relative speed in (0,1] of a process given every core active machine-wide.
double domain_speed(const CostParams& p, const CoreContext& ctx);
double synthetic_seconds(const Schedule& s, const CostParams& p, double speed);
double synthetic_gflops(const Schedule& s, const CostParams& p, double speed);

class SyntheticProfiler : public Profiler {
 public:
  explicit SyntheticProfiler(CostParams p, CoreContext ctx = {});
  bool deterministic() const override { return true; }
  double speed() const { return speed_; }

 protected:
  double measure(const Schedule& s) override;

 private:
  CostParams params_;
  double speed_;
};

class RealProfiler : public Profiler {
 public:
  // With budget_s > 0, warmups and timed runs each stop once they have used that
  // much time, after at least one run.
  RealProfiler(int warmups = 5, int reps = 100, double budget_s = 0.0);
  int warmups() const { return warmups_; }
  int reps() const { return reps_; }
  double budget_s() const { return budget_s_; }

 protected:
  double measure(const Schedule& s) override;

 private:
  struct Inputs {
    Matrix A, B, C;
  };
  int warmups_;
  int reps_;
  double budget_s_;
  std::map<GemmShape, Inputs> inputs_;
};

}  // namespace topotune
