#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace topotune {

struct SimdDesc {
  int vector_registers = 32;
  int vector_width_elems = default_width();
  int cacheline_bytes = 64;
  int element_bytes = 4;

  int k_step() const { return cacheline_bytes / element_bytes; }

  static constexpr int default_width() {
#if defined(__AVX512F__)
    return 16;
#else
    return 8;
#endif
  }
};

struct GemmShape {
  int M = 1;
  int N = 1;
  int K = 1;

  double flops() const { return 2.0 * M * N * K; }
  auto operator<=>(const GemmShape&) const = default;
};

struct MicroKernel {
  int mu_M = 1;
  int mu_N = 8;
  int regs_used = 0;

  bool operator==(const MicroKernel& o) const { return mu_M == o.mu_M && mu_N == o.mu_N; }
};

struct Slice {
  int b_M = 1;
  int b_N = 1;
  int b_K = 1;
  MicroKernel mk;

  bool operator==(const Slice& o) const { return b_M == o.b_M && b_N == o.b_N && b_K == o.b_K && mk == o.mk; }
};

struct Polymerization {
  int t_M = 1;
  int t_N = 1;
  int t_K = 1;

  int threads() const { return t_M * t_N * t_K; }
  bool operator==(const Polymerization&) const = default;
};

struct Schedule {
  GemmShape shape;
  Slice slice;
  Polymerization poly;
  double gflops = 0.0;
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

int regs_for(int mu_M, int mu_N, int vector_width);
MicroKernel make_mk(int mu_M, int mu_N, const SimdDesc& simd = {});

int num_tiles(const GemmShape& shape, const Slice& slice, int k_split);

/// Empty string when the schedule is executable, else the first violated rule.
std::string schedule_problem(const Schedule& s, const SimdDesc& simd = {});
void validate_schedule(const Schedule& s, const SimdDesc& simd = {});
bool feasible(const GemmShape& shape, const Slice& slice, const Polymerization& poly);

std::string format_schedule(const Schedule& s);
Schedule parse_schedule_line(std::string_view line, int lineno = 1);
std::vector<Schedule> parse_schedule_cache(std::string_view text);
std::vector<Schedule> load_schedule_cache(const std::string& path);
void save_schedule_cache(const std::string& path, const std::vector<Schedule>& schedules);

}  // namespace topotune
