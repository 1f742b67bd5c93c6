// Serial reference vs OpenMP kernels, plus the all-reduce against a plain sum.
#include <benchmark/benchmark.h>

#include <omp.h>

#include <algorithm>
#include <array>

#include "topotune/comm.hpp"
#include "topotune/exec.hpp"
#include "topotune/kernel.hpp"

using namespace topotune;

namespace {

GemmShape shape_of(const benchmark::State& st) {
  return {static_cast<int>(st.range(0)), static_cast<int>(st.range(1)), static_cast<int>(st.range(2))};
}

void set_flops(benchmark::State& st, const GemmShape& sh) {
  st.counters["GFLOPS"] = benchmark::Counter(sh.flops() * static_cast<double>(st.iterations()) / 1e9, benchmark::Counter::kIsRate);
}

int threads() { return std::max(1, omp_get_max_threads()); }

void BM_naive(benchmark::State& st) {
  GemmShape sh = shape_of(st);
  Matrix A = Matrix::random(sh.M, sh.K, 1), B = Matrix::random(sh.K, sh.N, 2);
  for (auto _ : st) benchmark::DoNotOptimize(naive_gemm(A, B));
  set_flops(st, sh);
}

void BM_serial(benchmark::State& st) {
  GemmShape sh = shape_of(st);
  Schedule s = default_schedule(sh, threads());
  Matrix A = Matrix::random(sh.M, sh.K, 1), B = Matrix::random(sh.K, sh.N, 2);
  for (auto _ : st) benchmark::DoNotOptimize(exec_schedule_serial(A, B, s, s.poly.threads()));
  set_flops(st, sh);
}

void BM_openmp(benchmark::State& st) {
  GemmShape sh = shape_of(st);
  Schedule s = default_schedule(sh, threads());
  Matrix A = Matrix::random(sh.M, sh.K, 1), B = Matrix::random(sh.K, sh.N, 2);
  Matrix C;
  for (auto _ : st) {
    exec_schedule_into(A, B, s, s.poly.threads(), C);
    benchmark::DoNotOptimize(C.data.data());
  }
  set_flops(st, sh);
}

void shapes(benchmark::internal::Benchmark* b) {
  for (auto [m, n, k] : {std::array<int, 3>{1, 2048, 2048}, {16, 2048, 2048}, {128, 2048, 2048}, {128, 5504, 2048}, {256, 256, 256}})
    b->Args({m, n, k});
  b->Unit(benchmark::kMillisecond);
}

std::vector<std::vector<float>> inputs(int ranks, std::size_t len) {
  std::vector<std::vector<float>> in;
  for (int r = 0; r < ranks; ++r) {
    Matrix m = Matrix::random(1, static_cast<int>(len), static_cast<std::uint64_t>(r));
    in.push_back(m.data);
  }
  return in;
}

void BM_allreduce(benchmark::State& st) {
  auto in = inputs(static_cast<int>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  ShmLayout l = block_layout(in[0].size(), static_cast<int>(in.size()));
  for (auto _ : st) benchmark::DoNotOptimize(rank_shifted_allreduce(in, l));
}

void BM_sequential_sum(benchmark::State& st) {
  auto in = inputs(static_cast<int>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(sequential_sum(in));
}

}  // namespace

BENCHMARK(BM_naive)->Args({128, 512, 512})->Args({256, 256, 256})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_serial)->Apply(shapes);
BENCHMARK(BM_openmp)->Apply(shapes);
BENCHMARK(BM_allreduce)->ArgsProduct({{2, 4, 8}, {1024, 1 << 16}});
BENCHMARK(BM_sequential_sum)->ArgsProduct({{2, 4, 8}, {1024, 1 << 16}});

BENCHMARK_MAIN();
