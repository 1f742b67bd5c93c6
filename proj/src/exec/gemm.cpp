#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <random>
#include <utility>

#include "topotune/error.hpp"
#include "topotune/exec.hpp"

namespace topotune {

namespace {

// Built with -ffp-contract=off so the only fused operations are these.
inline float madd(float a, float b, float c) {
#if defined(__FMA__)
  return std::fma(a, b, c);
#else
  return a * b + c;
#endif
}

using MkFn = void (*)(int kc, const float* a, const float* b, float* acc);

template <int MR, int NR>
void mk_fixed(int kc, const float* __restrict a, const float* __restrict b, float* __restrict out) {
  float acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) acc[i][j] = out[i * NR + j];
  for (int k = 0; k < kc; ++k) {
    const float* bk = b + k * NR;
#pragma GCC unroll 32
    for (int i = 0; i < MR; ++i) {
      const float ai = a[k * MR + i];
#pragma GCC unroll 16
      for (int j = 0; j < NR; ++j) acc[i][j] = madd(ai, bk[j], acc[i][j]);
    }
  }
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) out[i * NR + j] = acc[i][j];
}

void mk_generic(int mr, int nr, int kc, const float* a, const float* b, float* out) {
  for (int k = 0; k < kc; ++k) {
    for (int i = 0; i < mr; ++i) {
      const float ai = a[k * mr + i];
      for (int j = 0; j < nr; ++j) out[i * nr + j] = madd(ai, b[k * nr + j], out[i * nr + j]);
    }
  }
}

constexpr int kVW = SimdDesc::default_width();
constexpr int kMaxM = 30;
constexpr int kMaxU = 30;

constexpr bool fits_regs(int mr, int u) { return mr * u + u + 1 <= 32; }

template <std::size_t I>
constexpr MkFn pick() {
  constexpr int mr = static_cast<int>(I) / kMaxU + 1;
  constexpr int u = static_cast<int>(I) % kMaxU + 1;
  if constexpr (fits_regs(mr, u)) return &mk_fixed<mr, u * kVW>;
  else return nullptr;
}

template <std::size_t... I>
constexpr std::array<MkFn, sizeof...(I)> make_table(std::index_sequence<I...>) {
  return {pick<I>()...};
}

const auto kTable = make_table(std::make_index_sequence<kMaxM * kMaxU>{});

MkFn lookup(int mr, int nr) {
  if (mr < 1 || mr > kMaxM || nr % kVW != 0) return nullptr;
  const int u = nr / kVW;
  if (u < 1 || u > kMaxU) return nullptr;
  return kTable[static_cast<std::size_t>((mr - 1) * kMaxU + (u - 1))];
}

struct Worker {
  const Matrix& A;
  const Matrix& B;
  const Schedule& s;
  std::vector<float> pa, pb, acc;

  Worker(const Matrix& a, const Matrix& b, const Schedule& sch) : A(a), B(b), s(sch) {}

  // C rows/cols are absolute; dst may be C or a partial buffer of the same shape.
  void run(const TileRange& r, float* dst) {
    const int MR = s.slice.mk.mu_M, NR = s.slice.mk.mu_N;
    const int bM = s.slice.b_M, bN = s.slice.b_N, bK = s.slice.b_K;
    const int N = B.cols, K = A.cols;
    const MkFn fn = lookup(MR, NR);
    pa.assign(static_cast<std::size_t>(bM) * bK, 0.0f);
    pb.assign(static_cast<std::size_t>(bK) * bN, 0.0f);
    acc.assign(static_cast<std::size_t>(MR) * NR, 0.0f);
    for (int n0 = r.n0; n0 < r.n1; n0 += bN) {
      const int nc = std::min(bN, r.n1 - n0);
      const int npanels = ceil_div(nc, NR);
      for (int k0 = r.k0; k0 < r.k1; k0 += bK) {
        const int kc = std::min(bK, r.k1 - k0);
        for (int p = 0; p < npanels; ++p) {
          float* dstp = pb.data() + static_cast<std::size_t>(p) * kc * NR;
          for (int k = 0; k < kc; ++k) {
            const float* src = &B.data[static_cast<std::size_t>(k0 + k) * N];
            for (int j = 0; j < NR; ++j) {
              const int col = n0 + p * NR + j;
              dstp[k * NR + j] = (col < n0 + nc) ? src[col] : 0.0f;
            }
          }
        }
        for (int m0 = r.m0; m0 < r.m1; m0 += bM) {
          const int mc = std::min(bM, r.m1 - m0);
          const int mpanels = ceil_div(mc, MR);
          for (int p = 0; p < mpanels; ++p) {
            float* dstp = pa.data() + static_cast<std::size_t>(p) * kc * MR;
            for (int i = 0; i < MR; ++i) {
              const int row = m0 + p * MR + i;
              const bool live = row < m0 + mc;
              const float* src = live ? &A.data[static_cast<std::size_t>(row) * K + k0] : nullptr;
              for (int k = 0; k < kc; ++k) dstp[k * MR + i] = live ? src[k] : 0.0f;
            }
          }
          for (int jp = 0; jp < npanels; ++jp) {
            const int cols = std::min(NR, nc - jp * NR);
            for (int ip = 0; ip < mpanels; ++ip) {
              const int rows = std::min(MR, mc - ip * MR);
              float* c0 = dst + static_cast<std::size_t>(m0 + ip * MR) * N + n0 + jp * NR;
              std::fill(acc.begin(), acc.end(), 0.0f);
              if (k0 != r.k0) {
                for (int i = 0; i < rows; ++i)
                  for (int j = 0; j < cols; ++j) acc[static_cast<std::size_t>(i * NR + j)] = c0[static_cast<std::size_t>(i) * N + j];
              }
              const float* ap = pa.data() + static_cast<std::size_t>(ip) * kc * MR;
              const float* bp = pb.data() + static_cast<std::size_t>(jp) * kc * NR;
              if (fn) fn(kc, ap, bp, acc.data());
              else mk_generic(MR, NR, kc, ap, bp, acc.data());
              for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) c0[static_cast<std::size_t>(i) * N + j] = acc[static_cast<std::size_t>(i * NR + j)];
            }
          }
        }
      }
    }
  }
};

void check_inputs(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads) {
  if (A.cols != B.rows) throw ExecError("inner dimensions differ");
  if (A.rows != s.shape.M || B.cols != s.shape.N || A.cols != s.shape.K) throw ExecError("matrices do not match the schedule shape");
  if (nthreads != s.poly.threads()) throw ExecError("nthreads must equal t_M*t_N*t_K");
  // register pressure is a tuning concern; execution only needs the blocking rules
  SimdDesc simd;
  simd.vector_width_elems = 1;
  simd.vector_registers = 1 << 30;
  if (auto p = schedule_problem(s, simd); !p.empty()) throw ExecError("invalid schedule: " + p);
}

void run_all(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads, Matrix& C, bool parallel) {
  check_inputs(A, B, s, nthreads);
  const int M = s.shape.M, N = s.shape.N;
  if (C.rows != M || C.cols != N) C = Matrix(M, N);
  const int tK = s.poly.t_K;
  std::vector<std::vector<float>> partial(static_cast<std::size_t>(tK - 1));
  for (auto& p : partial) p.assign(static_cast<std::size_t>(M) * N, 0.0f);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static, 1) num_threads(nthreads) if (parallel)
  for (int w = 0; w < nthreads; ++w) {
    try {
      TileRange r = worker_range(s, w);
      const int iK = w / (s.poly.t_M * s.poly.t_N);
      float* dst = iK == 0 ? C.data.data() : partial[static_cast<std::size_t>(iK - 1)].data();
      Worker(A, B, s).run(r, dst);
    } catch (...) {
#pragma omp critical(topotune_exec_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      throw ExecError(std::string("worker failed: ") + e.what());
    }
  }
  if (tK > 1) {
#pragma omp parallel for schedule(static) num_threads(nthreads) if (parallel)
    for (int i = 0; i < M; ++i) {
      float* c = &C.data[static_cast<std::size_t>(i) * N];
      for (const auto& p : partial) {
        const float* q = &p[static_cast<std::size_t>(i) * N];
        for (int j = 0; j < N; ++j) c[j] += q[j];
      }
    }
  }
}

}  // namespace

Matrix Matrix::random(int r, int c, std::uint64_t seed) {
  Matrix m(r, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& v : m.data) v = dist(rng);
  return m;
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0f;
  return m;
}

Matrix naive_gemm(const Matrix& A, const Matrix& B) {
  if (A.cols != B.rows) throw ExecError("inner dimensions differ: " + std::to_string(A.cols) + " vs " + std::to_string(B.rows));
  Matrix C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < B.cols; ++j) {
      float acc = 0.0f;
      for (int k = 0; k < A.cols; ++k) acc = madd(A.at(i, k), B.at(k, j), acc);
      C.at(i, j) = acc;
    }
  }
  return C;
}

TileRange worker_range(const Schedule& s, int w) {
  const auto& p = s.poly;
  const int iM = w % p.t_M;
  const int iN = (w / p.t_M) % p.t_N;
  const int iK = w / (p.t_M * p.t_N);
  const int TM = ceil_div(s.shape.M, s.slice.b_M);
  const int TN = ceil_div(s.shape.N, s.slice.b_N);
  const int TK = ceil_div(s.shape.K, s.slice.b_K);
  auto span = [](int tiles, int parts, int i) { return std::pair<int, int>{i * tiles / parts, (i + 1) * tiles / parts}; };
  auto [mt0, mt1] = span(TM, p.t_M, iM);
  auto [nt0, nt1] = span(TN, p.t_N, iN);
  auto [kt0, kt1] = span(TK, p.t_K, iK);
  return {mt0 * s.slice.b_M, std::min(mt1 * s.slice.b_M, s.shape.M), nt0 * s.slice.b_N, std::min(nt1 * s.slice.b_N, s.shape.N),
          kt0 * s.slice.b_K, std::min(kt1 * s.slice.b_K, s.shape.K)};
}

Matrix exec_schedule(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads) {
  Matrix C;
  run_all(A, B, s, nthreads, C, true);
  return C;
}

void exec_schedule_into(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads, Matrix& C) {
  run_all(A, B, s, nthreads, C, true);
}

Matrix exec_schedule_serial(const Matrix& A, const Matrix& B, const Schedule& s, int nthreads) {
  Matrix C;
  run_all(A, B, s, nthreads, C, false);
  return C;
}

double max_rel_error(const Matrix& got, const Matrix& ref) {
  if (got.rows != ref.rows || got.cols != ref.cols) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const double r = ref.data[i];
    worst = std::max(worst, std::abs(static_cast<double>(got.data[i]) - r) / std::max(std::abs(r), 1.0));
  }
  return worst;
}

}  // namespace topotune
