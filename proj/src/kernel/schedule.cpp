#include <cstdio>
#include <fstream>
#include <sstream>

#include "topotune/error.hpp"
#include "topotune/schedule.hpp"

namespace topotune {

namespace {

bool read_dims(const std::string& s, std::vector<int>& out, std::size_t count) {
  out.clear();
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, 'x');) {
    try {
      std::size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) return false;
      out.push_back(v);
    } catch (const std::exception&) {
      return false;
    }
  }
  return out.size() == count;
}

}  // namespace

int regs_for(int mu_M, int mu_N, int vw) {
  const int cols = mu_N / vw;
  return mu_M * cols + cols + 1;
}

MicroKernel make_mk(int mu_M, int mu_N, const SimdDesc& simd) {
  return MicroKernel{mu_M, mu_N, regs_for(mu_M, mu_N, simd.vector_width_elems)};
}

int num_tiles(const GemmShape& shape, const Slice& slice, int k_split) {
  return ceil_div(shape.M, slice.b_M) * ceil_div(shape.N, slice.b_N) * k_split;
}

bool feasible(const GemmShape& shape, const Slice& slice, const Polymerization& poly) {
  return ceil_div(shape.M, slice.b_M) >= poly.t_M && ceil_div(shape.N, slice.b_N) >= poly.t_N &&
         ceil_div(shape.K, slice.b_K) >= poly.t_K;
}

std::string schedule_problem(const Schedule& s, const SimdDesc& simd) {
  const auto& sh = s.shape;
  const auto& sl = s.slice;
  const auto& mk = sl.mk;
  if (sh.M < 1 || sh.N < 1 || sh.K < 1) return "shape dimensions must be positive";
  if (mk.mu_M < 1 || mk.mu_N < 1) return "micro-kernel dimensions must be positive";
  if (mk.mu_N % simd.vector_width_elems != 0) return "mu_N must be a multiple of the vector width";
  if (regs_for(mk.mu_M, mk.mu_N, simd.vector_width_elems) > simd.vector_registers) return "micro-kernel exceeds the vector register file";
  if (sl.b_M < 1 || sl.b_N < 1 || sl.b_K < 1) return "slice dimensions must be positive";
  if (sl.b_M % mk.mu_M != 0) return "b_M must be a multiple of mu_M";
  if (sl.b_N % mk.mu_N != 0) return "b_N must be a multiple of mu_N";
  if ((sl.b_K * simd.element_bytes) % simd.cacheline_bytes != 0) return "b_K must fill whole cachelines";
  if (s.poly.t_M < 1 || s.poly.t_N < 1 || s.poly.t_K < 1) return "polymerization factors must be positive";
  if (!feasible(sh, sl, s.poly)) return "fewer slice tiles than threads in some dimension";
  return {};
}

void validate_schedule(const Schedule& s, const SimdDesc& simd) {
  if (auto p = schedule_problem(s, simd); !p.empty()) throw KernelError("invalid schedule: " + p);
}

std::string format_schedule(const Schedule& s) {
  char g[64];
  std::snprintf(g, sizeof g, "%.4f", s.gflops);
  std::ostringstream out;
  out << "sched M=" << s.shape.M << " N=" << s.shape.N << " K=" << s.shape.K << " mk=" << s.slice.mk.mu_M << 'x'
      << s.slice.mk.mu_N << " slice=" << s.slice.b_M << 'x' << s.slice.b_N << 'x' << s.slice.b_K << " poly=" << s.poly.t_M
      << 'x' << s.poly.t_N << 'x' << s.poly.t_K << " gflops=" << g;
  return out.str();
}

Schedule parse_schedule_line(std::string_view line, int lineno) {
  std::istringstream in{std::string(line)};
  std::vector<std::string> tok;
  for (std::string w; in >> w;) tok.push_back(w);
  const char* keys[] = {"M", "N", "K", "mk", "slice", "poly", "gflops"};
  if (tok.size() != 8 || tok[0] != "sched") throw ParseError(lineno, "expected 'sched M= N= K= mk= slice= poly= gflops='");
  std::vector<std::string> val;
  for (std::size_t i = 0; i < 7; ++i) {
    std::string k = std::string(keys[i]) + "=";
    if (!tok[i + 1].starts_with(k)) throw ParseError(lineno, "expected " + k);
    val.push_back(tok[i + 1].substr(k.size()));
  }
  Schedule s;
  std::vector<int> d;
  if (!read_dims(val[0], d, 1)) throw ParseError(lineno, "bad M");
  s.shape.M = d[0];
  if (!read_dims(val[1], d, 1)) throw ParseError(lineno, "bad N");
  s.shape.N = d[0];
  if (!read_dims(val[2], d, 1)) throw ParseError(lineno, "bad K");
  s.shape.K = d[0];
  if (!read_dims(val[3], d, 2)) throw ParseError(lineno, "bad mk");
  s.slice.mk = make_mk(d[0], d[1]);
  if (!read_dims(val[4], d, 3)) throw ParseError(lineno, "bad slice");
  s.slice.b_M = d[0];
  s.slice.b_N = d[1];
  s.slice.b_K = d[2];
  if (!read_dims(val[5], d, 3)) throw ParseError(lineno, "bad poly");
  s.poly = {d[0], d[1], d[2]};
  try {
    s.gflops = std::stod(val[6]);
  } catch (const std::exception&) {
    throw ParseError(lineno, "bad gflops");
  }
  return s;
}

std::vector<Schedule> parse_schedule_cache(std::string_view text) {
  std::vector<Schedule> out;
  std::istringstream in{std::string(text)};
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_schedule_line(line, lineno));
  }
  return out;
}

std::vector<Schedule> load_schedule_cache(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KernelError("cannot open schedule cache " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schedule_cache(ss.str());
}

void save_schedule_cache(const std::string& path, const std::vector<Schedule>& schedules) {
  std::ofstream out(path);
  if (!out) throw KernelError("cannot write schedule cache " + path);
  for (const auto& s : schedules) out << format_schedule(s) << '\n';
}

}  // namespace topotune
