#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "topotune/cli.hpp"
#include "topotune/comm.hpp"
#include "topotune/config.hpp"
#include "topotune/error.hpp"
#include "topotune/exec.hpp"
#include "topotune/kernel.hpp"
#include "topotune/search.hpp"
#include "topotune/topo.hpp"
#include "topotune/trace.hpp"

namespace fs = std::filesystem;

namespace topotune::cli {

namespace {

struct Common {
  std::string backend = "synthetic";
  std::string cost;
  std::uint64_t seed = 0;
  std::string out;
  int reps = 10;
  double budget = 0.25;
};

void add_backend(CLI::App* sub, Common& c) {
  sub->add_option("--backend", c.backend, "Profiler backend")->check(CLI::IsMember({"synthetic", "real"}))->capture_default_str();
  sub->add_option("--cost", c.cost, "Synthetic cost parameters (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--reps", c.reps, "Timed repetitions per real measurement")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--budget", c.budget, "Seconds after which a real measurement stops repeating (0 = no limit)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Writer {
 public:
  Writer(std::string dir, RunManifest& m) : dir_(std::move(dir)), manifest_(m) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }
  bool enabled() const { return !dir_.empty(); }

  void write(const std::string& rel, const std::string& content) {
    if (!enabled()) return;
    const fs::path p = fs::path(dir_) / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << content;
    manifest_.outputs.push_back(rel);
  }

  void finish() {
    if (!enabled()) return;
    std::ofstream f(fs::path(dir_) / "manifest.json", std::ios::binary);
    if (!f) throw Error("cannot write manifest in " + dir_);
    f << manifest_.to_json();
  }

 private:
  std::string dir_;
  RunManifest& manifest_;
};

CostParams cost_params(const Common& c, RunManifest& m, const TopoTree* tree) {
  CostParams p;
  if (!c.cost.empty()) {
    m.add_input(c.cost);
    p = load_cost_params(c.cost);
  }
  if (p.domain_depth) {
    if (!tree) throw ConfigError("cost params use domain_depth; pass --topo to bind it");
    p = bind_domains(p, *tree);
  }
  return p;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad integer list: " + text);
    }
    if (used != item.size() || v < 1) throw ConfigError("bad integer list: " + text);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad number list: " + text);
    }
    if (used != item.size()) throw ConfigError("bad number list: " + text);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- topo

struct TopoOpts {
  std::string file;
  bool validate = false;
  bool print = false;
  std::string out;
};

int run_topo(const TopoOpts& o, std::ostream& out) {
  RunManifest m;
  m.command = "topo";
  m.add_input(o.file);
  TopoTree t = load_topology(o.file);
  const bool sym = is_symmetric(t);
  const bool tile = is_tileable(t);
  out << "pus " << t.pu_count() << "\n";
  out << "digest " << to_hex(digest(t)) << "\n";
  for (int d = 0; d <= t.leaf_depth(); ++d) {
    const auto nodes = t.nodes_at(d);
    const std::string kind = kind_name(nodes.front()->kind, nodes.front()->cache_level, nodes.front()->label);
    auto stride = d > 0 ? tiling_stride(t, d) : std::optional<int>(1);
    out << "level " << d << " " << kind << " x" << nodes.size() << " stride=" << (stride ? std::to_string(*stride) : "none") << "\n";
  }
  out << "symmetric " << (sym ? "yes" : "no") << "\n";
  out << "tileable " << (tile ? "yes" : "no") << "\n";
  if (o.print) out << format_topology(t);
  Writer w(o.out, m);
  w.write("topology.topo", format_topology(t));
  w.finish();
  if (o.validate && !(sym && tile)) return kExitData;
  return kExitOk;
}

// ---- search

struct SearchOpts {
  std::string topo, model, trace;
  int topk = 10;
  int patience = 3;
  int requests = 16;
  std::size_t max_trees = 100000;
  Common c;
};

Workload workload_for(const std::string& trace, int n, std::uint64_t seed, RunManifest& m) {
  if (!trace.empty()) {
    m.add_input(trace);
    return sample_workload(load_trace(trace), WorkloadMode::single_sequence, 0, n, seed);
  }
  return sample_workload(LengthGenerator{}, WorkloadMode::single_sequence, 0, n, seed);
}

int run_search(const SearchOpts& o, std::ostream& out) {
  RunManifest m;
  m.command = "search";
  m.seed = o.c.seed;
  m.add_input(o.topo);
  m.add_input(o.model);
  TopoTree t = load_topology(o.topo);
  ModelConfig model = load_model(o.model);
  Workload w = workload_for(o.trace, o.requests, o.c.seed, m);
  CostParams cost = cost_params(o.c, m, &t);
  SearchParams p;
  p.topk = o.topk;
  p.patience = o.patience;
  p.max_trees = o.max_trees;
  p.seed = o.c.seed;
  m.params = {{"topk", std::to_string(o.topk)},       {"patience", std::to_string(o.patience)},
              {"requests", std::to_string(o.requests)}, {"max_trees", std::to_string(o.max_trees)},
              {"backend", o.c.backend},                 {"reps", std::to_string(o.c.reps)}, {"budget", fmt(o.c.budget)}};
  ConfigSimulator sim(model, w, o.c.backend == "real" ? Backend::real : Backend::synthetic, cost, {}, o.c.reps, o.c.budget);
  SearchResult r = search_configurations(t, model, p, sim);

  Writer wr(o.c.out, m);
  auto emit = [&](const std::string& phase, const std::vector<Evaluation>& ranked) {
    char name[64];
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      std::snprintf(name, sizeof name, "%s/rank%02zu.cfg", phase.c_str(), i + 1);
      wr.write(name, format_config(ranked[i].config));
    }
    wr.write(phase + ".csv", format_ranking(ranked));
  };
  emit("prefill", r.prefill);
  emit("decode", r.decode);
  wr.finish();
  out << "closure_trees " << r.closure_trees << "\nremoval_trees " << r.removal_trees << "\nsimulations " << sim.simulations() << "\n";
  out << "prefill\n" << format_ranking(r.prefill) << "decode\n" << format_ranking(r.decode);
  return kExitOk;
}

// ---- tune

struct TuneOpts {
  std::string model, config, topo, tokens = "1,16,128,512";
  int threads = 0;
  int sigma = 16;
  double reuse_tol = 0.05;
  int reuse_patience = 4;
  std::size_t max_mk = 0;
  Common c;
};

int run_tune(const TuneOpts& o, std::ostream& out) {
  RunManifest m;
  m.command = "tune";
  m.seed = o.c.seed;
  m.add_input(o.model);
  ModelConfig model = load_model(o.model);
  ServiceConfig cfg;
  if (!o.config.empty()) {
    m.add_input(o.config);
    cfg = load_config(o.config);
  } else {
    const int th = o.threads > 0 ? o.threads : 1;
    cfg.processes.push_back({{}, {0}});
    for (int i = 0; i < th; ++i) cfg.processes[0].cores.push_back(i);
  }
  const int threads = o.threads > 0 ? o.threads : static_cast<int>(cfg.cores_per_process());
  std::optional<TopoTree> tree;
  if (!o.topo.empty()) {
    m.add_input(o.topo);
    tree = load_topology(o.topo);
  }
  CostParams cost = cost_params(o.c, m, tree ? &*tree : nullptr);
  std::vector<int> tokens = parse_int_list(o.tokens);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());

  TuneParams tp;
  tp.sigma = o.sigma;
  tp.reuse_tol = o.reuse_tol;
  tp.reuse_patience = o.reuse_patience;
  tp.max_micro_kernels = o.max_mk;
  m.params = {{"tokens", o.tokens},
              {"threads", std::to_string(threads)},
              {"tp_degree", std::to_string(cfg.tp_degree)},
              {"sigma", std::to_string(o.sigma)},
              {"reuse_tol", fmt(o.reuse_tol)},
              {"reuse_patience", std::to_string(o.reuse_patience)},
              {"max_micro_kernels", std::to_string(o.max_mk)},
              {"backend", o.c.backend},
              {"reps", std::to_string(o.c.reps)}, {"budget", fmt(o.c.budget)}};

  std::unique_ptr<Profiler> prof;
  if (o.c.backend == "real") {
    prof = std::make_unique<RealProfiler>(std::max(1, o.c.reps / 5), o.c.reps, o.c.budget);
  } else {
    std::vector<CoreId> active;
    for (const auto& p : cfg.processes) active.insert(active.end(), p.cores.begin(), p.cores.end());
    prof = std::make_unique<SyntheticProfiler>(cost, CoreContext{cfg.processes.front().cores, active});
  }

  // one shape group per projection, M ascending
  std::map<std::pair<int, int>, std::vector<GemmShape>> groups;
  std::vector<std::pair<int, int>> order;
  for (int M : tokens) {
    for (const GemmShape& s : payload_shapes(model, cfg.tp_degree, M)) {
      auto key = std::make_pair(s.N, s.K);
      if (!groups.count(key)) order.push_back(key);
      auto& g = groups[key];
      if (std::find(g.begin(), g.end(), s) == g.end()) g.push_back(s);
    }
  }
  std::vector<Schedule> all;
  std::string csv = "M,N,K,gflops,default_gflops,profiler_calls\n";
  for (const auto& key : order) {
    const std::size_t before = prof->calls();
    TuneResult r = tune_shape_group(groups[key], tp, threads, *prof);
    const std::size_t calls = prof->calls() - before;
    for (const auto& rec : r.records) {
      const Schedule& s = r.schedules.at(rec.shape);
      const double dflt = prof->profile(default_schedule_upto(rec.shape, threads));
      all.push_back(s);
      csv += std::to_string(s.shape.M) + "," + std::to_string(s.shape.N) + "," + std::to_string(s.shape.K) + "," + fmt(s.gflops) + "," +
             fmt(dflt) + "," + std::to_string(rec.profiler_calls) + "\n";
    }
    out << "group N=" << key.first << " K=" << key.second << " shapes=" << groups[key].size() << " calls=" << calls << "\n";
  }
  std::string cache;
  for (const auto& s : all) cache += format_schedule(s) + "\n";
  Writer wr(o.c.out, m);
  wr.write("schedules.txt", cache);
  wr.write("tune.csv", csv);
  wr.finish();
  out << csv;
  return kExitOk;
}

// ---- simulate

struct SimulateOpts {
  std::string config, model, trace, schedules, topo;
  std::string slo = "2200,70";
  double scale = 1.0;
  std::string rates;
  std::string mode = "single";
  int requests = 90;
  int max_batch = 8;
  double gbps = 10.0;
  Common c;
};

int run_simulate(const SimulateOpts& o, std::ostream& out) {
  RunManifest m;
  m.command = "simulate";
  m.seed = o.c.seed;
  m.add_input(o.config);
  m.add_input(o.model);
  ServiceConfig cfg = load_config(o.config);
  ModelConfig model = load_model(o.model);
  std::vector<TraceRequest> pool;
  if (!o.trace.empty()) {
    m.add_input(o.trace);
    pool = load_trace(o.trace);
  }
  std::optional<TopoTree> tree;
  if (!o.topo.empty()) {
    m.add_input(o.topo);
    tree = load_topology(o.topo);
  }
  CostParams cost = cost_params(o.c, m, tree ? &*tree : nullptr);
  std::map<GemmShape, Schedule> tuned;
  if (!o.schedules.empty()) {
    m.add_input(o.schedules);
    for (const auto& s : parse_schedule_cache(read_file(o.schedules))) tuned[s.shape] = s;
  }
  auto slo_vals = parse_double_list(o.slo);
  if (slo_vals.size() != 2 || slo_vals[0] <= 0 || slo_vals[1] <= 0) throw ConfigError("--slo expects ttft_ms,tpot_ms");
  if (!(o.scale > 0)) throw ConfigError("--scale must be positive");
  SloSpec slo{slo_vals[0], slo_vals[1], o.scale};
  SimOptions so;
  so.max_batch = o.max_batch;
  so.comm.gbps = o.gbps;
  m.params = {{"slo", o.slo},       {"scale", fmt(o.scale)}, {"rates", o.rates},   {"mode", o.mode},
              {"requests", std::to_string(o.requests)},      {"max_batch", std::to_string(o.max_batch)},
              {"gbps", fmt(o.gbps)}, {"backend", o.c.backend}, {"reps", std::to_string(o.c.reps)}, {"budget", fmt(o.c.budget)}};

  std::unique_ptr<Profiler> prof;
  if (o.c.backend == "real") {
    prof = std::make_unique<RealProfiler>(std::max(1, o.c.reps / 5), o.c.reps, o.c.budget);
  } else {
    std::vector<CoreId> active;
    for (const auto& p : cfg.processes) active.insert(active.end(), p.cores.begin(), p.cores.end());
    prof = std::make_unique<SyntheticProfiler>(cost, CoreContext{cfg.processes.front().cores, active});
  }
  ScheduleLatency lat(*prof, static_cast<int>(cfg.cores_per_process()), tuned.empty() ? nullptr : &tuned);
  auto draw = [&](WorkloadMode mode, double rate) {
    return pool.empty() ? sample_workload(LengthGenerator{}, mode, rate, o.requests, o.c.seed)
                        : sample_workload(pool, mode, rate, o.requests, o.c.seed);
  };

  const WorkloadMode mode = o.mode == "batched" ? WorkloadMode::batched : WorkloadMode::single_sequence;
  const std::vector<double> rates = o.rates.empty() ? std::vector<double>{} : parse_double_list(o.rates);
  if (mode == WorkloadMode::batched && rates.empty()) throw ConfigError("batched mode needs --rates");
  Workload w = draw(mode, mode == WorkloadMode::batched ? rates.front() : 0.0);
  LatencyReport rep = simulate(cfg, model, lat, w, so);
  Writer wr(o.c.out, m);
  wr.write("report.csv", format_report(rep, slo));
  out << "requests " << rep.requests.size() << "\n";
  out << "attainment " << fmt(slo_attainment(rep, slo)) << "\n";
  out << "p90_ttft_s " << fmt(rep.p90_ttft_s()) << "\np90_tpot_s " << fmt(rep.p90_tpot_s()) << "\n";
  if (!rates.empty()) {
    std::string csv = "rate,attainment\n";
    auto at = [&](double rate) {
      LatencyReport r = simulate(cfg, model, lat, draw(WorkloadMode::batched, rate), so);
      const double a = slo_attainment(r, slo);
      csv += fmt(rate) + "," + fmt(a) + "\n";
      return a;
    };
    const double g = goodput(at, rates);
    wr.write("goodput.csv", csv);
    out << "goodput " << fmt(g) << "\n";
  }
  wr.finish();
  return kExitOk;
}

// ---- bench

struct BenchOpts {
  int M = 128, N = 1024, K = 1024;
  int threads = 1;
  int reps = 10;
  std::string schedules;
  std::string out;
};

double time_median(int reps, const std::function<void()>& fn) {
  std::vector<double> t;
  for (int i = 0; i < reps; ++i) {
    auto a = std::chrono::steady_clock::now();
    fn();
    auto b = std::chrono::steady_clock::now();
    t.push_back(std::chrono::duration<double>(b - a).count());
  }
  std::sort(t.begin(), t.end());
  return std::max(t[t.size() / 2], 1e-9);
}

int run_bench(const BenchOpts& o, std::ostream& out) {
  RunManifest m;
  m.command = "bench";
  const GemmShape sh{o.M, o.N, o.K};
  if (o.M < 1 || o.N < 1 || o.K < 1 || o.threads < 1 || o.reps < 1) throw ConfigError("bench sizes must be positive");
  Schedule s = default_schedule_upto(sh, o.threads);
  std::string label = "default";
  if (!o.schedules.empty()) {
    m.add_input(o.schedules);
    for (const auto& c : parse_schedule_cache(read_file(o.schedules))) {
      if (c.shape == sh) {
        s = c;
        label = "tuned";
      }
    }
  }
  m.params = {{"M", std::to_string(o.M)}, {"N", std::to_string(o.N)}, {"K", std::to_string(o.K)},
              {"threads", std::to_string(o.threads)}, {"reps", std::to_string(o.reps)}};
  Matrix A = Matrix::random(o.M, o.K, 1), B = Matrix::random(o.K, o.N, 2), C;
  const int nt = s.poly.threads();
  const double naive = time_median(std::max(1, o.reps / 5), [&] { C = naive_gemm(A, B); });
  const Matrix ref = C;
  const double serial = time_median(o.reps, [&] { C = exec_schedule_serial(A, B, s, nt); });
  const double par = time_median(o.reps, [&] { exec_schedule_into(A, B, s, nt, C); });
  const double err = max_rel_error(C, ref);
  std::string csv = "variant,seconds,gflops\n";
  csv += "naive," + fmt(naive) + "," + fmt(sh.flops() / naive * 1e-9) + "\n";
  csv += label + "_serial," + fmt(serial) + "," + fmt(sh.flops() / serial * 1e-9) + "\n";
  csv += label + "_openmp," + fmt(par) + "," + fmt(sh.flops() / par * 1e-9) + "\n";
  out << "schedule " << format_schedule(s) << "\n" << csv << "max_rel_error " << fmt(err) << "\n";
  Writer wr(o.out, m);
  wr.write("bench.csv", csv);
  wr.finish();
  return err <= 1e-4 ? kExitOk : kExitData;
}

struct AllreduceOpts {
  int ranks = 4;
  std::size_t len = 8192;
  int reps = 20;
  std::string out;
};

int run_bench_allreduce(const AllreduceOpts& o, std::ostream& out) {
  RunManifest m;
  m.command = "bench-allreduce";
  if (o.ranks < 1 || o.len < 1 || o.reps < 1) throw ConfigError("ranks, len and reps must be positive");
  m.params = {{"ranks", std::to_string(o.ranks)}, {"len", std::to_string(o.len)}, {"reps", std::to_string(o.reps)}};
  std::vector<std::vector<float>> in(static_cast<std::size_t>(o.ranks));
  for (int r = 0; r < o.ranks; ++r) {
    Matrix x = Matrix::random(1, static_cast<int>(o.len), static_cast<std::uint64_t>(r) + 1);
    in[static_cast<std::size_t>(r)] = x.data;
  }
  ShmLayout l = block_layout(o.len, o.ranks);
  AllreduceResult res;
  std::vector<float> seq;
  const double shifted = time_median(o.reps, [&] { res = rank_shifted_allreduce(in, l); });
  const double sequential = time_median(o.reps, [&] { seq = sequential_sum(in); });
  double err = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    err = std::max(err, std::abs(double(res.sum[i]) - seq[i]) / std::max(1.0, std::abs(double(seq[i]))));
  }
  std::string csv = "variant,seconds\nrank_shifted," + fmt(shifted) + "\nsequential," + fmt(sequential) + "\n";
  out << "block_bytes " << l.block_bytes << "\nblocks " << l.blocks << "\nphases " << l.phases() << "\n" << csv << "max_rel_error " << fmt(err)
      << "\n";
  Writer wr(o.out, m);
  wr.write("allreduce.csv", csv);
  wr.finish();
  return err <= 1e-5 ? kExitOk : kExitData;
}

// ---- report

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

int run_report(const std::vector<std::string>& files, std::ostream& out) {
  for (const auto& f : files) {
    auto rows = read_csv(read_file(f));
    if (rows.empty()) throw ConfigError("empty CSV: " + f);
    const std::size_t cols = rows[0].size();
    std::vector<std::size_t> width(cols, 0);
    for (const auto& r : rows) {
      if (r.size() != cols) throw ConfigError("ragged CSV: " + f);
      for (std::size_t i = 0; i < cols; ++i) width[i] = std::max(width[i], std::min<std::size_t>(r[i].size(), 16));
    }
    out << "== " << f << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < cols; ++i) {
        std::string cell = r[i].size() > 16 ? r[i].substr(0, 13) + "..." : r[i];
        out << std::left << std::setw(static_cast<int>(width[i]) + 2) << cell;
      }
      out << "\n";
    }
    const std::size_t n = rows.size() - 1;
    if (rows[0] == std::vector<std::string>{"req", "ttft_s", "p50_tpot_s", "p90_tpot_s", "pass"} && n > 0) {
      std::vector<double> ttft;
      double pass = 0;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        ttft.push_back(std::stod(rows[i][1]));
        pass += std::stod(rows[i][4]);
      }
      out << "requests " << n << "  pass_fraction " << fmt(pass / n) << "  p50_ttft_s " << fmt(percentile(ttft, 0.5)) << "  p90_ttft_s "
          << fmt(percentile(ttft, 0.9)) << "\n";
    } else if (cols >= 4 && rows[0][3] == "latency_s" && n > 0) {
      out << "best latency_s " << rows[1][3] << " (tp=" << rows[1][1] << ")\n";
    }
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"topotune: topology-aware service configuration search and GEMM tuning", "topotune"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  TopoOpts topo;
  auto* s_topo = app.add_subcommand("topo", "Parse a topology file, print its levels and symmetry/tiling verdicts");
  s_topo->add_option("--file", topo.file, "Topology file (topo v1)")->required()->check(CLI::ExistingFile);
  s_topo->add_flag("--validate", topo.validate, "Exit 2 unless the tree is symmetric and tileable");
  s_topo->add_flag("--print", topo.print, "Echo the normalized tree");
  s_topo->add_option("--out", topo.out, "Output directory");

  SearchOpts search;
  auto* s_search = app.add_subcommand("search", "Search service configurations; writes ranked configs and CSV reports");
  s_search->add_option("--topo", search.topo, "Fundamental topology file")->required()->check(CLI::ExistingFile);
  s_search->add_option("--model", search.model, "Model JSON")->required()->check(CLI::ExistingFile);
  s_search->add_option("--trace", search.trace, "Trace CSV arrival_s,prompt_len,output_len")->check(CLI::ExistingFile);
  s_search->add_option("--requests", search.requests, "Requests sampled from the trace")->check(CLI::NonNegativeNumber)->capture_default_str();
  s_search->add_option("--topk", search.topk, "Configs kept per list")->check(CLI::PositiveNumber)->capture_default_str();
  s_search->add_option("--patience", search.patience, "Early-stop patience per process group")->check(CLI::PositiveNumber)->capture_default_str();
  s_search->add_option("--max-trees", search.max_trees, "Tree limit")->check(CLI::PositiveNumber)->capture_default_str();
  s_search->add_option("--seed", search.c.seed, "Sampling seed")->capture_default_str();
  s_search->add_option("--out", search.c.out, "Output directory")->required();
  add_backend(s_search, search.c);

  TuneOpts tune;
  auto* s_tune = app.add_subcommand("tune", "Tune GEMM schedules for a model's payload shapes; writes a schedule cache");
  s_tune->add_option("--model", tune.model, "Model JSON")->required()->check(CLI::ExistingFile);
  s_tune->add_option("--config", tune.config, "Service config (sets tp degree and threads)")->check(CLI::ExistingFile);
  s_tune->add_option("--topo", tune.topo, "Topology, needed when cost params use domain_depth")->check(CLI::ExistingFile);
  s_tune->add_option("--threads", tune.threads, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  s_tune->add_option("--tokens", tune.tokens, "Token counts M, comma separated")->capture_default_str();
  s_tune->add_option("--sigma", tune.sigma, "Sliding window size")->check(CLI::PositiveNumber)->capture_default_str();
  s_tune->add_option("--reuse-tol", tune.reuse_tol, "Relative deviation for schedule reuse")->capture_default_str();
  s_tune->add_option("--reuse-patience", tune.reuse_patience, "Stable optima before freezing")->check(CLI::PositiveNumber)->capture_default_str();
  s_tune->add_option("--max-mk", tune.max_mk, "Keep only the densest N micro-kernels (0 = all)")->capture_default_str();
  s_tune->add_option("--seed", tune.c.seed, "Seed")->capture_default_str();
  s_tune->add_option("--out", tune.c.out, "Output directory")->required();
  add_backend(s_tune, tune.c);

  BenchOpts bench;
  auto* s_bench = app.add_subcommand("bench", "Time naive, serial and OpenMP execution of one GEMM");
  s_bench->add_option("--m", bench.M, "M")->capture_default_str();
  s_bench->add_option("--n", bench.N, "N")->capture_default_str();
  s_bench->add_option("--k", bench.K, "K")->capture_default_str();
  s_bench->add_option("--threads", bench.threads, "Worker threads")->capture_default_str();
  s_bench->add_option("--reps", bench.reps, "Timed repetitions")->capture_default_str();
  s_bench->add_option("--schedules", bench.schedules, "Schedule cache; uses the entry for this shape")->check(CLI::ExistingFile);
  s_bench->add_option("--out", bench.out, "Output directory");

  AllreduceOpts ar;
  auto* s_ar = app.add_subcommand("bench-allreduce", "Time the rank-shifted all-reduce against a sequential sum");
  s_ar->add_option("--ranks", ar.ranks, "Ranks")->capture_default_str();
  s_ar->add_option("--len", ar.len, "Floats per rank")->capture_default_str();
  s_ar->add_option("--reps", ar.reps, "Timed repetitions")->capture_default_str();
  s_ar->add_option("--out", ar.out, "Output directory");

  SimulateOpts sim;
  auto* s_sim = app.add_subcommand("simulate", "Simulate serving latency of one config; report CSV req,ttft_s,p50_tpot_s,p90_tpot_s,pass");
  s_sim->add_option("--config", sim.config, "Service config")->required()->check(CLI::ExistingFile);
  s_sim->add_option("--model", sim.model, "Model JSON")->required()->check(CLI::ExistingFile);
  s_sim->add_option("--trace", sim.trace, "Trace CSV")->check(CLI::ExistingFile);
  s_sim->add_option("--schedules", sim.schedules, "Tuned schedule cache")->check(CLI::ExistingFile);
  s_sim->add_option("--topo", sim.topo, "Topology, needed when cost params use domain_depth")->check(CLI::ExistingFile);
  s_sim->add_option("--slo", sim.slo, "ttft_ms,tpot_ms")->capture_default_str();
  s_sim->add_option("--scale", sim.scale, "SLO scale")->capture_default_str();
  s_sim->add_option("--rates", sim.rates, "Ascending request rates for the goodput scan");
  s_sim->add_option("--mode", sim.mode, "Workload mode")->check(CLI::IsMember({"single", "batched"}))->capture_default_str();
  s_sim->add_option("--requests", sim.requests, "Requests sampled")->check(CLI::NonNegativeNumber)->capture_default_str();
  s_sim->add_option("--max-batch", sim.max_batch, "Batch size limit")->check(CLI::PositiveNumber)->capture_default_str();
  s_sim->add_option("--gbps", sim.gbps, "All-reduce bandwidth")->check(CLI::PositiveNumber)->capture_default_str();
  s_sim->add_option("--seed", sim.c.seed, "Sampling seed")->capture_default_str();
  s_sim->add_option("--out", sim.c.out, "Output directory");
  add_backend(s_sim, sim.c);

  std::vector<std::string> report_files;
  auto* s_report = app.add_subcommand("report", "Render CSV outputs as aligned tables with summaries");
  s_report->add_option("files", report_files, "CSV files")->required()->check(CLI::ExistingFile);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << tool_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (*s_topo) return run_topo(topo, out);
    if (*s_search) return run_search(search, out);
    if (*s_tune) return run_tune(tune, out);
    if (*s_bench) return run_bench(bench, out);
    if (*s_ar) return run_bench_allreduce(ar, out);
    if (*s_sim) return run_simulate(sim, out);
    if (*s_report) return run_report(report_files, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace topotune::cli
