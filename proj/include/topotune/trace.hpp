#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "topotune/config.hpp"
#include "topotune/profiler.hpp"
#include "topotune/schedule.hpp"

namespace topotune {

struct PayloadGemm {
  std::string name;
  GemmShape shape;
  // times the GEMM runs per layer; 0 for the once-per-step lm-head
  int per_layer;
};

/// Named projections of one forward step at M = token_count, sharded over tp_degree.
std::vector<PayloadGemm> payload_gemms(const ModelConfig& model, int tp_degree, int token_count);
/// Distinct shapes of payload_gemms, first occurrence order.
std::vector<GemmShape> payload_shapes(const ModelConfig& model, int tp_degree, int token_count);

struct TraceRequest {
  double arrival_s = 0;
  int prompt_len = 1;
  int output_len = 1;
};

enum class WorkloadMode { single_sequence, batched };

struct Workload {
  std::vector<TraceRequest> requests;
  WorkloadMode mode = WorkloadMode::single_sequence;
};

// CSV with header arrival_s,prompt_len,output_len
std::vector<TraceRequest> parse_trace(std::string_view csv);
std::vector<TraceRequest> load_trace(const std::string& path);
std::string format_trace(const std::vector<TraceRequest>& requests);

struct LengthGenerator {
  int prompt_min = 16;
  int prompt_max = 512;
  int output_min = 16;
  int output_max = 256;
};

/// Lengths drawn with replacement from `pool`; batched arrivals are Poisson at `rate`.
Workload sample_workload(const std::vector<TraceRequest>& pool, WorkloadMode mode, double rate, int n, std::uint64_t seed);
Workload sample_workload(const LengthGenerator& gen, WorkloadMode mode, double rate, int n, std::uint64_t seed);

struct CommCost {
  double gbps = 10.0;
  double overhead_s = 5e-6;

  double seconds(double bytes) const { return bytes / (gbps * 1e9) + overhead_s; }
};

/// Seconds for one GEMM of the given shape.
class GemmLatency {
 public:
  virtual ~GemmLatency() = default;
  virtual double seconds(const GemmShape& shape) = 0;
};

// Memoized schedule timing. Shapes come from `tuned` when present, else
// extend a tuned schedule with the same N and K, else the default schedule.
class ScheduleLatency : public GemmLatency {
 public:
  ScheduleLatency(Profiler& profiler, int nthreads, const std::map<GemmShape, Schedule>* tuned = nullptr);
  double seconds(const GemmShape& shape) override;
  const std::map<GemmShape, Schedule>& used() const { return used_; }

 private:
  Schedule pick(const GemmShape& shape) const;

  Profiler& profiler_;
  int nthreads_;
  const std::map<GemmShape, Schedule>* tuned_;
  std::map<GemmShape, double> memo_;
  std::map<GemmShape, Schedule> used_;
};

// Default stand-in when a default schedule cannot use every thread.
Schedule default_schedule_upto(const GemmShape& shape, int nthreads);

struct SimOptions {
  CommCost comm;
  int max_batch = 8;
};

struct RequestLatency {
  double ttft_s = 0;
  std::vector<double> tpot_s;
};

struct LatencyReport {
  WorkloadMode mode = WorkloadMode::single_sequence;
  std::vector<RequestLatency> requests;
  double prefill_s = 0;
  double decode_s = 0;
  double comm_s = 0;

  /// Sum over requests of ttft plus every tpot.
  double total_latency_s() const;
  double p90_ttft_s() const;
  double p90_tpot_s() const;
};

LatencyReport simulate(const ServiceConfig& config, const ModelConfig& model, GemmLatency& latency, const Workload& workload,
                       const SimOptions& opts = {});

/// Nearest-rank percentile, q in (0,1]; 0 for an empty list.
double percentile(std::vector<double> values, double q);

struct SloSpec {
  double ttft_ms = 2200;
  double tpot_ms = 70;
  double scale = 1.0;

  double ttft_limit_s() const { return ttft_ms * scale / 1000.0; }
  double tpot_limit_s() const { return tpot_ms * scale / 1000.0; }
};

// single_sequence: fraction of requests whose ttft and mean tpot are within limits.
// batched: min of the ttft pass fraction and the pooled tpot pass fraction, so the
// result reaches 0.9 exactly when both P90s are within limits.
double slo_attainment(const LatencyReport& report, const SloSpec& slo);
bool request_passes(const RequestLatency& r, const SloSpec& slo);

/// Last rate of the ascending scan before attainment first drops below `goal`; 0 if the first fails.
double goodput(const std::function<double(double)>& attainment_at, const std::vector<double>& rates, double goal = 0.9);

// CSV req,ttft_s,p50_tpot_s,p90_tpot_s,pass
std::string format_report(const LatencyReport& report, const SloSpec& slo);

}  // namespace topotune
