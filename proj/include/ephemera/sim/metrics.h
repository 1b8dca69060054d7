// Run report: per-layer throughput, inclusion latency, routing tally and
// settlement counters, with a text rendering and a line-delimited structured
// form that parses back to the same report.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ephemera {

struct LayerStats {
  std::string layer;  // "base" or "er:<id>"
  std::uint64_t blocks = 0;
  std::uint64_t txs_included = 0;
  std::uint64_t fees_burned = 0;
  double tps = 0;  // txs over simulated seconds

  bool operator==(const LayerStats&) const = default;
};

struct LatencyStats {
  std::uint64_t count = 0;
  std::uint64_t min_ms = 0;
  std::uint64_t max_ms = 0;
  double mean_ms = 0;
  std::uint64_t p50_ms = 0;
  std::uint64_t p99_ms = 0;

  bool operator==(const LatencyStats&) const = default;

  static LatencyStats from_samples(std::vector<std::uint64_t> samples);
};

struct MetricsReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::uint64_t duration_ms = 0;
  std::vector<LayerStats> layers;  // base first, rollups in id order

  // Routing tally, straight off the router.
  std::uint64_t reads_routed = 0;
  std::uint64_t routed_total = 0;  // workload sends
  std::uint64_t routed_base = 0;
  std::uint64_t routed_er = 0;
  std::uint64_t force_settled = 0;
  std::uint64_t rejected = 0;
  std::uint64_t rerouted = 0;

  // Inclusion of routed transactions (submission to block, simulated ms).
  std::uint64_t included_base = 0;
  std::uint64_t included_er = 0;
  std::uint64_t failed_txs = 0;  // included with a non-success status
  std::uint64_t dropped = 0;     // accepted but never included (rollup died)
  LatencyStats base_latency;
  LatencyStats er_latency;

  std::uint64_t commits = 0;
  std::uint64_t commits_verified = 0;
  std::uint64_t fraud_verdicts = 0;
  std::uint64_t ticks = 0;

  std::map<std::string, std::uint64_t> status_counts;  // routed txs by result
  std::vector<std::string> action_errors;

  bool operator==(const MetricsReport&) const = default;

  // routed = base-included + er-included + rejected (+ dropped, normally 0).
  bool reconciles() const {
    return routed_total == included_base + included_er + rejected + dropped;
  }
};

std::string report_to_text(const MetricsReport& report);
std::string report_to_jsonl(const MetricsReport& report);

struct ReportParse {
  MetricsReport report;
  std::string error;

  bool ok() const { return error.empty(); }
};

ReportParse report_from_jsonl(const std::string& text);

}  // namespace ephemera
