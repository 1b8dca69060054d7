#include "ephemera/sim/metrics.h"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ephemera {

namespace {

using nlohmann::json;

std::uint64_t percentile(const std::vector<std::uint64_t>& sorted, double q) {
  if (sorted.empty()) return 0;
  const auto index = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1));
  return sorted[index];
}

json latency_record(const char* layer, const LatencyStats& stats) {
  return json{{"record", "latency"},   {"layer", layer},        {"count", stats.count},
              {"min_ms", stats.min_ms}, {"max_ms", stats.max_ms}, {"mean_ms", stats.mean_ms},
              {"p50_ms", stats.p50_ms}, {"p99_ms", stats.p99_ms}};
}

bool read_latency(const json& j, LatencyStats& stats) {
  stats.count = j.value("count", std::uint64_t{0});
  stats.min_ms = j.value("min_ms", std::uint64_t{0});
  stats.max_ms = j.value("max_ms", std::uint64_t{0});
  stats.mean_ms = j.value("mean_ms", 0.0);
  stats.p50_ms = j.value("p50_ms", std::uint64_t{0});
  stats.p99_ms = j.value("p99_ms", std::uint64_t{0});
  return true;
}

}  // namespace

LatencyStats LatencyStats::from_samples(std::vector<std::uint64_t> samples) {
  LatencyStats stats;
  if (samples.empty()) return stats;
  std::sort(samples.begin(), samples.end());
  stats.count = samples.size();
  stats.min_ms = samples.front();
  stats.max_ms = samples.back();
  const auto sum = std::accumulate(samples.begin(), samples.end(), std::uint64_t{0});
  stats.mean_ms = static_cast<double>(sum) / static_cast<double>(samples.size());
  stats.p50_ms = percentile(samples, 0.50);
  stats.p99_ms = percentile(samples, 0.99);
  return stats;
}

std::string report_to_text(const MetricsReport& report) {
  std::ostringstream out;
  out << "scenario " << report.scenario << "  seed " << report.seed << "  simulated "
      << report.duration_ms << " ms\n";
  out << "\nlayers\n";
  for (const LayerStats& layer : report.layers) {
    out << "  " << layer.layer << ": " << layer.blocks << " blocks, " << layer.txs_included
        << " txs, " << layer.fees_burned << " fees burned, " << layer.tps << " tps\n";
  }
  out << "\nrouting\n";
  out << "  reads " << report.reads_routed << ", sends " << report.routed_total << " (base "
      << report.routed_base << ", er " << report.routed_er << ", force-settled "
      << report.force_settled << ", rejected " << report.rejected << ", re-routed "
      << report.rerouted << ")\n";
  out << "\ninclusion\n";
  out << "  base " << report.included_base << ", er " << report.included_er << ", failed "
      << report.failed_txs << ", dropped " << report.dropped << "\n";
  out << "  reconciliation: routed " << report.routed_total << " = base-included "
      << report.included_base << " + er-included " << report.included_er << " + rejected "
      << report.rejected << " + dropped " << report.dropped << " ["
      << (report.reconciles() ? "ok" : "MISMATCH") << "]\n";
  auto print_latency = [&](const char* label, const LatencyStats& stats) {
    out << "  " << label << " latency: ";
    if (stats.count == 0) {
      out << "no samples\n";
      return;
    }
    out << "min " << stats.min_ms << " / p50 " << stats.p50_ms << " / p99 " << stats.p99_ms
        << " / max " << stats.max_ms << " ms (mean " << stats.mean_ms << ", n=" << stats.count
        << ")\n";
  };
  print_latency("base", report.base_latency);
  print_latency("er", report.er_latency);
  out << "\nsettlement\n";
  out << "  commits " << report.commits << " (" << report.commits_verified << " verified, "
      << report.fraud_verdicts << " fraud), ticks " << report.ticks << "\n";
  if (!report.status_counts.empty()) {
    out << "\nstatuses\n";
    for (const auto& [name, count] : report.status_counts)
      out << "  " << name << ": " << count << "\n";
  }
  if (!report.action_errors.empty()) {
    out << "\naction errors\n";
    for (const std::string& line : report.action_errors) out << "  " << line << "\n";
  }
  return out.str();
}

std::string report_to_jsonl(const MetricsReport& report) {
  std::ostringstream out;
  out << json{{"record", "report"},
              {"scenario", report.scenario},
              {"seed", report.seed},
              {"duration_ms", report.duration_ms}}
             .dump()
      << "\n";
  for (const LayerStats& layer : report.layers) {
    out << json{{"record", "layer"},
                {"layer", layer.layer},
                {"blocks", layer.blocks},
                {"txs", layer.txs_included},
                {"fees", layer.fees_burned},
                {"tps", layer.tps}}
               .dump()
        << "\n";
  }
  out << json{{"record", "routing"},
              {"reads", report.reads_routed},
              {"sends", report.routed_total},
              {"base", report.routed_base},
              {"er", report.routed_er},
              {"force_settled", report.force_settled},
              {"rejected", report.rejected},
              {"rerouted", report.rerouted}}
             .dump()
      << "\n";
  out << json{{"record", "inclusion"},
              {"base", report.included_base},
              {"er", report.included_er},
              {"failed", report.failed_txs},
              {"dropped", report.dropped},
              {"reconciles", report.reconciles()}}
             .dump()
      << "\n";
  out << latency_record("base", report.base_latency).dump() << "\n";
  out << latency_record("er", report.er_latency).dump() << "\n";
  out << json{{"record", "settlement"},
              {"commits", report.commits},
              {"verified", report.commits_verified},
              {"fraud", report.fraud_verdicts},
              {"ticks", report.ticks}}
             .dump()
      << "\n";
  for (const auto& [name, count] : report.status_counts)
    out << json{{"record", "status"}, {"name", name}, {"count", count}}.dump() << "\n";
  for (const std::string& line : report.action_errors)
    out << json{{"record", "action_error"}, {"line", line}}.dump() << "\n";
  return out.str();
}

ReportParse report_from_jsonl(const std::string& text) {
  ReportParse parse;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("record")) {
      parse.error = "line " + std::to_string(line_number) + ": not a report record";
      return parse;
    }
    const std::string record = j["record"].get<std::string>();
    MetricsReport& report = parse.report;
    if (record == "report") {
      report.scenario = j.value("scenario", std::string{});
      report.seed = j.value("seed", std::uint64_t{0});
      report.duration_ms = j.value("duration_ms", std::uint64_t{0});
    } else if (record == "layer") {
      LayerStats layer;
      layer.layer = j.value("layer", std::string{});
      layer.blocks = j.value("blocks", std::uint64_t{0});
      layer.txs_included = j.value("txs", std::uint64_t{0});
      layer.fees_burned = j.value("fees", std::uint64_t{0});
      layer.tps = j.value("tps", 0.0);
      report.layers.push_back(std::move(layer));
    } else if (record == "routing") {
      report.reads_routed = j.value("reads", std::uint64_t{0});
      report.routed_total = j.value("sends", std::uint64_t{0});
      report.routed_base = j.value("base", std::uint64_t{0});
      report.routed_er = j.value("er", std::uint64_t{0});
      report.force_settled = j.value("force_settled", std::uint64_t{0});
      report.rejected = j.value("rejected", std::uint64_t{0});
      report.rerouted = j.value("rerouted", std::uint64_t{0});
    } else if (record == "inclusion") {
      report.included_base = j.value("base", std::uint64_t{0});
      report.included_er = j.value("er", std::uint64_t{0});
      report.failed_txs = j.value("failed", std::uint64_t{0});
      report.dropped = j.value("dropped", std::uint64_t{0});
    } else if (record == "latency") {
      const std::string layer = j.value("layer", std::string{});
      read_latency(j, layer == "er" ? report.er_latency : report.base_latency);
    } else if (record == "settlement") {
      report.commits = j.value("commits", std::uint64_t{0});
      report.commits_verified = j.value("verified", std::uint64_t{0});
      report.fraud_verdicts = j.value("fraud", std::uint64_t{0});
      report.ticks = j.value("ticks", std::uint64_t{0});
    } else if (record == "status") {
      report.status_counts[j.value("name", std::string{})] = j.value("count", std::uint64_t{0});
    } else if (record == "action_error") {
      report.action_errors.push_back(j.value("line", std::string{}));
    } else {
      parse.error = "line " + std::to_string(line_number) + ": unknown record '" + record + "'";
      return parse;
    }
  }
  return parse;
}

}  // namespace ephemera
