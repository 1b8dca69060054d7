// ephemera-sim: scenario runner, offline commit verifier and state inspector.
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ephemera/chain/pda.h"
#include "ephemera/er/archive.h"
#include "ephemera/sim/runner.h"

namespace {

using namespace ephemera;

int cmd_run(const std::string& scenario_path, const RunOptions& options,
            const std::string& out_path, bool trace) {
  ScenarioLoad load = load_scenario_file(scenario_path);
  if (!load.ok()) {
    std::cerr << load.error << "\n";
    return 2;
  }
  RunResult result = run_scenario(load.scenario, options);
  if (!result.ok) {
    std::cerr << "run failed: " << result.error << "\n";
    return 2;
  }
  std::cout << report_to_text(result.report);
  if (trace) {
    std::cout << "\nroutes\n";
    for (const std::string& line : result.route_lines) std::cout << "  " << line << "\n";
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot write " << out_path << "\n";
      return 2;
    }
    out << report_to_jsonl(result.report);
  }
  if (result.report.fraud_verdicts > 0) {
    std::cout << "\n" << result.report.fraud_verdicts << " fraud verdict(s)\n";
    return 3;
  }
  return 0;
}

int cmd_verify(const std::string& archive_path) {
  std::ifstream in(archive_path);
  if (!in) {
    std::cerr << "cannot open " << archive_path << "\n";
    return 2;
  }
  // A scratch stack supplies the standard program registry the replay executes
  // against; the same addresses always resolve the same routines.
  Simulation sim;
  ReplayOutcome outcome = replay_session_archive(in, sim.base().registry_ptr());
  if (!outcome.ok && outcome.error.empty() && outcome.failed_verdict) {
    const VerificationVerdict& verdict = *outcome.failed_verdict;
    std::cout << "FRAUD commit " << verdict.commit_id << " (" << verdict.reason << ")";
    if (verdict.evidence) std::cout << " account " << verdict.evidence->account.hex();
    std::cout << "\n";
    return 1;
  }
  if (!outcome.ok) {
    std::cerr << "replay failed: " << outcome.error << "\n";
    return 2;
  }
  std::cout << "ok: " << outcome.commits_checked << " commit(s) verified, "
            << outcome.final_state.size() << " account(s) in final state\n";
  return 0;
}

// The decision table, computed live against a throwaway delegation setup:
// one account on rollup A, one on rollup B, one never delegated.
void print_decision_table(RpcRouter& router, const Address& on_a, const Address& on_b,
                          const Address& plain) {
  struct ReadCase {
    const char* label;
    std::vector<Address> accounts;
  };
  struct SendCase {
    const char* label;
    std::vector<AccountMeta> metas;
  };
  const ReadCase reads[] = {
      {"read undelegated", {plain}},
      {"read delegated", {on_a}},
      {"read two rollups", {on_a, on_b}},
  };
  const SendCase sends[] = {
      {"send all writables undelegated", {{plain, true}}},
      {"send all writables one rollup", {{on_a, true}}},
      {"send writables on two rollups", {{on_a, true}, {on_b, true}}},
      {"send mixed writables", {{on_a, true}, {plain, true}}},
      {"send delegated readable only", {{on_a, false}, {plain, true}}},
  };
  for (const ReadCase& c : reads)
    std::cout << "  " << c.label << " -> " << router.route_read(c.accounts).describe() << "\n";
  for (const SendCase& c : sends)
    std::cout << "  " << c.label << " -> " << router.route_writables(c.metas).describe() << "\n";
}

int cmd_routes(const std::string& scenario_path) {
  ScenarioLoad load = load_scenario_file(scenario_path);
  if (!load.ok()) {
    std::cerr << load.error << "\n";
    return 2;
  }
  const MixedPolicy policy =
      load.scenario.mixed_policy == "reject" ? MixedPolicy::reject : MixedPolicy::force_settle;
  {
    Simulation sim(SimParams{kBaseBlockTimeMs, policy, false});
    const Address payer = sim.fund_wallet("table-payer", 200'000'000);
    const Address owner = program_address("world");
    Address on_a = Address::filled(0xa1);
    Address on_b = Address::filled(0xb2);
    Address plain = Address::filled(0xc3);
    for (const Address& address : {on_a, on_b, plain}) {
      Account account;
      account.address = address;
      account.owner = owner;
      sim.base().upsert_account(account);
    }
    ERConfig config;
    sim.base().submit(make_delegate_tx(sim.ids(), sim.base(), payer, owner, {on_a}, config));
    sim.base().submit(make_delegate_tx(sim.ids(), sim.base(), payer, owner, {on_b}, config));
    sim.advance_to(sim.base().next_block_at());
    std::cout << "decision table (policy " << load.scenario.mixed_policy << ")\n";
    print_decision_table(sim.router(), on_a, on_b, plain);
  }

  RunOptions options;
  options.route_trace = true;
  RunResult result = run_scenario(load.scenario, options);
  if (!result.ok) {
    std::cerr << "run failed: " << result.error << "\n";
    return 2;
  }
  std::cout << "\nscenario decisions\n";
  for (const std::string& line : result.route_lines) std::cout << "  " << line << "\n";
  return result.report.fraud_verdicts > 0 ? 3 : 0;
}

int cmd_inspect(const std::string& dump_path) {
  std::ifstream in(dump_path);
  if (!in) {
    std::cerr << "cannot open " << dump_path << "\n";
    return 2;
  }
  std::string line;
  std::size_t accounts = 0, delegated = 0, with_data = 0, line_number = 0;
  unsigned long long total_balance = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("account")) {
      std::cerr << "line " << line_number << ": not a state record\n";
      return 2;
    }
    ++accounts;
    const auto balance = j.value("balance", std::uint64_t{0});
    total_balance += balance;
    const std::string data = j.value("data", std::string{});
    if (!data.empty()) ++with_data;
    std::cout << j["account"].get<std::string>().substr(0, 16) << "  balance " << balance
              << "  data " << data.size() / 2 << "B";
    if (j.contains("delegated_to")) {
      std::cout << "  delegated to er " << j["delegated_to"].get<std::uint64_t>();
      ++delegated;
    }
    std::cout << "\n";
  }
  std::cout << accounts << " account(s), " << with_data << " with data, " << delegated
            << " delegated, total balance " << total_balance << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ephemeral rollup simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, archive_path, dump_path;
  RunOptions options;
  bool trace = false;

  auto* run = app.add_subcommand("run", "run a scenario and print the report");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--seed", options.seed, "workload RNG seed");
  run->add_option("--out", out_path, "write the structured report here");
  run->add_option("--archive-dir", options.archive_dir, "write per-rollup session archives");
  run->add_option("--dump-state", options.state_dump_path, "write final base-layer state");
  run->add_flag("--route-trace", trace, "print every routing decision");
  run->add_flag("--async-verifier", options.async_verifier, "queue verification until flush");

  auto* verify = app.add_subcommand("verify", "re-execute a session archive's commits");
  verify->add_option("archive", archive_path, "session archive (jsonl)")->required();

  auto* routes = app.add_subcommand("routes", "dump the routing decision table");
  routes->add_option("scenario", scenario_path, "scenario JSON file")->required();

  auto* inspect = app.add_subcommand("inspect", "summarize a state dump");
  inspect->add_option("dump", dump_path, "state dump (jsonl)")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    options.route_trace = trace;
    return cmd_run(scenario_path, options, out_path, trace);
  }
  if (verify->parsed()) return cmd_verify(archive_path);
  if (routes->parsed()) return cmd_routes(scenario_path);
  if (inspect->parsed()) return cmd_inspect(dump_path);
  return 2;
}
