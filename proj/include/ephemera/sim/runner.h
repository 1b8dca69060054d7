// One wired simulation stack plus the scenario driver: expands a scenario
// into timed events, pumps every layer in simulated-time order and collects
// the run report.
#pragma once

#include <iosfwd>

#include "ephemera/ecs/world.h"
#include "ephemera/router/router.h"
#include "ephemera/sim/metrics.h"
#include "ephemera/sim/scenario.h"
#include "ephemera/verify/verifier.h"

namespace ephemera {

struct SimParams {
  std::uint64_t base_block_time_ms = kBaseBlockTimeMs;
  MixedPolicy policy = MixedPolicy::force_settle;
  bool async_verifier = false;
};

// Base chain, delegation program, provisioner, verifier, router and ECS
// frontend sharing one simulated clock. advance_to() fires every due event in
// time order, so two runs over the same inputs replay identically.
class Simulation {
 public:
  explicit Simulation(const SimParams& params = {});

  SimClock& clock() { return *clock_; }
  IdSource& ids() { return ids_; }
  Chain& base() { return base_; }
  DelegationProgram& dlp() { return dlp_; }
  Provisioner& provisioner() { return provisioner_; }
  Verifier& verifier() { return verifier_; }
  RpcRouter& router() { return router_; }
  SchemaStore& schemas() { return schemas_; }
  EcsFrontend& ecs() { return ecs_; }

  static Address wallet_address(const std::string& name);
  Address fund_wallet(const std::string& name, std::uint64_t balance);

  // Called once per newly provisioned rollup, before it sees any event.
  void set_runtime_hook(std::function<void(ErRuntime&)> hook) { runtime_hook_ = std::move(hook); }

  // Provisions pending rollups, wires their chains into the router and lets
  // the verifier look at new commits.
  void pump_services();
  // Runs rollup expiries/ticks/blocks/commits and base blocks due up to and
  // including target_ms, then leaves the clock at target_ms.
  void advance_to(std::uint64_t target_ms);
  void advance_by(std::uint64_t delta_ms) { advance_to(clock_->now_ms() + delta_ms); }
  // Keeps producing blocks until no layer holds a pending transaction.
  void drain(std::uint64_t max_extra_ms = 10'000);

 private:
  std::optional<std::uint64_t> next_due(std::uint64_t horizon);
  void step();

  std::shared_ptr<SimClock> clock_;
  std::shared_ptr<ProgramRegistry> registry_;
  IdSource ids_;
  Chain base_;
  DelegationProgram dlp_;
  Provisioner provisioner_;
  Verifier verifier_;
  RpcRouter router_;
  SchemaStore schemas_;
  EcsFrontend ecs_;
  std::function<void(ErRuntime&)> runtime_hook_;
  std::set<std::uint64_t> wired_;
};

struct RunOptions {
  std::uint64_t seed = 0;
  bool async_verifier = false;
  bool route_trace = false;
  std::string archive_dir;       // one session archive per rollup when set
  std::string state_dump_path;   // final base-layer state when set
};

struct RunResult {
  bool ok = false;
  std::string error;
  MetricsReport report;
  std::vector<std::string> route_lines;
};

RunResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

// Base-layer state as sorted line-delimited records.
void write_state_dump(std::ostream& out, const Chain& chain);

}  // namespace ephemera
