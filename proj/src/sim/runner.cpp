#include "ephemera/sim/runner.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ephemera/chain/pda.h"
#include "ephemera/core/sha256.h"
#include "ephemera/er/archive.h"
#include "ephemera/sim/programs.h"

namespace ephemera {

Simulation::Simulation(const SimParams& params)
    : clock_(std::make_shared<SimClock>()),
      registry_(std::make_shared<ProgramRegistry>()),
      base_(ChainParams{.kind = LayerKind::base,
                        .label = "base",
                        .block_time_ms = params.base_block_time_ms,
                        .required_fee = kBaseFee,
                        .blockhash_window = kBlockhashWindow},
            clock_, registry_),
      dlp_(&base_),
      provisioner_(&base_, &dlp_, clock_, &ids_),
      verifier_(&dlp_, &provisioner_, params.async_verifier),
      router_(&base_, &dlp_, &provisioner_, params.policy),
      ecs_(&base_, &router_, &schemas_, &ids_) {
  register_standard_programs(base_, &dlp_);
  schemas_.add(position_schema());
  schemas_.add(energy_schema());
  schemas_.add(chest_schema());
  schemas_.add(flag_schema());
}

Address Simulation::wallet_address(const std::string& name) {
  std::string tagged = "EPHEMERA_ACTOR:";
  tagged += name;
  return Address::from_span(
      sha256({reinterpret_cast<const std::uint8_t*>(tagged.data()), tagged.size()}).bytes);
}

Address Simulation::fund_wallet(const std::string& name, std::uint64_t balance) {
  Account wallet;
  wallet.address = wallet_address(name);
  wallet.owner = program_address("system");
  wallet.balance = balance;
  base_.upsert_account(wallet);
  return wallet.address;
}

void Simulation::pump_services() {
  provisioner_.pump();
  for (ErRuntime* runtime : provisioner_.all()) {
    if (!wired_.insert(runtime->er_id()).second) continue;
    router_.attach_chain(runtime->chain());
    if (runtime_hook_) runtime_hook_(*runtime);
  }
  verifier_.pump();
}

std::optional<std::uint64_t> Simulation::next_due(std::uint64_t horizon) {
  std::optional<std::uint64_t> best;
  auto consider = [&](std::uint64_t at) {
    at = std::max(at, clock_->now_ms());
    if (at <= horizon && (!best || at < *best)) best = at;
  };
  consider(base_.next_block_at());
  for (ErRuntime* runtime : provisioner_.alive())
    if (auto at = runtime->next_event_at()) consider(*at);
  return best;
}

void Simulation::step() {
  for (ErRuntime* runtime : provisioner_.alive()) runtime->pump();
  if (base_.block_due()) base_.produce_block();
}

void Simulation::advance_to(std::uint64_t target_ms) {
  pump_services();
  while (auto due = next_due(target_ms)) {
    if (*due > clock_->now_ms()) clock_->advance_to(*due);
    step();
    pump_services();
  }
  if (clock_->now_ms() < target_ms) clock_->advance_to(target_ms);
  pump_services();
}

void Simulation::drain(std::uint64_t max_extra_ms) {
  const std::uint64_t limit = clock_->now_ms() + max_extra_ms;
  while (true) {
    pump_services();
    bool pending = base_.pending_count() > 0;
    for (ErRuntime* runtime : provisioner_.alive())
      if (runtime->chain().pending_count() > 0) pending = true;
    if (!pending) break;
    auto due = next_due(limit);
    if (!due) break;
    if (*due > clock_->now_ms()) clock_->advance_to(*due);
    step();
  }
  verifier_.flush_all();
  pump_services();
}

void write_state_dump(std::ostream& out, const Chain& chain) {
  using nlohmann::json;
  for (const auto& [address, account] : chain.store()) {
    json j{{"account", address.hex()},
           {"owner", account.owner.hex()},
           {"balance", account.balance},
           {"executable", account.executable},
           {"data", to_hex(account.data)}};
    if (account.delegated_to) j["delegated_to"] = *account.delegated_to;
    out << j.dump() << "\n";
  }
}

namespace {

struct ScenarioRunner {
  const Scenario& scenario;
  const RunOptions& options;
  Simulation sim;
  std::mt19937_64 rng;

  Address faucet;
  Address world_program;
  std::map<std::string, Address> wallets;
  std::map<std::string, std::uint64_t> entities;  // name -> entity id
  std::map<std::string, std::uint64_t> rollups;   // scenario handle -> er id
  std::map<std::string, SystemRecord> systems;

  struct InFlight {
    std::uint64_t submitted_at_ms = 0;
  };
  std::map<std::uint64_t, InFlight> in_flight;
  std::vector<std::uint64_t> base_latency;
  std::vector<std::uint64_t> er_latency;
  MetricsReport report;
  std::uint64_t epoch = 0;

  ScenarioRunner(const Scenario& s, const RunOptions& o)
      : scenario(s),
        options(o),
        sim(SimParams{s.base_block_time_ms,
                      s.mixed_policy == "reject" ? MixedPolicy::reject : MixedPolicy::force_settle,
                      o.async_verifier}),
        rng(o.seed) {
    if (options.route_trace) sim.router().enable_trace(true);
    sim.base().add_block_listener(
        [this](Chain&, const Block& block, const std::vector<AccountUpdate>&) {
          on_block(block, false);
        });
    sim.set_runtime_hook([this](ErRuntime& runtime) {
      runtime.chain().add_block_listener(
          [this](Chain&, const Block& block, const std::vector<AccountUpdate>&) {
            on_block(block, true);
          });
    });
  }

  void on_block(const Block& block, bool rollup) {
    for (const auto& [id, status] : block.transaction_results) {
      auto it = in_flight.find(id);
      if (it == in_flight.end()) continue;
      const std::uint64_t latency = block.timestamp_ms - it->second.submitted_at_ms;
      if (rollup) {
        ++report.included_er;
        er_latency.push_back(latency);
      } else {
        ++report.included_base;
        base_latency.push_back(latency);
      }
      ++report.status_counts[to_string(status)];
      if (status != TxStatus::success) ++report.failed_txs;
      in_flight.erase(it);
    }
  }

  void note_error(std::string line) { report.action_errors.push_back(std::move(line)); }
  std::uint64_t sim_now() { return sim.clock().now_ms(); }
  std::string now_label() { return "t=" + std::to_string(sim_now()); }

  const ComponentSchema* schema_named(const std::string& name) {
    return sim.schemas().find_by_name(name);
  }

  std::optional<std::uint64_t> entity_id(const std::string& name) const {
    auto it = entities.find(name);
    if (it == entities.end()) return std::nullopt;
    return it->second;
  }

  Address payer_for(const std::string& actor) {
    if (actor.empty()) return Address{};  // gasless: first writable meta pays
    if (actor == "world") return world_program;
    auto it = wallets.find(actor);
    return it == wallets.end() ? Address{} : it->second;
  }

  Address fee_wallet(const std::string& actor) {
    if (!actor.empty() && actor != "world") {
      auto it = wallets.find(actor);
      if (it != wallets.end()) return it->second;
    }
    return faucet;
  }

  void track_submit(const Transaction& tx, const std::string& label) {
    ++report.routed_total;
    const std::uint64_t now = sim_now();
    SubmitOutcome outcome = sim.router().submit(tx);
    if (outcome.rerouted) ++report.rerouted;
    switch (outcome.decision.target) {
      case RouteTarget::base_layer:
        ++report.routed_base;
        in_flight[tx.id] = InFlight{now};
        break;
      case RouteTarget::er:
        if (outcome.accepted) {
          ++report.routed_er;
          in_flight[tx.id] = InFlight{now};
        } else {
          ++report.dropped;
          note_error(label + ": " + outcome.note);
        }
        break;
      case RouteTarget::force_settle_then_base:
        ++report.force_settled;
        ++report.routed_base;
        in_flight[tx.id] = InFlight{now};
        break;
      case RouteTarget::reject:
        ++report.rejected;
        note_error(label + ": " + outcome.note);
        break;
    }
  }

  void track_base_submit(Transaction tx) {
    ++report.routed_total;
    ++report.routed_base;
    in_flight[tx.id] = InFlight{sim_now()};
    sim.base().submit(std::move(tx));
  }

  void check(const SubmitOutcome& outcome, const std::string& label) {
    if (!outcome.accepted) note_error(label + ": " + outcome.note);
  }

  void next_block() { sim.advance_to(sim.base().next_block_at()); }

  void attach_components(const std::string& entity_name,
                         const std::vector<ComponentInit>& components) {
    auto id = entity_id(entity_name);
    if (!id) return note_error("setup: unknown entity " + entity_name);
    for (const ComponentInit& init : components) {
      const ComponentSchema* schema = schema_named(init.schema);
      if (!schema) {
        note_error("setup: unknown schema " + init.schema);
        continue;
      }
      check(sim.ecs().attach_component(scenario.world_id, *id, *schema, init.values, faucet),
            "setup:attach " + entity_name + "/" + init.schema);
    }
  }

  void setup() {
    faucet = sim.fund_wallet("__faucet", 1'000'000'000'000ull);
    wallets["__faucet"] = faucet;
    for (const ScenarioActor& actor : scenario.actors)
      wallets[actor.name] = sim.fund_wallet(actor.name, actor.balance);
    for (const ComponentSchema& schema : scenario.schemas) sim.schemas().add(schema);
    world_program = sim.ecs().world_program();

    check(sim.ecs().create_world(scenario.world_id, faucet), "setup:create_world");
    next_block();

    std::uint64_t next_id = 0;
    auto create = [&](const std::string& name) {
      check(sim.ecs().create_entity(scenario.world_id, faucet), "setup:create_entity " + name);
      entities[name] = next_id++;
    };
    for (const EntitySpec& entity : scenario.entities) create(entity.name);
    for (const EntityWave& wave : scenario.waves)
      for (std::uint32_t i = 0; i < wave.count; ++i) create(wave.prefix + std::to_string(i));
    next_block();
    auto world = sim.ecs().read_world(scenario.world_id);
    if (!world || world->entities.size() != entities.size())
      note_error("setup: entity count mismatch");

    for (const EntitySpec& entity : scenario.entities)
      attach_components(entity.name, entity.components);
    for (const EntityWave& wave : scenario.waves)
      for (std::uint32_t i = 0; i < wave.count; ++i)
        attach_components(wave.prefix + std::to_string(i), wave.components);
    for (const SystemSpec& spec : scenario.systems) {
      SystemRecord record;
      record.name = spec.name;
      record.program = program_address(spec.program);
      record.version = spec.version;
      for (const std::string& name : spec.reads)
        if (const ComponentSchema* schema = schema_named(name)) record.reads.push_back(schema->id());
      for (const std::string& name : spec.writes)
        if (const ComponentSchema* schema = schema_named(name))
          record.writes.push_back(schema->id());
      record.description = spec.description;
      systems[spec.name] = record;
      check(sim.ecs().publish_system(record, faucet), "setup:publish " + spec.name);
    }
    next_block();
    epoch = sim_now();
  }

  void dispatch_delegation(const DelegationSpec& spec) {
    const std::string label = now_label() + " delegate " + spec.er;
    auto payer = wallets.find(spec.payer);
    if (payer == wallets.end()) return note_error(label + ": unknown payer " + spec.payer);
    // A wave prefix in the entity list delegates every member.
    std::vector<std::string> names;
    for (const std::string& entity_name : spec.entities) {
      const EntityWave* wave = nullptr;
      for (const EntityWave& candidate : scenario.waves)
        if (candidate.prefix == entity_name) wave = &candidate;
      if (wave) {
        for (std::uint32_t i = 0; i < wave->count; ++i)
          names.push_back(wave->prefix + std::to_string(i));
      } else {
        names.push_back(entity_name);
      }
    }
    std::vector<Address> accounts;
    for (const std::string& entity_name : names) {
      auto id = entity_id(entity_name);
      if (!id) return note_error(label + ": unknown entity " + entity_name);
      for (const std::string& schema_name : spec.schemas) {
        const ComponentSchema* schema = schema_named(schema_name);
        if (!schema) return note_error(label + ": unknown schema " + schema_name);
        accounts.push_back(
            component_account_address(world_program, scenario.world_id, *id, schema->id()));
      }
    }
    ERConfig config;
    config.lifetime_ms = spec.config.lifetime_ms;
    config.commit_frequency_ms = spec.config.commit_frequency_ms;
    config.target_tps = spec.config.target_tps;
    config.block_time_ms = spec.config.block_time_ms;
    config.gasless = spec.config.gasless;
    if (spec.config.tick_interval_ms > 0 && !spec.config.tick_system.empty()) {
      auto system = systems.find(spec.config.tick_system);
      if (system == systems.end()) return note_error(label + ": unknown tick system");
      config.tick_interval_ms = spec.config.tick_interval_ms;
      config.tick_program = world_program;
      config.tick_args = run_payload(system->second.program, {});
    }
    Transaction tx =
        make_delegate_tx(sim.ids(), sim.base(), payer->second, world_program, accounts, config);
    rollups[spec.er] = tx.id;
    track_submit(tx, label);
  }

  void run_over_entities(const ActionSpec& action, const std::vector<std::string>& names,
                         const Bytes& args, const std::string& label) {
    auto system = systems.find(action.system);
    if (system == systems.end()) return note_error(label + ": unknown system " + action.system);
    std::vector<std::uint64_t> ids;
    for (const std::string& name : names) {
      auto id = entity_id(name);
      if (!id) return note_error(label + ": unknown entity " + name);
      ids.push_back(*id);
    }
    try {
      Transaction tx = sim.ecs().build_run_tx(scenario.world_id, system->second, ids, args,
                                              payer_for(action.actor));
      track_submit(tx, label);
    } catch (const std::exception& err) {
      note_error(label + ": " + err.what());
    }
  }

  void dispatch_move(const ActionSpec& action, const std::string& entity_name, double dx,
                     double dy, double dz) {
    const std::string label = now_label() + " " + to_string(action.kind) + " " + entity_name;
    run_over_entities(action, {entity_name}, movement_payload(dx, dy, dz), label);
  }

  void dispatch_transfer(const ActionSpec& action) {
    const std::string label = now_label() + " transfer " + action.actor + "->" + action.to_actor;
    auto from = wallets.find(action.actor);
    auto to = wallets.find(action.to_actor);
    if (from == wallets.end() || to == wallets.end())
      return note_error(label + ": unknown actor");
    std::vector<AccountMeta> metas{{from->second, true}, {to->second, true}};
    RouteDecision decision = sim.router().route_writables(metas);
    Transaction tx;
    tx.id = sim.ids().fresh();
    tx.fee_payer = from->second;
    tx.recent_blockhash =
        sim.router().blockhash_for(decision).value_or(sim.base().latest_blockhash());
    tx.program_id = program_address("system");
    tx.metas = std::move(metas);
    tx.data = transfer_payload(action.amount);
    tx.fee = sim.router().fee_for(decision);
    track_submit(tx, label);
  }

  ErRuntime* rollup_for(const ActionSpec& action, const std::string& label) {
    auto it = rollups.find(action.er);
    if (it == rollups.end()) {
      note_error(label + ": rollup " + action.er + " not provisioned");
      return nullptr;
    }
    ErRuntime* runtime = sim.provisioner().find(it->second);
    if (!runtime || !runtime->alive()) {
      note_error(label + ": rollup " + action.er + " not alive");
      return nullptr;
    }
    return runtime;
  }

  void dispatch(const ActionSpec& action) {
    const std::string label = now_label() + " " + to_string(action.kind);
    switch (action.kind) {
      case ActionKind::move:
        dispatch_move(action, action.entity, action.delta[0], action.delta[1], action.delta[2]);
        return;
      case ActionKind::transfer:
        dispatch_transfer(action);
        return;
      case ActionKind::reward:
        run_over_entities(action, {action.entity},
                          reward_payload(action.target[0], action.target[1], action.target[2],
                                         action.radius, action.amount),
                          label + " " + action.entity);
        return;
      case ActionKind::run_system: {
        Bytes args;
        if (!action.args_hex.empty()) {
          auto raw = from_hex(action.args_hex);
          if (!raw) return note_error(label + ": bad args_hex");
          args = std::move(*raw);
        }
        run_over_entities(action, action.entities, args, label + " " + action.system);
        return;
      }
      case ActionKind::settle: {
        ErRuntime* runtime = rollup_for(action, label);
        if (!runtime) return;
        runtime->request_settle();
        runtime->maybe_commit();
        return;
      }
      case ActionKind::undelegate: {
        auto id = entity_id(action.entity);
        const ComponentSchema* schema = schema_named(action.schema);
        if (!id || !schema) return note_error(label + ": unknown entity or schema");
        const Address account =
            component_account_address(world_program, scenario.world_id, *id, schema->id());
        const Address caller =
            action.actor.empty() || action.actor == "world" ? world_program
                                                            : payer_for(action.actor);
        track_base_submit(
            make_undelegate_tx(sim.ids(), sim.base(), fee_wallet(action.actor), caller, account));
        return;
      }
      case ActionKind::force_close: {
        auto it = rollups.find(action.er);
        if (it == rollups.end()) return note_error(label + ": rollup not provisioned");
        track_base_submit(make_force_close_tx(sim.ids(), sim.base(), fee_wallet(action.actor),
                                              world_program, it->second,
                                              sim.dlp().accounts_of(it->second)));
        return;
      }
      case ActionKind::inject_fraud: {
        ErRuntime* runtime = rollup_for(action, label);
        if (runtime) runtime->inject_fraud(FraudSpec{});
        return;
      }
      case ActionKind::advance:
        return;
      case ActionKind::wave_move:
      case ActionKind::random_moves:
        return;  // expanded per wave member in the timeline
    }
  }

  struct Event {
    std::uint64_t at = 0;
    std::uint64_t seq = 0;
    std::function<void(ScenarioRunner&)> fire;
  };

  std::vector<Event> build_timeline() {
    std::vector<Event> events;
    std::uint64_t seq = 0;
    for (const DelegationSpec& spec : scenario.delegations)
      events.push_back(Event{epoch + spec.at_ms, seq++,
                             [&spec](ScenarioRunner& r) { r.dispatch_delegation(spec); }});
    for (const ActionSpec& action : scenario.actions) {
      const bool per_member =
          action.kind == ActionKind::wave_move || action.kind == ActionKind::random_moves;
      const EntityWave* wave = nullptr;
      if (per_member) {
        for (const EntityWave& candidate : scenario.waves)
          if (candidate.prefix == action.wave) wave = &candidate;
        if (!wave) continue;
      }
      for (std::uint32_t rep = 0; rep < action.repeat; ++rep) {
        const std::uint64_t rep_at = epoch + action.at_ms + rep * action.every_ms;
        if (!per_member) {
          events.push_back(
              Event{rep_at, seq++, [&action](ScenarioRunner& r) { r.dispatch(action); }});
          continue;
        }
        for (std::uint32_t member = 0; member < wave->count; ++member) {
          std::uint64_t offset = member * action.stagger_ms;
          if (action.every_ms > 0 && offset > 0) offset %= action.every_ms;
          double delta[3] = {action.delta[0], action.delta[1], action.delta[2]};
          if (action.kind == ActionKind::random_moves) {
            std::uniform_real_distribution<double> unit(-1.0, 1.0);
            for (double& axis : delta) axis = action.scale * unit(rng);
          }
          const std::string entity_name = action.wave + std::to_string(member);
          events.push_back(Event{rep_at + offset, seq++,
                                 [&action, entity_name, dx = delta[0], dy = delta[1],
                                  dz = delta[2]](ScenarioRunner& r) {
                                   r.dispatch_move(action, entity_name, dx, dy, dz);
                                 }});
        }
      }
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      return a.at != b.at ? a.at < b.at : a.seq < b.seq;
    });
    return events;
  }

  RunResult finish() {
    sim.advance_to(epoch + scenario.duration_ms);
    sim.drain();
    report.dropped += in_flight.size();
    in_flight.clear();

    report.scenario = scenario.name;
    report.seed = options.seed;
    report.duration_ms = scenario.duration_ms;
    const double seconds =
        scenario.duration_ms > 0 ? static_cast<double>(scenario.duration_ms) / 1000.0 : 1.0;
    auto layer_row = [&](const Chain& chain) {
      LayerStats row;
      row.layer = chain.label();
      row.blocks = chain.blocks().size() - 1;  // excluding genesis
      row.txs_included = chain.txs_included();
      row.fees_burned = chain.fees_burned();
      row.tps = static_cast<double>(row.txs_included) / seconds;
      return row;
    };
    report.layers.push_back(layer_row(sim.base()));
    for (ErRuntime* runtime : sim.provisioner().all())
      report.layers.push_back(layer_row(runtime->chain()));

    report.reads_routed = sim.router().tally().reads;
    report.base_latency = LatencyStats::from_samples(std::move(base_latency));
    report.er_latency = LatencyStats::from_samples(std::move(er_latency));
    report.commits = sim.dlp().commit_order().size();
    for (const VerificationVerdict& verdict : sim.verifier().verdicts())
      if (verdict.verified) ++report.commits_verified;
    report.fraud_verdicts = sim.verifier().fraud_count();
    for (ErRuntime* runtime : sim.provisioner().all()) report.ticks += runtime->ticks_fired();

    RunResult result;
    result.ok = true;
    result.report = report;
    if (options.route_trace) {
      for (const RouteTraceEntry& entry : sim.router().trace()) {
        std::string line = "t=" + std::to_string(entry.at_ms) + " " +
                           (entry.kind == 'r' ? "read" : "send") +
                           " tx=" + std::to_string(entry.tx_id) + " -> " +
                           entry.decision.describe();
        if (!entry.note.empty()) line += " (" + entry.note + ")";
        result.route_lines.push_back(std::move(line));
      }
    }
    if (!options.archive_dir.empty()) {
      std::filesystem::create_directories(options.archive_dir);
      for (ErRuntime* runtime : sim.provisioner().all()) {
        const auto path = std::filesystem::path(options.archive_dir) /
                          ("er-" + std::to_string(runtime->er_id()) + ".jsonl");
        std::ofstream out(path);
        write_session_archive(out, snapshot_session(*runtime));
      }
    }
    if (!options.state_dump_path.empty()) {
      std::ofstream out(options.state_dump_path);
      write_state_dump(out, sim.base());
    }
    return result;
  }

  RunResult run() {
    setup();
    for (Event& event : build_timeline()) {
      if (event.at > sim_now()) sim.advance_to(event.at);
      event.fire(*this);
    }
    return finish();
  }
};

}  // namespace

RunResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  try {
    ScenarioRunner runner(scenario, options);
    return runner.run();
  } catch (const std::exception& err) {
    RunResult result;
    result.error = err.what();
    return result;
  }
}

}  // namespace ephemera
