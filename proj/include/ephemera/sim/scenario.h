// Declarative scenario files: actors, a world with entities and components,
// published systems, delegations and a timed workload. JSON on disk; actions
// replay in (time, declaration order), so a scenario is a deterministic script.
#pragma once

#include <string>
#include <vector>

#include "ephemera/ecs/schema.h"

namespace ephemera {

struct ScenarioActor {
  std::string name;
  std::uint64_t balance = 0;

  bool operator==(const ScenarioActor&) const = default;
};

struct ComponentInit {
  std::string schema;
  FieldValues values;

  bool operator==(const ComponentInit&) const = default;
};

struct EntitySpec {
  std::string name;
  std::vector<ComponentInit> components;

  bool operator==(const EntitySpec&) const = default;
};

// Expands to `count` entities named "<prefix>0".."<prefix>N-1", each with the
// same component set.
struct EntityWave {
  std::string prefix;
  std::uint32_t count = 0;
  std::vector<ComponentInit> components;

  bool operator==(const EntityWave&) const = default;
};

struct SystemSpec {
  std::string name;
  std::string program;  // built-in program name
  std::uint32_t version = 1;
  std::vector<std::string> reads;   // schema names
  std::vector<std::string> writes;  // schema names
  std::string description;

  bool operator==(const SystemSpec&) const = default;
};

struct ErConfigSpec {
  std::uint64_t lifetime_ms = 60'000;
  std::uint64_t commit_frequency_ms = 2'000;
  std::uint64_t target_tps = 1'000;
  std::uint64_t block_time_ms = 50;
  bool gasless = true;
  std::uint64_t tick_interval_ms = 0;
  std::string tick_system;  // scenario system run by each tick, empty disables

  bool operator==(const ErConfigSpec&) const = default;
};

struct DelegationSpec {
  std::string er;  // scenario-local rollup handle
  std::uint64_t at_ms = 0;
  std::string payer;                  // actor funding the delegation escrow
  std::vector<std::string> entities;  // entity names
  std::vector<std::string> schemas;   // schema names delegated per entity
  ErConfigSpec config;

  bool operator==(const DelegationSpec&) const = default;
};

enum class ActionKind {
  move,          // run `system` with a position delta on one entity
  wave_move,     // same delta across a wave, staggered
  random_moves,  // seeded random deltas across a wave, staggered
  transfer,      // native transfer between actors
  reward,        // run `system` with target/radius/amount on one entity
  run_system,    // run `system` with raw args over named entities
  settle,        // ask a rollup for an immediate commit
  undelegate,    // undelegate one (entity, schema) component
  force_close,   // owner tears a rollup down
  inject_fraud,  // corrupt the rollup's next commit claim
  advance,       // timeline marker, no operation
};

const char* to_string(ActionKind kind);
std::optional<ActionKind> action_kind_from(const std::string& token);

struct ActionSpec {
  ActionKind kind = ActionKind::advance;
  std::uint64_t at_ms = 0;
  std::uint32_t repeat = 1;
  std::uint64_t every_ms = 0;    // gap between repeats
  std::uint64_t stagger_ms = 0;  // per-wave-member offset, wrapped to every_ms

  std::string entity;
  std::string wave;  // wave prefix for wave_move / random_moves
  std::string schema;
  std::string er;
  std::string actor;     // payer / caller; "world" means the world program
  std::string to_actor;  // transfer recipient
  std::string system;    // scenario system name

  std::uint64_t amount = 0;
  double delta[3] = {0, 0, 0};
  double target[3] = {0, 0, 0};
  double radius = 0;
  double scale = 0;  // random_moves magnitude
  std::string args_hex;
  std::vector<std::string> entities;  // run_system targets

  bool operator==(const ActionSpec&) const = default;
};

struct Scenario {
  std::string name;
  std::uint64_t duration_ms = 10'000;
  std::uint64_t base_block_time_ms = 400;
  std::string mixed_policy = "force-settle";  // or "reject"
  std::uint64_t world_id = 1;
  std::vector<ScenarioActor> actors;
  std::vector<ComponentSchema> schemas;
  std::vector<EntitySpec> entities;
  std::vector<EntityWave> waves;
  std::vector<SystemSpec> systems;
  std::vector<DelegationSpec> delegations;
  std::vector<ActionSpec> actions;

  bool operator==(const Scenario&) const = default;
};

struct ScenarioLoad {
  Scenario scenario;
  std::string error;  // "parse-error:..." or "unresolved-reference:..."

  bool ok() const { return error.empty(); }
};

ScenarioLoad parse_scenario_json(const std::string& text);
ScenarioLoad load_scenario_file(const std::string& path);
std::string scenario_to_json(const Scenario& scenario);

}  // namespace ephemera
