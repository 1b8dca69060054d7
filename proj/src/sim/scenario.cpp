#include "ephemera/sim/scenario.h"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ephemera/sim/programs.h"

namespace ephemera {

namespace {

using nlohmann::json;

const std::set<std::string>& known_program_names() {
  static const std::set<std::string> names{"system",       "movement",    "reward",
                                           "energy_tick",  "physics_step", "leaderboard"};
  return names;
}

const ComponentSchema* bundled_schema(const std::string& name) {
  if (name == "position") return &position_schema();
  if (name == "energy") return &energy_schema();
  if (name == "chest") return &chest_schema();
  if (name == "flag") return &flag_schema();
  return nullptr;
}

const ComponentSchema* resolve_schema(const Scenario& scenario, const std::string& name) {
  for (const ComponentSchema& schema : scenario.schemas)
    if (schema.name == name) return &schema;
  return bundled_schema(name);
}

struct ParseCursor {
  std::string error;

  bool fail(const std::string& where, const std::string& what) {
    if (error.empty()) error = "parse-error:" + where + ": " + what;
    return false;
  }
  bool unresolved(const std::string& what, const std::string& name) {
    if (error.empty()) error = "unresolved-reference:" + what + ":" + name;
    return false;
  }
  bool ok() const { return error.empty(); }
};

bool parse_values(const json& j, const ComponentSchema& schema, const std::string& where,
                  FieldValues& out, ParseCursor& cursor) {
  if (!j.is_array()) return cursor.fail(where, "values must be an array");
  if (j.size() != schema.fields.size())
    return cursor.fail(where, "expected " + std::to_string(schema.fields.size()) + " values");
  out.clear();
  for (std::size_t i = 0; i < schema.fields.size(); ++i) {
    const FieldDef& field = schema.fields[i];
    const json& value = j[i];
    const std::string at = where + "." + field.name;
    switch (field.type) {
      case ScalarType::i64:
        if (!value.is_number_integer()) return cursor.fail(at, "expected integer");
        out.emplace_back(value.get<std::int64_t>());
        break;
      case ScalarType::u64:
        if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0))
          return cursor.fail(at, "expected unsigned integer");
        out.emplace_back(value.get<std::uint64_t>());
        break;
      case ScalarType::f64:
        if (!value.is_number()) return cursor.fail(at, "expected number");
        out.emplace_back(value.get<double>());
        break;
      case ScalarType::boolean:
        if (!value.is_boolean()) return cursor.fail(at, "expected boolean");
        out.emplace_back(value.get<bool>());
        break;
      case ScalarType::bytes: {
        if (!value.is_string()) return cursor.fail(at, "expected hex string");
        auto raw = from_hex(value.get<std::string>());
        if (!raw || raw->size() != field.byte_size)
          return cursor.fail(at, "expected " + std::to_string(field.byte_size) + " hex bytes");
        out.emplace_back(std::move(*raw));
        break;
      }
    }
  }
  return true;
}

json values_to_json(const ComponentSchema& schema, const FieldValues& values) {
  json out = json::array();
  for (std::size_t i = 0; i < values.size() && i < schema.fields.size(); ++i) {
    switch (schema.fields[i].type) {
      case ScalarType::i64: out.push_back(std::get<std::int64_t>(values[i])); break;
      case ScalarType::u64: out.push_back(std::get<std::uint64_t>(values[i])); break;
      case ScalarType::f64: out.push_back(std::get<double>(values[i])); break;
      case ScalarType::boolean: out.push_back(std::get<bool>(values[i])); break;
      case ScalarType::bytes: out.push_back(to_hex(std::get<Bytes>(values[i]))); break;
    }
  }
  return out;
}

bool parse_component_inits(const json& j, const Scenario& scenario, const std::string& where,
                           std::vector<ComponentInit>& out, ParseCursor& cursor) {
  if (!j.is_array()) return cursor.fail(where, "components must be an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& entry = j[i];
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!entry.is_object() || !entry.contains("schema") || !entry["schema"].is_string())
      return cursor.fail(at, "component needs a schema name");
    ComponentInit init;
    init.schema = entry["schema"].get<std::string>();
    const ComponentSchema* schema = resolve_schema(scenario, init.schema);
    if (!schema) return cursor.unresolved("schema", init.schema);
    if (!parse_values(entry.value("values", json::array()), *schema, at + ".values", init.values,
                      cursor))
      return false;
    out.push_back(std::move(init));
  }
  return true;
}

json component_inits_to_json(const Scenario& scenario, const std::vector<ComponentInit>& inits) {
  json out = json::array();
  for (const ComponentInit& init : inits) {
    const ComponentSchema* schema = resolve_schema(scenario, init.schema);
    json entry;
    entry["schema"] = init.schema;
    entry["values"] = schema ? values_to_json(*schema, init.values) : json::array();
    out.push_back(std::move(entry));
  }
  return out;
}

bool parse_schema_defs(const json& j, Scenario& scenario, ParseCursor& cursor) {
  if (!j.is_array()) return cursor.fail("schemas", "must be an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& entry = j[i];
    const std::string at = "schemas[" + std::to_string(i) + "]";
    if (!entry.is_object() || !entry.contains("name") || !entry.contains("fields"))
      return cursor.fail(at, "schema needs name and fields");
    ComponentSchema schema;
    schema.name = entry["name"].get<std::string>();
    for (std::size_t f = 0; f < entry["fields"].size(); ++f) {
      const json& field_json = entry["fields"][f];
      const std::string field_at = at + ".fields[" + std::to_string(f) + "]";
      if (!field_json.is_object() || !field_json.contains("name") || !field_json.contains("type"))
        return cursor.fail(field_at, "field needs name and type");
      FieldDef field;
      field.name = field_json["name"].get<std::string>();
      auto type = scalar_type_from(field_json["type"].get<std::string>());
      if (!type) return cursor.fail(field_at, "unknown type");
      field.type = *type;
      field.unit = field_json.value("unit", std::string{});
      if (field.type == ScalarType::bytes) {
        field.byte_size = field_json.value("size", std::uint16_t{0});
        if (field.byte_size == 0) return cursor.fail(field_at, "bytes field needs a size");
      }
      schema.fields.push_back(std::move(field));
    }
    scenario.schemas.push_back(std::move(schema));
  }
  return true;
}

json schema_defs_to_json(const std::vector<ComponentSchema>& schemas) {
  json out = json::array();
  for (const ComponentSchema& schema : schemas) {
    json entry;
    entry["name"] = schema.name;
    entry["fields"] = json::array();
    for (const FieldDef& field : schema.fields) {
      json field_json;
      field_json["name"] = field.name;
      field_json["type"] = to_string(field.type);
      field_json["unit"] = field.unit;
      if (field.type == ScalarType::bytes) field_json["size"] = field.byte_size;
      entry["fields"].push_back(std::move(field_json));
    }
    out.push_back(std::move(entry));
  }
  return out;
}

bool read_triplet(const json& j, const char* key, double out[3], const std::string& where,
                  ParseCursor& cursor) {
  if (!j.contains(key)) return true;
  const json& arr = j[key];
  if (!arr.is_array() || arr.size() != 3) return cursor.fail(where, std::string(key) + " needs 3 numbers");
  for (int i = 0; i < 3; ++i) {
    if (!arr[i].is_number()) return cursor.fail(where, std::string(key) + " needs numbers");
    out[i] = arr[i].get<double>();
  }
  return true;
}

bool parse_actions(const json& j, Scenario& scenario, ParseCursor& cursor) {
  if (!j.is_array()) return cursor.fail("actions", "must be an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& entry = j[i];
    const std::string at = "actions[" + std::to_string(i) + "]";
    if (!entry.is_object() || !entry.contains("kind") || !entry["kind"].is_string())
      return cursor.fail(at, "action needs a kind");
    ActionSpec action;
    auto kind = action_kind_from(entry["kind"].get<std::string>());
    if (!kind) return cursor.fail(at, "unknown kind '" + entry["kind"].get<std::string>() + "'");
    action.kind = *kind;
    action.at_ms = entry.value("at_ms", std::uint64_t{0});
    action.repeat = entry.value("repeat", std::uint32_t{1});
    action.every_ms = entry.value("every_ms", std::uint64_t{0});
    action.stagger_ms = entry.value("stagger_ms", std::uint64_t{0});
    action.entity = entry.value("entity", std::string{});
    action.wave = entry.value("wave", std::string{});
    action.schema = entry.value("schema", std::string{});
    action.er = entry.value("er", std::string{});
    action.actor = entry.value("actor", std::string{});
    action.to_actor = entry.value("to_actor", std::string{});
    action.system = entry.value("system", std::string{});
    action.amount = entry.value("amount", std::uint64_t{0});
    action.radius = entry.value("radius", 0.0);
    action.scale = entry.value("scale", 0.0);
    action.args_hex = entry.value("args_hex", std::string{});
    if (!read_triplet(entry, "delta", action.delta, at, cursor)) return false;
    if (!read_triplet(entry, "target", action.target, at, cursor)) return false;
    if (entry.contains("entities")) {
      if (!entry["entities"].is_array()) return cursor.fail(at, "entities must be an array");
      for (const json& name : entry["entities"]) {
        if (!name.is_string()) return cursor.fail(at, "entities must be names");
        action.entities.push_back(name.get<std::string>());
      }
    }
    scenario.actions.push_back(std::move(action));
  }
  return true;
}

json actions_to_json(const std::vector<ActionSpec>& actions) {
  json out = json::array();
  for (const ActionSpec& action : actions) {
    json entry;
    entry["kind"] = to_string(action.kind);
    entry["at_ms"] = action.at_ms;
    entry["repeat"] = action.repeat;
    entry["every_ms"] = action.every_ms;
    entry["stagger_ms"] = action.stagger_ms;
    entry["entity"] = action.entity;
    entry["wave"] = action.wave;
    entry["schema"] = action.schema;
    entry["er"] = action.er;
    entry["actor"] = action.actor;
    entry["to_actor"] = action.to_actor;
    entry["system"] = action.system;
    entry["amount"] = action.amount;
    entry["delta"] = {action.delta[0], action.delta[1], action.delta[2]};
    entry["target"] = {action.target[0], action.target[1], action.target[2]};
    entry["radius"] = action.radius;
    entry["scale"] = action.scale;
    entry["args_hex"] = action.args_hex;
    entry["entities"] = action.entities;
    out.push_back(std::move(entry));
  }
  return out;
}

// Cross-reference pass: every name an action or delegation mentions must
// resolve to something declared earlier in the file.
bool validate_references(const Scenario& scenario, ParseCursor& cursor) {
  std::set<std::string> actor_names;
  for (const ScenarioActor& actor : scenario.actors) actor_names.insert(actor.name);
  std::set<std::string> entity_names;
  for (const EntitySpec& entity : scenario.entities) entity_names.insert(entity.name);
  std::set<std::string> wave_names;
  for (const EntityWave& wave : scenario.waves) wave_names.insert(wave.prefix);
  std::set<std::string> system_names;
  for (const SystemSpec& system : scenario.systems) system_names.insert(system.name);
  std::set<std::string> er_names;
  for (const DelegationSpec& delegation : scenario.delegations) er_names.insert(delegation.er);

  auto entity_resolvable = [&](const std::string& name) {
    if (entity_names.contains(name)) return true;
    for (const EntityWave& wave : scenario.waves) {
      if (name.size() > wave.prefix.size() && name.compare(0, wave.prefix.size(), wave.prefix) == 0) {
        const std::string suffix = name.substr(wave.prefix.size());
        if (!suffix.empty() && suffix.find_first_not_of("0123456789") == std::string::npos) {
          const unsigned long index = std::stoul(suffix);
          if (index < wave.count) return true;
        }
      }
    }
    return false;
  };

  for (const SystemSpec& system : scenario.systems) {
    if (!known_program_names().contains(system.program))
      return cursor.unresolved("program", system.program);
    for (const std::string& schema : system.reads)
      if (!resolve_schema(scenario, schema)) return cursor.unresolved("schema", schema);
    for (const std::string& schema : system.writes)
      if (!resolve_schema(scenario, schema)) return cursor.unresolved("schema", schema);
  }
  for (const EntitySpec& entity : scenario.entities) {
    for (const ComponentInit& init : entity.components)
      if (!resolve_schema(scenario, init.schema)) return cursor.unresolved("schema", init.schema);
  }
  for (const EntityWave& wave : scenario.waves) {
    for (const ComponentInit& init : wave.components)
      if (!resolve_schema(scenario, init.schema)) return cursor.unresolved("schema", init.schema);
  }
  for (const DelegationSpec& delegation : scenario.delegations) {
    if (!actor_names.contains(delegation.payer))
      return cursor.unresolved("actor", delegation.payer);
    for (const std::string& name : delegation.entities)
      if (!entity_resolvable(name) && !wave_names.contains(name))
        return cursor.unresolved("entity", name);
    for (const std::string& name : delegation.schemas)
      if (!resolve_schema(scenario, name)) return cursor.unresolved("schema", name);
    if (!delegation.config.tick_system.empty() &&
        !system_names.contains(delegation.config.tick_system))
      return cursor.unresolved("system", delegation.config.tick_system);
  }
  for (const ActionSpec& action : scenario.actions) {
    if (!action.entity.empty() && !entity_resolvable(action.entity))
      return cursor.unresolved("entity", action.entity);
    for (const std::string& name : action.entities)
      if (!entity_resolvable(name)) return cursor.unresolved("entity", name);
    if (!action.wave.empty() && !wave_names.contains(action.wave))
      return cursor.unresolved("wave", action.wave);
    if (!action.schema.empty() && !resolve_schema(scenario, action.schema))
      return cursor.unresolved("schema", action.schema);
    if (!action.er.empty() && !er_names.contains(action.er))
      return cursor.unresolved("er", action.er);
    if (!action.actor.empty() && action.actor != "world" && !actor_names.contains(action.actor))
      return cursor.unresolved("actor", action.actor);
    if (!action.to_actor.empty() && !actor_names.contains(action.to_actor))
      return cursor.unresolved("actor", action.to_actor);
    if (!action.system.empty() && !system_names.contains(action.system))
      return cursor.unresolved("system", action.system);
    const bool needs_system = action.kind == ActionKind::move || action.kind == ActionKind::wave_move ||
                              action.kind == ActionKind::random_moves ||
                              action.kind == ActionKind::reward ||
                              action.kind == ActionKind::run_system;
    if (needs_system && action.system.empty())
      return cursor.unresolved("system", "(missing system field)");
    const bool needs_er = action.kind == ActionKind::settle ||
                          action.kind == ActionKind::force_close ||
                          action.kind == ActionKind::inject_fraud;
    if (needs_er && action.er.empty()) return cursor.unresolved("er", "(missing er field)");
  }
  return true;
}

}  // namespace

const char* to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::move: return "move";
    case ActionKind::wave_move: return "wave_move";
    case ActionKind::random_moves: return "random_moves";
    case ActionKind::transfer: return "transfer";
    case ActionKind::reward: return "reward";
    case ActionKind::run_system: return "run_system";
    case ActionKind::settle: return "settle";
    case ActionKind::undelegate: return "undelegate";
    case ActionKind::force_close: return "force_close";
    case ActionKind::inject_fraud: return "inject_fraud";
    case ActionKind::advance: return "advance";
  }
  return "?";
}

std::optional<ActionKind> action_kind_from(const std::string& token) {
  static const std::map<std::string, ActionKind> kinds{
      {"move", ActionKind::move},
      {"wave_move", ActionKind::wave_move},
      {"random_moves", ActionKind::random_moves},
      {"transfer", ActionKind::transfer},
      {"reward", ActionKind::reward},
      {"run_system", ActionKind::run_system},
      {"settle", ActionKind::settle},
      {"undelegate", ActionKind::undelegate},
      {"force_close", ActionKind::force_close},
      {"inject_fraud", ActionKind::inject_fraud},
      {"advance", ActionKind::advance},
  };
  auto it = kinds.find(token);
  if (it == kinds.end()) return std::nullopt;
  return it->second;
}

ScenarioLoad parse_scenario_json(const std::string& text) {
  ScenarioLoad load;
  ParseCursor cursor;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& err) {
    load.error = std::string("parse-error:") + err.what();
    return load;
  }
  if (!j.is_object()) {
    load.error = "parse-error:root: expected an object";
    return load;
  }

  Scenario& scenario = load.scenario;
  scenario.name = j.value("name", std::string{"unnamed"});
  scenario.duration_ms = j.value("duration_ms", std::uint64_t{10'000});
  scenario.base_block_time_ms = j.value("base_block_time_ms", std::uint64_t{400});
  scenario.mixed_policy = j.value("mixed_policy", std::string{"force-settle"});
  scenario.world_id = j.value("world_id", std::uint64_t{1});
  if (scenario.mixed_policy != "force-settle" && scenario.mixed_policy != "reject") {
    load.error = "parse-error:mixed_policy: expected force-settle or reject";
    return load;
  }

  if (j.contains("actors")) {
    for (std::size_t i = 0; i < j["actors"].size(); ++i) {
      const json& entry = j["actors"][i];
      if (!entry.is_object() || !entry.contains("name")) {
        cursor.fail("actors[" + std::to_string(i) + "]", "actor needs a name");
        break;
      }
      scenario.actors.push_back(
          ScenarioActor{entry["name"].get<std::string>(), entry.value("balance", std::uint64_t{0})});
    }
  }
  if (cursor.ok() && j.contains("schemas")) parse_schema_defs(j["schemas"], scenario, cursor);
  if (cursor.ok() && j.contains("entities")) {
    for (std::size_t i = 0; i < j["entities"].size() && cursor.ok(); ++i) {
      const json& entry = j["entities"][i];
      const std::string at = "entities[" + std::to_string(i) + "]";
      if (!entry.is_object() || !entry.contains("name")) {
        cursor.fail(at, "entity needs a name");
        break;
      }
      EntitySpec entity;
      entity.name = entry["name"].get<std::string>();
      if (entry.contains("components"))
        parse_component_inits(entry["components"], scenario, at + ".components", entity.components,
                              cursor);
      scenario.entities.push_back(std::move(entity));
    }
  }
  if (cursor.ok() && j.contains("waves")) {
    for (std::size_t i = 0; i < j["waves"].size() && cursor.ok(); ++i) {
      const json& entry = j["waves"][i];
      const std::string at = "waves[" + std::to_string(i) + "]";
      if (!entry.is_object() || !entry.contains("prefix") || !entry.contains("count")) {
        cursor.fail(at, "wave needs prefix and count");
        break;
      }
      EntityWave wave;
      wave.prefix = entry["prefix"].get<std::string>();
      wave.count = entry["count"].get<std::uint32_t>();
      if (entry.contains("components"))
        parse_component_inits(entry["components"], scenario, at + ".components", wave.components,
                              cursor);
      scenario.waves.push_back(std::move(wave));
    }
  }
  if (cursor.ok() && j.contains("systems")) {
    for (std::size_t i = 0; i < j["systems"].size(); ++i) {
      const json& entry = j["systems"][i];
      const std::string at = "systems[" + std::to_string(i) + "]";
      if (!entry.is_object() || !entry.contains("name") || !entry.contains("program")) {
        cursor.fail(at, "system needs name and program");
        break;
      }
      SystemSpec system;
      system.name = entry["name"].get<std::string>();
      system.program = entry["program"].get<std::string>();
      system.version = entry.value("version", std::uint32_t{1});
      for (const json& schema : entry.value("reads", json::array()))
        system.reads.push_back(schema.get<std::string>());
      for (const json& schema : entry.value("writes", json::array()))
        system.writes.push_back(schema.get<std::string>());
      system.description = entry.value("description", std::string{});
      scenario.systems.push_back(std::move(system));
    }
  }
  if (cursor.ok() && j.contains("delegations")) {
    for (std::size_t i = 0; i < j["delegations"].size(); ++i) {
      const json& entry = j["delegations"][i];
      const std::string at = "delegations[" + std::to_string(i) + "]";
      if (!entry.is_object() || !entry.contains("er")) {
        cursor.fail(at, "delegation needs an er handle");
        break;
      }
      DelegationSpec delegation;
      delegation.er = entry["er"].get<std::string>();
      delegation.at_ms = entry.value("at_ms", std::uint64_t{0});
      delegation.payer = entry.value("payer", std::string{});
      for (const json& name : entry.value("entities", json::array()))
        delegation.entities.push_back(name.get<std::string>());
      for (const json& name : entry.value("schemas", json::array()))
        delegation.schemas.push_back(name.get<std::string>());
      if (entry.contains("config")) {
        const json& config = entry["config"];
        delegation.config.lifetime_ms = config.value("lifetime_ms", std::uint64_t{60'000});
        delegation.config.commit_frequency_ms =
            config.value("commit_frequency_ms", std::uint64_t{2'000});
        delegation.config.target_tps = config.value("target_tps", std::uint64_t{1'000});
        delegation.config.block_time_ms = config.value("block_time_ms", std::uint64_t{50});
        delegation.config.gasless = config.value("gasless", true);
        delegation.config.tick_interval_ms = config.value("tick_interval_ms", std::uint64_t{0});
        delegation.config.tick_system = config.value("tick_system", std::string{});
      }
      scenario.delegations.push_back(std::move(delegation));
    }
  }
  if (cursor.ok() && j.contains("actions")) parse_actions(j["actions"], scenario, cursor);

  if (cursor.ok()) validate_references(scenario, cursor);
  load.error = cursor.error;
  return load;
}

ScenarioLoad load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ScenarioLoad load;
    load.error = "parse-error:" + path + ": cannot open file";
    return load;
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_json(buffer.str());
}

std::string scenario_to_json(const Scenario& scenario) {
  json j;
  j["name"] = scenario.name;
  j["duration_ms"] = scenario.duration_ms;
  j["base_block_time_ms"] = scenario.base_block_time_ms;
  j["mixed_policy"] = scenario.mixed_policy;
  j["world_id"] = scenario.world_id;
  j["actors"] = json::array();
  for (const ScenarioActor& actor : scenario.actors)
    j["actors"].push_back({{"name", actor.name}, {"balance", actor.balance}});
  j["schemas"] = schema_defs_to_json(scenario.schemas);
  j["entities"] = json::array();
  for (const EntitySpec& entity : scenario.entities) {
    json entry;
    entry["name"] = entity.name;
    entry["components"] = component_inits_to_json(scenario, entity.components);
    j["entities"].push_back(std::move(entry));
  }
  j["waves"] = json::array();
  for (const EntityWave& wave : scenario.waves) {
    json entry;
    entry["prefix"] = wave.prefix;
    entry["count"] = wave.count;
    entry["components"] = component_inits_to_json(scenario, wave.components);
    j["waves"].push_back(std::move(entry));
  }
  j["systems"] = json::array();
  for (const SystemSpec& system : scenario.systems) {
    json entry;
    entry["name"] = system.name;
    entry["program"] = system.program;
    entry["version"] = system.version;
    entry["reads"] = system.reads;
    entry["writes"] = system.writes;
    entry["description"] = system.description;
    j["systems"].push_back(std::move(entry));
  }
  j["delegations"] = json::array();
  for (const DelegationSpec& delegation : scenario.delegations) {
    json entry;
    entry["er"] = delegation.er;
    entry["at_ms"] = delegation.at_ms;
    entry["payer"] = delegation.payer;
    entry["entities"] = delegation.entities;
    entry["schemas"] = delegation.schemas;
    json config;
    config["lifetime_ms"] = delegation.config.lifetime_ms;
    config["commit_frequency_ms"] = delegation.config.commit_frequency_ms;
    config["target_tps"] = delegation.config.target_tps;
    config["block_time_ms"] = delegation.config.block_time_ms;
    config["gasless"] = delegation.config.gasless;
    config["tick_interval_ms"] = delegation.config.tick_interval_ms;
    config["tick_system"] = delegation.config.tick_system;
    entry["config"] = std::move(config);
    j["delegations"].push_back(std::move(entry));
  }
  j["actions"] = actions_to_json(scenario.actions);
  return j.dump(2) + "\n";
}

}  // namespace ephemera
