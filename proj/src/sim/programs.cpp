#include "ephemera/sim/programs.h"

#include <cmath>

#include "ephemera/chain/pda.h"
#include "ephemera/dlp/delegation.h"
#include "ephemera/ecs/world.h"
#include "ephemera/exec/engine.h"

namespace ephemera {

namespace {

ComponentSchema make_schema(std::string name, std::vector<FieldDef> fields) {
  ComponentSchema schema;
  schema.name = std::move(name);
  schema.fields = std::move(fields);
  return schema;
}

// Decodes handle data as a component of the given schema, if it is one.
std::optional<std::pair<std::uint64_t, FieldValues>> component_of(
    const AccountHandle& handle, const ComponentSchema& schema) {
  auto view = split_component_data(handle.data());
  if (!view || view->schema_id != schema.id()) return std::nullopt;
  auto values = decode_component_values(schema, view->value_bytes);
  if (!values) return std::nullopt;
  return std::make_pair(view->entity_id, std::move(*values));
}

}  // namespace

const ComponentSchema& position_schema() {
  static const ComponentSchema schema = make_schema(
      "position", {{"x", ScalarType::f64, "", 0},
                   {"y", ScalarType::f64, "", 0},
                   {"z", ScalarType::f64, "", 0}});
  return schema;
}

const ComponentSchema& energy_schema() {
  static const ComponentSchema schema =
      make_schema("energy", {{"value", ScalarType::u64, "points", 0}});
  return schema;
}

const ComponentSchema& chest_schema() {
  static const ComponentSchema schema =
      make_schema("chest", {{"tokens", ScalarType::u64, "", 0}});
  return schema;
}

const ComponentSchema& flag_schema() {
  static const ComponentSchema schema =
      make_schema("flag", {{"passed", ScalarType::boolean, "", 0}});
  return schema;
}

Bytes transfer_payload(std::uint64_t amount) {
  ByteWriter w;
  w.put_u64(amount);
  return w.take();
}

Address register_system_program(Chain& chain) {
  return chain.register_program("system", [](ProgramContext& ctx) {
    ByteReader r(ctx.instruction());
    std::uint64_t amount = r.get_u64();
    if (!r.ok() || !r.at_end()) ctx.fail("transfer-payload");
    if (ctx.account_count() < 2) ctx.fail("transfer-metas");
    ctx.account(0).debit(amount);
    ctx.account(1).credit(amount);
  });
}

Bytes movement_payload(double dx, double dy, double dz) {
  ByteWriter w;
  w.put_f64(dx);
  w.put_f64(dy);
  w.put_f64(dz);
  return w.take();
}

namespace {

void apply_position_delta(ProgramContext& ctx, bool require_match) {
  ByteReader r(ctx.instruction());
  double dx = r.get_f64();
  double dy = r.get_f64();
  double dz = r.get_f64();
  if (!r.ok()) ctx.fail("movement-payload");
  bool moved = false;
  for (std::size_t i = 0; i < ctx.account_count(); ++i) {
    AccountHandle& handle = ctx.account(i);
    if (!handle.writable()) continue;
    auto component = component_of(handle, position_schema());
    if (!component) continue;
    auto& [entity, values] = *component;
    values[0] = std::get<double>(values[0]) + dx;
    values[1] = std::get<double>(values[1]) + dy;
    values[2] = std::get<double>(values[2]) + dz;
    handle.set_data(encode_component_data(position_schema(), entity, values));
    moved = true;
  }
  if (require_match && !moved) ctx.fail("no-position-component");
}

}  // namespace

Address register_movement_program(Chain& chain) {
  return chain.register_program("movement",
                                [](ProgramContext& ctx) { apply_position_delta(ctx, true); });
}

Bytes physics_payload(double dx, double dy, double dz) { return movement_payload(dx, dy, dz); }

Address register_physics_step_program(Chain& chain) {
  return chain.register_program("physics_step",
                                [](ProgramContext& ctx) { apply_position_delta(ctx, false); });
}

Bytes reward_payload(double x, double y, double z, double radius, std::uint64_t amount) {
  ByteWriter w;
  w.put_f64(x);
  w.put_f64(y);
  w.put_f64(z);
  w.put_f64(radius);
  w.put_u64(amount);
  return w.take();
}

Address register_reward_program(Chain& chain) {
  return chain.register_program("reward", [](ProgramContext& ctx) {
    ByteReader r(ctx.instruction());
    double tx = r.get_f64();
    double ty = r.get_f64();
    double tz = r.get_f64();
    double radius = r.get_f64();
    std::uint64_t amount = r.get_u64();
    if (!r.ok()) ctx.fail("reward-payload");

    const FieldValues* pos = nullptr;
    FieldValues pos_values;
    AccountHandle* chest = nullptr;
    std::uint64_t chest_entity = 0;
    FieldValues chest_values;
    for (std::size_t i = 0; i < ctx.account_count(); ++i) {
      AccountHandle& handle = ctx.account(i);
      if (!pos && !handle.writable()) {
        if (auto component = component_of(handle, position_schema())) {
          pos_values = component->second;
          pos = &pos_values;
        }
      }
      if (!chest && handle.writable()) {
        if (auto component = component_of(handle, chest_schema())) {
          chest_entity = component->first;
          chest_values = component->second;
          chest = &handle;
        }
      }
    }
    if (!pos) ctx.fail("no-position-component");
    if (!chest) ctx.fail("no-chest-component");

    double dx = std::get<double>((*pos)[0]) - tx;
    double dy = std::get<double>((*pos)[1]) - ty;
    double dz = std::get<double>((*pos)[2]) - tz;
    if (dx * dx + dy * dy + dz * dz > radius * radius) ctx.fail("not-at-target");

    chest_values[0] = std::get<std::uint64_t>(chest_values[0]) + amount;
    chest->set_data(encode_component_data(chest_schema(), chest_entity, chest_values));
  });
}

Address register_energy_tick_program(Chain& chain) {
  return chain.register_program("energy_tick", [](ProgramContext& ctx) {
    for (std::size_t i = 0; i < ctx.account_count(); ++i) {
      AccountHandle& handle = ctx.account(i);
      if (!handle.writable()) continue;
      auto component = component_of(handle, energy_schema());
      if (!component) continue;
      auto& [entity, values] = *component;
      values[0] = std::get<std::uint64_t>(values[0]) + 1;
      handle.set_data(encode_component_data(energy_schema(), entity, values));
    }
  });
}

Address register_leaderboard_program(Chain& chain) {
  return chain.register_program("leaderboard", [](ProgramContext& ctx) {
    const AccountHandle* threshold_account = nullptr;
    std::uint64_t energy_value = 0;
    bool have_energy = false;
    AccountHandle* flag = nullptr;
    std::uint64_t flag_entity = 0;
    FieldValues flag_values;
    for (std::size_t i = 0; i < ctx.account_count(); ++i) {
      AccountHandle& handle = ctx.account(i);
      if (!handle.writable()) {
        if (!threshold_account && handle.owner() == program_address("leaderboard") &&
            handle.data().size() == 8) {
          threshold_account = &handle;
        } else if (auto component = component_of(handle, energy_schema())) {
          energy_value = std::get<std::uint64_t>(component->second[0]);
          have_energy = true;
        }
        continue;
      }
      if (auto component = component_of(handle, flag_schema())) {
        flag_entity = component->first;
        flag_values = component->second;
        flag = &handle;
      }
    }
    if (!threshold_account) ctx.fail("no-threshold-account");
    if (!have_energy) ctx.fail("no-energy-component");
    if (!flag) ctx.fail("no-flag-component");

    ByteReader r(threshold_account->data());
    std::uint64_t threshold = r.get_u64();
    flag_values[0] = energy_value >= threshold;
    flag->set_data(encode_component_data(flag_schema(), flag_entity, flag_values));
  });
}

void register_standard_programs(Chain& base, DelegationProgram* dlp) {
  register_system_program(base);
  if (dlp) register_delegation_program(base, dlp);
  register_world_program(base);
  register_registry_program(base);
  register_movement_program(base);
  register_reward_program(base);
  register_energy_tick_program(base);
  register_physics_step_program(base);
  register_leaderboard_program(base);
}

}  // namespace ephemera
