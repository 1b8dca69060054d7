#include "ephemera/ecs/world.h"

#include <algorithm>
#include <stdexcept>

#include "ephemera/chain/pda.h"
#include "ephemera/exec/engine.h"

namespace ephemera {

namespace {

std::vector<SystemRecord> parse_registry_data(std::span<const std::uint8_t> data) {
  std::vector<SystemRecord> records;
  if (data.empty()) return records;
  ByteReader reader(data);
  const std::uint16_t count = reader.get_u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    auto record = decode_system_record(reader);
    if (!record) return {};
    records.push_back(std::move(*record));
  }
  if (!reader.ok() || !reader.at_end()) return {};
  return records;
}

Bytes encode_registry_data(const std::vector<SystemRecord>& records) {
  ByteWriter writer;
  writer.put_u16(static_cast<std::uint16_t>(records.size()));
  for (const SystemRecord& record : records) writer.put_bytes(encode_system_record(record));
  return writer.take();
}

}  // namespace

Bytes encode_system_record(const SystemRecord& record) {
  ByteWriter writer;
  writer.put_u8(static_cast<std::uint8_t>(record.name.size()));
  writer.put_bytes(to_bytes(record.name));
  writer.put_address(record.program);
  writer.put_u32(record.version);
  writer.put_u8(static_cast<std::uint8_t>(record.reads.size()));
  for (const Hash32& id : record.reads) writer.put_hash(id);
  writer.put_u8(static_cast<std::uint8_t>(record.writes.size()));
  for (const Hash32& id : record.writes) writer.put_hash(id);
  writer.put_u16(static_cast<std::uint16_t>(record.description.size()));
  writer.put_bytes(to_bytes(record.description));
  return writer.take();
}

std::optional<SystemRecord> decode_system_record(ByteReader& reader) {
  SystemRecord record;
  const auto name_len = reader.get_u8();
  auto name = reader.get_bytes(name_len);
  record.name.assign(name.begin(), name.end());
  record.program = reader.get_address();
  record.version = reader.get_u32();
  const auto read_count = reader.get_u8();
  for (std::uint8_t i = 0; i < read_count; ++i) record.reads.push_back(reader.get_hash());
  const auto write_count = reader.get_u8();
  for (std::uint8_t i = 0; i < write_count; ++i) record.writes.push_back(reader.get_hash());
  const auto desc_len = reader.get_u16();
  auto desc = reader.get_bytes(desc_len);
  record.description.assign(desc.begin(), desc.end());
  if (!reader.ok()) return std::nullopt;
  return record;
}

Bytes encode_world_data(const WorldData& data) {
  ByteWriter writer;
  writer.put_u64(data.next_entity_id);
  writer.put_u32(static_cast<std::uint32_t>(data.entities.size()));
  for (std::uint64_t entity : data.entities) writer.put_u64(entity);
  return writer.take();
}

std::optional<WorldData> decode_world_data(std::span<const std::uint8_t> raw) {
  ByteReader reader(raw);
  WorldData data;
  data.next_entity_id = reader.get_u64();
  const auto count = reader.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) data.entities.push_back(reader.get_u64());
  if (!reader.ok() || !reader.at_end()) return std::nullopt;
  return data;
}

Address world_account_address(const Address& world_program, std::uint64_t world_id) {
  const Bytes seeds[] = {to_bytes("world"), u64_le(world_id)};
  return derive_pda(world_program, seeds);
}

Address component_account_address(const Address& world_program, std::uint64_t world_id,
                                  std::uint64_t entity_id, const Hash32& schema_id) {
  const Bytes seeds[] = {u64_le(world_id), u64_le(entity_id),
                         Bytes(schema_id.bytes.begin(), schema_id.bytes.end())};
  return derive_pda(world_program, seeds);
}

Address registry_account_address(const Address& registry_program) {
  const Bytes seeds[] = {to_bytes("registry")};
  return derive_pda(registry_program, seeds);
}

Bytes world_create_payload(std::uint64_t world_id) {
  ByteWriter writer;
  writer.put_u8(static_cast<std::uint8_t>(WorldInstruction::create_world));
  writer.put_u64(world_id);
  return writer.take();
}

Bytes entity_create_payload(std::uint64_t world_id) {
  ByteWriter writer;
  writer.put_u8(static_cast<std::uint8_t>(WorldInstruction::create_entity));
  writer.put_u64(world_id);
  return writer.take();
}

Bytes attach_payload(std::uint64_t world_id, std::uint64_t entity_id,
                     const Bytes& component_data) {
  ByteWriter writer;
  writer.put_u8(static_cast<std::uint8_t>(WorldInstruction::attach));
  writer.put_u64(world_id);
  writer.put_u64(entity_id);
  writer.put_bytes(component_data);
  return writer.take();
}

Bytes run_payload(const Address& system_program, std::span<const std::uint8_t> args) {
  ByteWriter writer;
  writer.put_u8(static_cast<std::uint8_t>(WorldInstruction::run));
  writer.put_address(system_program);
  writer.put_bytes(args);
  return writer.take();
}

Bytes publish_payload(const SystemRecord& record) {
  ByteWriter writer;
  writer.put_u8(static_cast<std::uint8_t>(RegistryInstruction::publish));
  writer.put_bytes(encode_system_record(record));
  return writer.take();
}

Address register_world_program(Chain& base) {
  return base.register_program("world", [](ProgramContext& ctx) {
    ByteReader reader(ctx.instruction());
    const auto tag = reader.get_u8();
    switch (static_cast<WorldInstruction>(tag)) {
      case WorldInstruction::create_world: {
        const std::uint64_t world_id = reader.get_u64();
        if (!reader.ok() || !reader.at_end()) ctx.fail("malformed-create-world");
        AccountHandle* world =
            ctx.find_account(world_account_address(ctx.program_id(), world_id));
        if (!world || !world->writable()) ctx.fail("world-account-not-writable");
        if (world->exists() && !world->data().empty()) ctx.fail("world-exists");
        world->set_data(encode_world_data(WorldData{}));
        return;
      }
      case WorldInstruction::create_entity: {
        const std::uint64_t world_id = reader.get_u64();
        if (!reader.ok() || !reader.at_end()) ctx.fail("malformed-create-entity");
        AccountHandle* world =
            ctx.find_account(world_account_address(ctx.program_id(), world_id));
        if (!world || !world->writable()) ctx.fail("world-account-not-writable");
        auto data = decode_world_data(world->data());
        if (!data) ctx.fail("world-missing");
        data->entities.push_back(data->next_entity_id);
        ++data->next_entity_id;
        world->set_data(encode_world_data(*data));
        return;
      }
      case WorldInstruction::attach: {
        const std::uint64_t world_id = reader.get_u64();
        const std::uint64_t entity_id = reader.get_u64();
        const Bytes component_data = reader.get_bytes(reader.remaining());
        if (!reader.ok()) ctx.fail("malformed-attach");
        AccountHandle* world =
            ctx.find_account(world_account_address(ctx.program_id(), world_id));
        if (!world) ctx.fail("world-meta-missing");
        auto data = decode_world_data(world->data());
        if (!data) ctx.fail("world-missing");
        if (std::find(data->entities.begin(), data->entities.end(), entity_id) ==
            data->entities.end())
          ctx.fail("unknown-entity");
        auto view = split_component_data(component_data);
        if (!view) ctx.fail("malformed-component");
        if (view->entity_id != entity_id) ctx.fail("entity-mismatch");
        AccountHandle* component = ctx.find_account(
            component_account_address(ctx.program_id(), world_id, entity_id, view->schema_id));
        if (!component || !component->writable()) ctx.fail("component-account-not-writable");
        if (component->exists() && !component->data().empty()) ctx.fail("duplicate-component");
        component->set_data(component_data);
        return;
      }
      case WorldInstruction::run: {
        const Address system_program = reader.get_address();
        const Bytes args = reader.get_bytes(reader.remaining());
        if (!reader.ok()) ctx.fail("malformed-run");
        ctx.invoke(system_program, args);
        return;
      }
    }
    ctx.fail("unknown-world-instruction");
  });
}

Address register_registry_program(Chain& base) {
  return base.register_program("registry", [](ProgramContext& ctx) {
    ByteReader reader(ctx.instruction());
    const auto tag = reader.get_u8();
    if (static_cast<RegistryInstruction>(tag) != RegistryInstruction::publish)
      ctx.fail("unknown-registry-instruction");
    auto record = decode_system_record(reader);
    if (!record || !reader.at_end() || record->name.empty()) ctx.fail("malformed-publish");
    AccountHandle* registry =
        ctx.find_account(registry_account_address(ctx.program_id()));
    if (!registry || !registry->writable()) ctx.fail("registry-account-not-writable");
    auto records = parse_registry_data(registry->data());
    // Versions only move forward; older entries stay listed for discovery.
    for (const SystemRecord& existing : records) {
      if (existing.name == record->name && record->version <= existing.version)
        ctx.fail("version-not-newer");
    }
    records.push_back(std::move(*record));
    registry->set_data(encode_registry_data(records));
  });
}

DerivedComponent make_time_accumulator(const ComponentSchema& schema, std::uint64_t period_ms,
                                       std::uint64_t t0_ms) {
  DerivedComponent derived;
  derived.output = schema;
  derived.inputs = {schema.id()};
  derived.eval = [period_ms, t0_ms](const std::vector<FieldValues>& inputs,
                                    std::uint64_t now_ms) -> FieldValues {
    FieldValues out = inputs.at(0);
    if (out.empty() || !std::holds_alternative<std::uint64_t>(out[0]))
      throw std::invalid_argument("derived-input-type");
    const std::uint64_t elapsed = now_ms > t0_ms ? now_ms - t0_ms : 0;
    out[0] = std::get<std::uint64_t>(out[0]) + (period_ms ? elapsed / period_ms : 0);
    return out;
  };
  return derived;
}

// EcsFrontend

EcsFrontend::EcsFrontend(Chain* base, RpcRouter* router, SchemaStore* schemas, IdSource* ids)
    : base_(base), router_(router), schemas_(schemas), ids_(ids) {
  world_program_ = program_address("world");
  registry_program_ = program_address("registry");
}

Transaction EcsFrontend::build_tx(const Address& program, std::vector<AccountMeta> metas,
                                  Bytes payload, const Address& payer,
                                  const RouteDecision& decision) {
  Transaction tx;
  tx.id = ids_->fresh();
  tx.fee_payer = payer;
  tx.program_id = program;
  tx.metas = std::move(metas);
  tx.data = std::move(payload);
  tx.fee = router_->fee_for(decision);
  if (auto blockhash = router_->blockhash_for(decision)) tx.recent_blockhash = *blockhash;
  return tx;
}

SubmitOutcome EcsFrontend::submit_via(const Address& program, std::vector<AccountMeta> metas,
                                      Bytes payload, const Address& payer) {
  bool payer_present = false;
  for (auto& meta : metas) {
    if (meta.address == payer) {
      meta.writable = true;
      payer_present = true;
    }
  }
  if (!payer_present) metas.insert(metas.begin(), AccountMeta{payer, true});
  RouteDecision decision = router_->route_writables(metas);
  Transaction tx = build_tx(program, std::move(metas), std::move(payload), payer, decision);
  return router_->submit(tx);
}

SubmitOutcome EcsFrontend::create_world(std::uint64_t world_id, const Address& payer) {
  std::vector<AccountMeta> metas{{world_account_address(world_program_, world_id), true}};
  return submit_via(world_program_, std::move(metas), world_create_payload(world_id), payer);
}

std::optional<WorldData> EcsFrontend::read_world(std::uint64_t world_id) {
  auto fetched = router_->fetch_account(world_account_address(world_program_, world_id));
  if (!fetched) return std::nullopt;
  return decode_world_data(fetched->first.data);
}

SubmitOutcome EcsFrontend::create_entity(std::uint64_t world_id, const Address& payer) {
  std::vector<AccountMeta> metas{{world_account_address(world_program_, world_id), true}};
  return submit_via(world_program_, std::move(metas), entity_create_payload(world_id), payer);
}

SubmitOutcome EcsFrontend::attach_component(std::uint64_t world_id, std::uint64_t entity_id,
                                            const ComponentSchema& schema,
                                            const FieldValues& values, const Address& payer) {
  const Bytes component_data = encode_component_data(schema, entity_id, values);
  std::vector<AccountMeta> metas{
      {world_account_address(world_program_, world_id), false},
      {component_account_address(world_program_, world_id, entity_id, schema.id()), true}};
  return submit_via(world_program_, std::move(metas),
                    attach_payload(world_id, entity_id, component_data), payer);
}

std::optional<std::pair<FieldValues, std::string>> EcsFrontend::read_component(
    std::uint64_t world_id, std::uint64_t entity_id, const ComponentSchema& schema) {
  const Address address =
      component_account_address(world_program_, world_id, entity_id, schema.id());
  auto fetched = router_->fetch_account(address);
  if (!fetched) return std::nullopt;
  auto view = split_component_data(fetched->first.data);
  if (!view || view->schema_id != schema.id()) return std::nullopt;
  auto values = decode_component_values(schema, view->value_bytes);
  if (!values) return std::nullopt;
  return std::make_pair(std::move(*values), fetched->second);
}

Transaction EcsFrontend::build_run_tx(std::uint64_t world_id, const SystemRecord& system,
                                      const std::vector<std::uint64_t>& entities,
                                      std::span<const std::uint8_t> args, const Address& payer) {
  std::vector<AccountMeta> metas;
  std::map<Address, std::size_t> index_of;
  auto add_meta = [&](const Address& address, bool writable) {
    auto it = index_of.find(address);
    if (it != index_of.end()) {
      metas[it->second].writable = metas[it->second].writable || writable;
      return;
    }
    index_of[address] = metas.size();
    metas.push_back(AccountMeta{address, writable});
  };

  // Components originate on the base layer (rollup-side state is a delegated
  // copy of it), so existence checks go there without any clone side effects.
  auto require_component = [&](std::uint64_t entity, const Hash32& schema_id) {
    const Address address = component_account_address(world_program_, world_id, entity, schema_id);
    if (!base_->find_account(address))
      throw std::invalid_argument("missing-component:" + std::to_string(entity) + ":" +
                                  schema_id.hex().substr(0, 16));
    return address;
  };
  for (std::uint64_t entity : entities) {
    for (const Hash32& schema_id : system.reads) add_meta(require_component(entity, schema_id), false);
    for (const Hash32& schema_id : system.writes) add_meta(require_component(entity, schema_id), true);
  }

  Address effective_payer = payer;
  if (effective_payer.is_zero()) {
    for (const AccountMeta& meta : metas) {
      if (meta.writable) {
        effective_payer = meta.address;
        break;
      }
    }
  } else {
    bool present = false;
    for (auto& meta : metas) {
      if (meta.address == effective_payer) {
        meta.writable = true;
        present = true;
      }
    }
    if (!present) metas.insert(metas.begin(), AccountMeta{effective_payer, true});
  }

  RouteDecision decision = router_->route_writables(metas);
  return build_tx(world_program_, std::move(metas), run_payload(system.program, args),
                  effective_payer, decision);
}

SubmitOutcome EcsFrontend::run_system(std::uint64_t world_id, const SystemRecord& system,
                                      const std::vector<std::uint64_t>& entities,
                                      std::span<const std::uint8_t> args, const Address& payer) {
  return router_->submit(build_run_tx(world_id, system, entities, args, payer));
}

SubmitOutcome EcsFrontend::publish_system(const SystemRecord& record, const Address& payer) {
  std::vector<AccountMeta> metas{{registry_account_address(registry_program_), true}};
  return submit_via(registry_program_, std::move(metas), publish_payload(record), payer);
}

namespace {

void order_by_name_then_newest(std::vector<SystemRecord>& records) {
  std::sort(records.begin(), records.end(), [](const SystemRecord& a, const SystemRecord& b) {
    if (a.name != b.name) return a.name < b.name;
    return a.version > b.version;
  });
}

}  // namespace

std::vector<SystemRecord> EcsFrontend::discover_systems(const std::string& name_query) {
  const Account* registry = base_->find_account(registry_account_address(registry_program_));
  if (!registry) return {};
  auto records = parse_registry_data(registry->data);
  std::vector<SystemRecord> matched;
  for (auto& record : records) {
    if (name_query.empty() || record.name.find(name_query) != std::string::npos)
      matched.push_back(std::move(record));
  }
  order_by_name_then_newest(matched);
  return matched;
}

std::vector<SystemRecord> EcsFrontend::discover_systems(const Hash32& schema_id) {
  const Account* registry = base_->find_account(registry_account_address(registry_program_));
  if (!registry) return {};
  auto records = parse_registry_data(registry->data);
  std::vector<SystemRecord> matched;
  for (auto& record : records) {
    const bool reads = std::find(record.reads.begin(), record.reads.end(), schema_id) !=
                       record.reads.end();
    const bool writes = std::find(record.writes.begin(), record.writes.end(), schema_id) !=
                        record.writes.end();
    if (reads || writes) matched.push_back(std::move(record));
  }
  order_by_name_then_newest(matched);
  return matched;
}

void EcsFrontend::register_derived(DerivedComponent derived) {
  derived_[derived.output.id()] = std::move(derived);
}

const DerivedComponent* EcsFrontend::find_derived(const Hash32& output_schema_id) const {
  auto it = derived_.find(output_schema_id);
  return it == derived_.end() ? nullptr : &it->second;
}

DerivedRead EcsFrontend::read_derived(std::uint64_t world_id, std::uint64_t entity_id,
                                      const Hash32& output_schema_id) {
  DerivedRead result;
  const DerivedComponent* derived = find_derived(output_schema_id);
  if (!derived) {
    result.error = "unknown-derived";
    return result;
  }
  std::vector<FieldValues> inputs;
  for (const Hash32& input_id : derived->inputs) {
    const ComponentSchema* schema = schemas_->find_by_id(input_id);
    if (!schema) {
      result.error = "unknown-schema:" + input_id.hex().substr(0, 16);
      return result;
    }
    auto value = read_component(world_id, entity_id, *schema);
    if (!value) {
      result.error = "missing-component:" + schema->name;
      return result;
    }
    inputs.push_back(std::move(value->first));
  }
  try {
    result.values = derived->eval(inputs, base_->now_ms());
  } catch (const std::exception& err) {
    result.error = err.what();
    return result;
  }
  result.ok = true;
  return result;
}

WorldObserver EcsFrontend::observe(std::uint64_t world_id,
                                   const std::vector<Hash32>& schema_filter) {
  WorldObserver observer;
  observer.frontend_ = this;
  observer.world_id_ = world_id;
  observer.world_address_ = world_account_address(world_program_, world_id);
  observer.schema_filter_.insert(schema_filter.begin(), schema_filter.end());

  std::vector<Address> watch{observer.world_address_};
  if (auto world = read_world(world_id)) {
    for (std::uint64_t entity : world->entities) {
      observer.known_entities_.insert(entity);
      for (const Hash32& schema_id : observer.schema_filter_) {
        const Address address =
            component_account_address(world_program_, world_id, entity, schema_id);
        watch.push_back(address);
        if (auto fetched = router_->fetch_account(address)) {
          auto view = split_component_data(fetched->first.data);
          const ComponentSchema* schema =
              view ? schemas_->find_by_id(view->schema_id) : nullptr;
          if (view && schema) {
            if (auto values = decode_component_values(*schema, view->value_bytes))
              observer.last_values_[address] = std::move(*values);
          }
        }
      }
    }
  }
  observer.subscription_ = router_->subscribe(watch);
  return observer;
}

std::vector<ComponentUpdate> WorldObserver::poll() {
  std::vector<ComponentUpdate> out;
  while (auto batch = subscription_->poll()) {
    // World growth first, so component updates for brand-new entities in the
    // same block are not missed by the filter.
    for (const AccountUpdate& update : *batch) {
      if (update.address != world_address_) continue;
      auto account = decode_account_encoding(update.encoding);
      if (!account) continue;
      auto world = decode_world_data(account->data);
      if (!world) continue;
      for (std::uint64_t entity : world->entities) {
        if (!known_entities_.insert(entity).second) continue;
        std::vector<Address> extra;
        for (const Hash32& schema_id : schema_filter_)
          extra.push_back(component_account_address(frontend_->world_program(), world_id_, entity,
                                                    schema_id));
        frontend_->router().extend_subscription(subscription_, extra);
      }
    }
    for (const AccountUpdate& update : *batch) {
      if (update.address == world_address_) continue;
      auto account = decode_account_encoding(update.encoding);
      if (!account) continue;
      auto view = split_component_data(account->data);
      if (!view || !schema_filter_.contains(view->schema_id)) continue;
      const ComponentSchema* schema = frontend_->schemas_->find_by_id(view->schema_id);
      if (!schema) continue;
      auto values = decode_component_values(*schema, view->value_bytes);
      if (!values) continue;
      ComponentUpdate change;
      change.entity_id = view->entity_id;
      change.schema_id = view->schema_id;
      change.layer = update.layer;
      change.slot = update.slot;
      change.timestamp_ms = update.timestamp_ms;
      auto last = last_values_.find(update.address);
      if (last != last_values_.end()) change.previous = last->second;
      change.current = *values;
      last_values_[update.address] = std::move(*values);
      out.push_back(std::move(change));
    }
  }
  return out;
}

}  // namespace ephemera
