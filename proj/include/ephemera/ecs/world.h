// World program plus the client-side frontend. A world account tracks entity
// ids; component accounts are PDAs keyed by (world, entity, schema id) and
// owned by the world program, so mutation always runs through world `run`
// instructions that trampoline into registered systems. The registry program
// publishes system descriptors for discovery.
#pragma once

#include <functional>

#include "ephemera/ecs/schema.h"
#include "ephemera/router/router.h"

namespace ephemera {

enum class WorldInstruction : std::uint8_t {
  create_world = 0,
  create_entity = 1,
  attach = 2,
  run = 3,
};

enum class RegistryInstruction : std::uint8_t {
  publish = 0,
};

struct SystemRecord {
  std::string name;
  Address program;
  std::uint32_t version = 1;
  std::vector<Hash32> reads;   // component schema ids the system reads
  std::vector<Hash32> writes;  // component schema ids the system writes
  std::string description;

  bool operator==(const SystemRecord&) const = default;
};

Bytes encode_system_record(const SystemRecord& record);
std::optional<SystemRecord> decode_system_record(ByteReader& reader);

struct WorldData {
  std::uint64_t next_entity_id = 0;
  std::vector<std::uint64_t> entities;
};

Bytes encode_world_data(const WorldData& data);
std::optional<WorldData> decode_world_data(std::span<const std::uint8_t> raw);

Address register_world_program(Chain& base);
Address register_registry_program(Chain& base);

// PDA derivations shared by programs and clients.
Address world_account_address(const Address& world_program, std::uint64_t world_id);
Address component_account_address(const Address& world_program, std::uint64_t world_id,
                                  std::uint64_t entity_id, const Hash32& schema_id);
Address registry_account_address(const Address& registry_program);

// Instruction payload builders.
Bytes world_create_payload(std::uint64_t world_id);
Bytes entity_create_payload(std::uint64_t world_id);
Bytes attach_payload(std::uint64_t world_id, std::uint64_t entity_id, const Bytes& component_data);
Bytes run_payload(const Address& system_program, std::span<const std::uint8_t> args);
Bytes publish_payload(const SystemRecord& record);

// Client-computed component: evaluated from stored components at read time
// instead of being advanced by transactions.
struct DerivedComponent {
  ComponentSchema output;
  std::vector<Hash32> inputs;  // schema ids fetched per entity, in order
  std::function<FieldValues(const std::vector<FieldValues>&, std::uint64_t now_ms)> eval;
};

// Derived u64 accumulator: output = input's first field + elapsed full periods
// since t0. Matches a tick that increments the stored field once per period.
DerivedComponent make_time_accumulator(const ComponentSchema& schema, std::uint64_t period_ms,
                                       std::uint64_t t0_ms = 0);

struct DerivedRead {
  bool ok = false;
  std::string error;
  FieldValues values;
};

struct ComponentUpdate {
  std::uint64_t entity_id = 0;
  Hash32 schema_id;
  std::string layer;
  std::uint64_t slot = 0;
  std::uint64_t timestamp_ms = 0;
  std::optional<FieldValues> previous;
  FieldValues current;
};

class EcsFrontend;

// Streaming view over one world's components: turns raw account-update batches
// into decoded component changes with the previous value attached, and starts
// watching components of entities created after the observer.
class WorldObserver {
 public:
  std::vector<ComponentUpdate> poll();
  const std::shared_ptr<Subscription>& subscription() const { return subscription_; }

 private:
  friend class EcsFrontend;
  EcsFrontend* frontend_ = nullptr;
  std::uint64_t world_id_ = 0;
  Address world_address_;
  std::set<Hash32> schema_filter_;
  std::set<std::uint64_t> known_entities_;
  std::map<Address, FieldValues> last_values_;
  std::shared_ptr<Subscription> subscription_;
};

class EcsFrontend {
 public:
  EcsFrontend(Chain* base, RpcRouter* router, SchemaStore* schemas, IdSource* ids);

  const Address& world_program() const { return world_program_; }
  const Address& registry_program() const { return registry_program_; }
  RpcRouter& router() { return *router_; }

  SubmitOutcome create_world(std::uint64_t world_id, const Address& payer);
  std::optional<WorldData> read_world(std::uint64_t world_id);
  SubmitOutcome create_entity(std::uint64_t world_id, const Address& payer);
  SubmitOutcome attach_component(std::uint64_t world_id, std::uint64_t entity_id,
                                 const ComponentSchema& schema, const FieldValues& values,
                                 const Address& payer);
  // Component value plus the layer label it was read from.
  std::optional<std::pair<FieldValues, std::string>> read_component(std::uint64_t world_id,
                                                                    std::uint64_t entity_id,
                                                                    const ComponentSchema& schema);

  // Builds the run transaction for `system` over the given entities: metas are
  // the component accounts for the system's declared reads and writes. Throws
  // std::invalid_argument("missing-component:...") when an entity lacks one of
  // them. A zero payer picks the first writable meta (rollup-side gasless
  // submission).
  Transaction build_run_tx(std::uint64_t world_id, const SystemRecord& system,
                           const std::vector<std::uint64_t>& entities,
                           std::span<const std::uint8_t> args, const Address& payer);
  SubmitOutcome run_system(std::uint64_t world_id, const SystemRecord& system,
                           const std::vector<std::uint64_t>& entities,
                           std::span<const std::uint8_t> args, const Address& payer);

  SubmitOutcome publish_system(const SystemRecord& record, const Address& payer);
  // All published versions matching a name substring (empty matches all) or
  // overlapping a schema id, ordered by (name, version descending).
  std::vector<SystemRecord> discover_systems(const std::string& name_query = "");
  std::vector<SystemRecord> discover_systems(const Hash32& schema_id);

  void register_derived(DerivedComponent derived);
  const DerivedComponent* find_derived(const Hash32& output_schema_id) const;
  DerivedRead read_derived(std::uint64_t world_id, std::uint64_t entity_id,
                           const Hash32& output_schema_id);

  WorldObserver observe(std::uint64_t world_id, const std::vector<Hash32>& schema_filter);

 private:
  friend class WorldObserver;
  Transaction build_tx(const Address& program, std::vector<AccountMeta> metas, Bytes payload,
                       const Address& payer, const RouteDecision& decision);
  SubmitOutcome submit_via(const Address& program, std::vector<AccountMeta> metas, Bytes payload,
                           const Address& payer);

  Chain* base_;
  RpcRouter* router_;
  SchemaStore* schemas_;
  IdSource* ids_;
  Address world_program_;
  Address registry_program_;
  std::map<Hash32, DerivedComponent> derived_;
};

}  // namespace ephemera
