#include <doctest.h>

#include "ephemera/chain/pda.h"
#include "ephemera/ecs/world.h"
#include "ephemera/er/rollup.h"
#include "ephemera/sim/programs.h"
#include "test_support.h"

using namespace ephemera;

namespace {

struct EcsFixture : test::CoreFixture {
  DelegationProgram dlp{&base};
  Provisioner provisioner{&base, &dlp, clock, &ids};
  RpcRouter router{&base, &dlp, &provisioner};
  SchemaStore schemas;
  EcsFrontend frontend{&base, &router, &schemas, &ids};
  Address payer;

  EcsFixture() {
    register_standard_programs(base, &dlp);
    schemas.add(position_schema());
    schemas.add(energy_schema());
    payer = seed_wallet(program_address("system"), 0xaa, 1'000'000'000);
  }

  void settle_block() {
    clock->advance_by(base.block_time_ms());
    base.produce_block();
  }

  SystemRecord movement_record(std::uint32_t version = 1) {
    SystemRecord record;
    record.name = "movement";
    record.program = program_address("movement");
    record.version = version;
    record.writes = {position_schema().id()};
    record.description = "adds a delta to positions";
    return record;
  }
};

ComponentSchema badge_schema() {
  ComponentSchema schema;
  schema.name = "badge";
  schema.fields = {{"grade", ScalarType::i64, "", 0},
                   {"tag", ScalarType::bytes, "", 8},
                   {"active", ScalarType::boolean, "", 0}};
  return schema;
}

}  // namespace

TEST_CASE("scalar type tokens round-trip") {
  for (ScalarType type : {ScalarType::i64, ScalarType::u64, ScalarType::f64, ScalarType::boolean,
                          ScalarType::bytes}) {
    CHECK(scalar_type_from(to_string(type)) == type);
  }
  CHECK(scalar_type_from("string") == std::nullopt);
  CHECK(scalar_type_from("") == std::nullopt);
}

TEST_CASE("schema layouts hash to stable ids") {
  // References computed by hand from the documented layout encoding.
  CHECK(to_hex(position_schema().layout_encoding()) ==
        "08706f736974696f6e03000178020001790200017a0200");
  CHECK(position_schema().id().hex() ==
        "72174da4024920581c85a6b59f879429d255c544cc4bfa23afd224e12fe1bdff");
  CHECK(position_schema().value_size() == 24);

  CHECK(to_hex(energy_schema().layout_encoding()) ==
        "06656e6572677901000576616c75650106706f696e7473");
  CHECK(energy_schema().id().hex() ==
        "b19d2dbfc21f7691cded61799d21cc4b95c55cedda1b867c57af414203709023");
  CHECK(energy_schema().value_size() == 8);

  // Bytes fields append their width, and the width is part of the identity.
  const ComponentSchema badge = badge_schema();
  CHECK(to_hex(badge.layout_encoding()) ==
        "056261646765030005677261646500000374616704000800066163746976650300");
  CHECK(badge.id().hex() == "2dc832d0c7a1ea870e264b92323d515a79ca43d357cb0a2d26fa0f025abee7c3");
  CHECK(badge.value_size() == 8 + 8 + 1);

  ComponentSchema wide = badge;
  wide.fields[1].byte_size = 16;
  CHECK(wide.id() != badge.id());

  // Units feed the id too: same shape, different annotation, different schema.
  ComponentSchema meters = position_schema();
  meters.fields[0].unit = "meters";
  CHECK(meters.id() != position_schema().id());
}

TEST_CASE("component data carries schema id, entity and values") {
  const Bytes energy_data = encode_component_data(energy_schema(), 0, FieldValues{std::uint64_t{5}});
  CHECK(to_hex(energy_data) ==
        "b19d2dbfc21f7691cded61799d21cc4b95c55cedda1b867c57af414203709023"
        "00000000000000000500000000000000");

  const FieldValues point{1.5, -2.0, 0.25};
  const Bytes position_data = encode_component_data(position_schema(), 4, point);
  CHECK(to_hex(position_data) ==
        "72174da4024920581c85a6b59f879429d255c544cc4bfa23afd224e12fe1bdff"
        "0400000000000000"
        "000000000000f83f00000000000000c0000000000000d03f");

  auto view = split_component_data(position_data);
  REQUIRE(view.has_value());
  CHECK(view->schema_id == position_schema().id());
  CHECK(view->entity_id == 4);
  auto values = decode_component_values(position_schema(), view->value_bytes);
  REQUIRE(values.has_value());
  CHECK(*values == point);

  const ComponentSchema badge = badge_schema();
  const FieldValues tagged{std::int64_t{-3}, Bytes{1, 2, 3, 4, 5, 6, 7, 8}, true};
  auto round = split_component_data(encode_component_data(badge, 9, tagged));
  REQUIRE(round.has_value());
  CHECK(decode_component_values(badge, round->value_bytes) == tagged);
}

TEST_CASE("component encoding rejects values that do not fit the schema") {
  CHECK_THROWS_WITH_AS(encode_component_data(energy_schema(), 0, FieldValues{}),
                       "field-count", std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      encode_component_data(energy_schema(), 0, FieldValues{std::uint64_t{1}, std::uint64_t{2}}),
      "field-count", std::invalid_argument);
  CHECK_THROWS_WITH_AS(encode_component_data(energy_schema(), 0, FieldValues{1.0}),
                       "type-mismatch", std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      encode_component_data(badge_schema(), 0, FieldValues{std::int64_t{0}, Bytes{1, 2}, false}),
      "byte-width", std::invalid_argument);

  CHECK(split_component_data(Bytes(39, 0)) == std::nullopt);  // shorter than the fixed prefix
  CHECK(decode_component_values(position_schema(), Bytes(23, 0)) == std::nullopt);
  CHECK(decode_component_values(position_schema(), Bytes(25, 0)) == std::nullopt);
}

TEST_CASE("schema source parses into component definitions") {
  const std::string source =
      "# world components\n"
      "component position\n"
      "field x f64 meters\n"
      "field y f64 meters\n"
      "\n"
      "component badge\n"
      "field grade i64\n"
      "field tag bytes:8\n"
      "field active bool\n";
  SchemaParse parsed = parse_schema_source(source);
  REQUIRE(parsed.ok());
  REQUIRE(parsed.schemas.size() == 2);
  CHECK(parsed.schemas[0].name == "position");
  REQUIRE(parsed.schemas[0].fields.size() == 2);
  CHECK(parsed.schemas[0].fields[0].unit == "meters");
  CHECK(parsed.schemas[0].fields[0].type == ScalarType::f64);
  CHECK(parsed.schemas[1].fields[1].type == ScalarType::bytes);
  CHECK(parsed.schemas[1].fields[1].byte_size == 8);
  CHECK(parsed.schemas[1].fields[2].type == ScalarType::boolean);

  CHECK_FALSE(parse_schema_source("field x f64\n").ok());           // field before component
  CHECK_FALSE(parse_schema_source("component p\nfield x vec3\n").ok());  // unknown type
  CHECK_FALSE(parse_schema_source("component p\nfield tag bytes\n").ok());  // missing width
  SchemaParse bad = parse_schema_source("component p\nfield x f64\nnonsense line\n");
  CHECK_FALSE(bad.ok());
  CHECK(bad.error.substr(0, 2) == "3:");
}

TEST_CASE("schema store refuses a second layout under the same name") {
  SchemaStore store;
  CHECK(store.add(position_schema()));
  CHECK(store.add(position_schema()));  // same layout, idempotent
  CHECK(store.size() == 1);

  ComponentSchema variant = position_schema();
  variant.fields[0].unit = "meters";
  CHECK_FALSE(store.add(variant));
  CHECK(store.size() == 1);

  CHECK(store.add(energy_schema()));
  REQUIRE(store.find_by_name("energy") != nullptr);
  CHECK(store.find_by_name("energy")->id() == energy_schema().id());
  CHECK(store.find_by_id(position_schema().id()) != nullptr);
  CHECK(store.find_by_name("missing") == nullptr);
  CHECK(store.find_by_id(variant.id()) == nullptr);
}

TEST_CASE("world and component accounts derive deterministically") {
  const Address world_program = program_address("world");
  CHECK(world_account_address(world_program, 1).hex() ==
        "0156809aab97f55e7ed513e76f3841ccd4ba4c1c6e68f33d63b711f000541814");
  CHECK(component_account_address(world_program, 1, 0, position_schema().id()).hex() ==
        "976395cdca5cda37f11286aa4f702264fb237de8c1a643fee4e3df2333b6c7e5");
  CHECK(component_account_address(world_program, 1, 1, energy_schema().id()).hex() ==
        "2d3ef5be691ccb6cc33dbb54b9a0693db606222328a94e264350059eaf276cf2");
  CHECK(registry_account_address(program_address("registry")).hex() ==
        "49e0b177322998c675cd8c8aafba3c55a6a2c39db1293589e17faea7c64ccc80");

  // Every coordinate participates in the derivation.
  const Address base_addr = component_account_address(world_program, 1, 0, position_schema().id());
  CHECK(component_account_address(world_program, 2, 0, position_schema().id()) != base_addr);
  CHECK(component_account_address(world_program, 1, 1, position_schema().id()) != base_addr);
  CHECK(component_account_address(world_program, 1, 0, energy_schema().id()) != base_addr);
}

TEST_CASE("worlds allocate entities and hold attached components") {
  EcsFixture fx;
  CHECK(fx.frontend.world_program() == program_address("world"));

  CHECK(fx.frontend.read_world(1) == std::nullopt);
  CHECK(fx.frontend.create_world(1, fx.payer).accepted);
  fx.settle_block();
  auto world = fx.frontend.read_world(1);
  REQUIRE(world.has_value());
  CHECK(world->next_entity_id == 0);
  CHECK(world->entities.empty());

  // Recreating the same world id fails at execution and changes nothing.
  CHECK(fx.frontend.create_world(1, fx.payer).accepted);
  fx.settle_block();
  CHECK(fx.frontend.read_world(1)->next_entity_id == 0);

  CHECK(fx.frontend.create_entity(1, fx.payer).accepted);
  CHECK(fx.frontend.create_entity(1, fx.payer).accepted);
  fx.settle_block();
  world = fx.frontend.read_world(1);
  CHECK(world->next_entity_id == 2);
  CHECK(world->entities == std::vector<std::uint64_t>{0, 1});

  const FieldValues start{2.0, 0.0, -1.0};
  CHECK(fx.frontend.attach_component(1, 0, position_schema(), start, fx.payer).accepted);
  fx.settle_block();
  auto component = fx.frontend.read_component(1, 0, position_schema());
  REQUIRE(component.has_value());
  CHECK(component->first == start);
  CHECK(component->second == "base");
  CHECK(fx.frontend.read_component(1, 1, position_schema()) == std::nullopt);

  // A second attach to the same slot is rejected by the world program.
  CHECK(fx.frontend.attach_component(1, 0, position_schema(), FieldValues{9.0, 9.0, 9.0}, fx.payer)
            .accepted);
  fx.settle_block();
  CHECK(fx.frontend.read_component(1, 0, position_schema())->first == start);

  // Attaching to an entity the world never allocated fails too.
  CHECK(fx.frontend.attach_component(1, 5, energy_schema(), FieldValues{std::uint64_t{1}}, fx.payer)
            .accepted);
  fx.settle_block();
  CHECK(fx.frontend.read_component(1, 5, energy_schema()) == std::nullopt);
}

TEST_CASE("run transactions collect the declared component metas") {
  EcsFixture fx;
  REQUIRE(fx.frontend.create_world(1, fx.payer).accepted);
  fx.settle_block();
  REQUIRE(fx.frontend.create_entity(1, fx.payer).accepted);
  REQUIRE(fx.frontend.create_entity(1, fx.payer).accepted);
  fx.settle_block();
  REQUIRE(fx.frontend.attach_component(1, 0, position_schema(), FieldValues{0.0, 0.0, 0.0}, fx.payer)
              .accepted);
  fx.settle_block();

  const SystemRecord movement = fx.movement_record();
  const Bytes step = movement_payload(1.0, 2.0, -0.5);

  // Entity 1 has no position component, so the tx cannot even be built.
  CHECK_THROWS_AS(fx.frontend.build_run_tx(1, movement, {0, 1}, step, fx.payer),
                  std::invalid_argument);

  Transaction tx = fx.frontend.build_run_tx(1, movement, {0}, step, fx.payer);
  CHECK(tx.program_id == fx.frontend.world_program());
  REQUIRE(tx.metas.size() == 2);  // payer prepended, then the component
  CHECK(tx.metas[0].address == fx.payer);
  CHECK(tx.metas[1].address ==
        component_account_address(fx.frontend.world_program(), 1, 0, position_schema().id()));
  CHECK(tx.metas[1].writable);
  CHECK(tx.fee == fx.base.required_fee());

  // A zero payer falls back to the first writable meta.
  Transaction gasless = fx.frontend.build_run_tx(1, movement, {0}, step, Address{});
  REQUIRE(gasless.metas.size() == 1);
  CHECK(gasless.fee_payer == gasless.metas[0].address);

  CHECK(fx.frontend.run_system(1, movement, {0}, step, fx.payer).accepted);
  fx.settle_block();
  CHECK(fx.frontend.read_component(1, 0, position_schema())->first ==
        FieldValues{1.0, 2.0, -0.5});

  // Running again accumulates: systems see the stored value, not the original.
  CHECK(fx.frontend.run_system(1, movement, {0}, step, fx.payer).accepted);
  fx.settle_block();
  CHECK(fx.frontend.read_component(1, 0, position_schema())->first ==
        FieldValues{2.0, 4.0, -1.0});
}

TEST_CASE("registry lists published systems newest first") {
  EcsFixture fx;
  CHECK(fx.frontend.discover_systems().empty());

  SystemRecord movement_v1 = fx.movement_record(1);
  SystemRecord movement_v2 = fx.movement_record(2);
  movement_v2.description = "faster";
  SystemRecord reward;
  reward.name = "reward";
  reward.program = program_address("reward");
  reward.version = 1;
  reward.reads = {position_schema().id()};
  reward.writes = {chest_schema().id()};

  CHECK(fx.frontend.publish_system(movement_v1, fx.payer).accepted);
  CHECK(fx.frontend.publish_system(reward, fx.payer).accepted);
  fx.settle_block();
  CHECK(fx.frontend.publish_system(movement_v2, fx.payer).accepted);
  fx.settle_block();

  auto all = fx.frontend.discover_systems();
  REQUIRE(all.size() == 3);
  CHECK(all[0] == movement_v2);
  CHECK(all[1] == movement_v1);
  CHECK(all[2] == reward);

  auto moves = fx.frontend.discover_systems("move");
  REQUIRE(moves.size() == 2);
  CHECK(moves[0].version == 2);
  CHECK(moves[1].version == 1);
  CHECK(fx.frontend.discover_systems("nothing").empty());

  // Schema queries match reads and writes alike.
  auto touching_position = fx.frontend.discover_systems(position_schema().id());
  REQUIRE(touching_position.size() == 3);
  auto touching_chest = fx.frontend.discover_systems(chest_schema().id());
  REQUIRE(touching_chest.size() == 1);
  CHECK(touching_chest[0].name == "reward");
  CHECK(fx.frontend.discover_systems(energy_schema().id()).empty());

  // Re-publishing an old or equal version is refused; the listing is unchanged.
  CHECK(fx.frontend.publish_system(movement_v1, fx.payer).accepted);
  CHECK(fx.frontend.publish_system(movement_v2, fx.payer).accepted);
  fx.settle_block();
  CHECK(fx.frontend.discover_systems("move").size() == 2);

  SystemRecord movement_v3 = fx.movement_record(3);
  CHECK(fx.frontend.publish_system(movement_v3, fx.payer).accepted);
  fx.settle_block();
  CHECK(fx.frontend.discover_systems("move").size() == 3);
  CHECK(fx.frontend.discover_systems("move")[0].version == 3);
}

TEST_CASE("system records survive a wire round-trip") {
  SystemRecord record;
  record.name = "physics";
  record.program = program_address("physics_step");
  record.version = 7;
  record.reads = {energy_schema().id()};
  record.writes = {position_schema().id(), chest_schema().id()};
  record.description = "integrates one step";

  const Bytes wire = encode_system_record(record);
  ByteReader reader(wire);
  auto decoded = decode_system_record(reader);
  REQUIRE(decoded.has_value());
  CHECK(reader.at_end());
  CHECK(*decoded == record);

  Bytes truncated = wire;
  truncated.resize(truncated.size() - 5);
  ByteReader short_reader(truncated);
  CHECK(decode_system_record(short_reader) == std::nullopt);
}

TEST_CASE("derived components add elapsed periods at read time") {
  EcsFixture fx;
  REQUIRE(fx.frontend.create_world(1, fx.payer).accepted);
  fx.settle_block();
  REQUIRE(fx.frontend.create_entity(1, fx.payer).accepted);
  fx.settle_block();
  REQUIRE(fx.frontend.attach_component(1, 0, energy_schema(), FieldValues{std::uint64_t{5}},
                                       fx.payer)
              .accepted);
  fx.settle_block();

  CHECK_FALSE(fx.frontend.read_derived(1, 0, energy_schema().id()).ok);
  CHECK(fx.frontend.read_derived(1, 0, energy_schema().id()).error == "unknown-derived");

  fx.frontend.register_derived(make_time_accumulator(energy_schema(), 30'000));
  REQUIRE(fx.frontend.find_derived(energy_schema().id()) != nullptr);

  auto read_at = [&](std::uint64_t at_ms) {
    fx.clock->advance_by(at_ms - fx.clock->now_ms());
    return fx.frontend.read_derived(1, 0, energy_schema().id());
  };

  DerivedRead before = read_at(29'999);
  REQUIRE(before.ok);
  CHECK(std::get<std::uint64_t>(before.values[0]) == 5);
  CHECK(std::get<std::uint64_t>(read_at(30'000).values[0]) == 6);
  CHECK(std::get<std::uint64_t>(read_at(89'999).values[0]) == 7);
  CHECK(std::get<std::uint64_t>(read_at(90'000).values[0]) == 8);

  // The stored component is untouched; only the read is synthesized.
  CHECK(fx.frontend.read_component(1, 0, energy_schema())->first ==
        FieldValues{std::uint64_t{5}});

  DerivedRead missing = fx.frontend.read_derived(1, 1, energy_schema().id());
  CHECK_FALSE(missing.ok);
  CHECK(missing.error.substr(0, 18) == "missing-component:");

  // An accumulator over a non-u64 field surfaces the eval failure.
  fx.frontend.register_derived(make_time_accumulator(position_schema(), 1'000));
  REQUIRE(fx.frontend.attach_component(1, 0, position_schema(), FieldValues{0.0, 0.0, 0.0},
                                       fx.payer)
              .accepted);
  fx.settle_block();
  DerivedRead typed = fx.frontend.read_derived(1, 0, position_schema().id());
  CHECK_FALSE(typed.ok);
  CHECK(typed.error == "derived-input-type");
}

TEST_CASE("observers decode component updates with previous values") {
  EcsFixture fx;
  REQUIRE(fx.frontend.create_world(1, fx.payer).accepted);
  fx.settle_block();
  REQUIRE(fx.frontend.create_entity(1, fx.payer).accepted);
  fx.settle_block();

  WorldObserver observer = fx.frontend.observe(1, {position_schema().id()});
  CHECK(observer.poll().empty());

  REQUIRE(fx.frontend.attach_component(1, 0, position_schema(), FieldValues{1.0, 0.0, 0.0},
                                       fx.payer)
              .accepted);
  fx.settle_block();
  auto updates = observer.poll();
  REQUIRE(updates.size() == 1);
  CHECK(updates[0].entity_id == 0);
  CHECK(updates[0].schema_id == position_schema().id());
  CHECK(updates[0].layer == "base");
  CHECK(updates[0].previous == std::nullopt);
  CHECK(updates[0].current == FieldValues{1.0, 0.0, 0.0});

  REQUIRE(fx.frontend.run_system(1, fx.movement_record(), {0}, movement_payload(0.5, 0.0, 0.0),
                                 fx.payer)
              .accepted);
  fx.settle_block();
  updates = observer.poll();
  REQUIRE(updates.size() == 1);
  REQUIRE(updates[0].previous.has_value());
  CHECK(*updates[0].previous == FieldValues{1.0, 0.0, 0.0});
  CHECK(updates[0].current == FieldValues{1.5, 0.0, 0.0});

  // Filtered schemas never surface: energy changes are invisible to this observer.
  REQUIRE(fx.frontend.attach_component(1, 0, energy_schema(), FieldValues{std::uint64_t{1}},
                                       fx.payer)
              .accepted);
  fx.settle_block();
  CHECK(observer.poll().empty());

  // Entities born after the observer still get picked up: the world update
  // extends the watch set, so components attached in later blocks stream in.
  REQUIRE(fx.frontend.create_entity(1, fx.payer).accepted);
  fx.settle_block();
  CHECK(observer.poll().empty());
  REQUIRE(fx.frontend.attach_component(1, 1, position_schema(), FieldValues{7.0, 7.0, 7.0},
                                       fx.payer)
              .accepted);
  fx.settle_block();
  updates = observer.poll();
  REQUIRE(updates.size() == 1);
  CHECK(updates[0].entity_id == 1);
  CHECK(updates[0].current == FieldValues{7.0, 7.0, 7.0});
}
