#include <doctest.h>

#include "ephemera/er/rollup.h"
#include "ephemera/exec/engine.h"
#include "test_support.h"

using namespace ephemera;

namespace {

// Increments the first data byte of every writable account it is handed.
void bump_routine(ProgramContext& ctx) {
  for (std::size_t i = 0; i < ctx.account_count(); ++i) {
    AccountHandle& handle = ctx.account(i);
    if (!handle.writable() || !handle.exists() || handle.data().empty()) continue;
    Bytes data(handle.data().begin(), handle.data().end());
    ++data[0];
    handle.set_data(std::move(data));
  }
}

struct RollupFixture : test::CoreFixture {
  DelegationProgram dlp{&base};
  Address dlp_addr = register_delegation_program(base, &dlp);
  Address game = base.register_program("game", bump_routine);
  Provisioner provisioner{&base, &dlp, clock, &ids};
  Address funder = seed_wallet(game, 0xf0, 200'000'000);
  Address c1 = seed_component(0xc1);
  Address c2 = seed_component(0xc2);

  Address seed_component(std::uint8_t tag) {
    Account account;
    account.address = Address::filled(tag);
    account.owner = game;
    account.data = Bytes{0, tag};
    base.upsert_account(account);
    return account.address;
  }

  ErRuntime& provision(const std::vector<Address>& accounts, ERConfig config = {},
                       std::uint64_t er_id = 7) {
    REQUIRE(dlp.delegate_accounts(game, accounts, config, er_id, funder, clock->now_ms()) ==
            DlpError::none);
    provisioner.pump();
    ErRuntime* runtime = provisioner.find(er_id);
    REQUIRE(runtime != nullptr);
    return *runtime;
  }

  Transaction bump_tx(ErRuntime& er, std::vector<AccountMeta> metas) {
    Transaction tx;
    tx.id = ids.fresh();
    tx.fee_payer = metas[0].address;
    tx.recent_blockhash = er.chain().latest_blockhash();
    tx.program_id = game;
    tx.metas = std::move(metas);
    tx.fee = 0;
    return tx;
  }

  std::uint8_t first_byte(const Chain& chain, const Address& address) {
    return chain.find_account(address)->data[0];
  }
};

}  // namespace

TEST_CASE("provisioning clones the delegated accounts into the rollup") {
  RollupFixture fx;
  ERConfig config;
  config.block_time_ms = 20;
  ErRuntime& er = fx.provision({fx.c1, fx.c2}, config);

  CHECK(er.er_id() == 7);
  CHECK(er.alive());
  CHECK(er.config() == config);
  CHECK(er.delegated() == std::set<Address>{fx.c1, fx.c2});
  CHECK(er.created_at_ms() == 0);
  CHECK(er.lifetime_deadline() == config.lifetime_ms);

  // local copies carry no lock; the base copies stay locked
  const Account* local = er.chain().find_account(fx.c1);
  REQUIRE(local != nullptr);
  CHECK_FALSE(local->delegated_to.has_value());
  CHECK(local->data == fx.base.find_account(fx.c1)->data);
  CHECK(fx.base.find_account(fx.c1)->delegated_to == 7);

  CHECK(er.log().baseline.size() == 2);
  CHECK(er.log().baseline.at(fx.c1) == canonical_account_encoding(*local));
  REQUIRE(er.log().segments.size() == 1);
  CHECK(er.log().segments[0].start_commit == 0);
  CHECK_FALSE(er.log().segments[0].closed);

  CHECK(fx.provisioner.provisioned_count() == 1);
  CHECK(fx.provisioner.alive().size() == 1);
  CHECK(fx.provisioner.find(99) == nullptr);
}

TEST_CASE("rollup execution is immediate and fully logged") {
  RollupFixture fx;
  ErRuntime& er = fx.provision({fx.c1});

  Transaction tx = fx.bump_tx(er, {{fx.c1, true}});
  auto results = er.er_execute({tx});
  REQUIRE(results.size() == 1);
  CHECK(results[0].status == TxStatus::success);
  // no block was produced yet, the state moved anyway
  CHECK(fx.first_byte(er.chain(), fx.c1) == 1);
  CHECK(er.chain().blocks().size() == 1);

  const LogSegment& segment = er.log().segments.back();
  REQUIRE(segment.txs.size() == 1);
  CHECK(segment.txs[0].tx == tx);
  CHECK(segment.txs[0].status == TxStatus::success);
  CHECK_FALSE(segment.txs[0].fee_exempt);
  CHECK(segment.txs[0].pre_state != segment.txs[0].post_state);
}

TEST_CASE("queued transactions run when their block is due") {
  RollupFixture fx;
  ERConfig config;
  config.block_time_ms = 20;
  ErRuntime& er = fx.provision({fx.c1}, config);

  er.submit(fx.bump_tx(er, {{fx.c1, true}}));
  CHECK(er.chain().pending_count() == 1);
  CHECK(fx.first_byte(er.chain(), fx.c1) == 0);
  CHECK(er.produce_block_if_due() == nullptr);  // not due yet

  fx.clock->advance_by(20);
  const Block* block = er.produce_block_if_due();
  REQUIRE(block != nullptr);
  CHECK(block->transaction_results.size() == 1);
  CHECK(fx.first_byte(er.chain(), fx.c1) == 1);
  CHECK(er.chain().pending_count() == 0);
}

TEST_CASE("ticks fire on their interval across all delegated accounts") {
  RollupFixture fx;
  ERConfig config;
  config.tick_interval_ms = 100;
  config.tick_program = fx.game;
  ErRuntime& er = fx.provision({fx.c1, fx.c2}, config);

  CHECK(er.fire_due_ticks() == 0);  // nothing due at creation time
  fx.clock->advance_by(250);
  CHECK(er.fire_due_ticks() == 2);  // due at 100 and 200
  CHECK(er.ticks_fired() == 2);
  CHECK(fx.first_byte(er.chain(), fx.c1) == 2);
  CHECK(fx.first_byte(er.chain(), fx.c2) == 2);

  const LogSegment& segment = er.log().segments.back();
  REQUIRE(segment.txs.size() == 2);
  for (const LoggedTx& logged : segment.txs) {
    CHECK(logged.fee_exempt);
    CHECK(logged.tx.fee == 0);
    CHECK(logged.tx.program_id == fx.game);
    CHECK(logged.tx.fee_payer == *er.delegated().begin());
    CHECK(logged.tx.metas.size() == 2);
  }
}

TEST_CASE("commits claim the rollup state and close the log segment") {
  RollupFixture fx;
  ERConfig config;
  config.commit_frequency_ms = 1'000;
  ErRuntime& er = fx.provision({fx.c1}, config);

  er.er_execute({fx.bump_tx(er, {{fx.c1, true}})});
  CHECK_FALSE(er.commit_due());
  CHECK_FALSE(er.maybe_commit().has_value());

  fx.clock->advance_by(1'000);
  CHECK(er.commit_due());
  auto commit_tx = er.maybe_commit();
  REQUIRE(commit_tx.has_value());
  CHECK(commit_tx->fee_payer == fx.dlp.treasury_address(7));

  REQUIRE(er.commit_history().size() == 1);
  const CommitRecord& record = er.commit_history()[0];
  CHECK(record.commit_id == ((7ull << 16) | 1));
  CHECK(record.er_id == 7);
  CHECK(record.account_states.at(fx.c1) ==
        canonical_account_encoding(*er.chain().find_account(fx.c1)));

  REQUIRE(er.log().segments.size() == 2);
  const LogSegment& closed = er.log().segments[0];
  CHECK(closed.closed);
  CHECK(closed.end_commit == record.commit_id);
  CHECK(closed.segment_hash == record.log_segment_hash);
  CHECK(closed.segment_hash == compute_segment_hash(closed));
  CHECK(er.log().segments[1].start_commit == record.commit_id);

  // the base layer applies the claim at its next block
  CHECK(fx.base.pending_count() == 1);
  fx.clock->advance_by(400);
  fx.base.produce_block();
  CHECK(fx.dlp.commit_order().size() == 1);
  const Account* on_base = fx.base.find_account(fx.c1);
  CHECK(on_base->data[0] == 1);
  CHECK(on_base->delegated_to == 7);

  SUBCASE("settle requests force an early commit") {
    er.er_execute({fx.bump_tx(er, {{fx.c1, true}})});
    CHECK_FALSE(er.maybe_commit().has_value());
    er.request_settle();
    auto settle_tx = er.maybe_commit();
    REQUIRE(settle_tx.has_value());
    CHECK(er.commit_history().back().commit_id == ((7ull << 16) | 2));
  }
}

TEST_CASE("every segment carries the accounts imported from the base layer") {
  RollupFixture fx;
  Address outside = fx.seed_component(0xd0);
  ErRuntime& er = fx.provision({fx.c1});

  // reading an undelegated account pulls it in and records the import
  er.er_execute({fx.bump_tx(er, {{fx.c1, true}, {outside, false}})});
  CHECK(er.log().segments[0].clones.contains(outside));

  fx.clock->advance_by(2'000);
  REQUIRE(er.maybe_commit().has_value());

  // the cached import reappears in the next segment so it replays standalone
  REQUIRE(er.log().segments.size() == 2);
  CHECK(er.log().segments[1].clones.contains(outside));
  CHECK(er.log().segments[1].clones.at(outside) == er.log().segments[0].clones.at(outside));
}

TEST_CASE("fraud injection corrupts the claim while the log stays honest") {
  RollupFixture fx;
  ErRuntime& er = fx.provision({fx.c1});

  er.er_execute({fx.bump_tx(er, {{fx.c1, true}})});
  er.inject_fraud(FraudSpec{});
  fx.clock->advance_by(2'000);
  REQUIRE(er.maybe_commit().has_value());

  const CommitRecord& record = er.commit_history()[0];
  Bytes honest = canonical_account_encoding(*er.chain().find_account(fx.c1));
  const Bytes& claimed = record.account_states.at(fx.c1);
  REQUIRE(claimed.size() == honest.size());
  CHECK(claimed != honest);
  CHECK((claimed.back() ^ honest.back()) == 0x01);  // default spec flips the last byte
  CHECK(record.log_segment_hash == compute_segment_hash(er.log().segments[0]));

  // the injection is one-shot; the next commit claims honestly again
  fx.clock->advance_by(2'000);
  REQUIRE(er.maybe_commit().has_value());
  CHECK(er.commit_history()[1].account_states.at(fx.c1) ==
        canonical_account_encoding(*er.chain().find_account(fx.c1)));
}

TEST_CASE("lifetime expiry terminates the rollup with a final commit") {
  RollupFixture fx;
  ERConfig config;
  config.lifetime_ms = 3'000;
  ErRuntime& er = fx.provision({fx.c1}, config);

  er.er_execute({fx.bump_tx(er, {{fx.c1, true}})});
  fx.clock->advance_by(3'000);
  CHECK(er.next_event_at().has_value());
  er.pump();

  CHECK_FALSE(er.alive());
  CHECK(er.close_reason() == "expired");
  CHECK(er.commit_history().size() == 1);
  CHECK(fx.base.pending_count() == 1);  // the final claim heads for the base layer
  CHECK_FALSE(er.next_event_at().has_value());
  CHECK(er.produce_block_if_due() == nullptr);
  CHECK_FALSE(er.maybe_commit().has_value());
  CHECK(er.fire_due_ticks() == 0);
  CHECK(fx.provisioner.alive().empty());
  CHECK(fx.provisioner.all().size() == 1);  // the log remains readable
}

TEST_CASE("undelegation settles inline and shuts the rollup down") {
  RollupFixture fx;
  ErRuntime& er = fx.provision({fx.c1, fx.c2});

  er.er_execute({fx.bump_tx(er, {{fx.c1, true}, {fx.c2, true}})});
  REQUIRE(fx.dlp.undelegate(fx.game, fx.c1, fx.clock->now_ms()) == DlpError::none);

  // the settle commit applied directly, unlocking c1 with the rollup's state
  CHECK(er.commit_history().size() == 1);
  CHECK(fx.dlp.commit_order().size() == 1);
  const Account* released = fx.base.find_account(fx.c1);
  CHECK(released->data[0] == 1);
  CHECK_FALSE(released->delegated_to.has_value());
  CHECK(er.delegated() == std::set<Address>{fx.c2});
  CHECK(er.alive());

  REQUIRE(fx.dlp.undelegate(fx.game, fx.c2, fx.clock->now_ms()) == DlpError::none);
  CHECK_FALSE(er.alive());
  CHECK(er.close_reason() == "undelegated");
  CHECK(fx.base.find_account(fx.c2)->data[0] == 1);
}

TEST_CASE("the runtime reports its earliest upcoming duty") {
  RollupFixture fx;
  ERConfig config;
  config.block_time_ms = 30;
  config.commit_frequency_ms = 500;
  config.tick_interval_ms = 200;
  config.tick_program = fx.game;
  config.lifetime_ms = 10'000;
  ErRuntime& er = fx.provision({fx.c1}, config);

  // at t=0: block at 30, tick at 200, commit at 500, expiry at 10000
  CHECK(er.next_event_at() == 30);
  fx.clock->advance_by(30);
  er.pump();
  CHECK(er.next_event_at() == 60);

  fx.clock->advance_to(199);
  er.pump();
  CHECK(er.next_event_at() == 200);  // the tick edges out the block at 210

  er.kill("test");
  CHECK_FALSE(er.next_event_at().has_value());
}
