#include <doctest.h>

#include "ephemera/dlp/delegation.h"
#include "ephemera/exec/engine.h"
#include "test_support.h"

using namespace ephemera;

namespace {

struct DlpFixture : test::CoreFixture {
  DelegationProgram dlp{&base};
  Address dlp_addr = register_delegation_program(base, &dlp);
  Address game = base.register_program("game", [](ProgramContext&) {});
  Address funder = seed_wallet(game, 0xf0, 200'000'000);
  Address c1 = seed_component(0xc1, "v0");
  Address c2 = seed_component(0xc2, "w0");

  Address seed_component(std::uint8_t tag, const char* payload) {
    Account account;
    account.address = Address::filled(tag);
    account.owner = game;
    account.data = to_bytes(payload);
    base.upsert_account(account);
    return account.address;
  }

  Bytes claim(const Address& address, const char* payload, std::int64_t balance_delta = 0) {
    Account claimed = *base.find_account(address);
    claimed.data = to_bytes(payload);
    claimed.balance += balance_delta;
    return canonical_account_encoding(claimed);
  }

  template <typename Event>
  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& event : dlp.events())
      if (std::holds_alternative<Event>(event)) ++n;
    return n;
  }
};

}  // namespace

TEST_CASE("rollup config bounds are enforced") {
  ERConfig config;
  CHECK_FALSE(config.validate().has_value());

  config.block_time_ms = kMinErBlockTimeMs - 1;
  CHECK(*config.validate() == "block-time-out-of-range");
  config.block_time_ms = kMaxErBlockTimeMs + 1;
  CHECK(*config.validate() == "block-time-out-of-range");
  config.block_time_ms = kMinErBlockTimeMs;
  CHECK_FALSE(config.validate().has_value());

  config.lifetime_ms = 0;
  CHECK(*config.validate() == "zero-lifetime");
  config.lifetime_ms = 1;
  config.commit_frequency_ms = 0;
  CHECK(*config.validate() == "zero-commit-frequency");
  config.commit_frequency_ms = 1;
  config.target_tps = 0;
  CHECK(*config.validate() == "zero-target-tps");
  config.target_tps = 1;
  config.tick_interval_ms = 50;
  CHECK(*config.validate() == "tick-program-missing");
  config.tick_program = Address::filled(0x01);
  CHECK_FALSE(config.validate().has_value());
}

TEST_CASE("rollup config round-trips through its encoding") {
  ERConfig config;
  config.lifetime_ms = 123'456;
  config.commit_frequency_ms = 777;
  config.target_tps = 9'000;
  config.block_time_ms = 25;
  config.gasless = false;
  config.tick_interval_ms = 30'000;
  config.tick_program = Address::filled(0x5a);
  config.tick_args = Bytes{9, 8, 7};

  Bytes wire = encode_er_config(config);
  ByteReader reader(wire);
  auto decoded = decode_er_config(reader);
  REQUIRE(decoded.has_value());
  CHECK(*decoded == config);
  CHECK(reader.at_end());
}

TEST_CASE("commit records round-trip through their encoding") {
  CommitRecord record;
  record.commit_id = (7u << 16) | 3;
  record.er_id = 7;
  record.base_slot = 42;
  record.account_states[Address::filled(0x01)] = Bytes{1, 2, 3};
  record.account_states[Address::filled(0x02)] = Bytes{};
  record.log_segment_hash = Hash32::filled(0xaa);
  record.verified = true;

  Bytes wire = encode_commit_record(record);
  auto decoded = decode_commit_record(wire);
  REQUIRE(decoded.has_value());
  CHECK(*decoded == record);

  Bytes truncated(wire.begin(), wire.end() - 1);
  CHECK_FALSE(decode_commit_record(truncated).has_value());
}

TEST_CASE("delegation locks accounts and escrows the sequencer fund") {
  DlpFixture fx;
  ERConfig config;
  CHECK(fx.dlp.delegate_accounts(fx.game, {fx.c1, fx.c2}, config, 7, fx.funder, 100) ==
        DlpError::none);

  CHECK(fx.dlp.delegated_to(fx.c1) == 7);
  CHECK(fx.dlp.delegated_to(fx.c2) == 7);
  CHECK(fx.base.find_account(fx.c1)->delegated_to == 7);
  CHECK(fx.dlp.er_known(7));
  CHECK(fx.dlp.er_open(7));
  CHECK(fx.dlp.accounts_of(7).size() == 2);

  const DelegationRecord* record = fx.dlp.record_for(fx.c1);
  REQUIRE(record != nullptr);
  CHECK(record->status == DelegationStatus::active);
  CHECK(record->delegated_at_ms == 100);
  CHECK(record->lifetime_deadline() == 100 + config.lifetime_ms);

  CHECK(fx.base.find_account(fx.funder)->balance == 200'000'000 - kSequencerFund);
  CHECK(fx.base.find_account(fx.dlp.treasury_address(7))->balance == kSequencerFund);
  CHECK(fx.event_count<ProvisionRequested>() == 1);
}

TEST_CASE("delegation refuses bad inputs") {
  DlpFixture fx;
  ERConfig config;

  ERConfig bad = config;
  bad.block_time_ms = 1;
  CHECK(fx.dlp.delegate_accounts(fx.game, {fx.c1}, bad, 1, fx.funder, 0) ==
        DlpError::invalid_config);
  CHECK(fx.dlp.delegate_accounts(fx.game, {}, config, 1, fx.funder, 0) == DlpError::no_accounts);
  CHECK(fx.dlp.delegate_accounts(fx.game, {fx.c1, fx.c1}, config, 1, fx.funder, 0) ==
        DlpError::already_delegated);
  CHECK(fx.dlp.delegate_accounts(fx.game, {Address::filled(0x99)}, config, 1, fx.funder, 0) ==
        DlpError::unknown_account);
  CHECK(fx.dlp.delegate_accounts(fx.game, {fx.game}, config, 1, fx.funder, 0) ==
        DlpError::executable_account);
  Address other = fx.base.register_program("other", [](ProgramContext&) {});
  CHECK(fx.dlp.delegate_accounts(other, {fx.c1}, config, 1, fx.funder, 0) == DlpError::not_owner);

  Address broke = fx.seed_wallet(fx.game, 0xf1, kSequencerFund + fx.base.required_fee() - 1);
  CHECK(fx.dlp.delegate_accounts(fx.game, {fx.c1}, config, 1, broke, 0) ==
        DlpError::treasury_underfunded);

  REQUIRE(fx.dlp.delegate_accounts(fx.game, {fx.c1}, config, 1, fx.funder, 0) == DlpError::none);
  CHECK(fx.dlp.delegate_accounts(fx.game, {fx.c2}, config, 1, fx.funder, 0) ==
        DlpError::duplicate_er);
  CHECK(fx.dlp.delegate_accounts(fx.game, {fx.c1}, config, 2, fx.funder, 0) ==
        DlpError::already_delegated);
}

TEST_CASE("commits apply optimistically and refuse inflation") {
  DlpFixture fx;
  REQUIRE(fx.dlp.delegate_accounts(fx.game, {fx.c1}, ERConfig{}, 7, fx.funder, 0) ==
          DlpError::none);

  CommitRecord commit;
  commit.commit_id = (7u << 16) | 1;
  commit.er_id = 7;
  commit.account_states[fx.c1] = fx.claim(fx.c1, "v1");
  commit.log_segment_hash = Hash32::filled(0x01);

  SUBCASE("a valid commit lands on the base layer") {
    CHECK(fx.dlp.apply_commit(commit, 12) == DlpError::none);
    const Account* on_base = fx.base.find_account(fx.c1);
    CHECK(on_base->data == to_bytes("v1"));
    CHECK(on_base->delegated_to == 7);  // commits do not unlock
    REQUIRE(fx.dlp.commit_order().size() == 1);
    const CommitRecord* stored = fx.dlp.find_commit(commit.commit_id);
    REQUIRE(stored != nullptr);
    CHECK(stored->base_slot == 12);
    CHECK_FALSE(stored->verified);
    CHECK(fx.event_count<CommitApplied>() == 1);

    CHECK(fx.dlp.apply_commit(commit, 13) == DlpError::duplicate_commit);
  }
  SUBCASE("unknown rollup") {
    commit.er_id = 8;
    CHECK(fx.dlp.apply_commit(commit, 12) == DlpError::unknown_er);
  }
  SUBCASE("claims for accounts outside the delegation set") {
    commit.account_states[fx.c2] = fx.claim(fx.c2, "w1");
    CHECK(fx.dlp.apply_commit(commit, 12) == DlpError::foreign_account);
  }
  SUBCASE("garbled state claim") {
    commit.account_states[fx.c1] = Bytes{1, 2, 3};
    CHECK(fx.dlp.apply_commit(commit, 12) == DlpError::malformed_commit);
  }
  SUBCASE("claims must not mint balance") {
    commit.account_states[fx.c1] = fx.claim(fx.c1, "v1", +1);
    CHECK(fx.dlp.apply_commit(commit, 12) == DlpError::balance_inflation);
  }
}

TEST_CASE("fraud reverts to the last verified commit") {
  DlpFixture fx;
  REQUIRE(fx.dlp.delegate_accounts(fx.game, {fx.c1}, ERConfig{}, 7, fx.funder, 0) ==
          DlpError::none);

  CommitRecord first;
  first.commit_id = (7u << 16) | 1;
  first.er_id = 7;
  first.account_states[fx.c1] = fx.claim(fx.c1, "v1");
  REQUIRE(fx.dlp.apply_commit(first, 10) == DlpError::none);

  CommitRecord second;
  second.commit_id = (7u << 16) | 2;
  second.er_id = 7;
  second.account_states[fx.c1] = fx.claim(fx.c1, "v2");
  REQUIRE(fx.dlp.apply_commit(second, 20) == DlpError::none);
  CHECK(fx.base.find_account(fx.c1)->data == to_bytes("v2"));

  SUBCASE("nothing verified yet reverts to the delegation point") {
    CHECK(fx.dlp.handle_fraud(second.commit_id, fx.c1, 999) == DlpError::none);
    const Account* reverted = fx.base.find_account(fx.c1);
    CHECK(reverted->data == to_bytes("v0"));
    CHECK_FALSE(reverted->delegated_to.has_value());
  }
  SUBCASE("a verified first commit becomes the revert point") {
    fx.dlp.mark_verified(first.commit_id);
    CHECK(fx.dlp.find_commit(first.commit_id)->verified);
    CHECK(fx.dlp.record_for(fx.c1)->last_verified_commit == first.commit_id);

    CHECK(fx.dlp.handle_fraud(second.commit_id, fx.c1, 999) == DlpError::none);
    const Account* reverted = fx.base.find_account(fx.c1);
    CHECK(reverted->data == to_bytes("v1"));
    CHECK_FALSE(reverted->delegated_to.has_value());
  }

  // either way the session is dead and the escrow came back
  CHECK_FALSE(fx.dlp.er_open(7));
  CHECK_FALSE(fx.dlp.delegated_to(fx.c1).has_value());
  CHECK(fx.dlp.record_for(fx.c1)->status == DelegationStatus::closed);
  CHECK(fx.event_count<FraudReverted>() == 1);
  CHECK(fx.event_count<ErClosed>() == 1);
  CHECK(fx.base.find_account(fx.funder)->balance == 200'000'000);
  CHECK(fx.base.find_account(fx.dlp.treasury_address(7))->balance == 0);

  CHECK(fx.dlp.handle_fraud(second.commit_id, fx.c1, 999) == DlpError::er_closed);
}

TEST_CASE("undelegation honors ownership and the lifetime") {
  DlpFixture fx;
  ERConfig config;
  config.lifetime_ms = 5'000;
  REQUIRE(fx.dlp.delegate_accounts(fx.game, {fx.c1, fx.c2}, config, 7, fx.funder, 1'000) ==
          DlpError::none);

  CHECK(fx.dlp.undelegate(fx.funder, fx.c1, 2'000) == DlpError::lifetime_active);
  CHECK(fx.dlp.delegated_to(fx.c1) == 7);

  // the owner program may pull accounts out early
  CHECK(fx.dlp.undelegate(fx.game, fx.c1, 2'000) == DlpError::none);
  CHECK_FALSE(fx.dlp.delegated_to(fx.c1).has_value());
  CHECK_FALSE(fx.base.find_account(fx.c1)->delegated_to.has_value());
  CHECK(fx.dlp.er_open(7));  // c2 still inside
  CHECK(fx.dlp.undelegate(fx.game, fx.c1, 2'100) == DlpError::not_delegated);

  // past the deadline anyone may unlock whatever is left
  CHECK(fx.dlp.undelegate(fx.funder, fx.c2, 5'999) == DlpError::lifetime_active);
  CHECK(fx.dlp.undelegate(fx.funder, fx.c2, 6'000) == DlpError::none);
  CHECK_FALSE(fx.dlp.er_open(7));  // last account closed the session
  CHECK(fx.event_count<AccountUndelegated>() == 2);
  CHECK(fx.event_count<ErClosed>() == 1);
  CHECK(fx.base.find_account(fx.funder)->balance == 200'000'000);

  CHECK(fx.dlp.undelegate(fx.game, Address::filled(0x99), 0) == DlpError::not_delegated);
}

TEST_CASE("force close unlocks the whole session at once") {
  DlpFixture fx;
  REQUIRE(fx.dlp.delegate_accounts(fx.game, {fx.c1, fx.c2}, ERConfig{}, 7, fx.funder, 0) ==
          DlpError::none);

  CHECK(fx.dlp.force_close(fx.game, 8, 100) == DlpError::unknown_er);
  Address other = fx.base.register_program("other", [](ProgramContext&) {});
  CHECK(fx.dlp.force_close(other, 7, 100) == DlpError::not_owner);

  CHECK(fx.dlp.force_close(fx.game, 7, 100) == DlpError::none);
  CHECK_FALSE(fx.dlp.er_open(7));
  CHECK_FALSE(fx.dlp.delegated_to(fx.c1).has_value());
  CHECK_FALSE(fx.dlp.delegated_to(fx.c2).has_value());
  CHECK(fx.dlp.accounts_of(7).empty());
  CHECK(fx.event_count<AccountUndelegated>() == 2);
  CHECK(fx.base.find_account(fx.funder)->balance == 200'000'000);

  CHECK(fx.dlp.force_close(fx.game, 7, 200) == DlpError::er_closed);
}

TEST_CASE("the registered routine drives the same transitions") {
  DlpFixture fx;
  ERConfig config;

  Transaction delegate = make_delegate_tx(fx.ids, fx.base, fx.funder, fx.game, {fx.c1}, config);
  auto results = execute_transactions(std::span(&delegate, 1), fx.base);
  REQUIRE(results[0].status == TxStatus::success);
  CHECK(fx.dlp.delegated_to(fx.c1) == delegate.id);  // the transaction id names the rollup
  CHECK(fx.base.find_account(fx.funder)->balance ==
        200'000'000 - kSequencerFund - fx.base.required_fee());
  CHECK(fx.base.find_account(fx.dlp.treasury_address(delegate.id))->balance == kSequencerFund);
  CHECK(fx.base.fees_burned() == fx.base.required_fee());

  SUBCASE("a rejected instruction still burns its fee") {
    Transaction again = make_delegate_tx(fx.ids, fx.base, fx.funder, fx.game, {fx.c1}, config);
    auto failed = execute_transactions(std::span(&again, 1), fx.base);
    CHECK(failed[0].status == TxStatus::routine_failed);
    CHECK(failed[0].detail == "already-delegated");
    CHECK(fx.dlp.delegated_to(fx.c1) == delegate.id);
    CHECK(fx.base.fees_burned() == 2 * fx.base.required_fee());
  }
  SUBCASE("undelegation by transaction") {
    Transaction undelegate = make_undelegate_tx(fx.ids, fx.base, fx.funder, fx.game, fx.c1);
    auto done = execute_transactions(std::span(&undelegate, 1), fx.base);
    REQUIRE(done[0].status == TxStatus::success);
    CHECK_FALSE(fx.dlp.delegated_to(fx.c1).has_value());
    CHECK_FALSE(fx.base.find_account(fx.c1)->delegated_to.has_value());
    // session closed, escrow refunded, two fees burned in total
    CHECK(fx.base.find_account(fx.funder)->balance ==
          200'000'000 - 2 * fx.base.required_fee());
  }
  SUBCASE("force close by transaction") {
    Transaction close = make_force_close_tx(fx.ids, fx.base, fx.funder, fx.game, delegate.id,
                                            fx.dlp.accounts_of(delegate.id));
    auto done = execute_transactions(std::span(&close, 1), fx.base);
    REQUIRE(done[0].status == TxStatus::success);
    CHECK_FALSE(fx.dlp.er_open(delegate.id));
    CHECK(fx.base.find_account(fx.funder)->balance ==
          200'000'000 - 2 * fx.base.required_fee());
  }
}
