#include <doctest.h>

#include <sstream>

#include "ephemera/er/archive.h"
#include "ephemera/er/rollup.h"
#include "ephemera/exec/engine.h"
#include "ephemera/verify/verifier.h"
#include "test_support.h"

using namespace ephemera;

namespace {

void bump_routine(ProgramContext& ctx) {
  for (std::size_t i = 0; i < ctx.account_count(); ++i) {
    AccountHandle& handle = ctx.account(i);
    if (!handle.writable() || !handle.exists() || handle.data().empty()) continue;
    Bytes data(handle.data().begin(), handle.data().end());
    ++data[0];
    handle.set_data(std::move(data));
  }
}

struct VerifyFixture : test::CoreFixture {
  DelegationProgram dlp{&base};
  Address dlp_addr = register_delegation_program(base, &dlp);
  Address game = base.register_program("game", bump_routine);
  Provisioner provisioner{&base, &dlp, clock, &ids};
  Address funder = seed_wallet(game, 0xf0, 200'000'000);
  Address c1 = seed_component(0xc1);

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
    return *provisioner.find(er_id);
  }

  void bump(ErRuntime& er, std::vector<AccountMeta> metas) {
    Transaction tx;
    tx.id = ids.fresh();
    tx.fee_payer = metas[0].address;
    tx.recent_blockhash = er.chain().latest_blockhash();
    tx.program_id = game;
    tx.metas = std::move(metas);
    tx.fee = 0;
    REQUIRE(er.er_execute({tx})[0].status == TxStatus::success);
  }

  // lets the commit transaction land on the base layer
  void apply_pending() {
    clock->advance_by(kBaseBlockTimeMs);
    base.produce_block();
  }

  void commit(ErRuntime& er) {
    clock->advance_by(er.config().commit_frequency_ms);
    REQUIRE(er.maybe_commit().has_value());
    apply_pending();
  }
};

}  // namespace

TEST_CASE("honest commits verify by re-execution") {
  VerifyFixture fx;
  Verifier verifier(&fx.dlp, &fx.provisioner, false);
  ErRuntime& er = fx.provision({fx.c1});

  fx.bump(er, {{fx.c1, true}});
  fx.commit(er);
  fx.bump(er, {{fx.c1, true}});
  fx.bump(er, {{fx.c1, true}});
  fx.commit(er);

  verifier.pump();
  REQUIRE(verifier.verdicts().size() == 2);
  for (const VerificationVerdict& verdict : verifier.verdicts()) {
    CHECK(verdict.verified);
    CHECK(verdict.er_id == 7);
    CHECK(fx.dlp.find_commit(verdict.commit_id)->verified);
  }
  CHECK(verifier.fraud_count() == 0);
  CHECK(er.alive());
  CHECK(fx.dlp.er_open(7));

  // repeated pumps do not re-check settled commits
  verifier.pump();
  CHECK(verifier.verdicts().size() == 2);
}

TEST_CASE("a corrupted claim is detected and reverted") {
  VerifyFixture fx;
  Verifier verifier(&fx.dlp, &fx.provisioner, false);
  ErRuntime& er = fx.provision({fx.c1});

  // first commit is honest and verified; it becomes the revert point
  fx.bump(er, {{fx.c1, true}});
  fx.commit(er);
  verifier.pump();
  REQUIRE(verifier.verdicts().size() == 1);
  REQUIRE(verifier.verdicts()[0].verified);
  Bytes verified_encoding = fx.dlp.find_commit(verifier.verdicts()[0].commit_id)
                                ->account_states.at(fx.c1);

  fx.bump(er, {{fx.c1, true}});
  er.inject_fraud(FraudSpec{});
  fx.commit(er);
  verifier.pump();

  REQUIRE(verifier.verdicts().size() == 2);
  const VerificationVerdict& verdict = verifier.verdicts()[1];
  CHECK_FALSE(verdict.verified);
  CHECK(verdict.reason == "state-mismatch");
  REQUIRE(verdict.evidence.has_value());
  CHECK(verdict.evidence->account == fx.c1);
  CHECK(verdict.evidence->expected != verdict.evidence->claimed);
  CHECK(verifier.fraud_count() == 1);

  // fraud handling reverted to the verified commit, unlocked and closed
  CHECK_FALSE(er.alive());
  CHECK(er.close_reason() == "fraud");
  CHECK_FALSE(fx.dlp.er_open(7));
  const Account* reverted = fx.base.find_account(fx.c1);
  CHECK_FALSE(reverted->delegated_to.has_value());
  CHECK(canonical_account_encoding(*reverted) == verified_encoding);
  CHECK(reverted->data[0] == 1);  // the second bump never reached the base layer
}

TEST_CASE("a tampered log is caught even when its claims add up") {
  VerifyFixture fx;
  ErRuntime& er = fx.provision({fx.c1});

  fx.bump(er, {{fx.c1, true}});
  fx.bump(er, {{fx.c1, true}});
  fx.clock->advance_by(2'000);
  REQUIRE(er.maybe_commit().has_value());
  const CommitRecord& honest = er.commit_history()[0];
  const LogSegment& segment = er.log().segments[0];

  SUBCASE("the honest pair replays clean") {
    auto verdict =
        verify_commit(er.log().baseline, 0, segment, honest, er.config(), fx.base.registry_ptr());
    CHECK(verdict.verified);
  }
  SUBCASE("dropping a transaction from the log") {
    LogSegment doctored = segment;
    doctored.txs.pop_back();
    CommitRecord claim = honest;
    doctored.segment_hash = compute_segment_hash(doctored);
    claim.log_segment_hash = doctored.segment_hash;
    auto verdict =
        verify_commit(er.log().baseline, 0, doctored, claim, er.config(), fx.base.registry_ptr());
    CHECK_FALSE(verdict.verified);
    // the claims cover both bumps, the log only one
    CHECK(verdict.reason == "state-mismatch");
  }
  SUBCASE("rewriting a logged outcome") {
    LogSegment doctored = segment;
    doctored.txs[1].post_state = Hash32::filled(0xab);
    CommitRecord claim = honest;
    doctored.segment_hash = compute_segment_hash(doctored);
    claim.log_segment_hash = doctored.segment_hash;
    auto verdict =
        verify_commit(er.log().baseline, 0, doctored, claim, er.config(), fx.base.registry_ptr());
    CHECK_FALSE(verdict.verified);
    CHECK(verdict.reason == "log-mismatch");  // replay recomputes the real digest
  }
  SUBCASE("segment continuity is checked") {
    auto verdict = verify_commit(er.log().baseline, 99, segment, honest, er.config(),
                                 fx.base.registry_ptr());
    CHECK_FALSE(verdict.verified);
    CHECK(verdict.reason == "segment-gap");
  }
  SUBCASE("garbled previous state") {
    std::map<Address, Bytes> bad{{fx.c1, Bytes{1, 2, 3}}};
    auto verdict = verify_commit(bad, 0, segment, honest, er.config(), fx.base.registry_ptr());
    CHECK_FALSE(verdict.verified);
    CHECK(verdict.reason == "malformed-state");
  }
}

TEST_CASE("session archives replay end to end") {
  VerifyFixture fx;
  ErRuntime& er = fx.provision({fx.c1});

  fx.bump(er, {{fx.c1, true}});
  fx.commit(er);
  fx.bump(er, {{fx.c1, true}});
  fx.commit(er);

  SUBCASE("an honest archive verifies completely") {
    std::stringstream buffer;
    write_session_archive(buffer, snapshot_session(er));

    auto outcome = replay_session_archive(buffer, fx.base.registry_ptr());
    CHECK(outcome.ok);
    CHECK(outcome.commits_checked == 2);
    CHECK_FALSE(outcome.failed_verdict.has_value());
    CHECK(outcome.final_state == er.commit_history()[1].account_states);
  }
  SUBCASE("a fraudulent archive pins the bad commit") {
    fx.bump(er, {{fx.c1, true}});
    er.inject_fraud(FraudSpec{});
    fx.clock->advance_by(2'000);
    REQUIRE(er.maybe_commit().has_value());

    std::stringstream buffer;
    write_session_archive(buffer, snapshot_session(er));
    auto outcome = replay_session_archive(buffer, fx.base.registry_ptr());
    CHECK_FALSE(outcome.ok);
    CHECK(outcome.commits_checked == 3);
    REQUIRE(outcome.failed_verdict.has_value());
    CHECK(outcome.failed_verdict->commit_id == er.commit_history()[2].commit_id);
    CHECK(outcome.failed_verdict->reason == "state-mismatch");
    REQUIRE(outcome.failed_verdict->evidence.has_value());
    CHECK(outcome.failed_verdict->evidence->account == fx.c1);
  }
  SUBCASE("truncated archives fail to parse") {
    std::stringstream buffer;
    write_session_archive(buffer, snapshot_session(er));
    std::string text = buffer.str();
    std::stringstream cut(text.substr(0, text.size() / 2));
    auto outcome = replay_session_archive(cut, fx.base.registry_ptr());
    CHECK_FALSE(outcome.ok);
    CHECK_FALSE(outcome.error.empty());
  }
}

TEST_CASE("the async verifier defers verdicts until flushed") {
  VerifyFixture fx;
  Verifier verifier(&fx.dlp, &fx.provisioner, true);
  ERConfig config;
  ErRuntime& er_a = fx.provision({fx.c1}, config, 7);
  Address c2 = fx.seed_component(0xc2);
  ErRuntime& er_b = fx.provision({c2}, config, 8);

  fx.bump(er_a, {{fx.c1, true}});
  fx.commit(er_a);
  fx.bump(er_b, {{c2, true}});
  fx.commit(er_b);

  verifier.pump();
  CHECK(verifier.verdicts().empty());
  CHECK(verifier.pending_count() == 2);

  verifier.flush_er(7);
  REQUIRE(verifier.verdicts().size() == 1);
  CHECK(verifier.verdicts()[0].er_id == 7);
  CHECK(verifier.pending_count() == 1);

  verifier.flush_all();
  REQUIRE(verifier.verdicts().size() == 2);
  CHECK(verifier.verdicts()[1].er_id == 8);
  CHECK(verifier.pending_count() == 0);
  CHECK(verifier.fraud_count() == 0);
}
