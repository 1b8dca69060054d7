#include "ephemera/verify/verifier.h"

#include <algorithm>

#include "ephemera/er/archive.h"
#include "ephemera/exec/engine.h"

namespace ephemera {

VerificationVerdict verify_commit(const std::map<Address, Bytes>& prev_state,
                                  std::uint64_t expected_start, const LogSegment& segment,
                                  const CommitRecord& commit, const ERConfig& config,
                                  std::shared_ptr<ProgramRegistry> registry) {
  VerificationVerdict verdict;
  verdict.commit_id = commit.commit_id;
  verdict.er_id = commit.er_id;

  if (segment.start_commit != expected_start || segment.end_commit != commit.commit_id) {
    verdict.reason = "segment-gap";
    return verdict;
  }

  ChainParams params;
  params.kind = LayerKind::er;
  params.label = "replay";
  params.block_time_ms = config.block_time_ms;
  params.required_fee = config.gasless ? 0 : kBaseFee;
  Chain replay(params, std::make_shared<SimClock>(), std::move(registry));

  std::set<Address> members;
  for (const auto& [address, encoding] : commit.account_states) members.insert(address);
  for (const auto& [address, encoding] : prev_state) members.insert(address);
  replay.set_delegated_filter([members](const Address& a) { return members.contains(a); });
  replay.set_fallback_loader([&segment](const Address& a) -> std::optional<Account> {
    auto it = segment.clones.find(a);
    if (it == segment.clones.end()) return std::nullopt;
    return decode_account_encoding(it->second);
  });

  for (const auto& [address, encoding] : prev_state) {
    auto account = decode_account_encoding(encoding);
    if (!account || account->address != address) {
      verdict.reason = "malformed-state";
      return verdict;
    }
    replay.upsert_account(std::move(*account));
  }

  LogSegment replayed;
  replayed.start_commit = segment.start_commit;
  for (const LoggedTx& logged : segment.txs) {
    LoggedTx out = logged;
    if (logged.status == TxStatus::expired_blockhash) {
      // The live run refused it against the real blockhash history, which the
      // replay chain does not have. Keep the refusal; it changed no state.
      out.pre_state = Hash32{};
      out.post_state = Hash32{};
    } else {
      ExecOptions opts;
      opts.sequential = true;
      opts.fee_exempt = logged.fee_exempt;
      opts.accept_any_blockhash = true;
      std::vector<TxTrace> traces;
      opts.trace = &traces;
      auto results = execute_transactions(std::span(&logged.tx, 1), replay, opts);
      out.status = results[0].status;
      out.pre_state = traces[0].pre_state;
      out.post_state = traces[0].post_state;
    }
    replayed.txs.push_back(std::move(out));
  }
  replayed.end_commit = commit.commit_id;

  if (compute_segment_hash(replayed) != commit.log_segment_hash) {
    verdict.reason = "log-mismatch";
    return verdict;
  }

  for (const auto& [address, claimed] : commit.account_states) {
    const Account* account = replay.find_account(address);
    Bytes expected = account ? canonical_account_encoding(*account) : Bytes{};
    if (expected != claimed) {
      verdict.reason = "state-mismatch";
      verdict.evidence = FraudEvidence{address, std::move(expected), claimed};
      return verdict;
    }
  }

  verdict.verified = true;
  return verdict;
}

ReplayOutcome replay_session_archive(std::istream& in, std::shared_ptr<ProgramRegistry> registry) {
  ReplayOutcome outcome;
  std::string error;
  auto archive = read_session_archive(in, &error);
  if (!archive) {
    outcome.error = error;
    return outcome;
  }

  std::map<Address, Bytes> state = archive->log.baseline;
  std::uint64_t last_commit = 0;
  for (const CommitRecord& commit : archive->commits) {
    const LogSegment* segment = nullptr;
    for (const LogSegment& candidate : archive->log.segments) {
      if (candidate.closed && candidate.end_commit == commit.commit_id) {
        segment = &candidate;
        break;
      }
    }
    if (!segment) {
      VerificationVerdict verdict;
      verdict.commit_id = commit.commit_id;
      verdict.er_id = commit.er_id;
      verdict.reason = "missing-segment";
      outcome.failed_verdict = std::move(verdict);
      return outcome;
    }
    auto verdict = verify_commit(state, last_commit, *segment, commit, archive->config, registry);
    ++outcome.commits_checked;
    if (!verdict.verified) {
      outcome.failed_verdict = std::move(verdict);
      return outcome;
    }
    state = commit.account_states;
    last_commit = commit.commit_id;
  }

  outcome.ok = true;
  outcome.final_state = std::move(state);
  return outcome;
}

Verifier::Verifier(DelegationProgram* dlp, Provisioner* provisioner, bool async)
    : dlp_(dlp), provisioner_(provisioner), async_(async) {}

std::size_t Verifier::fraud_count() const {
  return static_cast<std::size_t>(
      std::count_if(verdicts_.begin(), verdicts_.end(),
                    [](const VerificationVerdict& v) { return !v.verified; }));
}

VerificationVerdict Verifier::check_commit(std::uint64_t commit_id) {
  const CommitRecord* commit = dlp_->find_commit(commit_id);
  VerificationVerdict verdict;
  verdict.commit_id = commit_id;
  if (!commit) {
    verdict.reason = "unknown-commit";
    return verdict;
  }
  verdict.er_id = commit->er_id;

  ErRuntime* runtime = provisioner_->find(commit->er_id);
  if (!runtime) {
    verdict.reason = "missing-segment";
    return verdict;
  }

  ShadowState& shadow = shadows_[commit->er_id];
  if (!shadow.primed) {
    shadow.state = runtime->log().baseline;
    shadow.last_commit = 0;
    shadow.primed = true;
  }

  const LogSegment* segment = nullptr;
  for (const LogSegment& candidate : runtime->log().segments) {
    if (candidate.closed && candidate.end_commit == commit_id) {
      segment = &candidate;
      break;
    }
  }
  if (!segment) {
    // A commit with no published log segment is indistinguishable from fraud.
    verdict.reason = "missing-segment";
    return verdict;
  }

  return verify_commit(shadow.state, shadow.last_commit, *segment, *commit, runtime->config(),
                       dlp_->base().registry_ptr());
}

void Verifier::settle_verdict(const VerificationVerdict& verdict) {
  verdicts_.push_back(verdict);
  if (verdict.verified) {
    dlp_->mark_verified(verdict.commit_id);
    ShadowState& shadow = shadows_[verdict.er_id];
    if (const CommitRecord* commit = dlp_->find_commit(verdict.commit_id)) {
      shadow.state = commit->account_states;
      shadow.last_commit = verdict.commit_id;
      shadow.primed = true;
    }
  } else {
    Address mismatch = verdict.evidence ? verdict.evidence->account : Address{};
    dlp_->handle_fraud(verdict.commit_id, mismatch, dlp_->base().now_ms());
  }
}

void Verifier::pump() {
  const auto& events = dlp_->events();
  while (event_cursor_ < events.size()) {
    const DlpEvent& event = events[event_cursor_++];
    const auto* applied = std::get_if<CommitApplied>(&event);
    if (!applied) continue;
    if (async_) {
      pending_.push_back(applied->commit_id);
    } else {
      settle_verdict(check_commit(applied->commit_id));
    }
  }
}

void Verifier::flush_er(std::uint64_t er_id) {
  std::vector<std::uint64_t> kept;
  kept.reserve(pending_.size());
  for (std::uint64_t commit_id : pending_) {
    const CommitRecord* commit = dlp_->find_commit(commit_id);
    if (commit && commit->er_id == er_id) {
      settle_verdict(check_commit(commit_id));
    } else {
      kept.push_back(commit_id);
    }
  }
  pending_ = std::move(kept);
}

void Verifier::flush_all() {
  std::vector<std::uint64_t> queue = std::move(pending_);
  pending_.clear();
  for (std::uint64_t commit_id : queue) settle_verdict(check_commit(commit_id));
}

}  // namespace ephemera
