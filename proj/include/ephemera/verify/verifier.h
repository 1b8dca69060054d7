// Optimistic settlement's other half: commits apply immediately, and the
// verifier re-executes each one's log segment from the previous verified state
// to either confirm it or produce fraud evidence.
#pragma once

#include <iosfwd>

#include "ephemera/er/rollup.h"

namespace ephemera {

struct FraudEvidence {
  Address account;
  Bytes expected;  // canonical encoding after re-execution
  Bytes claimed;
};

struct VerificationVerdict {
  std::uint64_t commit_id = 0;
  std::uint64_t er_id = 0;
  bool verified = false;
  // Empty on success; otherwise one of "segment-gap", "missing-segment",
  // "malformed-state", "log-mismatch", "state-mismatch".
  std::string reason;
  std::optional<FraudEvidence> evidence;
};

// Re-executes one closed log segment on a throwaway chain seeded with
// `prev_state` (encodings at the previous commit) and compares both the
// recomputed segment hash and the claimed account encodings.
VerificationVerdict verify_commit(const std::map<Address, Bytes>& prev_state,
                                  std::uint64_t expected_start, const LogSegment& segment,
                                  const CommitRecord& commit, const ERConfig& config,
                                  std::shared_ptr<ProgramRegistry> registry);

struct ReplayOutcome {
  bool ok = false;
  std::string error;  // archive/read problems
  std::optional<VerificationVerdict> failed_verdict;
  std::size_t commits_checked = 0;
  std::map<Address, Bytes> final_state;
};

// Full offline replay of a serialized session archive: every commit in order,
// starting from the baseline. This is what the verify CLI runs.
ReplayOutcome replay_session_archive(std::istream& in, std::shared_ptr<ProgramRegistry> registry);

// Watches the delegation program's event stream and verifies commits as they
// apply. Synchronous by default (verdict lands in the same pump); async mode
// queues them until flush, which is how settle-before-verify windows and
// fraud-after-the-fact get exercised.
class Verifier {
 public:
  Verifier(DelegationProgram* dlp, Provisioner* provisioner, bool async = false);

  void set_async(bool async) { async_ = async; }
  void pump();
  void flush_er(std::uint64_t er_id);
  void flush_all();

  std::size_t pending_count() const { return pending_.size(); }
  const std::vector<VerificationVerdict>& verdicts() const { return verdicts_; }
  std::size_t fraud_count() const;

 private:
  VerificationVerdict check_commit(std::uint64_t commit_id);
  void settle_verdict(const VerificationVerdict& verdict);

  struct ShadowState {
    bool primed = false;
    std::uint64_t last_commit = 0;
    std::map<Address, Bytes> state;
  };

  DelegationProgram* dlp_;
  Provisioner* provisioner_;
  bool async_;
  std::size_t event_cursor_ = 0;
  std::vector<std::uint64_t> pending_;
  std::map<std::uint64_t, ShadowState> shadows_;
  std::vector<VerificationVerdict> verdicts_;
};

}  // namespace ephemera
