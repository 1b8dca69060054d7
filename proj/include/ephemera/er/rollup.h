// Ephemeral rollup runtime: a short-lived chain instance with its own block
// cadence that executes transactions over delegated accounts the moment they
// arrive, logs everything for later re-execution, and periodically commits
// claimed state back to the base layer.
#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <set>

#include "ephemera/chain/chain.h"
#include "ephemera/dlp/delegation.h"

namespace ephemera {

struct LoggedTx {
  Transaction tx;
  TxStatus status = TxStatus::success;
  bool fee_exempt = false;  // synthesized ticks; replay must mirror it
  Hash32 pre_state;
  Hash32 post_state;
};

struct LogSegment {
  std::uint64_t start_commit = 0;  // id of the previous commit, 0 at session start
  // Accounts pulled in from the base layer during this segment, as encoded at
  // clone time. Replays need them because cloning is lazy and never refreshed.
  std::map<Address, Bytes> clones;
  std::vector<LoggedTx> txs;
  // Set when the segment closes:
  std::uint64_t end_commit = 0;
  Hash32 segment_hash;
  bool closed = false;
};

// sha256 over each logged transaction's wire bytes, status, fee exemption and
// state digests, in log order.
Hash32 compute_segment_hash(const LogSegment& segment);

struct TransactionLog {
  std::map<Address, Bytes> baseline;  // delegated accounts as provisioned
  std::vector<LogSegment> segments;
};

struct FraudSpec {
  std::optional<Address> account;         // default: first delegated account
  std::optional<std::size_t> byte_index;  // default: last byte of the encoding
  std::uint8_t xor_mask = 0x01;
};

class ErRuntime {
 public:
  ErRuntime(const ProvisionRequested& request, Chain* base, DelegationProgram* dlp,
            std::shared_ptr<SimClock> clock, IdSource* ids);

  std::uint64_t er_id() const { return er_id_; }
  const ERConfig& config() const { return config_; }
  bool alive() const { return alive_; }
  const std::string& close_reason() const { return close_reason_; }
  Chain& chain() { return chain_; }
  const Chain& chain() const { return chain_; }
  const std::set<Address>& delegated() const { return delegated_; }
  std::uint64_t created_at_ms() const { return created_at_ms_; }
  std::uint64_t lifetime_deadline() const { return created_at_ms_ + config_.lifetime_ms; }
  const TransactionLog& log() const { return log_; }
  const std::vector<CommitRecord>& commit_history() const { return commit_history_; }
  std::uint64_t ticks_fired() const { return ticks_fired_; }

  // Immediate execution with logging; results also land in the next block.
  std::vector<TxResult> er_execute(const std::vector<Transaction>& txs, bool fee_exempt = false);
  void submit(Transaction tx) { chain_.submit(std::move(tx)); }

  unsigned fire_due_ticks();
  const Block* produce_block_if_due();
  bool commit_due() const;
  // Drains pending work, closes the log segment and submits a commit
  // transaction to the base layer, paid by the rollup's treasury.
  std::optional<Transaction> maybe_commit();
  // Inline settlement for undelegation paths: closes the segment and returns
  // the commit record without going through a base transaction.
  CommitRecord settle_now();
  void request_settle() { settle_requested_ = true; }

  void release_account(const Address& account);
  void kill(const std::string& reason);
  // Lifetime expiry: final commit transaction, then the runtime stops.
  std::optional<Transaction> terminate();

  void inject_fraud(const FraudSpec& spec) { fraud_.push_back(spec); }

  // Earliest future time at which this runtime has work, while alive.
  std::optional<std::uint64_t> next_event_at() const;
  // Runner entry point: expiry, due ticks, due block, due commit, in that order.
  void pump();

 private:
  CommitRecord build_commit();
  void open_segment(std::uint64_t start_commit);
  void log_clone(const Account& account);

  std::uint64_t er_id_ = 0;
  ERConfig config_;
  Chain* base_;
  DelegationProgram* dlp_;
  IdSource* ids_;
  Chain chain_;
  std::set<Address> delegated_;
  TransactionLog log_;
  std::map<Address, Bytes> clone_cache_;
  std::vector<CommitRecord> commit_history_;
  std::vector<FraudSpec> fraud_;
  std::uint64_t created_at_ms_ = 0;
  std::uint64_t last_commit_ms_ = 0;
  std::uint64_t next_tick_at_ = 0;
  std::uint64_t commit_seq_ = 0;
  std::uint64_t ticks_fired_ = 0;
  bool settle_requested_ = false;
  bool alive_ = true;
  std::string close_reason_;
};

// Consumes provisioning requests from the delegation event stream and owns the
// runtimes. Terminated runtimes stay around so their logs remain readable.
class Provisioner {
 public:
  Provisioner(Chain* base, DelegationProgram* dlp, std::shared_ptr<SimClock> clock,
              IdSource* ids);

  void pump();  // provisions every new request
  ErRuntime* find(std::uint64_t er_id);
  const ErRuntime* find(std::uint64_t er_id) const;
  std::vector<ErRuntime*> all();
  std::vector<ErRuntime*> alive();
  std::size_t provisioned_count() const { return runtimes_.size(); }

 private:
  Chain* base_;
  DelegationProgram* dlp_;
  std::shared_ptr<SimClock> clock_;
  IdSource* ids_;
  std::map<std::uint64_t, std::unique_ptr<ErRuntime>> runtimes_;
  std::size_t event_cursor_ = 0;
};

}  // namespace ephemera
