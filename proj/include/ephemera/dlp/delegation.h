// Delegation program: the base-layer authority that locks accounts for an
// ephemeral rollup, applies its state commits optimistically, and settles or
// reverts them when the rollup closes.
//
// State transitions run through the registered routine when driven by
// transactions; the methods are also directly callable, which is what the
// router's force-settle path and the tests use.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ephemera/chain/chain.h"
#include "ephemera/core/clock.h"

namespace ephemera {

class ErRuntime;

// Escrow moved from the delegating payer into the rollup's treasury account;
// it pays the sequencer's commit fees and refunds on close.
inline constexpr std::uint64_t kSequencerFund = 50'000'000;
inline constexpr std::uint64_t kMinErBlockTimeMs = 10;
inline constexpr std::uint64_t kMaxErBlockTimeMs = 400;

struct ERConfig {
  std::uint64_t lifetime_ms = 60'000;
  std::uint64_t commit_frequency_ms = 2'000;
  std::uint64_t target_tps = 1'000;
  std::uint64_t block_time_ms = 50;
  bool gasless = true;
  std::uint64_t tick_interval_ms = 0;  // 0 disables ticking
  Address tick_program;
  Bytes tick_args;

  std::optional<std::string> validate() const;
  bool operator==(const ERConfig&) const = default;
};

Bytes encode_er_config(const ERConfig& config);
std::optional<ERConfig> decode_er_config(ByteReader& reader);

enum class DelegationStatus { active, committing, closed };
const char* to_string(DelegationStatus status);

struct DelegationRecord {
  Address account;
  Address owner_program;
  std::uint64_t er_id = 0;
  std::uint64_t delegated_at_ms = 0;
  ERConfig config;
  DelegationStatus status = DelegationStatus::active;
  std::optional<std::uint64_t> last_verified_commit;

  std::uint64_t lifetime_deadline() const { return delegated_at_ms + config.lifetime_ms; }
};

struct CommitRecord {
  std::uint64_t commit_id = 0;
  std::uint64_t er_id = 0;
  std::uint64_t base_slot = 0;  // filled when applied on the base layer
  std::map<Address, Bytes> account_states;  // claimed canonical encodings
  Hash32 log_segment_hash;
  bool verified = false;

  bool operator==(const CommitRecord&) const = default;
};

Bytes encode_commit_record(const CommitRecord& record);
std::optional<CommitRecord> decode_commit_record(std::span<const std::uint8_t> raw);

struct ProvisionRequested {
  std::uint64_t er_id = 0;
  Address owner_program;
  std::vector<Address> accounts;
  ERConfig config;
  std::uint64_t at_ms = 0;
  Address funder;
};

struct CommitApplied {
  std::uint64_t commit_id = 0;
  std::uint64_t er_id = 0;
  std::uint64_t base_slot = 0;
};

struct AccountUndelegated {
  Address account;
  std::uint64_t er_id = 0;
  std::uint64_t at_ms = 0;
};

struct ErClosed {
  std::uint64_t er_id = 0;
  std::uint64_t at_ms = 0;
  std::string reason;
};

struct FraudReverted {
  std::uint64_t commit_id = 0;
  std::uint64_t er_id = 0;
  Address first_mismatch;
};

using DlpEvent =
    std::variant<ProvisionRequested, CommitApplied, AccountUndelegated, ErClosed, FraudReverted>;

enum class DlpError {
  none,
  invalid_config,
  no_accounts,
  unknown_account,
  executable_account,
  not_owner,
  already_delegated,
  duplicate_er,
  treasury_underfunded,
  unknown_er,
  er_closed,
  foreign_account,
  malformed_commit,
  duplicate_commit,
  balance_inflation,
  not_delegated,
  lifetime_active,
  unknown_commit,
};

const char* to_string(DlpError error);

class DelegationProgram {
 public:
  explicit DelegationProgram(Chain* base) : base_(base) {}

  const Address& address() const { return address_; }
  void bind_address(const Address& address) { address_ = address; }
  Chain& base() { return *base_; }

  // Lifecycle operations. `now_ms` always comes from the chain clock.
  DlpError delegate_accounts(const Address& owner_program, const std::vector<Address>& accounts,
                             const ERConfig& config, std::uint64_t er_id, const Address& funder,
                             std::uint64_t now_ms);
  DlpError apply_commit(CommitRecord record, std::uint64_t base_slot);
  DlpError undelegate(const Address& caller, const Address& account, std::uint64_t now_ms);
  DlpError force_close(const Address& owner_program, std::uint64_t er_id, std::uint64_t now_ms);

  // Verification outcomes.
  void mark_verified(std::uint64_t commit_id);
  DlpError handle_fraud(std::uint64_t commit_id, const Address& first_mismatch,
                        std::uint64_t now_ms);

  // Queries.
  const DelegationRecord* record_for(const Address& account) const;
  std::optional<std::uint64_t> delegated_to(const Address& account) const;
  std::vector<Address> accounts_of(std::uint64_t er_id) const;
  const std::map<Address, DelegationRecord>& records() const { return records_; }
  const CommitRecord* find_commit(std::uint64_t commit_id) const;
  const std::vector<std::uint64_t>& commit_order() const { return commit_order_; }
  // Encodings fraud reverts to: the last verified commit, or the delegation
  // point if nothing verified yet.
  const std::map<Address, Bytes>* revert_baseline(std::uint64_t er_id) const;
  Address treasury_address(std::uint64_t er_id) const;
  bool er_known(std::uint64_t er_id) const { return ers_.contains(er_id); }
  bool er_open(std::uint64_t er_id) const;

  // Bumped on every delegation-table change; the router keys its cache on it.
  std::uint64_t version() const { return version_; }
  const std::vector<DlpEvent>& events() const { return events_; }

  // Wired by the provisioner so undelegate/force_close can settle inline.
  void set_runtime_lookup(std::function<ErRuntime*(std::uint64_t)> lookup) {
    runtime_lookup_ = std::move(lookup);
  }

 private:
  struct ErState {
    Address owner_program;
    Address funder;
    std::set<Address> accounts;
    bool open = true;
    std::map<Address, Bytes> revert_baseline;
  };

  void unlock_account(const Address& account, std::uint64_t er_id, std::uint64_t now_ms);
  void close_er(std::uint64_t er_id, std::uint64_t now_ms, const std::string& reason);
  ErRuntime* live_runtime(std::uint64_t er_id);
  void settle_inline(std::uint64_t er_id, std::uint64_t now_ms);

  Chain* base_;
  Address address_;
  std::map<Address, DelegationRecord> records_;
  std::map<std::uint64_t, ErState> ers_;
  std::map<std::uint64_t, CommitRecord> commits_;
  std::vector<std::uint64_t> commit_order_;
  std::vector<DlpEvent> events_;
  std::uint64_t version_ = 0;
  std::function<ErRuntime*(std::uint64_t)> runtime_lookup_;
};

// Instruction tags understood by the registered routine.
enum class DlpInstruction : std::uint8_t {
  delegate = 0,
  commit = 1,
  undelegate = 2,
  force_close = 3,
};

Address register_delegation_program(Chain& base, DelegationProgram* dlp);

// Transaction facades. Every built transaction lists the delegation program
// account as a writable meta, which serialises delegation-table changes in the
// batch scheduler.
Transaction make_delegate_tx(IdSource& ids, Chain& base, const Address& payer,
                             const Address& owner_program, const std::vector<Address>& accounts,
                             const ERConfig& config);
Transaction make_commit_tx(std::uint64_t tx_id, Chain& base, const CommitRecord& record);
Transaction make_undelegate_tx(IdSource& ids, Chain& base, const Address& payer,
                               const Address& caller, const Address& account);
Transaction make_force_close_tx(IdSource& ids, Chain& base, const Address& payer,
                                const Address& owner_program, std::uint64_t er_id,
                                const std::vector<Address>& accounts);

}  // namespace ephemera
