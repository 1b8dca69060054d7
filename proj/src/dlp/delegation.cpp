#include "ephemera/dlp/delegation.h"

#include <cassert>

#include "ephemera/chain/pda.h"
#include "ephemera/er/rollup.h"
#include "ephemera/exec/engine.h"

namespace ephemera {

namespace {

Address derive_treasury(const Address& dlp_address, std::uint64_t er_id) {
  std::vector<Bytes> seeds{to_bytes("treasury"), u64_le(er_id)};
  return derive_pda(dlp_address, seeds);
}

}  // namespace

std::optional<std::string> ERConfig::validate() const {
  if (block_time_ms < kMinErBlockTimeMs || block_time_ms > kMaxErBlockTimeMs)
    return "block-time-out-of-range";
  if (lifetime_ms == 0) return "zero-lifetime";
  if (commit_frequency_ms == 0) return "zero-commit-frequency";
  if (target_tps == 0) return "zero-target-tps";
  if (tick_interval_ms > 0 && tick_program == Address{}) return "tick-program-missing";
  return std::nullopt;
}

Bytes encode_er_config(const ERConfig& config) {
  ByteWriter w;
  w.put_u64(config.lifetime_ms);
  w.put_u64(config.commit_frequency_ms);
  w.put_u64(config.target_tps);
  w.put_u64(config.block_time_ms);
  w.put_u8(config.gasless ? 1 : 0);
  w.put_u64(config.tick_interval_ms);
  w.put_address(config.tick_program);
  w.put_u16(static_cast<std::uint16_t>(config.tick_args.size()));
  w.put_bytes(config.tick_args);
  return w.take();
}

std::optional<ERConfig> decode_er_config(ByteReader& reader) {
  ERConfig config;
  config.lifetime_ms = reader.get_u64();
  config.commit_frequency_ms = reader.get_u64();
  config.target_tps = reader.get_u64();
  config.block_time_ms = reader.get_u64();
  config.gasless = reader.get_u8() != 0;
  config.tick_interval_ms = reader.get_u64();
  config.tick_program = reader.get_address();
  std::uint16_t args_len = reader.get_u16();
  config.tick_args = reader.get_bytes(args_len);
  if (!reader.ok()) return std::nullopt;
  return config;
}

const char* to_string(DelegationStatus status) {
  switch (status) {
    case DelegationStatus::active: return "active";
    case DelegationStatus::committing: return "committing";
    case DelegationStatus::closed: return "closed";
  }
  return "unknown";
}

const char* to_string(DlpError error) {
  switch (error) {
    case DlpError::none: return "none";
    case DlpError::invalid_config: return "invalid-config";
    case DlpError::no_accounts: return "no-accounts";
    case DlpError::unknown_account: return "unknown-account";
    case DlpError::executable_account: return "executable-account";
    case DlpError::not_owner: return "not-owner";
    case DlpError::already_delegated: return "already-delegated";
    case DlpError::duplicate_er: return "duplicate-er";
    case DlpError::treasury_underfunded: return "treasury-underfunded";
    case DlpError::unknown_er: return "unknown-er";
    case DlpError::er_closed: return "er-closed";
    case DlpError::foreign_account: return "foreign-account";
    case DlpError::malformed_commit: return "malformed-commit";
    case DlpError::duplicate_commit: return "duplicate-commit";
    case DlpError::balance_inflation: return "balance-inflation";
    case DlpError::not_delegated: return "not-delegated";
    case DlpError::lifetime_active: return "lifetime-not-expired";
    case DlpError::unknown_commit: return "unknown-commit";
  }
  return "unknown";
}

Bytes encode_commit_record(const CommitRecord& record) {
  ByteWriter w;
  w.put_u64(record.commit_id);
  w.put_u64(record.er_id);
  w.put_u64(record.base_slot);
  w.put_u16(static_cast<std::uint16_t>(record.account_states.size()));
  for (const auto& [address, encoding] : record.account_states) {
    w.put_address(address);
    w.put_u32(static_cast<std::uint32_t>(encoding.size()));
    w.put_bytes(encoding);
  }
  w.put_hash(record.log_segment_hash);
  w.put_u8(record.verified ? 1 : 0);
  return w.take();
}

std::optional<CommitRecord> decode_commit_record(std::span<const std::uint8_t> raw) {
  ByteReader r(raw);
  CommitRecord record;
  record.commit_id = r.get_u64();
  record.er_id = r.get_u64();
  record.base_slot = r.get_u64();
  std::uint16_t count = r.get_u16();
  for (std::uint16_t i = 0; i < count && r.ok(); ++i) {
    Address address = r.get_address();
    std::uint32_t len = r.get_u32();
    record.account_states[address] = r.get_bytes(len);
  }
  record.log_segment_hash = r.get_hash();
  record.verified = r.get_u8() != 0;
  if (!r.ok() || !r.at_end()) return std::nullopt;
  return record;
}

DlpError DelegationProgram::delegate_accounts(const Address& owner_program,
                                              const std::vector<Address>& accounts,
                                              const ERConfig& config, std::uint64_t er_id,
                                              const Address& funder, std::uint64_t now_ms) {
  if (config.validate()) return DlpError::invalid_config;
  if (accounts.empty()) return DlpError::no_accounts;
  if (ers_.contains(er_id)) return DlpError::duplicate_er;

  std::set<Address> unique;
  for (const Address& address : accounts) {
    if (!unique.insert(address).second) return DlpError::already_delegated;
    const Account* account = base_->find_account(address);
    if (!account) return DlpError::unknown_account;
    if (account->executable) return DlpError::executable_account;
    if (account->owner != owner_program) return DlpError::not_owner;
    if (account->delegated_to) return DlpError::already_delegated;
  }
  // The funder covers the escrow and still owes the transaction fee at commit.
  const Account* funder_account = base_->find_account(funder);
  if (!funder_account || funder_account->balance < kSequencerFund + base_->required_fee())
    return DlpError::treasury_underfunded;

  ErState state;
  state.owner_program = owner_program;
  state.funder = funder;
  for (const Address& address : accounts) {
    Account locked = *base_->find_account(address);
    locked.delegated_to = er_id;
    state.revert_baseline[address] = canonical_account_encoding(locked);
    base_->upsert_account(locked);
    state.accounts.insert(address);

    DelegationRecord record;
    record.account = address;
    record.owner_program = owner_program;
    record.er_id = er_id;
    record.delegated_at_ms = now_ms;
    record.config = config;
    records_[address] = record;
  }

  Account funder_after = *base_->find_account(funder);
  funder_after.balance -= kSequencerFund;
  base_->upsert_account(funder_after);
  Account treasury;
  treasury.address = derive_treasury(address_, er_id);
  treasury.owner = address_;
  treasury.balance = kSequencerFund;
  base_->upsert_account(treasury);

  ers_[er_id] = std::move(state);
  events_.push_back(
      ProvisionRequested{er_id, owner_program, accounts, config, now_ms, funder});
  ++version_;
  return DlpError::none;
}

DlpError DelegationProgram::apply_commit(CommitRecord record, std::uint64_t base_slot) {
  auto er_it = ers_.find(record.er_id);
  if (er_it == ers_.end()) return DlpError::unknown_er;
  if (!er_it->second.open) return DlpError::er_closed;
  if (commits_.contains(record.commit_id)) return DlpError::duplicate_commit;

  std::map<Address, Account> decoded;
  for (const auto& [address, encoding] : record.account_states) {
    auto rec = records_.find(address);
    if (rec == records_.end() || rec->second.er_id != record.er_id ||
        rec->second.status == DelegationStatus::closed)
      return DlpError::foreign_account;
    auto account = decode_account_encoding(encoding);
    if (!account || account->address != address) return DlpError::malformed_commit;
    decoded[address] = std::move(*account);
  }

  unsigned __int128 before = 0;
  unsigned __int128 after = 0;
  for (const auto& [address, account] : decoded) {
    before += base_->find_account(address)->balance;
    after += account.balance;
  }
  if (after > before) return DlpError::balance_inflation;

  for (auto& [address, account] : decoded) {
    account.delegated_to = record.er_id;
    base_->upsert_account(std::move(account));
  }
  record.base_slot = base_slot;
  std::uint64_t commit_id = record.commit_id;
  std::uint64_t er_id = record.er_id;
  commits_[commit_id] = std::move(record);
  commit_order_.push_back(commit_id);
  events_.push_back(CommitApplied{commit_id, er_id, base_slot});
  return DlpError::none;
}

void DelegationProgram::mark_verified(std::uint64_t commit_id) {
  auto it = commits_.find(commit_id);
  if (it == commits_.end()) return;
  it->second.verified = true;
  auto er_it = ers_.find(it->second.er_id);
  for (const auto& [address, encoding] : it->second.account_states) {
    if (er_it != ers_.end()) er_it->second.revert_baseline[address] = encoding;
    auto rec = records_.find(address);
    if (rec != records_.end() && rec->second.er_id == it->second.er_id &&
        rec->second.status != DelegationStatus::closed)
      rec->second.last_verified_commit = commit_id;
  }
}

DlpError DelegationProgram::handle_fraud(std::uint64_t commit_id, const Address& first_mismatch,
                                         std::uint64_t now_ms) {
  auto it = commits_.find(commit_id);
  if (it == commits_.end()) return DlpError::unknown_commit;
  std::uint64_t er_id = it->second.er_id;
  auto er_it = ers_.find(er_id);
  if (er_it == ers_.end()) return DlpError::unknown_er;
  if (!er_it->second.open) return DlpError::er_closed;

  for (const auto& [address, encoding] : er_it->second.revert_baseline) {
    auto rec = records_.find(address);
    if (rec == records_.end() || rec->second.er_id != er_id ||
        rec->second.status == DelegationStatus::closed)
      continue;
    Account restored = *decode_account_encoding(encoding);
    restored.delegated_to.reset();
    base_->upsert_account(std::move(restored));
    rec->second.status = DelegationStatus::closed;
    events_.push_back(AccountUndelegated{address, er_id, now_ms});
  }
  er_it->second.accounts.clear();
  events_.push_back(FraudReverted{commit_id, er_id, first_mismatch});
  close_er(er_id, now_ms, "fraud");
  ++version_;
  return DlpError::none;
}

DlpError DelegationProgram::undelegate(const Address& caller, const Address& account,
                                       std::uint64_t now_ms) {
  auto rec_it = records_.find(account);
  if (rec_it == records_.end() || rec_it->second.status == DelegationStatus::closed)
    return DlpError::not_delegated;
  DelegationRecord& record = rec_it->second;
  bool expired = now_ms >= record.lifetime_deadline();
  if (caller != record.owner_program && !expired) return DlpError::lifetime_active;

  std::uint64_t er_id = record.er_id;
  settle_inline(er_id, now_ms);
  unlock_account(account, er_id, now_ms);

  auto& state = ers_.at(er_id);
  state.accounts.erase(account);
  if (ErRuntime* runtime = live_runtime(er_id)) runtime->release_account(account);
  if (state.accounts.empty()) close_er(er_id, now_ms, "undelegated");
  return DlpError::none;
}

DlpError DelegationProgram::force_close(const Address& owner_program, std::uint64_t er_id,
                                        std::uint64_t now_ms) {
  auto er_it = ers_.find(er_id);
  if (er_it == ers_.end()) return DlpError::unknown_er;
  if (!er_it->second.open) return DlpError::er_closed;
  if (er_it->second.owner_program != owner_program) return DlpError::not_owner;

  settle_inline(er_id, now_ms);
  std::vector<Address> accounts(er_it->second.accounts.begin(), er_it->second.accounts.end());
  for (const Address& address : accounts) unlock_account(address, er_id, now_ms);
  er_it->second.accounts.clear();
  close_er(er_id, now_ms, "force-closed");
  return DlpError::none;
}

const DelegationRecord* DelegationProgram::record_for(const Address& account) const {
  auto it = records_.find(account);
  return it == records_.end() ? nullptr : &it->second;
}

std::optional<std::uint64_t> DelegationProgram::delegated_to(const Address& account) const {
  const DelegationRecord* record = record_for(account);
  if (!record || record->status == DelegationStatus::closed) return std::nullopt;
  return record->er_id;
}

std::vector<Address> DelegationProgram::accounts_of(std::uint64_t er_id) const {
  auto it = ers_.find(er_id);
  if (it == ers_.end()) return {};
  return {it->second.accounts.begin(), it->second.accounts.end()};
}

const CommitRecord* DelegationProgram::find_commit(std::uint64_t commit_id) const {
  auto it = commits_.find(commit_id);
  return it == commits_.end() ? nullptr : &it->second;
}

const std::map<Address, Bytes>* DelegationProgram::revert_baseline(std::uint64_t er_id) const {
  auto it = ers_.find(er_id);
  return it == ers_.end() ? nullptr : &it->second.revert_baseline;
}

Address DelegationProgram::treasury_address(std::uint64_t er_id) const {
  return derive_treasury(address_, er_id);
}

bool DelegationProgram::er_open(std::uint64_t er_id) const {
  auto it = ers_.find(er_id);
  return it != ers_.end() && it->second.open;
}

void DelegationProgram::unlock_account(const Address& account, std::uint64_t er_id,
                                       std::uint64_t now_ms) {
  if (const Account* current = base_->find_account(account)) {
    Account unlocked = *current;
    unlocked.delegated_to.reset();
    base_->upsert_account(std::move(unlocked));
  }
  auto rec = records_.find(account);
  if (rec != records_.end()) rec->second.status = DelegationStatus::closed;
  events_.push_back(AccountUndelegated{account, er_id, now_ms});
  ++version_;
}

void DelegationProgram::close_er(std::uint64_t er_id, std::uint64_t now_ms,
                                 const std::string& reason) {
  auto& state = ers_.at(er_id);
  if (!state.open) return;
  state.open = false;
  if (ErRuntime* runtime = live_runtime(er_id)) runtime->kill(reason);

  Address treasury = derive_treasury(address_, er_id);
  if (const Account* t = base_->find_account(treasury); t && t->balance > 0) {
    if (const Account* funder = base_->find_account(state.funder)) {
      Account refunded = *funder;
      refunded.balance += t->balance;
      Account drained = *t;
      drained.balance = 0;
      base_->upsert_account(std::move(refunded));
      base_->upsert_account(std::move(drained));
    }
  }
  events_.push_back(ErClosed{er_id, now_ms, reason});
  ++version_;
}

ErRuntime* DelegationProgram::live_runtime(std::uint64_t er_id) {
  if (!runtime_lookup_) return nullptr;
  ErRuntime* runtime = runtime_lookup_(er_id);
  return runtime && runtime->alive() ? runtime : nullptr;
}

void DelegationProgram::settle_inline(std::uint64_t er_id, std::uint64_t now_ms) {
  ErRuntime* runtime = live_runtime(er_id);
  if (!runtime) return;
  CommitRecord record = runtime->settle_now();
  DlpError err = apply_commit(std::move(record), base_->executing_slot());
  assert(err == DlpError::none);
  (void)err;
  (void)now_ms;
}

Address register_delegation_program(Chain& base, DelegationProgram* dlp) {
  Address address = base.register_program("dlp", [dlp](ProgramContext& ctx) {
    ByteReader r(ctx.instruction());
    auto tag = static_cast<DlpInstruction>(r.get_u8());
    DlpError err = DlpError::none;
    switch (tag) {
      case DlpInstruction::delegate: {
        Address owner = r.get_address();
        std::uint8_t count = r.get_u8();
        std::vector<Address> accounts;
        for (std::uint8_t i = 0; i < count && r.ok(); ++i) accounts.push_back(r.get_address());
        auto config = decode_er_config(r);
        if (!r.ok() || !r.at_end() || !config) ctx.fail("malformed-delegate");
        err = dlp->delegate_accounts(owner, accounts, *config, ctx.tx().id, ctx.tx().fee_payer,
                                     ctx.now_ms());
        break;
      }
      case DlpInstruction::commit: {
        auto record = decode_commit_record(r.get_bytes(r.remaining()));
        if (!record) ctx.fail("malformed-commit");
        err = dlp->apply_commit(std::move(*record), ctx.slot());
        break;
      }
      case DlpInstruction::undelegate: {
        Address caller = r.get_address();
        Address account = r.get_address();
        if (!r.ok() || !r.at_end()) ctx.fail("malformed-undelegate");
        err = dlp->undelegate(caller, account, ctx.now_ms());
        break;
      }
      case DlpInstruction::force_close: {
        Address owner = r.get_address();
        std::uint64_t er_id = r.get_u64();
        if (!r.ok() || !r.at_end()) ctx.fail("malformed-force-close");
        err = dlp->force_close(owner, er_id, ctx.now_ms());
        break;
      }
      default:
        ctx.fail("unknown-instruction");
    }
    if (err != DlpError::none) ctx.fail(to_string(err));
  });
  dlp->bind_address(address);
  base.set_dlp_program(address);
  return address;
}

namespace {

std::vector<AccountMeta> with_lock_metas(Chain& base, std::vector<AccountMeta> metas) {
  metas.insert(metas.begin() + 1, AccountMeta{*base.dlp_program(), true});
  return metas;
}

}  // namespace

Transaction make_delegate_tx(IdSource& ids, Chain& base, const Address& payer,
                             const Address& owner_program, const std::vector<Address>& accounts,
                             const ERConfig& config) {
  Transaction tx;
  tx.id = ids.fresh();
  tx.fee_payer = payer;
  tx.recent_blockhash = base.latest_blockhash();
  tx.program_id = *base.dlp_program();
  std::vector<AccountMeta> metas{{payer, true}};
  metas.push_back(AccountMeta{derive_treasury(*base.dlp_program(), tx.id), true});
  for (const Address& account : accounts) metas.push_back(AccountMeta{account, true});
  tx.metas = with_lock_metas(base, std::move(metas));
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(DlpInstruction::delegate));
  w.put_address(owner_program);
  w.put_u8(static_cast<std::uint8_t>(accounts.size()));
  for (const Address& account : accounts) w.put_address(account);
  w.put_bytes(encode_er_config(config));
  tx.data = w.take();
  tx.fee = base.required_fee();
  return tx;
}

Transaction make_commit_tx(std::uint64_t tx_id, Chain& base, const CommitRecord& record) {
  Transaction tx;
  tx.id = tx_id;
  tx.fee_payer = derive_treasury(*base.dlp_program(), record.er_id);
  tx.recent_blockhash = base.latest_blockhash();
  tx.program_id = *base.dlp_program();
  std::vector<AccountMeta> metas{{tx.fee_payer, true}};
  for (const auto& [address, encoding] : record.account_states)
    metas.push_back(AccountMeta{address, true});
  tx.metas = with_lock_metas(base, std::move(metas));
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(DlpInstruction::commit));
  w.put_bytes(encode_commit_record(record));
  tx.data = w.take();
  tx.fee = base.required_fee();
  return tx;
}

Transaction make_undelegate_tx(IdSource& ids, Chain& base, const Address& payer,
                               const Address& caller, const Address& account) {
  Transaction tx;
  tx.id = ids.fresh();
  tx.fee_payer = payer;
  tx.recent_blockhash = base.latest_blockhash();
  tx.program_id = *base.dlp_program();
  tx.metas = with_lock_metas(base, {{payer, true}, {account, true}});
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(DlpInstruction::undelegate));
  w.put_address(caller);
  w.put_address(account);
  tx.data = w.take();
  tx.fee = base.required_fee();
  return tx;
}

Transaction make_force_close_tx(IdSource& ids, Chain& base, const Address& payer,
                                const Address& owner_program, std::uint64_t er_id,
                                const std::vector<Address>& accounts) {
  Transaction tx;
  tx.id = ids.fresh();
  tx.fee_payer = payer;
  tx.recent_blockhash = base.latest_blockhash();
  tx.program_id = *base.dlp_program();
  std::vector<AccountMeta> metas{{payer, true}};
  for (const Address& account : accounts) metas.push_back(AccountMeta{account, true});
  tx.metas = with_lock_metas(base, std::move(metas));
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(DlpInstruction::force_close));
  w.put_address(owner_program);
  w.put_u64(er_id);
  tx.data = w.take();
  tx.fee = base.required_fee();
  return tx;
}

}  // namespace ephemera
