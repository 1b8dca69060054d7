#include "ephemera/chain/chain.h"

#include <stdexcept>

#include "ephemera/chain/pda.h"
#include "ephemera/exec/engine.h"

namespace ephemera {

Chain::Chain(ChainParams params, std::shared_ptr<SimClock> clock,
             std::shared_ptr<ProgramRegistry> registry)
    : params_(std::move(params)), clock_(std::move(clock)), registry_(std::move(registry)) {
  Block genesis;
  genesis.slot = 0;
  genesis.parent_hash = Hash32{};
  genesis.timestamp_ms = clock_->now_ms();
  genesis.hash = compute_block_hash(genesis.parent_hash, 0, {});
  blocks_.push_back(genesis);
  slot_by_hash_[genesis.hash] = 0;
  last_block_ms_ = clock_->now_ms();
}

const Account* Chain::find_account(const Address& address) const {
  auto it = store_.find(address);
  return it == store_.end() ? nullptr : &it->second;
}

const Account* Chain::resolve_account(const Address& address) {
  if (const Account* local = find_account(address)) return local;
  if (!fallback_loader_) return nullptr;
  auto pulled = fallback_loader_(address);
  if (!pulled) return nullptr;
  pulled->address = address;
  pulled->delegated_to.reset();
  if (clone_recorder_) clone_recorder_(*pulled);
  auto [it, inserted] = store_.emplace(address, std::move(*pulled));
  block_writes_[address] = canonical_account_encoding(it->second);
  return &it->second;
}

void Chain::upsert_account(Account account) {
  block_writes_[account.address] = canonical_account_encoding(account);
  store_[account.address] = std::move(account);
}

std::uint64_t Chain::total_balance() const {
  std::uint64_t total = 0;
  for (const auto& [addr, account] : store_) total += account.balance;
  return total;
}

Address Chain::register_program(const std::string& name, ProgramRoutine routine) {
  Address address = registry_->add(name, std::move(routine));
  Account account;
  account.address = address;
  account.owner = address;
  account.executable = true;
  account.data = to_bytes(name);
  upsert_account(std::move(account));
  return address;
}

const ProgramRoutine* Chain::find_routine(const Address& program) {
  const Account* account = resolve_account(program);
  if (!account || !account->executable) return nullptr;
  const ProgramRegistry::Entry* entry = registry_->find(program);
  return entry ? &entry->routine : nullptr;
}

std::optional<std::uint64_t> Chain::slot_of(const Hash32& blockhash) const {
  auto it = slot_by_hash_.find(blockhash);
  if (it == slot_by_hash_.end()) return std::nullopt;
  return it->second;
}

bool Chain::is_blockhash_valid(const Hash32& blockhash,
                               std::optional<std::uint64_t> at_slot) const {
  auto slot = slot_of(blockhash);
  if (!slot) return false;
  std::uint64_t reference = at_slot.value_or(tip().slot);
  return reference >= *slot && reference - *slot < params_.blockhash_window;
}

void Chain::submit(Transaction tx) { pending_.push_back(std::move(tx)); }

std::vector<Transaction> Chain::drain_pending() {
  std::vector<Transaction> out(pending_.begin(), pending_.end());
  pending_.clear();
  return out;
}

std::vector<TxResult> Chain::execute_now(std::span<const Transaction> txs,
                                         const ExecOptions& opts) {
  ExecOptions effective = opts;
  if (accept_any_blockhash_) effective.accept_any_blockhash = true;
  auto results = execute_transactions(txs, *this, effective);
  txs_included_ += results.size();
  return results;
}

std::vector<TxResult> Chain::execute_now(std::span<const Transaction> txs) {
  return execute_now(txs, ExecOptions{});
}

void Chain::absorb_results(const std::vector<TxResult>& results) {
  for (const auto& r : results) absorbed_results_.emplace_back(r.id, r.status);
}

const Block& Chain::produce_block() {
  auto txs = drain_pending();
  auto results = execute_now(txs);

  Block block;
  block.slot = tip().slot + 1;
  block.parent_hash = tip().hash;
  block.timestamp_ms = clock_->now_ms();
  block.transaction_results = std::move(absorbed_results_);
  absorbed_results_.clear();
  for (const auto& r : results) block.transaction_results.emplace_back(r.id, r.status);
  block.hash = compute_block_hash(block.parent_hash, block.slot, block.transaction_results);

  blocks_.push_back(std::move(block));
  slot_by_hash_[blocks_.back().hash] = blocks_.back().slot;
  last_block_ms_ = clock_->now_ms();

  std::vector<AccountUpdate> updates;
  updates.reserve(block_writes_.size());
  for (auto& [address, encoding] : block_writes_) {
    AccountUpdate u;
    u.address = address;
    u.encoding = std::move(encoding);
    u.layer = params_.label;
    u.slot = blocks_.back().slot;
    u.timestamp_ms = blocks_.back().timestamp_ms;
    updates.push_back(std::move(u));
  }
  block_writes_.clear();
  for (auto& listener : listeners_) listener(*this, blocks_.back(), updates);
  return blocks_.back();
}

std::optional<TxStatus> Chain::writable_rejection(const Address& address,
                                                  const Address& program) const {
  if (params_.kind == LayerKind::base) {
    const Account* account = find_account(address);
    if (account && account->delegated_to && (!dlp_program_ || program != *dlp_program_))
      return TxStatus::writes_delegated_account;
    return std::nullopt;
  }
  if (!delegated_filter_ || !delegated_filter_(address)) return TxStatus::writes_undelegated;
  return std::nullopt;
}

Address ProgramRegistry::add(const std::string& name, ProgramRoutine routine) {
  Address address = program_address(name);
  if (by_name_.contains(name) || entries_.contains(address))
    throw std::runtime_error("duplicate-program");
  entries_[address] = Entry{name, std::move(routine)};
  by_name_[name] = address;
  return address;
}

const ProgramRegistry::Entry* ProgramRegistry::find(const Address& address) const {
  auto it = entries_.find(address);
  return it == entries_.end() ? nullptr : &it->second;
}

const Address* ProgramRegistry::find_by_name(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &it->second;
}

}  // namespace ephemera
