// A single chain instance: account store, block production, pending queue and
// the policy hooks that differentiate the base layer from an ephemeral rollup.
// The same class backs both layers; rollups add a delegated-account filter and
// a fallback loader that clones accounts from the base layer on first touch.
#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ephemera/chain/account.h"
#include "ephemera/chain/block.h"
#include "ephemera/core/clock.h"
#include "ephemera/exec/program.h"
#include "ephemera/exec/transaction.h"

namespace ephemera {

struct ExecOptions;

enum class LayerKind { base, er };

inline constexpr std::uint64_t kBaseBlockTimeMs = 400;
inline constexpr std::uint64_t kBaseFee = 5000;
inline constexpr std::uint64_t kBlockhashWindow = 150;

struct ChainParams {
  LayerKind kind = LayerKind::base;
  std::string label = "base";
  std::uint64_t block_time_ms = kBaseBlockTimeMs;
  std::uint64_t required_fee = kBaseFee;
  std::uint64_t blockhash_window = kBlockhashWindow;
};

// Emitted once per block for every account written in that block.
struct AccountUpdate {
  Address address;
  Bytes encoding;
  std::string layer;
  std::uint64_t slot = 0;
  std::uint64_t timestamp_ms = 0;
};

class Chain {
 public:
  using BlockListener = std::function<void(Chain&, const Block&, const std::vector<AccountUpdate>&)>;
  using FallbackLoader = std::function<std::optional<Account>(const Address&)>;
  using CloneRecorder = std::function<void(const Account&)>;
  using DelegatedFilter = std::function<bool(const Address&)>;

  Chain(ChainParams params, std::shared_ptr<SimClock> clock,
        std::shared_ptr<ProgramRegistry> registry);

  LayerKind kind() const { return params_.kind; }
  const std::string& label() const { return params_.label; }
  std::uint64_t block_time_ms() const { return params_.block_time_ms; }
  std::uint64_t required_fee() const { return params_.required_fee; }
  std::uint64_t blockhash_window() const { return params_.blockhash_window; }
  std::uint64_t now_ms() const { return clock_->now_ms(); }
  const std::shared_ptr<SimClock>& clock() const { return clock_; }

  ProgramRegistry& registry() { return *registry_; }
  const std::shared_ptr<ProgramRegistry>& registry_ptr() const { return registry_; }

  // Accounts. find_account only consults the local store; resolve_account may
  // pull the account in through the fallback loader (rollup lazy cloning).
  const Account* find_account(const Address& address) const;
  const Account* resolve_account(const Address& address);
  void upsert_account(Account account);
  const std::map<Address, Account>& store() const { return store_; }
  std::uint64_t total_balance() const;

  // Registers a named routine and materialises its executable account.
  // Throws std::runtime_error("duplicate-program") when the name or the
  // derived address is already taken.
  Address register_program(const std::string& name, ProgramRoutine routine);
  // Resolves the executable account (cloning if needed) and looks up its routine.
  const ProgramRoutine* find_routine(const Address& program);

  // Blocks.
  const Block& tip() const { return blocks_.back(); }
  const std::vector<Block>& blocks() const { return blocks_; }
  Hash32 latest_blockhash() const { return blocks_.back().hash; }
  std::optional<std::uint64_t> slot_of(const Hash32& blockhash) const;
  // Valid iff the hash names a block within the last `blockhash_window` slots
  // of at_slot (default: current tip).
  bool is_blockhash_valid(const Hash32& blockhash,
                          std::optional<std::uint64_t> at_slot = std::nullopt) const;
  std::uint64_t executing_slot() const { return tip().slot + 1; }
  bool block_due() const { return now_ms() >= last_block_ms_ + params_.block_time_ms; }
  std::uint64_t next_block_at() const { return last_block_ms_ + params_.block_time_ms; }

  // Transaction flow.
  void submit(Transaction tx);
  std::size_t pending_count() const { return pending_.size(); }
  std::vector<Transaction> drain_pending();
  std::vector<TxResult> execute_now(std::span<const Transaction> txs, const ExecOptions& opts);
  std::vector<TxResult> execute_now(std::span<const Transaction> txs);
  // Results executed outside block production (rollup ticks) that belong in
  // the next block's result list.
  void absorb_results(const std::vector<TxResult>& results);
  const Block& produce_block();

  // Policy hooks.
  void set_dlp_program(const Address& address) { dlp_program_ = address; }
  const std::optional<Address>& dlp_program() const { return dlp_program_; }
  void set_delegated_filter(DelegatedFilter filter) { delegated_filter_ = std::move(filter); }
  void set_fallback_loader(FallbackLoader loader) { fallback_loader_ = std::move(loader); }
  void set_clone_recorder(CloneRecorder recorder) { clone_recorder_ = std::move(recorder); }
  void set_accept_any_blockhash(bool accept) { accept_any_blockhash_ = accept; }
  bool accept_any_blockhash() const { return accept_any_blockhash_; }
  // Reason a writable meta on `address` is rejected under this chain's rules,
  // nullopt when the write is allowed.
  std::optional<TxStatus> writable_rejection(const Address& address, const Address& program) const;

  void add_block_listener(BlockListener listener) { listeners_.push_back(std::move(listener)); }

  std::uint64_t fees_burned() const { return fees_burned_; }
  void note_fee_burned(std::uint64_t fee) { fees_burned_ += fee; }
  std::uint64_t txs_included() const { return txs_included_; }

 private:
  ChainParams params_;
  std::shared_ptr<SimClock> clock_;
  std::shared_ptr<ProgramRegistry> registry_;
  std::map<Address, Account> store_;
  std::vector<Block> blocks_;
  std::map<Hash32, std::uint64_t> slot_by_hash_;
  std::deque<Transaction> pending_;
  std::vector<std::pair<std::uint64_t, TxStatus>> absorbed_results_;
  std::map<Address, Bytes> block_writes_;
  std::vector<BlockListener> listeners_;
  std::optional<Address> dlp_program_;
  DelegatedFilter delegated_filter_;
  FallbackLoader fallback_loader_;
  CloneRecorder clone_recorder_;
  bool accept_any_blockhash_ = false;
  std::uint64_t last_block_ms_ = 0;
  std::uint64_t fees_burned_ = 0;
  std::uint64_t txs_included_ = 0;
};

}  // namespace ephemera
