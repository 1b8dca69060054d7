#include "ephemera/exec/engine.h"

#include <algorithm>
#include <exception>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <thread>

#include "ephemera/chain/chain.h"
#include "ephemera/core/sha256.h"

namespace ephemera {

namespace {

struct StagedAccount {
  Account account;
  bool existed = false;
  bool present = false;  // exists after the transaction (existed or created)
  bool touched = false;
  bool fee_debited = false;  // engine fee debit, not a routine write
};

struct ValidationOutcome {
  TxStatus status = TxStatus::success;
  std::string detail;
  const ProgramRoutine* routine = nullptr;
};

std::string short_hex(const Address& address) { return address.hex().substr(0, 16); }

ValidationOutcome validate_full(const Transaction& tx, Chain& chain, const ExecOptions& opts) {
  if (tx.metas.empty() || tx.metas.size() > kMaxTxAccounts)
    return {TxStatus::invalid_transaction, "meta-count"};
  std::set<Address> seen;
  for (const auto& meta : tx.metas)
    if (!seen.insert(meta.address).second)
      return {TxStatus::invalid_transaction, "duplicate-meta:" + short_hex(meta.address)};
  bool payer_ok = false;
  for (const auto& meta : tx.metas)
    if (meta.address == tx.fee_payer && meta.writable) payer_ok = true;
  if (!payer_ok) return {TxStatus::invalid_transaction, "fee-payer-not-writable-meta"};

  if (!opts.accept_any_blockhash && !chain.is_blockhash_valid(tx.recent_blockhash))
    return {TxStatus::expired_blockhash, "blockhash-outside-window"};

  const ProgramRoutine* routine = chain.find_routine(tx.program_id);
  if (!routine) return {TxStatus::unknown_program, short_hex(tx.program_id)};

  for (const auto& meta : tx.metas) {
    const Account* account = chain.resolve_account(meta.address);
    if (!account && !meta.writable)
      return {TxStatus::unknown_account, short_hex(meta.address)};
  }

  std::uint64_t required = opts.fee_exempt ? 0 : chain.required_fee();
  if (tx.fee < required) return {TxStatus::insufficient_fee, "fee-below-minimum"};
  if (tx.fee > 0) {
    const Account* payer = chain.find_account(tx.fee_payer);
    if (!payer) return {TxStatus::insufficient_fee, "fee-payer-missing"};
    if (payer->balance < tx.fee) return {TxStatus::insufficient_fee, "fee-payer-balance"};
  }

  for (const auto& meta : tx.metas) {
    if (!meta.writable) continue;
    if (auto rejection = chain.writable_rejection(meta.address, tx.program_id))
      return {*rejection, short_hex(meta.address)};
  }
  return {TxStatus::success, "", routine};
}

}  // namespace

// Holds one transaction's staged writable copies between validation and
// commit. Routines only ever touch the stage; the store changes in commit().
class ExecutionFrame {
 public:
  ExecutionFrame(const Transaction& tx, Chain& chain)
      : tx_(tx), chain_(chain), context_(this) {}

  void prepare() {
    staged_.resize(tx_.metas.size());
    initial_.resize(tx_.metas.size());
    readable_.resize(tx_.metas.size(), nullptr);
    handles_.resize(tx_.metas.size());
    for (std::size_t i = 0; i < tx_.metas.size(); ++i) {
      handles_[i].frame_ = this;
      handles_[i].meta_index_ = i;
      const Account* current = chain_.find_account(tx_.metas[i].address);
      if (!tx_.metas[i].writable) {
        readable_[i] = current;
        continue;
      }
      StagedAccount stage;
      if (current) {
        stage.account = *current;
        stage.existed = true;
        stage.present = true;
      } else {
        stage.account.address = tx_.metas[i].address;
      }
      staged_[i] = stage;
      initial_[i] = stage;
    }
    pre_hash_ = writable_digest(initial_);
    debit_fee();
  }

  TxResult run(const ProgramRoutine& routine) {
    TxResult result{tx_.id, TxStatus::success, ""};
    try {
      routine(context_);
      if (!balances_conserved())
        throw RoutineError{TxStatus::balance_violation, "balance-not-conserved"};
    } catch (const RoutineError& err) {
      result.status = err.status;
      result.detail = err.detail;
      rollback();
    } catch (const std::exception& err) {
      result.status = TxStatus::routine_failed;
      result.detail = std::string("routine-exception:") + err.what();
      rollback();
    }
    post_hash_ = writable_digest(staged_);
    status_ = result.status;
    return result;
  }

  void commit() {
    for (auto& stage : staged_) {
      if (!stage || !stage->touched || !stage->present) continue;
      chain_.upsert_account(stage->account);
    }
    // A payer the routine never touched commits its fee as a delta against the
    // live store. Routines with store-level side effects (the delegation
    // program moving escrow) would otherwise be overwritten by the stale
    // staged snapshot.
    for (std::size_t i = 0; i < staged_.size(); ++i) {
      auto& stage = staged_[i];
      if (!stage || !stage->fee_debited || stage->touched) continue;
      if (const Account* current = chain_.find_account(tx_.metas[i].address)) {
        Account updated = *current;
        updated.balance -= std::min(updated.balance, tx_.fee);
        chain_.upsert_account(std::move(updated));
      }
    }
    if (tx_.fee > 0) chain_.note_fee_burned(tx_.fee);
  }

  const Hash32& pre_hash() const { return pre_hash_; }
  const Hash32& post_hash() const { return post_hash_; }

 private:
  friend class AccountHandle;
  friend class ProgramContext;

  void debit_fee() {
    if (tx_.fee == 0) return;
    for (std::size_t i = 0; i < tx_.metas.size(); ++i) {
      if (staged_[i] && tx_.metas[i].address == tx_.fee_payer) {
        staged_[i]->account.balance -= tx_.fee;
        staged_[i]->fee_debited = true;
        return;
      }
    }
  }

  void rollback() {
    staged_ = initial_;
    debit_fee();
  }

  bool balances_conserved() const {
    unsigned __int128 before = 0;
    unsigned __int128 after = 0;
    for (std::size_t i = 0; i < staged_.size(); ++i) {
      if (initial_[i] && initial_[i]->existed) before += initial_[i]->account.balance;
      if (staged_[i] && staged_[i]->present) after += staged_[i]->account.balance;
    }
    return after + tx_.fee == before;
  }

  static Hash32 writable_digest(const std::vector<std::optional<StagedAccount>>& stages) {
    Sha256 h;
    for (const auto& stage : stages) {
      if (!stage) continue;
      std::uint8_t marker = stage->present ? 1 : 0;
      h.update({&marker, 1});
      if (stage->present) h.update(canonical_account_encoding(stage->account));
    }
    return h.finish();
  }

  const Transaction& tx_;
  Chain& chain_;
  ProgramContext context_;
  std::vector<std::optional<StagedAccount>> staged_;
  std::vector<std::optional<StagedAccount>> initial_;
  std::vector<const Account*> readable_;
  std::vector<AccountHandle> handles_;
  std::vector<std::span<const std::uint8_t>> instruction_stack_;
  Hash32 pre_hash_;
  Hash32 post_hash_;
  TxStatus status_ = TxStatus::success;
};

// AccountHandle

const Address& AccountHandle::address() const { return frame_->tx_.metas[meta_index_].address; }

bool AccountHandle::writable() const { return frame_->tx_.metas[meta_index_].writable; }

bool AccountHandle::exists() const {
  if (writable()) return frame_->staged_[meta_index_]->present;
  return frame_->readable_[meta_index_] != nullptr;
}

const Address& AccountHandle::owner() const {
  static const Address kZero{};
  if (writable()) {
    const auto& stage = frame_->staged_[meta_index_];
    return stage->present ? stage->account.owner : kZero;
  }
  return frame_->readable_[meta_index_] ? frame_->readable_[meta_index_]->owner : kZero;
}

std::uint64_t AccountHandle::balance() const {
  if (writable()) {
    const auto& stage = frame_->staged_[meta_index_];
    return stage->present ? stage->account.balance : 0;
  }
  return frame_->readable_[meta_index_] ? frame_->readable_[meta_index_]->balance : 0;
}

bool AccountHandle::executable() const {
  if (writable()) {
    const auto& stage = frame_->staged_[meta_index_];
    return stage->present && stage->account.executable;
  }
  return frame_->readable_[meta_index_] && frame_->readable_[meta_index_]->executable;
}

std::span<const std::uint8_t> AccountHandle::data() const {
  if (writable()) {
    const auto& stage = frame_->staged_[meta_index_];
    if (!stage->present) return {};
    return stage->account.data;
  }
  if (!frame_->readable_[meta_index_]) return {};
  return frame_->readable_[meta_index_]->data;
}

void AccountHandle::set_data(Bytes data) {
  if (!writable())
    throw RoutineError{TxStatus::writes_read_only, "set-data:" + short_hex(address())};
  auto& stage = frame_->staged_[meta_index_];
  if (!stage->present) {
    stage->account.owner = frame_->tx_.program_id;
    stage->present = true;
  } else if (stage->account.owner != frame_->tx_.program_id) {
    throw RoutineError{TxStatus::routine_failed, "ownership-violation:" + short_hex(address())};
  }
  stage->account.data = std::move(data);
  stage->touched = true;
}

void AccountHandle::credit(std::uint64_t amount) {
  if (!writable())
    throw RoutineError{TxStatus::writes_read_only, "credit:" + short_hex(address())};
  auto& stage = frame_->staged_[meta_index_];
  if (!stage->present) {
    stage->account.owner = frame_->tx_.program_id;
    stage->present = true;
  }
  if (stage->account.balance > ~std::uint64_t{0} - amount)
    throw RoutineError{TxStatus::routine_failed, "balance-overflow"};
  stage->account.balance += amount;
  stage->touched = true;
}

void AccountHandle::debit(std::uint64_t amount) {
  if (!writable())
    throw RoutineError{TxStatus::writes_read_only, "debit:" + short_hex(address())};
  auto& stage = frame_->staged_[meta_index_];
  if (!stage->present)
    throw RoutineError{TxStatus::routine_failed, "missing-account:" + short_hex(address())};
  if (stage->account.owner != frame_->tx_.program_id)
    throw RoutineError{TxStatus::routine_failed, "ownership-violation:" + short_hex(address())};
  if (stage->account.balance < amount)
    throw RoutineError{TxStatus::routine_failed, "insufficient-balance:" + short_hex(address())};
  stage->account.balance -= amount;
  stage->touched = true;
}

// ProgramContext

const Transaction& ProgramContext::tx() const { return frame_->tx_; }

const Address& ProgramContext::program_id() const { return frame_->tx_.program_id; }

std::span<const std::uint8_t> ProgramContext::instruction() const {
  if (!frame_->instruction_stack_.empty()) return frame_->instruction_stack_.back();
  return frame_->tx_.data;
}

std::size_t ProgramContext::account_count() const { return frame_->tx_.metas.size(); }

AccountHandle& ProgramContext::account(std::size_t index) { return frame_->handles_.at(index); }

AccountHandle* ProgramContext::find_account(const Address& address) {
  for (std::size_t i = 0; i < frame_->tx_.metas.size(); ++i)
    if (frame_->tx_.metas[i].address == address) return &frame_->handles_[i];
  return nullptr;
}

std::uint64_t ProgramContext::now_ms() const { return frame_->chain_.now_ms(); }

std::uint64_t ProgramContext::slot() const { return frame_->chain_.executing_slot(); }

bool ProgramContext::is_rollup() const { return frame_->chain_.kind() == LayerKind::er; }

void ProgramContext::invoke(const Address& program, std::span<const std::uint8_t> instruction) {
  const ProgramRoutine* routine = frame_->chain_.find_routine(program);
  if (!routine)
    throw RoutineError{TxStatus::routine_failed, "unknown-program:" + short_hex(program)};
  frame_->instruction_stack_.push_back(instruction);
  try {
    (*routine)(*this);
  } catch (...) {
    frame_->instruction_stack_.pop_back();
    throw;
  }
  frame_->instruction_stack_.pop_back();
}

void ProgramContext::fail(std::string detail) const {
  throw RoutineError{TxStatus::routine_failed, std::move(detail)};
}

// Scheduling

BatchSchedule schedule_batches(std::span<const Transaction> txs) {
  BatchSchedule out;
  std::map<Address, std::size_t> writer_batch;
  std::map<Address, std::size_t> reader_batch;
  for (const auto& tx : txs) {
    std::optional<std::size_t> conflict_floor;
    auto raise = [&](std::size_t b) {
      conflict_floor = conflict_floor ? std::max(*conflict_floor, b) : b;
    };
    for (const auto& meta : tx.metas) {
      if (auto it = writer_batch.find(meta.address); it != writer_batch.end()) raise(it->second);
      if (meta.writable)
        if (auto it = reader_batch.find(meta.address); it != reader_batch.end()) raise(it->second);
    }
    std::size_t batch = conflict_floor ? *conflict_floor + 1 : 0;
    if (batch >= out.batches.size()) out.batches.resize(batch + 1);
    out.batches[batch].push_back(tx.id);
    for (const auto& meta : tx.metas) {
      auto& table = meta.writable ? writer_batch : reader_batch;
      auto [it, inserted] = table.emplace(meta.address, batch);
      if (!inserted) it->second = std::max(it->second, batch);
    }
  }
  return out;
}

TxStatus validate_transaction(const Transaction& tx, Chain& chain, const ExecOptions& opts) {
  return validate_full(tx, chain, opts).status;
}

namespace {

struct Slot {
  std::size_t input_index = 0;
  const Transaction* tx = nullptr;
  const ProgramRoutine* routine = nullptr;
  std::unique_ptr<ExecutionFrame> frame;
  TxResult result;
};

}  // namespace

std::vector<TxResult> execute_transactions(std::span<const Transaction> txs, Chain& chain,
                                           const ExecOptions& opts) {
  std::vector<TxResult> results(txs.size());
  if (txs.empty()) return results;

  // The trace sink stays parallel to the input order regardless of batching.
  std::size_t trace_base = 0;
  if (opts.trace) {
    trace_base = opts.trace->size();
    opts.trace->resize(trace_base + txs.size());
  }
  auto record_trace = [&](std::size_t input_index, const TxResult& r, const Hash32& pre,
                          const Hash32& post) {
    if (opts.trace) (*opts.trace)[trace_base + input_index] = TxTrace{r.id, r.status, pre, post};
  };

  auto run_single = [&](std::size_t input_index) -> TxResult {
    const Transaction& tx = txs[input_index];
    auto v = validate_full(tx, chain, opts);
    if (v.status != TxStatus::success) {
      TxResult r{tx.id, v.status, v.detail};
      record_trace(input_index, r, Hash32{}, Hash32{});
      return r;
    }
    ExecutionFrame frame(tx, chain);
    frame.prepare();
    TxResult r = frame.run(*v.routine);
    frame.commit();
    record_trace(input_index, r, frame.pre_hash(), frame.post_hash());
    return r;
  };

  if (opts.sequential) {
    for (std::size_t i = 0; i < txs.size(); ++i) results[i] = run_single(i);
    return results;
  }

  std::map<std::uint64_t, std::size_t> index_by_id;
  for (std::size_t i = 0; i < txs.size(); ++i) index_by_id[txs[i].id] = i;

  BatchSchedule schedule = schedule_batches(txs);
  for (const auto& batch : schedule.batches) {
    std::vector<Slot> slots;
    slots.reserve(batch.size());
    // Phase 0: validate and stage in arrival order. Validation may clone
    // accounts in from the base layer, so it stays sequential.
    for (std::uint64_t id : batch) {
      std::size_t idx = index_by_id.at(id);
      const Transaction& tx = txs[idx];
      auto v = validate_full(tx, chain, opts);
      if (v.status != TxStatus::success) {
        results[idx] = TxResult{tx.id, v.status, v.detail};
        record_trace(idx, results[idx], Hash32{}, Hash32{});
        continue;
      }
      Slot slot;
      slot.input_index = idx;
      slot.tx = &tx;
      slot.routine = v.routine;
      slot.frame = std::make_unique<ExecutionFrame>(tx, chain);
      slot.frame->prepare();
      slots.push_back(std::move(slot));
    }
    // Phase 1: run routines against the batch-start state. Members are
    // conflict free, so order does not matter and workers are optional.
    auto run_slot = [](Slot& slot) { slot.result = slot.frame->run(*slot.routine); };
    if (opts.parallel_workers > 1 && slots.size() > 1) {
      std::vector<std::thread> workers;
      std::size_t stride = std::min<std::size_t>(opts.parallel_workers, slots.size());
      for (std::size_t w = 0; w < stride; ++w) {
        workers.emplace_back([&, w] {
          for (std::size_t i = w; i < slots.size(); i += stride) run_slot(slots[i]);
        });
      }
      for (auto& worker : workers) worker.join();
    } else {
      for (auto& slot : slots) run_slot(slot);
    }
    // Phase 2: commit in arrival order.
    for (auto& slot : slots) {
      slot.frame->commit();
      results[slot.input_index] = slot.result;
      record_trace(slot.input_index, slot.result, slot.frame->pre_hash(), slot.frame->post_hash());
    }
  }
  return results;
}

}  // namespace ephemera
