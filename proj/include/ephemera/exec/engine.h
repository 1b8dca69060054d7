// Transaction execution: validation, conflict-aware batch scheduling, routine
// dispatch over staged account copies, atomic commit or rollback.
//
// Scheduling guarantee: two transactions sharing an account where at least one
// writes it never land in the same batch, and the earlier arrival lands in the
// strictly earlier batch. Executing the batches in order is therefore
// equivalent to sequential execution in arrival order.
#pragma once

#include <span>
#include <vector>

#include "ephemera/exec/program.h"
#include "ephemera/exec/transaction.h"

namespace ephemera {

class Chain;
class ExecutionFrame;

inline constexpr std::size_t kMaxTxAccounts = 128;

struct TxTrace {
  std::uint64_t id = 0;
  TxStatus status = TxStatus::success;
  // Digests over the writable metas' canonical encodings in meta order,
  // before and after the transaction. Zero for validation rejections.
  Hash32 pre_state;
  Hash32 post_state;
};

struct ExecOptions {
  bool sequential = false;            // skip scheduling, run strictly in arrival order
  unsigned parallel_workers = 0;      // >0: compute batch members on worker threads
  bool fee_exempt = false;            // synthesized transactions (rollup ticks)
  bool accept_any_blockhash = false;  // replay mode
  std::vector<TxTrace>* trace = nullptr;
};

struct BatchSchedule {
  std::vector<std::vector<std::uint64_t>> batches;  // transaction ids per batch
};

BatchSchedule schedule_batches(std::span<const Transaction> txs);

// Validation only; no state change, no fee. Returns success when the
// transaction would be accepted for execution against the chain's current tip.
TxStatus validate_transaction(const Transaction& tx, Chain& chain, const ExecOptions& opts = {});

// Executes transactions against the chain store. Results come back in input
// order. Fees burn on every execution attempt that passes validation;
// validation rejections are free.
std::vector<TxResult> execute_transactions(std::span<const Transaction> txs, Chain& chain,
                                           const ExecOptions& opts = {});

// View of one account meta during routine execution. Mutations enforce the
// write policy: the meta must be writable and data changes require the
// executing transaction's program to own the account.
class AccountHandle {
 public:
  const Address& address() const;
  bool exists() const;
  bool writable() const;
  const Address& owner() const;
  std::uint64_t balance() const;
  bool executable() const;
  std::span<const std::uint8_t> data() const;

  void set_data(Bytes data);
  void credit(std::uint64_t amount);
  void debit(std::uint64_t amount);

 private:
  friend class ExecutionFrame;
  ExecutionFrame* frame_ = nullptr;
  std::size_t meta_index_ = 0;
};

class ProgramContext {
 public:
  const Transaction& tx() const;
  const Address& program_id() const;
  std::span<const std::uint8_t> instruction() const;
  std::size_t account_count() const;
  AccountHandle& account(std::size_t index);
  AccountHandle* find_account(const Address& address);
  std::uint64_t now_ms() const;
  std::uint64_t slot() const;
  bool is_rollup() const;

  // Dispatches to another registered routine in the same frame (used by the
  // world program to run systems). The invoked routine sees `instruction` as
  // its payload; account metas and write authority stay those of the outer
  // transaction.
  void invoke(const Address& program, std::span<const std::uint8_t> instruction);

  [[noreturn]] void fail(std::string detail) const;

 private:
  friend class ExecutionFrame;
  explicit ProgramContext(ExecutionFrame* frame) : frame_(frame) {}
  ExecutionFrame* frame_;
};

}  // namespace ephemera
