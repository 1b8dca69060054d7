// Transactions and their terminal statuses. A transaction names every account
// it touches up front (the metas), which is what makes conflict detection and
// parallel scheduling possible.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ephemera/core/bytes.h"

namespace ephemera {

enum class TxStatus : std::uint8_t {
  success = 0,
  expired_blockhash = 1,
  insufficient_fee = 2,
  unknown_program = 3,
  writes_delegated_account = 4,
  writes_undelegated = 5,
  writes_read_only = 6,
  unknown_account = 7,
  routine_failed = 8,
  balance_violation = 9,
  invalid_transaction = 10,
};

const char* to_string(TxStatus status);

struct AccountMeta {
  Address address;
  bool writable = false;

  bool operator==(const AccountMeta&) const = default;
};

struct Transaction {
  std::uint64_t id = 0;
  Address fee_payer;
  Hash32 recent_blockhash;
  Address program_id;
  std::vector<AccountMeta> metas;
  Bytes data;
  std::uint64_t fee = 0;

  bool operator==(const Transaction&) const = default;
};

// Wire layout: id u64 || fee_payer || recent_blockhash || program_id ||
// meta count u16 || (address || writable u8)* || data length u32 || data || fee u64.
// All integers little endian.
Bytes encode_transaction(const Transaction& tx);
std::optional<Transaction> decode_transaction(std::span<const std::uint8_t> wire);

struct TxResult {
  std::uint64_t id = 0;
  TxStatus status = TxStatus::success;
  std::string detail;  // reason string for failures, empty on success
};

}  // namespace ephemera
