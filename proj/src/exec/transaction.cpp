#include "ephemera/exec/transaction.h"

namespace ephemera {

const char* to_string(TxStatus status) {
  switch (status) {
    case TxStatus::success: return "success";
    case TxStatus::expired_blockhash: return "expired-blockhash";
    case TxStatus::insufficient_fee: return "insufficient-fee";
    case TxStatus::unknown_program: return "unknown-program";
    case TxStatus::writes_delegated_account: return "writes-delegated-account";
    case TxStatus::writes_undelegated: return "writes-undelegated";
    case TxStatus::writes_read_only: return "writes-read-only";
    case TxStatus::unknown_account: return "unknown-account";
    case TxStatus::routine_failed: return "routine-failed";
    case TxStatus::balance_violation: return "balance-violation";
    case TxStatus::invalid_transaction: return "invalid-transaction";
  }
  return "unknown";
}

Bytes encode_transaction(const Transaction& tx) {
  ByteWriter w;
  w.put_u64(tx.id);
  w.put_address(tx.fee_payer);
  w.put_hash(tx.recent_blockhash);
  w.put_address(tx.program_id);
  w.put_u16(static_cast<std::uint16_t>(tx.metas.size()));
  for (const auto& meta : tx.metas) {
    w.put_address(meta.address);
    w.put_u8(meta.writable ? 1 : 0);
  }
  w.put_u32(static_cast<std::uint32_t>(tx.data.size()));
  w.put_bytes(tx.data);
  w.put_u64(tx.fee);
  return w.take();
}

std::optional<Transaction> decode_transaction(std::span<const std::uint8_t> wire) {
  ByteReader r(wire);
  Transaction tx;
  tx.id = r.get_u64();
  tx.fee_payer = r.get_address();
  tx.recent_blockhash = r.get_hash();
  tx.program_id = r.get_address();
  std::uint16_t metas = r.get_u16();
  tx.metas.reserve(metas);
  for (std::uint16_t i = 0; i < metas && r.ok(); ++i) {
    AccountMeta meta;
    meta.address = r.get_address();
    meta.writable = r.get_u8() != 0;
    tx.metas.push_back(meta);
  }
  std::uint32_t len = r.get_u32();
  tx.data = r.get_bytes(len);
  tx.fee = r.get_u64();
  if (!r.ok() || !r.at_end()) return std::nullopt;
  return tx;
}

}  // namespace ephemera
