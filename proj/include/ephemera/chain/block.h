#pragma once

#include <utility>
#include <vector>

#include "ephemera/core/bytes.h"
#include "ephemera/exec/transaction.h"

namespace ephemera {

struct Block {
  std::uint64_t slot = 0;
  Hash32 parent_hash;
  Hash32 hash;
  std::uint64_t timestamp_ms = 0;
  // Every included transaction in execution order, failures included.
  std::vector<std::pair<std::uint64_t, TxStatus>> transaction_results;
};

// sha256(parent_hash || slot u64 LE || result count u32 LE || (id u64 LE || status u8)*).
Hash32 compute_block_hash(const Hash32& parent_hash, std::uint64_t slot,
                          const std::vector<std::pair<std::uint64_t, TxStatus>>& results);

}  // namespace ephemera
