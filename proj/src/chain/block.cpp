#include "ephemera/chain/block.h"

#include "ephemera/core/sha256.h"

namespace ephemera {

Hash32 compute_block_hash(const Hash32& parent_hash, std::uint64_t slot,
                          const std::vector<std::pair<std::uint64_t, TxStatus>>& results) {
  ByteWriter w;
  w.put_hash(parent_hash);
  w.put_u64(slot);
  w.put_u32(static_cast<std::uint32_t>(results.size()));
  for (const auto& [id, status] : results) {
    w.put_u64(id);
    w.put_u8(static_cast<std::uint8_t>(status));
  }
  return sha256(w.buffer());
}

}  // namespace ephemera
