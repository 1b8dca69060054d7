#include "ephemera/chain/account.h"

namespace ephemera {

Bytes canonical_account_encoding(const Account& account) {
  ByteWriter w;
  w.put_address(account.address);
  w.put_address(account.owner);
  w.put_u64(account.balance);
  w.put_u8(account.executable ? 1 : 0);
  w.put_u32(static_cast<std::uint32_t>(account.data.size()));
  w.put_bytes(account.data);
  return w.take();
}

std::optional<Account> decode_account_encoding(std::span<const std::uint8_t> encoding) {
  ByteReader r(encoding);
  Account account;
  account.address = r.get_address();
  account.owner = r.get_address();
  account.balance = r.get_u64();
  account.executable = r.get_u8() != 0;
  std::uint32_t len = r.get_u32();
  account.data = r.get_bytes(len);
  if (!r.ok() || !r.at_end()) return std::nullopt;
  return account;
}

}  // namespace ephemera
