// The account model: every piece of chain state is an account. Programs are
// accounts with the executable flag set; delegation is a base-layer lock
// recorded in delegated_to.
#pragma once

#include <optional>

#include "ephemera/core/bytes.h"

namespace ephemera {

struct Account {
  Address address;
  Address owner;
  std::uint64_t balance = 0;
  Bytes data;
  bool executable = false;
  // Base layer only: id of the ephemeral rollup currently holding the write lock.
  std::optional<std::uint64_t> delegated_to;

  bool operator==(const Account& other) const {
    return address == other.address && owner == other.owner && balance == other.balance &&
           data == other.data && executable == other.executable &&
           delegated_to == other.delegated_to;
  }
};

// Canonical byte encoding used for hashing, commits and fraud comparison:
// address || owner || balance u64 LE || executable u8 || data length u32 LE || data.
// The delegation lock is base-layer bookkeeping and deliberately not part of it.
Bytes canonical_account_encoding(const Account& account);

// Inverse of canonical_account_encoding; delegated_to comes back unset.
std::optional<Account> decode_account_encoding(std::span<const std::uint8_t> encoding);

}  // namespace ephemera
