// Program-derived addresses: deterministic, keyless account addresses owned by
// the deriving program. Derivation is pure, so clients and programs agree on
// the address without any registry.
#pragma once

#include <span>
#include <string_view>

#include "ephemera/core/bytes.h"

namespace ephemera {

inline constexpr std::size_t kMaxPdaSeeds = 16;
inline constexpr std::size_t kMaxPdaSeedLength = 32;

// sha256("EPHEMERA_PDA" || seed count || (len || seed)* || program_id), first 32 bytes.
// Throws std::invalid_argument("too-many-seeds" / "seed-too-long") on misuse.
Address derive_pda(const Address& program_id, std::span<const Bytes> seeds);

// Address for a named built-in program: sha256("EPHEMERA_PROGRAM:" + name).
Address program_address(std::string_view name);

}  // namespace ephemera
