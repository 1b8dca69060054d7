#include "ephemera/chain/pda.h"

#include <stdexcept>

#include "ephemera/core/sha256.h"

namespace ephemera {

Address derive_pda(const Address& program_id, std::span<const Bytes> seeds) {
  if (seeds.size() > kMaxPdaSeeds) throw std::invalid_argument("too-many-seeds");
  Sha256 h;
  static constexpr std::string_view kDomain = "EPHEMERA_PDA";
  h.update({reinterpret_cast<const std::uint8_t*>(kDomain.data()), kDomain.size()});
  std::uint8_t count = static_cast<std::uint8_t>(seeds.size());
  h.update({&count, 1});
  for (const auto& seed : seeds) {
    if (seed.size() > kMaxPdaSeedLength) throw std::invalid_argument("seed-too-long");
    std::uint8_t len = static_cast<std::uint8_t>(seed.size());
    h.update({&len, 1});
    h.update(seed);
  }
  h.update(program_id.bytes);
  return Address::from_span(h.finish().bytes);
}

Address program_address(std::string_view name) {
  std::string tagged = "EPHEMERA_PROGRAM:";
  tagged += name;
  return Address::from_span(
      sha256({reinterpret_cast<const std::uint8_t*>(tagged.data()), tagged.size()}).bytes);
}

}  // namespace ephemera
