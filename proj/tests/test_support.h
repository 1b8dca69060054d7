#pragma once

#include <memory>
#include <string>

#include "ephemera/chain/chain.h"
#include "ephemera/core/clock.h"

namespace ephemera::test {

struct CoreFixture {
  std::shared_ptr<SimClock> clock = std::make_shared<SimClock>();
  std::shared_ptr<ProgramRegistry> registry = std::make_shared<ProgramRegistry>();
  Chain base{ChainParams{}, clock, registry};
  IdSource ids;

  Address seed_wallet(const Address& owner, std::uint8_t tag, std::uint64_t balance) {
    Account wallet;
    wallet.address = Address::filled(tag);
    wallet.owner = owner;
    wallet.balance = balance;
    base.upsert_account(wallet);
    return wallet.address;
  }

  Transaction make_tx(const Address& program, const Address& payer,
                      std::vector<AccountMeta> metas, Bytes data, std::uint64_t fee) {
    Transaction tx;
    tx.id = ids.fresh();
    tx.fee_payer = payer;
    tx.recent_blockhash = base.latest_blockhash();
    tx.program_id = program;
    tx.metas = std::move(metas);
    tx.data = std::move(data);
    tx.fee = fee;
    return tx;
  }
};

inline Bytes amount_payload(std::uint64_t amount) {
  ByteWriter w;
  w.put_u64(amount);
  return w.take();
}

}  // namespace ephemera::test
