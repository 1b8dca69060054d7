// Routing front door: a single submission and read endpoint that hides the
// base/rollup split. Decisions come off a cached view of the delegation table;
// submissions re-check against the live table and re-route once when the cache
// was stale.
#pragma once

#include <deque>

#include "ephemera/er/rollup.h"

namespace ephemera {

enum class RouteTarget { base_layer, er, force_settle_then_base, reject };
enum class RejectReason { none, multi_er_read, mixed_writable };

const char* to_string(RouteTarget target);
const char* to_string(RejectReason reason);

struct RouteDecision {
  RouteTarget target = RouteTarget::base_layer;
  std::uint64_t er_id = 0;  // meaningful only when target == er
  RejectReason reason = RejectReason::none;

  bool operator==(const RouteDecision&) const = default;
  std::string describe() const;

  static RouteDecision base();
  static RouteDecision to_er(std::uint64_t er_id);
  static RouteDecision force_settle();
  static RouteDecision rejected(RejectReason reason);
};

// What to do with a transaction whose writable set spans layers (or several
// rollups): refuse it, or settle the involved rollup state back to base and
// run it there.
enum class MixedPolicy { reject, force_settle };

struct RouteTraceEntry {
  std::uint64_t at_ms = 0;
  char kind = 's';  // 'r' read, 's' send
  std::uint64_t tx_id = 0;
  RouteDecision decision;
  std::string note;
};

struct SubmitOutcome {
  RouteDecision decision;
  bool accepted = false;
  bool rerouted = false;
  std::string note;
};

class RpcRouter;

// Account-update feed across layers. Updates arrive as one batch per produced
// block, filtered to the account's current home layer.
class Subscription {
 public:
  std::uint64_t id() const { return id_; }
  const std::set<Address>& accounts() const { return accounts_; }
  std::optional<std::vector<AccountUpdate>> poll();
  std::size_t pending_batches() const { return batches_.size(); }

 private:
  friend class RpcRouter;
  std::uint64_t id_ = 0;
  std::set<Address> accounts_;
  std::deque<std::vector<AccountUpdate>> batches_;
};

class RpcRouter {
 public:
  struct Tally {
    std::uint64_t reads = 0;
    std::uint64_t sends = 0;
    std::uint64_t to_base = 0;
    std::uint64_t to_er = 0;
    std::uint64_t force_settled = 0;
    std::uint64_t rejected = 0;
    std::uint64_t rerouted = 0;
  };

  RpcRouter(Chain* base, DelegationProgram* dlp, Provisioner* provisioner,
            MixedPolicy policy = MixedPolicy::force_settle);

  MixedPolicy policy() const { return policy_; }
  void set_policy(MixedPolicy policy) { policy_ = policy; }

  // Pure decisions (cached table, no side effects beyond the trace).
  RouteDecision route_read(const std::vector<Address>& accounts) const;
  RouteDecision route_send(const Transaction& tx) const;
  RouteDecision route_writables(const std::vector<AccountMeta>& metas) const;

  // Decision plus enactment: queue on the target chain, re-routing once if the
  // live delegation table disagrees with the cached decision.
  SubmitOutcome submit(const Transaction& tx);

  std::optional<Hash32> blockhash_for(const RouteDecision& decision) const;
  std::uint64_t fee_for(const RouteDecision& decision) const;
  // Reads from the account's home layer; rollup reads clone lazily, exactly
  // like rollup execution does. Returns the account and the layer label.
  std::optional<std::pair<Account, std::string>> fetch_account(const Address& address);

  std::shared_ptr<Subscription> subscribe(const std::vector<Address>& accounts);
  void extend_subscription(const std::shared_ptr<Subscription>& subscription,
                           const std::vector<Address>& accounts);
  // Routes a chain's block updates into matching subscriptions. The base chain
  // is attached at construction; rollup chains as they are provisioned.
  void attach_chain(Chain& chain);

  const std::vector<RouteTraceEntry>& trace() const { return trace_; }
  void enable_trace(bool on) { trace_enabled_ = on; }
  const Tally& tally() const { return tally_; }

  // Freezes the delegation cache at its current contents so the next submit
  // exercises the stale-decision path.
  void poison_cache_for_test();

 private:
  struct SendView {
    bool mixed = false;
    bool any_delegated = false;
    std::uint64_t er_id = 0;
  };

  void refresh_cache() const;
  std::optional<std::uint64_t> cached_er(const Address& address) const;
  SendView classify(const std::vector<AccountMeta>& metas,
                    const std::function<std::optional<std::uint64_t>(const Address&)>& table) const;
  RouteDecision decide_send(const std::vector<AccountMeta>& metas,
                            const std::function<std::optional<std::uint64_t>(const Address&)>& table)
      const;
  bool enact(const Transaction& tx, const RouteDecision& decision, SubmitOutcome& outcome);
  void record(char kind, std::uint64_t tx_id, const RouteDecision& decision,
              const std::string& note) const;
  void deliver(Chain& chain, const std::vector<AccountUpdate>& updates);

  Chain* base_;
  DelegationProgram* dlp_;
  Provisioner* provisioner_;
  MixedPolicy policy_;

  mutable std::map<Address, std::uint64_t> cache_;
  mutable std::uint64_t cache_version_ = ~0ull;
  mutable bool cache_frozen_ = false;

  std::vector<std::shared_ptr<Subscription>> subscriptions_;
  std::uint64_t next_subscription_id_ = 1;

  bool trace_enabled_ = true;
  mutable std::vector<RouteTraceEntry> trace_;
  mutable Tally tally_;
};

}  // namespace ephemera
