#include "ephemera/router/router.h"

#include <algorithm>

namespace ephemera {

const char* to_string(RouteTarget target) {
  switch (target) {
    case RouteTarget::base_layer: return "base";
    case RouteTarget::er: return "er";
    case RouteTarget::force_settle_then_base: return "force-settle";
    case RouteTarget::reject: return "reject";
  }
  return "?";
}

const char* to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::none: return "none";
    case RejectReason::multi_er_read: return "multi-er-read";
    case RejectReason::mixed_writable: return "mixed-writable";
  }
  return "?";
}

std::string RouteDecision::describe() const {
  switch (target) {
    case RouteTarget::base_layer: return "base";
    case RouteTarget::er: return "er:" + std::to_string(er_id);
    case RouteTarget::force_settle_then_base: return "force-settle";
    case RouteTarget::reject: return std::string("reject:") + to_string(reason);
  }
  return "?";
}

RouteDecision RouteDecision::base() { return RouteDecision{}; }

RouteDecision RouteDecision::to_er(std::uint64_t er_id) {
  return RouteDecision{RouteTarget::er, er_id, RejectReason::none};
}

RouteDecision RouteDecision::force_settle() {
  return RouteDecision{RouteTarget::force_settle_then_base, 0, RejectReason::none};
}

RouteDecision RouteDecision::rejected(RejectReason reason) {
  return RouteDecision{RouteTarget::reject, 0, reason};
}

std::optional<std::vector<AccountUpdate>> Subscription::poll() {
  if (batches_.empty()) return std::nullopt;
  auto batch = std::move(batches_.front());
  batches_.pop_front();
  return batch;
}

RpcRouter::RpcRouter(Chain* base, DelegationProgram* dlp, Provisioner* provisioner,
                     MixedPolicy policy)
    : base_(base), dlp_(dlp), provisioner_(provisioner), policy_(policy) {
  attach_chain(*base_);
}

void RpcRouter::refresh_cache() const {
  if (cache_frozen_) return;
  if (cache_version_ == dlp_->version()) return;
  cache_.clear();
  for (const auto& [address, record] : dlp_->records()) {
    if (record.status != DelegationStatus::closed) cache_[address] = record.er_id;
  }
  cache_version_ = dlp_->version();
}

std::optional<std::uint64_t> RpcRouter::cached_er(const Address& address) const {
  refresh_cache();
  auto it = cache_.find(address);
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

void RpcRouter::record(char kind, std::uint64_t tx_id, const RouteDecision& decision,
                       const std::string& note) const {
  if (!trace_enabled_) return;
  trace_.push_back(RouteTraceEntry{base_->now_ms(), kind, tx_id, decision, note});
}

RouteDecision RpcRouter::route_read(const std::vector<Address>& accounts) const {
  ++tally_.reads;
  std::set<std::uint64_t> ers;
  for (const Address& address : accounts) {
    if (auto er = cached_er(address)) ers.insert(*er);
  }
  RouteDecision decision;
  if (ers.size() == 1) {
    decision = RouteDecision::to_er(*ers.begin());
  } else if (ers.size() > 1) {
    decision = RouteDecision::rejected(RejectReason::multi_er_read);
  }
  record('r', 0, decision, "");
  return decision;
}

RpcRouter::SendView RpcRouter::classify(
    const std::vector<AccountMeta>& metas,
    const std::function<std::optional<std::uint64_t>(const Address&)>& table) const {
  SendView view;
  std::set<std::uint64_t> ers;
  bool any_undelegated = false;
  for (const AccountMeta& meta : metas) {
    if (!meta.writable) continue;
    if (auto er = table(meta.address)) {
      ers.insert(*er);
    } else {
      any_undelegated = true;
    }
  }
  view.any_delegated = !ers.empty();
  if (ers.size() == 1 && !any_undelegated) {
    view.er_id = *ers.begin();
  } else if (!ers.empty()) {
    view.mixed = true;
  }
  return view;
}

RouteDecision RpcRouter::decide_send(
    const std::vector<AccountMeta>& metas,
    const std::function<std::optional<std::uint64_t>(const Address&)>& table) const {
  SendView view = classify(metas, table);
  if (!view.any_delegated) return RouteDecision::base();
  if (!view.mixed) return RouteDecision::to_er(view.er_id);
  if (policy_ == MixedPolicy::reject) return RouteDecision::rejected(RejectReason::mixed_writable);
  return RouteDecision::force_settle();
}

RouteDecision RpcRouter::route_writables(const std::vector<AccountMeta>& metas) const {
  return decide_send(metas, [this](const Address& a) { return cached_er(a); });
}

RouteDecision RpcRouter::route_send(const Transaction& tx) const {
  ++tally_.sends;
  RouteDecision decision = route_writables(tx.metas);
  record('s', tx.id, decision, "");
  return decision;
}

bool RpcRouter::enact(const Transaction& tx, const RouteDecision& decision,
                      SubmitOutcome& outcome) {
  switch (decision.target) {
    case RouteTarget::base_layer: {
      base_->submit(tx);
      ++tally_.to_base;
      return true;
    }
    case RouteTarget::er: {
      ErRuntime* runtime = provisioner_->find(decision.er_id);
      if (!runtime || !runtime->alive()) {
        outcome.note = "er-terminated";
        return false;
      }
      runtime->submit(tx);
      ++tally_.to_er;
      return true;
    }
    case RouteTarget::force_settle_then_base: {
      std::set<std::uint64_t> settled;
      for (const AccountMeta& meta : tx.metas) {
        if (!meta.writable) continue;
        const DelegationRecord* record = dlp_->record_for(meta.address);
        if (!record || record->status == DelegationStatus::closed) continue;
        settled.insert(record->er_id);
        dlp_->undelegate(record->owner_program, meta.address, base_->now_ms());
      }
      std::string ids;
      for (std::uint64_t er : settled) ids += (ids.empty() ? "" : ",") + std::to_string(er);
      outcome.note = "settled:" + ids;
      base_->submit(tx);
      ++tally_.force_settled;
      ++tally_.to_base;
      return true;
    }
    case RouteTarget::reject: {
      ++tally_.rejected;
      outcome.note = std::string("rejected:") + to_string(decision.reason);
      return false;
    }
  }
  return false;
}

SubmitOutcome RpcRouter::submit(const Transaction& tx) {
  SubmitOutcome outcome;
  outcome.decision = route_send(tx);

  RouteDecision live =
      decide_send(tx.metas, [this](const Address& a) { return dlp_->delegated_to(a); });
  if (live != outcome.decision) {
    outcome.rerouted = true;
    ++tally_.rerouted;
    outcome.decision = live;
    cache_frozen_ = false;
    cache_version_ = ~0ull;
    record('s', tx.id, live, "re-routed");
  }

  outcome.accepted = enact(tx, outcome.decision, outcome);
  return outcome;
}

std::optional<Hash32> RpcRouter::blockhash_for(const RouteDecision& decision) const {
  if (decision.target == RouteTarget::er) {
    ErRuntime* runtime = provisioner_->find(decision.er_id);
    if (!runtime || !runtime->alive()) return std::nullopt;
    return runtime->chain().latest_blockhash();
  }
  return base_->latest_blockhash();
}

std::uint64_t RpcRouter::fee_for(const RouteDecision& decision) const {
  if (decision.target == RouteTarget::er) {
    ErRuntime* runtime = provisioner_->find(decision.er_id);
    return runtime ? runtime->chain().required_fee() : 0;
  }
  return base_->required_fee();
}

std::optional<std::pair<Account, std::string>> RpcRouter::fetch_account(const Address& address) {
  if (auto er = dlp_->delegated_to(address)) {
    ErRuntime* runtime = provisioner_->find(*er);
    if (runtime && runtime->alive()) {
      const Account* account = runtime->chain().resolve_account(address);
      if (!account) return std::nullopt;
      return std::make_pair(*account, runtime->chain().label());
    }
  }
  const Account* account = base_->find_account(address);
  if (!account) return std::nullopt;
  return std::make_pair(*account, base_->label());
}

std::shared_ptr<Subscription> RpcRouter::subscribe(const std::vector<Address>& accounts) {
  auto subscription = std::make_shared<Subscription>();
  subscription->id_ = next_subscription_id_++;
  subscription->accounts_.insert(accounts.begin(), accounts.end());
  subscriptions_.push_back(subscription);
  return subscription;
}

void RpcRouter::extend_subscription(const std::shared_ptr<Subscription>& subscription,
                                    const std::vector<Address>& accounts) {
  subscription->accounts_.insert(accounts.begin(), accounts.end());
}

void RpcRouter::attach_chain(Chain& chain) {
  chain.add_block_listener(
      [this](Chain& source, const Block&, const std::vector<AccountUpdate>& updates) {
        deliver(source, updates);
      });
}

void RpcRouter::deliver(Chain& chain, const std::vector<AccountUpdate>& updates) {
  if (updates.empty() || subscriptions_.empty()) return;
  for (const auto& subscription : subscriptions_) {
    std::vector<AccountUpdate> batch;
    for (const AccountUpdate& update : updates) {
      if (!subscription->accounts_.contains(update.address)) continue;
      // Each account reports from its current home layer only, so a watcher
      // never sees the stale base copy while a rollup holds the lock.
      std::string home = base_->label();
      if (auto er = dlp_->delegated_to(update.address)) {
        ErRuntime* runtime = provisioner_->find(*er);
        if (runtime && runtime->alive()) home = runtime->chain().label();
      }
      if (home == chain.label()) batch.push_back(update);
    }
    if (!batch.empty()) subscription->batches_.push_back(std::move(batch));
  }
}

void RpcRouter::poison_cache_for_test() {
  refresh_cache();
  cache_frozen_ = true;
}

}  // namespace ephemera
