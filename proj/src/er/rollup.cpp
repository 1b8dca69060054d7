#include "ephemera/er/rollup.h"

#include <cassert>

#include "ephemera/core/sha256.h"
#include "ephemera/exec/engine.h"

namespace ephemera {

Hash32 compute_segment_hash(const LogSegment& segment) {
  Sha256 h;
  for (const LoggedTx& logged : segment.txs) {
    h.update(encode_transaction(logged.tx));
    std::uint8_t status = static_cast<std::uint8_t>(logged.status);
    h.update({&status, 1});
    std::uint8_t exempt = logged.fee_exempt ? 1 : 0;
    h.update({&exempt, 1});
    h.update(logged.pre_state.bytes);
    h.update(logged.post_state.bytes);
  }
  return h.finish();
}

ErRuntime::ErRuntime(const ProvisionRequested& request, Chain* base, DelegationProgram* dlp,
                     std::shared_ptr<SimClock> clock, IdSource* ids)
    : er_id_(request.er_id),
      config_(request.config),
      base_(base),
      dlp_(dlp),
      ids_(ids),
      chain_(ChainParams{LayerKind::er, "er:" + std::to_string(request.er_id),
                         request.config.block_time_ms,
                         request.config.gasless ? 0 : kBaseFee, kBlockhashWindow},
             clock, base->registry_ptr()),
      created_at_ms_(clock->now_ms()),
      last_commit_ms_(clock->now_ms()) {
  chain_.set_delegated_filter([this](const Address& address) { return delegated_.contains(address); });
  chain_.set_fallback_loader([this](const Address& address) -> std::optional<Account> {
    const Account* source = base_->find_account(address);
    if (!source) return std::nullopt;
    return *source;
  });
  chain_.set_clone_recorder([this](const Account& cloned) { log_clone(cloned); });

  open_segment(0);
  for (const Address& address : request.accounts) {
    const Account* source = base_->find_account(address);
    assert(source && "delegated accounts exist on the base layer");
    Account copy = *source;
    copy.delegated_to.reset();
    log_.baseline[address] = canonical_account_encoding(copy);
    chain_.upsert_account(std::move(copy));
    delegated_.insert(address);
  }
  if (config_.tick_interval_ms > 0) next_tick_at_ = created_at_ms_ + config_.tick_interval_ms;
}

void ErRuntime::open_segment(std::uint64_t start_commit) {
  LogSegment segment;
  segment.start_commit = start_commit;
  // Accounts imported in earlier segments stay cached in the chain store, so
  // later segments never re-clone them. Seed every segment with the full
  // import set so each one replays standalone.
  segment.clones = clone_cache_;
  log_.segments.push_back(std::move(segment));
}

void ErRuntime::log_clone(const Account& account) {
  Bytes encoding = canonical_account_encoding(account);
  clone_cache_[account.address] = encoding;
  log_.segments.back().clones[account.address] = std::move(encoding);
}

std::vector<TxResult> ErRuntime::er_execute(const std::vector<Transaction>& txs,
                                            bool fee_exempt) {
  assert(alive_ && "terminated rollups do not execute");
  ExecOptions opts;
  opts.fee_exempt = fee_exempt;
  std::vector<TxTrace> traces;
  opts.trace = &traces;
  auto results = chain_.execute_now(txs, opts);
  chain_.absorb_results(results);
  LogSegment& segment = log_.segments.back();
  for (std::size_t i = 0; i < txs.size(); ++i)
    segment.txs.push_back(
        LoggedTx{txs[i], traces[i].status, fee_exempt, traces[i].pre_state, traces[i].post_state});
  return results;
}

unsigned ErRuntime::fire_due_ticks() {
  if (!alive_ || config_.tick_interval_ms == 0 || delegated_.empty()) return 0;
  unsigned fired = 0;
  while (next_tick_at_ <= chain_.now_ms()) {
    Transaction tick;
    tick.id = ids_->fresh();
    tick.fee_payer = *delegated_.begin();
    tick.recent_blockhash = chain_.latest_blockhash();
    tick.program_id = config_.tick_program;
    for (const Address& address : delegated_) tick.metas.push_back({address, true});
    tick.data = config_.tick_args;
    tick.fee = 0;
    er_execute({tick}, true);
    ++ticks_fired_;
    ++fired;
    next_tick_at_ += config_.tick_interval_ms;
  }
  return fired;
}

const Block* ErRuntime::produce_block_if_due() {
  if (!alive_ || !chain_.block_due()) return nullptr;
  auto pending = chain_.drain_pending();
  if (!pending.empty()) er_execute(pending);
  return &chain_.produce_block();
}

bool ErRuntime::commit_due() const {
  return alive_ && chain_.now_ms() >= last_commit_ms_ + config_.commit_frequency_ms;
}

CommitRecord ErRuntime::build_commit() {
  auto pending = chain_.drain_pending();
  if (!pending.empty()) er_execute(pending);

  CommitRecord record;
  record.commit_id = (er_id_ << 16) | ++commit_seq_;
  record.er_id = er_id_;
  for (const Address& address : delegated_)
    record.account_states[address] = canonical_account_encoding(*chain_.find_account(address));

  // Fraud injection corrupts the claim only; the log stays honest.
  if (!fraud_.empty() && !record.account_states.empty()) {
    FraudSpec spec = fraud_.front();
    fraud_.erase(fraud_.begin());
    Address target = spec.account.value_or(record.account_states.begin()->first);
    auto it = record.account_states.find(target);
    if (it != record.account_states.end() && !it->second.empty()) {
      std::size_t index = spec.byte_index.value_or(it->second.size() - 1) % it->second.size();
      it->second[index] ^= (spec.xor_mask ? spec.xor_mask : 0x01);
    }
  }

  LogSegment& segment = log_.segments.back();
  segment.end_commit = record.commit_id;
  segment.segment_hash = compute_segment_hash(segment);
  segment.closed = true;
  record.log_segment_hash = segment.segment_hash;
  open_segment(record.commit_id);
  last_commit_ms_ = chain_.now_ms();
  settle_requested_ = false;
  return record;
}

std::optional<Transaction> ErRuntime::maybe_commit() {
  if (!alive_ || delegated_.empty()) return std::nullopt;
  if (!settle_requested_ && !commit_due()) return std::nullopt;
  CommitRecord record = build_commit();
  commit_history_.push_back(record);
  Transaction tx = make_commit_tx(ids_->fresh(), *base_, record);
  base_->submit(tx);
  return tx;
}

CommitRecord ErRuntime::settle_now() {
  CommitRecord record = build_commit();
  commit_history_.push_back(record);
  return record;
}

void ErRuntime::release_account(const Address& account) { delegated_.erase(account); }

void ErRuntime::kill(const std::string& reason) {
  if (!alive_) return;
  alive_ = false;
  close_reason_ = reason;
}

std::optional<Transaction> ErRuntime::terminate() {
  if (!alive_) return std::nullopt;
  std::optional<Transaction> final_commit;
  if (!delegated_.empty()) {
    CommitRecord record = build_commit();
    commit_history_.push_back(record);
    Transaction tx = make_commit_tx(ids_->fresh(), *base_, record);
    base_->submit(tx);
    final_commit = std::move(tx);
  }
  kill("expired");
  return final_commit;
}

std::optional<std::uint64_t> ErRuntime::next_event_at() const {
  if (!alive_) return std::nullopt;
  std::uint64_t next = lifetime_deadline();
  next = std::min(next, chain_.next_block_at());
  if (!delegated_.empty()) next = std::min(next, last_commit_ms_ + config_.commit_frequency_ms);
  if (config_.tick_interval_ms > 0 && !delegated_.empty()) next = std::min(next, next_tick_at_);
  return next;
}

void ErRuntime::pump() {
  if (!alive_) return;
  if (chain_.now_ms() >= lifetime_deadline()) {
    terminate();
    return;
  }
  fire_due_ticks();
  produce_block_if_due();
  maybe_commit();
}

Provisioner::Provisioner(Chain* base, DelegationProgram* dlp, std::shared_ptr<SimClock> clock,
                         IdSource* ids)
    : base_(base), dlp_(dlp), clock_(std::move(clock)), ids_(ids) {
  dlp_->set_runtime_lookup([this](std::uint64_t er_id) { return find(er_id); });
}

void Provisioner::pump() {
  const auto& events = dlp_->events();
  for (; event_cursor_ < events.size(); ++event_cursor_) {
    const auto* request = std::get_if<ProvisionRequested>(&events[event_cursor_]);
    if (!request) continue;
    if (runtimes_.contains(request->er_id)) continue;
    runtimes_[request->er_id] =
        std::make_unique<ErRuntime>(*request, base_, dlp_, clock_, ids_);
  }
}

ErRuntime* Provisioner::find(std::uint64_t er_id) {
  auto it = runtimes_.find(er_id);
  return it == runtimes_.end() ? nullptr : it->second.get();
}

const ErRuntime* Provisioner::find(std::uint64_t er_id) const {
  auto it = runtimes_.find(er_id);
  return it == runtimes_.end() ? nullptr : it->second.get();
}

std::vector<ErRuntime*> Provisioner::all() {
  std::vector<ErRuntime*> out;
  for (auto& [id, runtime] : runtimes_) out.push_back(runtime.get());
  return out;
}

std::vector<ErRuntime*> Provisioner::alive() {
  std::vector<ErRuntime*> out;
  for (auto& [id, runtime] : runtimes_)
    if (runtime->alive()) out.push_back(runtime.get());
  return out;
}

}  // namespace ephemera
