#include "sim.hpp"

#include <cmath>
#include <stdexcept>

#include "crypto.hpp"

namespace xdx::sim {

namespace {

const char* payload_name(ledger::PayloadKind k) {
    switch (k) {
        case ledger::PayloadKind::offer: return "offer";
        case ledger::PayloadKind::request: return "request";
        case ledger::PayloadKind::agreement: return "agreement";
        case ledger::PayloadKind::payment: return "payment";
        case ledger::PayloadKind::trade_done: return "trade-done";
    }
    return "unknown";
}

const char* role_name(ledger::Role r) {
    switch (r) {
        case ledger::Role::unilateral: return "unilateral";
        case ledger::Role::origin: return "origin";
        case ledger::Role::responder: return "responder";
    }
    return "unknown";
}

}  // namespace

// The bridge a Peer talks through; everything funnels back into the one net.
struct EnvImpl : proto::PeerEnv {
    Simnet* sim = nullptr;
    u32 idx = 0;

    SimTime now() const override { return sim->now(); }
    void send(const PeerId& to, const msg::Envelope& e) override { sim->route(idx, to, e); }
    void set_timer(u64 handle, SimTime at) override { sim->set_timer(idx, handle, at); }
    void cancel_timer(u64 handle) override { sim->cancel_timer(idx, handle); }
    std::optional<wallets::MockChain::Submitted> transfer(const std::string& chain,
                                                          const Bytes& to, u64 amount,
                                                          const std::string& trade_tag,
                                                          u32 index) override {
        return sim->transfer(idx, chain, to, amount, trade_tag, index);
    }
    const ChainQuery& chain_query() const override { return sim->chains_; }
    const ledger::LedgerStore& audit_view() const override { return sim->oracle_; }
    void publish(const ledger::BlockPartition& p) override { sim->publish(idx, p); }
    void publish_countersig(const PeerId& creator, u64 seq, const PeerId& signer,
                            const Signature& s) override {
        sim->publish_countersig(idx, creator, seq, signer, s);
    }
    void trace(const char* kind, const std::string& kv) override { sim->record(idx, kind, kv); }
};

Simnet::Simnet(SimConfig cfg)
    : cfg_(std::move(cfg)), latency_rng_(1), workload_rng_(1), select_rng_(1) {
    Rng master(cfg_.seed);
    latency_rng_ = Rng(master.next());
    workload_rng_ = Rng(master.next());
    select_rng_ = Rng(master.next());

    for (const ChainSpec& c : cfg_.chains) chains_.add_chain(c.id, c.confirm_delay);

    u32 total = cfg_.traders + cfg_.matchmakers;
    if (total == 0) throw std::invalid_argument("no peers configured");

    std::vector<crypto::Keypair> keys;
    keys.reserve(total);
    for (u32 i = 0; i < total; i++) {
        Encoder e;
        e.put_u64(cfg_.seed);
        e.put_u32(i);
        keys.push_back(crypto::keypair_from_seed(crypto::sha256(e.bytes())));
    }

    std::vector<PeerId> mm_ids;
    for (u32 i = cfg_.traders; i < total; i++) mm_ids.push_back(keys[i].pub);

    u32 k = cfg_.fanout;
    if (k > cfg_.matchmakers) k = cfg_.matchmakers;

    for (u32 i = 0; i < total; i++) {
        auto env = std::make_unique<EnvImpl>();
        env->sim = this;
        env->idx = i;

        std::vector<PeerId> sampled;
        if (!mm_ids.empty() && k > 0) {
            for (u32 pick : select_rng_.sample(static_cast<u32>(mm_ids.size()), k))
                sampled.push_back(mm_ids[pick]);
        }
        bool is_mm = i >= cfg_.traders;
        auto peer = std::make_unique<proto::Peer>(keys[i], cfg_.policy, is_mm, sampled,
                                                  cfg_.match_policy, env.get());
        index_of_[keys[i].pub] = i;
        peer_hex_.push_back(hex8(keys[i].pub));
        envs_.push_back(std::move(env));
        peers_.push_back(std::move(peer));
    }
    created_orders_.resize(total);

    for (const AdversarySpec& a : cfg_.adversaries) {
        if (a.peer < total) peers_[a.peer]->set_adversary(a.profile);
    }

    for (auto& [cid, chain] : chains_.chains()) {
        for (u32 i = 0; i < total; i++)
            chain.faucet(wallets::address_of(keys[i].pub), cfg_.faucet);
    }
    chains_.seal_all();

    actions_ = cfg_.actions;
    const WorkloadSpec& w = cfg_.workload;
    if (w.duration > 0 && w.orders_per_peer_per_sec > 0 && cfg_.traders > 0) {
        double est = double(cfg_.traders) * w.orders_per_peer_per_sec *
                     (double(w.duration) / 1e6);
        u64 n_ord = static_cast<u64>(std::llround(est));
        if (n_ord % 2) n_ord++;
        u64 pairs = n_ord / 2;
        for (u64 p = 0; p < pairs; p++) {
            u64 bq = static_cast<u64>(workload_rng_.range(i64(w.base_qty.lo), i64(w.base_qty.hi)));
            u64 qq =
                static_cast<u64>(workload_rng_.range(i64(w.quote_qty.lo), i64(w.quote_qty.hi)));
            u32 offer_peer = static_cast<u32>((2 * p) % cfg_.traders);
            u32 request_peer = static_cast<u32>((2 * p + 1) % cfg_.traders);
            SimTime t0 = SimTime((2 * p + 1) * u64(w.duration) / (n_ord + 1));
            SimTime t1 = SimTime((2 * p + 2) * u64(w.duration) / (n_ord + 1));
            actions_.push_back(
                {t0, offer_peer,
                 CreateOrderAction{true, w.base, w.quote, bq, qq, w.order_timeout}});
            actions_.push_back(
                {t1, request_peer,
                 CreateOrderAction{false, w.base, w.quote, bq, qq, w.order_timeout}});
        }
    }

    for (size_t i = 0; i < actions_.size(); i++) {
        Event ev;
        ev.kind = Event::Kind::action;
        ev.peer = actions_[i].peer;
        ev.index = i;
        schedule(actions_[i].at, std::move(ev));
    }
}

Simnet::~Simnet() = default;

void Simnet::schedule(SimTime at, Event ev) {
    if (at < now_) throw std::logic_error("event scheduled in the past");
    queue_.emplace(QueueKey{at, ++queue_seq_}, std::move(ev));
}

void Simnet::record(u32 peer, const char* kind, std::string kv) {
    metrics::TraceEvent e;
    e.t = now_;
    e.seq = record_seq_++;
    e.peer = peer_hex_[peer];
    e.kind = kind;
    e.kv = std::move(kv);
    records_.push_back(std::move(e));
}

void Simnet::route(u32 from, const PeerId& to, const msg::Envelope& e) {
    std::string kv = std::string("msg=") + msg::kind_name(e.kind()) + " to=" + hex8(to) +
                     " corr=" + std::to_string(e.correlation);
    auto it = index_of_.find(to);
    if (it == index_of_.end()) {
        if (cfg_.record_msgs) record(from, "msg_dropped", kv + " reason=unknown-peer");
        return;
    }
    if (cfg_.record_msgs) record(from, "msg_sent", kv);
    if (cfg_.loss > 0 && latency_rng_.unit() < cfg_.loss) {
        if (cfg_.record_msgs) record(from, "msg_dropped", kv + " reason=loss");
        return;
    }
    SimTime delay = cfg_.latency_base;
    if (cfg_.latency_jitter > 0) delay += latency_rng_.range(0, cfg_.latency_jitter);

    Event ev;
    ev.kind = Event::Kind::deliver;
    ev.peer = it->second;
    ev.payload = e.encode();
    schedule(now_ + delay, std::move(ev));
}

void Simnet::set_timer(u32 peer, u64 handle, SimTime at) {
    if (at < now_) throw std::logic_error("timer set in the past");
    Event ev;
    ev.kind = Event::Kind::timer;
    ev.peer = peer;
    ev.handle = handle;
    QueueKey key{at, ++queue_seq_};
    queue_.emplace(key, std::move(ev));
    timer_keys_[{peer, handle}] = key;
}

void Simnet::cancel_timer(u32 peer, u64 handle) {
    auto it = timer_keys_.find({peer, handle});
    if (it == timer_keys_.end()) return;
    queue_.erase(it->second);
    timer_keys_.erase(it);
}

std::optional<wallets::MockChain::Submitted> Simnet::transfer(u32 payer, const std::string& chain,
                                                              const Bytes& to, u64 amount,
                                                              const std::string& trade_tag,
                                                              u32 index) {
    wallets::MockChain* c = chains_.chain(chain);
    if (!c) return std::nullopt;
    auto sub = c->submit(wallets::address_of(peer_id(payer)), to, amount, now_);
    if (!sub) return std::nullopt;

    std::string txid_hex = to_hex(sub->txid.data(), sub->txid.size());
    tx_meta_[sub->txid] = {trade_tag, index, peer_hex_[payer]};
    std::string kv = "trade=" + trade_tag + " idx=" + std::to_string(index) + " chain=" + chain +
                     " txid=" + txid_hex + " amount=" + std::to_string(amount) +
                     " to=" + to_hex(to.data(), to.size() < 8 ? to.size() : 8);
    record(payer, "tx_submitted", kv);

    if (sub->confirm_at <= now_) {
        record(payer, "tx_confirmed",
               "trade=" + trade_tag + " idx=" + std::to_string(index) + " chain=" + chain +
                   " txid=" + txid_hex + " amount=" + std::to_string(amount));
    } else {
        Event ev;
        ev.kind = Event::Kind::chain_confirm;
        ev.peer = payer;
        ev.chain = chain;
        schedule(sub->confirm_at, std::move(ev));
    }
    return sub;
}

void Simnet::publish(u32 peer, const ledger::BlockPartition& p) {
    oracle_.add(p);
    record(peer, "block_appended",
           "creator=" + hex8(p.creator) + " seq=" + std::to_string(p.seq) +
               " kind=" + payload_name(ledger::payload_kind(p.payload)) +
               " role=" + role_name(p.role) + " hash=" + hex8(p.hash()));
}

void Simnet::publish_countersig(u32 peer, const PeerId& creator, u64 seq, const PeerId& signer,
                                const Signature& s) {
    oracle_.attach_countersig(creator, seq, signer, s);
    record(peer, "block_countersigned",
           "creator=" + hex8(creator) + " seq=" + std::to_string(seq) +
               " signer=" + hex8(signer));
}

void Simnet::run_action(const ScenarioAction& a) {
    if (a.peer >= peers_.size()) return;
    if (const auto* c = std::get_if<CreateOrderAction>(&a.act)) {
        AssetPair pair{c->base, c->quote, c->base_qty, c->quote_qty};
        OrderId oid = peers_[a.peer]->create_order(pair, c->is_offer, c->timeout);
        created_orders_[a.peer].push_back(oid);
    } else if (const auto* x = std::get_if<CancelOrderAction>(&a.act)) {
        const auto& mine = created_orders_[a.peer];
        if (x->order_index < mine.size()) peers_[a.peer]->cancel_order(mine[x->order_index]);
    }
}

void Simnet::dispatch(const Event& ev) {
    switch (ev.kind) {
        case Event::Kind::deliver: {
            try {
                Decoder d(ev.payload);
                msg::Envelope env = msg::Envelope::decode(d);
                if (cfg_.record_msgs)
                    record(ev.peer, "msg_delivered",
                           std::string("msg=") + msg::kind_name(env.kind()) +
                               " from=" + hex8(env.sender) +
                               " corr=" + std::to_string(env.correlation));
                peers_[ev.peer]->on_message(env);
            } catch (const DecodeError&) {
                record(ev.peer, "protocol_reject", "reason=undecodable-envelope");
            }
            return;
        }
        case Event::Kind::timer: {
            timer_keys_.erase({ev.peer, ev.handle});
            peers_[ev.peer]->on_timer(ev.handle);
            return;
        }
        case Event::Kind::action: {
            run_action(actions_[ev.index]);
            return;
        }
        case Event::Kind::chain_confirm: {
            wallets::MockChain* c = chains_.chain(ev.chain);
            if (!c) return;
            for (const Hash& txid : c->confirm_due(now_)) {
                auto mit = tx_meta_.find(txid);
                auto tx = c->lookup(txid);
                std::string kv = "chain=" + ev.chain +
                                 " txid=" + to_hex(txid.data(), txid.size()) +
                                 " amount=" + std::to_string(tx ? tx->amount : 0);
                if (mit != tx_meta_.end()) {
                    kv = "trade=" + std::get<0>(mit->second) +
                         " idx=" + std::to_string(std::get<1>(mit->second)) + " " + kv;
                }
                record(ev.peer, "tx_confirmed", kv);
            }
            return;
        }
    }
}

void Simnet::run() {
    while (!queue_.empty()) {
        auto it = queue_.begin();
        SimTime at = it->first.first;
        if (cfg_.max_sim_time > 0 && at > cfg_.max_sim_time) break;
        if (processed_ >= cfg_.max_events) {
            guard_tripped_ = true;
            break;
        }
        Event ev = std::move(it->second);
        queue_.erase(it);
        now_ = at;
        processed_++;
        dispatch(ev);
    }
    drained_ = queue_.empty();
}

std::vector<std::string> Simnet::violations() const {
    std::vector<std::string> out;
    if (!chains_.all_conserved()) out.push_back("chain-conservation");
    if (guard_tripped_) out.push_back("event-guard: max_events reached");

    for (const auto& viol : ledger::verify_store(oracle_)) out.push_back("oracle: " + viol.str());
    for (u32 i = 0; i < peer_count(); i++) {
        // A peer's store holds fragments of counterparty chains (only the partitions it
        // witnessed), so full-store verification would flag missing prefixes that are
        // normal. The peer's own chain must be complete and well linked, though.
        const ledger::LedgerStore& st = peers_[i]->store();
        auto it = st.chains().find(peers_[i]->id());
        if (it == st.chains().end()) continue;
        for (const auto& viol : ledger::verify_chain(it->second, peers_[i]->id()))
            out.push_back(peer_hex_[i] + ": " + viol.str());
    }

    if (drained_) {
        for (u32 i = 0; i < peer_count(); i++) {
            const proto::Peer& p = *peers_[i];
            if (p.adversary() != proto::Adversary::none) continue;
            for (const auto& ov : p.own_orders()) {
                if (ov.reserved != 0)
                    out.push_back(peer_hex_[i] + ": reservation-leak order=" + ov.id.str() +
                                  " units=" + std::to_string(ov.reserved));
            }
            if (size_t n = p.open_trade_count())
                out.push_back(peer_hex_[i] + ": open-trades " + std::to_string(n));
            if (size_t n = p.open_request_count())
                out.push_back(peer_hex_[i] + ": open-requests " + std::to_string(n));
        }
    }
    return out;
}

std::string Simnet::ledger_dump() const {
    std::string out;
    for (u32 i = 0; i < peer_count(); i++)
        ledger::dump_store(peers_[i]->store(), peers_[i]->id(), out);
    return out;
}

}  // namespace xdx::sim
