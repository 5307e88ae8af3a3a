#pragma once

// Single-threaded discrete-event network. Peers run to completion on each
// delivered message or fired timer; the only ordering authority is the event
// queue, keyed (time, insertion seq), so a seed fixes the whole run. The sim
// owns the clock, message transport with latency and loss, the mock chains,
// and the shared audit store that every responsibility check reads.

#include <memory>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "metrics.hpp"
#include "protocol.hpp"
#include "wallets.hpp"

namespace xdx::sim {

struct ChainSpec {
    std::string id;
    SimTime confirm_delay = 0;
};

struct AdversarySpec {
    u32 peer = 0;  // absolute peer index
    proto::Adversary profile = proto::Adversary::none;
};

struct CreateOrderAction {
    bool is_offer = true;
    std::string base, quote;
    u64 base_qty = 0, quote_qty = 0;
    SimTime timeout = 0;  // 0: policy default
};

struct CancelOrderAction {
    u64 order_index = 0;  // n-th order that peer created, 0-based
};

struct ScenarioAction {
    SimTime at = 0;
    u32 peer = 0;
    std::variant<CreateOrderAction, CancelOrderAction> act;
};

struct QtyDist {
    u64 lo = 1, hi = 1;  // uniform inclusive; lo == hi pins the value
};

struct WorkloadSpec {
    SimTime duration = 0;  // 0 disables the generator
    double orders_per_peer_per_sec = 0;
    std::string base = "alpha", quote = "beta";
    QtyDist base_qty{1, 1};
    QtyDist quote_qty{1, 1};
    SimTime order_timeout = 0;  // 0: policy default
};

struct SimConfig {
    std::string name = "run";
    u64 seed = 1;
    u32 traders = 2;
    u32 matchmakers = 1;
    u32 fanout = 4;                // matchmakers sampled per peer (clamped to matchmaker count)
    std::vector<ChainSpec> chains;
    u64 faucet = 1000000;          // per trader per chain
    SimTime latency_base = 5_ms;
    SimTime latency_jitter = 10_ms;
    double loss = 0.0;
    proto::PolicyConfig policy;
    std::string match_policy = "price-time";
    WorkloadSpec workload;
    std::vector<ScenarioAction> actions;
    std::vector<AdversarySpec> adversaries;
    bool record_msgs = true;       // message-level trace records
    u64 max_events = 20000000;     // runaway guard
    SimTime max_sim_time = 0;      // 0: run to drain
};

class Simnet {
public:
    explicit Simnet(SimConfig cfg);
    ~Simnet();

    Simnet(const Simnet&) = delete;
    Simnet& operator=(const Simnet&) = delete;

    // Process events until the queue drains or a guard trips.
    void run();

    SimTime now() const { return now_; }
    u64 events_processed() const { return processed_; }
    bool drained() const { return drained_; }

    u32 peer_count() const { return static_cast<u32>(peers_.size()); }
    const proto::Peer& peer(u32 idx) const { return *peers_[idx]; }
    proto::Peer& peer(u32 idx) { return *peers_[idx]; }
    const PeerId& peer_id(u32 idx) const { return peers_[idx]->id(); }
    const std::vector<OrderId>& orders_of(u32 idx) const { return created_orders_[idx]; }

    const std::vector<metrics::TraceEvent>& events() const { return records_; }
    const ledger::LedgerStore& oracle() const { return oracle_; }
    const wallets::ChainSet& chains() const { return chains_; }

    // End-of-run invariant sweep; empty means clean.
    std::vector<std::string> violations() const;

    std::string chain_log() const { return chains_.export_log(); }
    // Every peer's store, holder-attributed, ready for the dump verifier.
    std::string ledger_dump() const;

private:
    friend struct EnvImpl;

    struct Event {
        enum class Kind : u8 { deliver, timer, action, chain_confirm } kind;
        u32 peer = 0;
        Bytes payload;      // encoded envelope
        u64 handle = 0;     // timer
        size_t index = 0;   // action index
        std::string chain;  // chain_confirm
    };
    using QueueKey = std::pair<SimTime, u64>;

    void schedule(SimTime at, Event ev);
    void route(u32 from, const PeerId& to, const msg::Envelope& e);
    void set_timer(u32 peer, u64 handle, SimTime at);
    void cancel_timer(u32 peer, u64 handle);
    std::optional<wallets::MockChain::Submitted> transfer(u32 payer, const std::string& chain,
                                                          const Bytes& to, u64 amount,
                                                          const std::string& trade_tag,
                                                          u32 index);
    void publish(u32 peer, const ledger::BlockPartition& p);
    void publish_countersig(u32 peer, const PeerId& creator, u64 seq, const PeerId& signer,
                            const Signature& s);
    void record(u32 peer, const char* kind, std::string kv);
    void dispatch(const Event& ev);
    void run_action(const ScenarioAction& a);

    SimConfig cfg_;
    SimTime now_ = 0;
    u64 queue_seq_ = 0;
    u64 record_seq_ = 0;
    u64 processed_ = 0;
    bool drained_ = false;
    bool guard_tripped_ = false;

    std::map<QueueKey, Event> queue_;
    std::map<std::pair<u32, u64>, QueueKey> timer_keys_;

    Rng latency_rng_;
    Rng workload_rng_;
    Rng select_rng_;

    wallets::ChainSet chains_;
    ledger::LedgerStore oracle_;
    std::vector<std::unique_ptr<struct EnvImpl>> envs_;
    std::vector<std::unique_ptr<proto::Peer>> peers_;
    std::map<PeerId, u32> index_of_;
    std::vector<std::string> peer_hex_;
    std::vector<std::vector<OrderId>> created_orders_;
    std::vector<ScenarioAction> actions_;  // scripted plus generated workload
    // txid -> (trade tag, schedule index, payer hex) for confirm records
    std::map<Hash, std::tuple<std::string, u32, std::string>> tx_meta_;

    std::vector<metrics::TraceEvent> records_;
};

}  // namespace xdx::sim
