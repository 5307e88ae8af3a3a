#pragma once

// Per-peer trading engine. One Peer object holds every role a node can play:
// trader (creates orders, negotiates, pays, finalizes) and matchmaker (books
// orders, nominates counterparties). The engine is message-driven and owns no
// clock or sockets; the environment supplies time, delivery, timers, chains,
// and the shared audit view, which keeps every run bit-reproducible.
//
// Trade lifecycle, initiator's view:
//   Match arrives -> queue -> window closes -> pop best -> verify -> reserve
//   -> TradeProposal -> (TradeAccept | Negotiate | TradeReject | timeout)
//   -> origin agreement partition + PartialAgreement -> Agreement (countersig)
//   -> alternating payments, initiator first, each one audit-then-pay
//   -> PartialTradeDone after the counterparty's final payment -> TradeDone.
// Failures release reservations, requeue the candidate with a retry bump, and
// report RejectMatch to the nominating matchmakers so alternatives flow.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ledger.hpp"
#include "messages.hpp"
#include "orderbook.hpp"
#include "util.hpp"
#include "wallets.hpp"

namespace xdx::proto {

struct PolicyConfig {
    u32 restrict_t = 1;   // refuse counterparties responsible in >= t open trades; 0 = off
    u32 incset_n = 1;     // alternating increments per side
    bool at_own_risk = false;  // ignore the restrict refusal on this peer

    SimTime match_window = 1_s;
    SimTime proposal_timeout = 3_s;
    SimTime publication_window = 10_s;
    SimTime poll_interval = 100_ms;
    SimTime stall_watchdog = 60_s;
    SimTime requeue_backoff = 500_ms;
    SimTime retransmit_every = 1_s;
    SimTime finalize_retransmit = 2_s;
    u32 finalize_attempts = 5;
    u32 transfer_attempts = 3;   // escalating 1s, 2s, 4s waits between tries
    u32 candidate_attempts = 8;  // drop an MPQ entry after this many failures
    SimTime order_timeout = 3600_s;
};

enum class Adversary : u8 {
    none = 0,
    payment_withholder,    // accepts incoming payments, never sends its own
    agreement_withholder,  // never produces or countersigns an agreement
    biased_matchmaker,     // nominates only the worst compatible resident
    negotiation_staller,   // never answers proposals
};

const char* adversary_name(Adversary a);
std::optional<Adversary> adversary_from_name(const std::string& s);

// Everything the engine needs from the outside world.
struct PeerEnv {
    virtual ~PeerEnv() = default;
    virtual SimTime now() const = 0;
    virtual void send(const PeerId& to, const msg::Envelope& e) = 0;
    // one-shot timer; fires back into Peer::on_timer(handle)
    virtual void set_timer(u64 handle, SimTime at) = 0;
    virtual void cancel_timer(u64 handle) = 0;
    // submit on an external chain; nullopt = insufficient funds. The
    // environment owns confirmation scheduling and the tx trace events.
    virtual std::optional<wallets::MockChain::Submitted> transfer(
        const std::string& chain, const Bytes& to, u64 amount, const std::string& trade_tag,
        u32 index) = 0;
    virtual const ChainQuery& chain_query() const = 0;
    // shared perfect-information view used by the responsibility audits
    virtual const ledger::LedgerStore& audit_view() const = 0;
    virtual void publish(const ledger::BlockPartition& p) = 0;
    virtual void publish_countersig(const PeerId& creator, u64 seq, const PeerId& signer,
                                    const Signature& s) = 0;
    virtual void trace(const char* kind, const std::string& kv) = 0;
};

class Peer {
public:
    Peer(crypto::Keypair keys, PolicyConfig policy, bool matchmaker,
         std::vector<PeerId> matchmakers, std::string match_policy, PeerEnv* env);

    const PeerId& id() const { return keys_.pub; }
    bool is_matchmaker() const { return matchmaker_; }
    void set_adversary(Adversary a) { adversary_ = a; }
    Adversary adversary() const { return adversary_; }

    // scenario-driven actions
    OrderId create_order(const AssetPair& pair, bool is_offer, SimTime timeout);
    void cancel_order(const OrderId& id);

    // environment callbacks
    void on_message(const msg::Envelope& env);
    void on_timer(u64 handle);

    // introspection for the harness
    const ledger::LedgerStore& store() const { return store_; }
    size_t open_trade_count() const;
    size_t open_request_count() const;
    size_t mpq_entries() const;
    struct OwnOrderView {
        OrderId id;
        book::OrderState state;
        u64 base_qty, traded, reserved;
    };
    std::vector<OwnOrderView> own_orders() const;
    std::string book_snapshot() const;  // matchmaker books, pair-id headed

private:
    // ---- trader state ----
    struct OwnOrder {
        SignedOrder order;
        book::OrderState state = book::OrderState::active;
        u64 traded = 0;
        u64 reserved = 0;
        book::MatchQueue mpq;
        bool window_armed = false;   // first match seen, timer pending
        bool window_passed = false;  // collection period over
        u64 window_timer = 0;
        u64 backoff_timer = 0;
        u64 expiry_timer = 0;
        bool negotiating = false;    // proposal or agreement exchange in flight
        SimTime last_attempt = -1;
        SimTime backoff_until = -1;  // no attempts before this after a failure
        std::map<OrderId, u32> fail_counts;

        u64 remaining() const {
            u64 used = traded + reserved;
            u64 total = order.core.pair.base_qty;
            return used >= total ? 0 : total - used;
        }
    };

    // one outstanding request I sent and still wait on
    struct Request {
        enum class Flow : u8 { proposal } flow = Flow::proposal;
        PeerId to{};
        msg::Envelope env;  // retransmitted until answered
        OrderId own_order;
        book::MatchCandidate cand;
        msg::TradeTerms terms;
        u64 reserved_qty = 0;      // own base units locked by this attempt
        bool counter_sent = false; // I accepted a Negotiate counter already
        u64 expiry_timer = 0;
        u64 retransmit_timer = 0;
    };

    // counterparty-side negotiation awaiting accept/agreement
    struct CpNegotiation {
        msg::TradeTerms terms;        // what I answered with
        bool counter_outstanding = false;
        bool accepted = false;        // reservation taken
        u64 reserved_qty = 0;
        OrderId own_order;
        msg::Envelope reply;          // cached for duplicate proposals
        u64 expiry_timer = 0;
    };

    struct Trade {
        u64 corr = 0;
        bool initiator = false;
        PeerId other{};
        OrderId own_order;
        msg::TradeTerms terms;
        ledger::AgreementPayload agreement;
        BlockRef agreement_ref;   // origin partition on the initiator's chain
        Hash agreement_hash{};
        std::string tag;          // hex8 of the agreement hash, for traces
        u64 reserved_qty = 0;     // own base units held until done/abort
        bool open = false;        // dual-signed
        bool done = false;
        bool aborted = false;
        u32 sent = 0;             // my increments paid
        u32 seen = 0;             // their increments verified
        std::map<u32, BlockRef> payment_refs;  // overall schedule position 1..2n
        std::optional<msg::BlockAck> pending_ack;
        std::optional<ledger::BlockPartition> pending_payment;  // polled, unconfirmed
        msg::Envelope last_sent;
        msg::Envelope cached_agreement_reply;  // cp: re-answer duplicate PartialAgreement
        msg::Envelope cached_done_reply;       // cp: re-answer duplicate PartialTradeDone
        bool has_cached_agreement = false;
        bool has_cached_done = false;
        bool has_last_sent = false;
        u32 transfer_tries = 0;
        u32 finalize_tries = 0;
        bool defer_traced = false;  // current increment already logged as deferred
        std::set<Hash> processed;   // partitions already handled
        u64 deadline_timer = 0;
        u64 watchdog_timer = 0;
        u64 poll_timer = 0;
        u64 retransmit_timer = 0;
        u64 pay_timer = 0;
    };

    // ---- matchmaker state ----
    struct Matchmaking {
        std::map<std::string, book::LimitOrderBook> books;  // by normalized pair id
        std::map<OrderId, book::OrderState> states;
        std::map<OrderId, std::set<OrderId>> nominated;  // per target: candidates sent
        std::map<OrderId, u64> expiry_timers;
        std::set<Hash> seen_dones;
    };

    struct TimerTag {
        enum class Kind : u8 {
            match_window,
            requeue_backoff,
            order_expiry,      // creator side
            mm_order_expiry,   // matchmaker side
            request_expiry,
            request_retransmit,
            cp_neg_expiry,
            trade_deadline,
            trade_watchdog,
            trade_poll,
            trade_retransmit,
            pay_retry,
        } kind;
        OrderId order;
        PeerId other{};
        u64 corr = 0;
    };

    using TradeKey = std::pair<PeerId, u64>;

    // message handlers
    void on_order(const PeerId& from, const msg::MsgOrder& m);
    void on_cancel_order(const PeerId& from, const msg::MsgCancelOrder& m);
    void on_match(const PeerId& from, const msg::MsgMatch& m);
    void on_reject_match(const PeerId& from, const msg::MsgRejectMatch& m);
    void on_trade_proposal(const PeerId& from, u64 corr, const msg::MsgTradeProposal& m);
    void on_negotiate(const PeerId& from, u64 corr, const msg::MsgNegotiate& m);
    void on_trade_accept(const PeerId& from, u64 corr, const msg::MsgTradeAccept& m);
    void on_trade_reject(const PeerId& from, u64 corr, const msg::MsgTradeReject& m);
    void on_partial_agreement(const PeerId& from, u64 corr, const msg::MsgPartialAgreement& m);
    void on_agreement(const PeerId& from, u64 corr, const msg::MsgAgreement& m);
    void on_payment(const PeerId& from, u64 corr, const msg::MsgPayment& m);
    void on_partial_trade_done(const PeerId& from, u64 corr, const msg::MsgPartialTradeDone& m);
    void on_trade_done(const PeerId& from, u64 corr, const msg::MsgTradeDone& m);

    // trader helpers
    void select_trader(OwnOrder& o);
    void start_attempt(OwnOrder& o, book::MatchCandidate cand);
    void fail_attempt(u64 corr, msg::RejectReason reason, bool drop_candidate);
    void construct_agreement(Request req);
    void pay_increment(Trade& t, u32 index);
    void accept_their_payment(Trade& t, const ledger::BlockPartition& part);
    void construct_trade_done(Trade& t);
    void complete_trade(Trade& t, const char* role);
    void abort_trade(Trade& t, const char* reason);
    void release_reservation(const OrderId& own, u64 qty);
    void settle_order_fill(const OrderId& own, u64 qty);
    void send_reject_match(const OwnOrder& o, const book::MatchCandidate& cand,
                           msg::RejectReason reason);
    bool restrict_refuses(const PeerId& subject) const;
    u64 own_units(const msg::TradeTerms& terms, const OrderCore& own) const;
    bool process_ack(Trade& t, const msg::BlockAck& ack);
    void arm_watchdog(Trade& t);
    void finish_order_maintenance(const OrderId& id);

    // matchmaker helpers
    void nominate(const OrderId& target, const std::vector<book::MatchHit>& hits,
                  book::LimitOrderBook& bk);
    void mm_rematch(const OrderId& target);
    void mm_retire(const OrderId& id, book::OrderState state);
    void apply_trade_done_to_books(const ledger::BlockPartition& done,
                                   const ledger::BlockPartition& agreement);

    // plumbing. Correlation ids carry the issuer's id prefix in the top half,
    // so two peers can never mint colliding ids toward each other and a trade
    // keyed (counterparty, corr) is unambiguous in both directions.
    u64 fresh_corr() { return corr_hi_ | ++corr_seq_; }
    // Jittered so peers created in the same burst do not retry in lockstep;
    // synchronized retry waves keep colliding on each other's reservations.
    SimTime backoff_deadline();
    u64 arm_timer(TimerTag tag, SimTime at);
    void drop_timer(u64& handle);
    Trade* trade_of(const PeerId& other, u64 corr);
    OwnOrder* own_of(const OrderId& id);
    void send_to(const PeerId& to, const msg::Envelope& e) { env_->send(to, e); }
    void trace(const char* kind, const std::string& kv) { env_->trace(kind, kv); }

    crypto::Keypair keys_;
    PolicyConfig policy_;
    bool matchmaker_;
    std::vector<PeerId> matchmakers_;  // my fanout sample
    const book::MatchPolicy* match_policy_;
    PeerEnv* env_;
    Adversary adversary_ = Adversary::none;

    ledger::LedgerStore store_;
    std::map<OrderId, OwnOrder> own_orders_;
    std::map<u64, Request> requests_;
    std::map<TradeKey, CpNegotiation> cp_negs_;
    std::map<TradeKey, Trade> trades_;
    Matchmaking mm_;
    std::map<u64, TimerTag> timers_;
    u64 corr_hi_ = 0;
    u64 corr_seq_ = 0;
    u64 order_seq_ = 0;
    u64 timer_seq_ = 0;
    Rng retry_rng_{0};  // reseeded from the key prefix at construction
};

}  // namespace xdx::proto
