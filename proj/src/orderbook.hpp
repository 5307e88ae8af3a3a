#pragma once

// Matchmaker limit order book and the creator-side match queue.
//
// The book keeps one side of resident orders per price level: bids best-first
// descending, asks ascending, FIFO within a level by creation time. Orders on
// reversed pairs (quote/base instead of base/quote) are folded into the same
// book by normalizing the pair id and flipping side and price, so a request
// quoted the other way round still meets its counterpart.
//
// match() is a pure query: it reports every compatible counter-side resident,
// best price first, without touching the book. The matchmaker turns each hit
// into one Match message for the newcomer's creator. Fill progress (traded,
// reserved) lives next to the signed order, never inside it.
//
// The creator side aggregates nominations from several matchmakers into a
// queue keyed by the candidate order, so the same candidate reported twice
// collapses into one entry with two nominators.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "types.hpp"

namespace xdx::book {

enum class OrderState : u8 { active = 0, fulfilled = 1, cancelled = 2, expired = 3 };

const char* state_name(OrderState s);

enum class Validity : u8 {
    ok = 0,
    nonpositive_quantity,
    same_asset,
    bad_signature,
    expired,
    duplicate,
    foreign_pair,  // order does not normalize into this book
};

const char* validity_name(Validity v);

// A resident order plus the fill bookkeeping the signature cannot cover.
// remaining() is what is still up for negotiation.
struct OrderSpec {
    SignedOrder order;
    u64 traded = 0;    // settled, in the order's own base units
    u64 reserved = 0;  // locked by in-flight negotiations, same units

    u64 remaining() const;
    const OrderCore& core() const { return order.core; }
};

// "alpha/beta" with the lexicographically smaller asset first.
std::string normalized_pair_id(const AssetPair& p);

// How an order looks inside the normalized book.
struct NormView {
    std::string pair_id;
    bool bid = false;  // buys the normalized base asset
    Rational price;    // normalized quote per normalized base
};
NormView normalize(const OrderCore& o);

// remaining() converted into normalized base units (floored when the order's
// pair is the reversed orientation).
u64 normalized_remaining(const OrderSpec& s);

// same normalized pair, opposite normalized sides, creators differ, prices cross
bool compatible(const OrderCore& a, const OrderCore& b);

// Signed price gain of trading the candidate against one's own limit, in
// normalized terms: positive when the candidate is better than the limit.
Rational price_advantage(const OrderCore& own, const OrderCore& candidate);

// Trade size at the resident (nominated) order's price: want_base snapped
// down to the resident's price grid so both settlement amounts are whole
// units. Amounts are in the resident pair's asset units. Zero when the grid
// leaves nothing.
struct TradeSize {
    u64 base_amount = 0;
    u64 quote_amount = 0;
};
TradeSize size_trade(const AssetPair& resident, u64 want_base);

// Cap of `own_remaining` (own base units) expressed in resident base units at
// the resident's price; what an initiator may ask of this counterparty.
u64 resident_base_cap(const OrderCore& own, u64 own_remaining, const AssetPair& resident);

struct MatchHit {
    OrderId id;
    u64 qty = 0;  // min(remaining both sides), normalized base units
};

class LimitOrderBook {
public:
    explicit LimitOrderBook(std::string pair_id) : pair_(std::move(pair_id)) {}

    const std::string& pair_id() const { return pair_; }

    // What insert() would say, without inserting.
    Validity validate(const SignedOrder& o, SimTime now) const;

    // Validity::ok means the order is now resident.
    Validity insert(const SignedOrder& o, SimTime now);

    // Unknown id is a signalled no-op.
    bool remove(const OrderId& id);

    OrderSpec* find(const OrderId& id);
    const OrderSpec* find(const OrderId& id) const;

    // Every compatible counter-side resident: best price first, then oldest
    // created_at, then (creator, order_seq). Skips the incoming creator's own
    // orders, expired residents, and residents with nothing remaining. Does
    // not mutate the book; qty = min(remaining of both sides).
    std::vector<MatchHit> match(const OrderSpec& incoming, SimTime now) const;

    // Drop residents whose expiry has passed; returns them in id order.
    std::vector<OrderId> expire_due(SimTime now);

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // All resident ids, asks best-first then bids best-first (level FIFO).
    std::vector<OrderId> ids() const;

    // One line per level: "<side> <price> <id>@<remaining> ...", asks first.
    std::string snapshot() const;

private:
    struct Entry {
        OrderSpec spec;
        NormView view;
    };
    using Level = std::vector<OrderId>;  // sorted by (created_at, creator, seq)

    void level_insert(Level& lv, const OrderId& id) const;
    const std::map<Rational, Level>* side(bool bid) const;

    std::string pair_;
    std::map<OrderId, Entry> entries_;
    std::map<Rational, Level> bids_;  // best = last
    std::map<Rational, Level> asks_;  // best = first
};

// Pluggable match selection. The default walks the book price-time; a run is
// configured by name and unknown names must fail at startup, not mid-run.
using MatchPolicy =
    std::function<std::vector<MatchHit>(const LimitOrderBook&, const OrderSpec&, SimTime)>;

class MatchPolicyRegistry {
public:
    static MatchPolicyRegistry& instance();

    bool add(const std::string& name, MatchPolicy fn);  // false: name taken
    const MatchPolicy* find(const std::string& name) const;
    std::vector<std::string> names() const;

private:
    MatchPolicyRegistry();
    std::map<std::string, MatchPolicy> fns_;
};

// One candidate waiting in a creator's match queue.
struct MatchCandidate {
    SignedOrder order;                 // the nominated counterpart
    u32 retries = 0;                   // bumped every time negotiation must restart
    Rational quality;                  // price advantage vs the owner's limit
    SimTime first_seen = 0;
    std::vector<PeerId> nominators;    // matchmakers that reported it
};

// Priority: fewest retries first, then best quality, then earliest seen, then
// lowest id. Everything a creator does between "matches arrived" and
// "negotiate with this one" goes through here.
class MatchQueue {
public:
    // true when this candidate is new; a repeat only extends the nominator list
    bool add(const SignedOrder& candidate, const PeerId& nominator, Rational quality, SimTime now);

    const MatchCandidate* peek() const;
    std::optional<MatchCandidate> pop();

    // Put a candidate back after a restartable failure; costs one retry.
    void requeue(MatchCandidate c);

    bool remove(const OrderId& id);
    bool contains(const OrderId& id) const { return entries_.count(id) > 0; }
    bool empty() const { return entries_.empty(); }
    size_t size() const { return entries_.size(); }

private:
    std::map<OrderId, MatchCandidate> entries_;
};

}  // namespace xdx::book
