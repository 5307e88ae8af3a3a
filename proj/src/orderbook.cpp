#include "orderbook.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace xdx::book {

const char* state_name(OrderState s) {
    switch (s) {
        case OrderState::active: return "active";
        case OrderState::fulfilled: return "fulfilled";
        case OrderState::cancelled: return "cancelled";
        case OrderState::expired: return "expired";
    }
    return "?";
}

const char* validity_name(Validity v) {
    switch (v) {
        case Validity::ok: return "ok";
        case Validity::nonpositive_quantity: return "nonpositive-quantity";
        case Validity::same_asset: return "same-asset";
        case Validity::bad_signature: return "bad-signature";
        case Validity::expired: return "expired";
        case Validity::duplicate: return "duplicate";
        case Validity::foreign_pair: return "foreign-pair";
    }
    return "?";
}

u64 OrderSpec::remaining() const {
    u64 used = traded + reserved;
    u64 total = order.core.pair.base_qty;
    return used >= total ? 0 : total - used;
}

std::string normalized_pair_id(const AssetPair& p) {
    return p.base < p.quote ? p.base + "/" + p.quote : p.quote + "/" + p.base;
}

NormView normalize(const OrderCore& o) {
    NormView v;
    v.pair_id = normalized_pair_id(o.pair);
    if (o.pair.base < o.pair.quote) {
        // canonical orientation: an offer sells the normalized base
        v.bid = !o.is_offer;
        v.price = o.pair.price();
    } else {
        // flipped: the order's quote IS the normalized base, so an offer
        // (receiving its quote) buys the normalized base; price inverts
        v.bid = o.is_offer;
        v.price = Rational(static_cast<i64>(o.pair.base_qty), static_cast<i64>(o.pair.quote_qty));
    }
    return v;
}

u64 normalized_remaining(const OrderSpec& s) {
    u64 rem = s.remaining();
    const AssetPair& p = s.order.core.pair;
    if (p.base < p.quote) return rem;
    // own base units are the normalized quote; convert at the order's price
    return static_cast<u64>(static_cast<unsigned __int128>(rem) * p.quote_qty / p.base_qty);
}

bool compatible(const OrderCore& a, const OrderCore& b) {
    if (a.creator == b.creator) return false;
    NormView va = normalize(a), vb = normalize(b);
    if (va.pair_id != vb.pair_id) return false;
    if (va.bid == vb.bid) return false;
    const NormView& bid = va.bid ? va : vb;
    const NormView& ask = va.bid ? vb : va;
    // seller's minimum price must not exceed the buyer's maximum
    return ask.price <= bid.price;
}

Rational price_advantage(const OrderCore& own, const OrderCore& candidate) {
    NormView vo = normalize(own), vc = normalize(candidate);
    return vo.bid ? vo.price - vc.price : vc.price - vo.price;
}

TradeSize size_trade(const AssetPair& resident, u64 want_base) {
    TradeSize ts;
    if (resident.base_qty == 0 || resident.quote_qty == 0) return ts;
    u64 base = want_base < resident.base_qty ? want_base : resident.base_qty;
    u64 g = std::gcd(resident.base_qty, resident.quote_qty);
    u64 step = resident.base_qty / g;
    base -= base % step;
    if (base == 0) return ts;
    ts.base_amount = base;
    ts.quote_amount =
        static_cast<u64>(static_cast<unsigned __int128>(base) * resident.quote_qty /
                         resident.base_qty);
    return ts;
}

u64 resident_base_cap(const OrderCore& own, u64 own_remaining, const AssetPair& resident) {
    if (own.pair.base == resident.base) return own_remaining;
    if (own.pair.base == resident.quote) {
        // own units are the resident's quote asset; price them into base
        return static_cast<u64>(static_cast<unsigned __int128>(own_remaining) *
                                resident.base_qty / resident.quote_qty);
    }
    return 0;
}

Validity LimitOrderBook::validate(const SignedOrder& o, SimTime now) const {
    const OrderCore& c = o.core;
    if (c.pair.base_qty == 0 || c.pair.quote_qty == 0) return Validity::nonpositive_quantity;
    if (c.pair.base == c.pair.quote) return Validity::same_asset;
    if (normalized_pair_id(c.pair) != pair_) return Validity::foreign_pair;
    if (c.timeout <= 0 || c.expires_at() <= now) return Validity::expired;
    if (entries_.count(c.id())) return Validity::duplicate;
    if (!o.verify_sig()) return Validity::bad_signature;
    return Validity::ok;
}

void LimitOrderBook::level_insert(Level& lv, const OrderId& id) const {
    const OrderCore& c = entries_.at(id).spec.order.core;
    auto pos = std::upper_bound(lv.begin(), lv.end(), id, [&](const OrderId& a, const OrderId& b) {
        const OrderCore& ca = a == id ? c : entries_.at(a).spec.order.core;
        const OrderCore& cb = b == id ? c : entries_.at(b).spec.order.core;
        if (ca.created_at != cb.created_at) return ca.created_at < cb.created_at;
        return ca.id() < cb.id();
    });
    lv.insert(pos, id);
}

Validity LimitOrderBook::insert(const SignedOrder& o, SimTime now) {
    Validity v = validate(o, now);
    if (v != Validity::ok) return v;
    Entry e;
    e.spec.order = o;
    e.view = normalize(o.core);
    OrderId id = o.core.id();
    entries_.emplace(id, std::move(e));
    auto& sidemap = entries_.at(id).view.bid ? bids_ : asks_;
    level_insert(sidemap[entries_.at(id).view.price], id);
    return Validity::ok;
}

bool LimitOrderBook::remove(const OrderId& id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) return false;
    auto& sidemap = it->second.view.bid ? bids_ : asks_;
    auto lvl = sidemap.find(it->second.view.price);
    if (lvl != sidemap.end()) {
        auto& lv = lvl->second;
        lv.erase(std::remove(lv.begin(), lv.end(), id), lv.end());
        if (lv.empty()) sidemap.erase(lvl);
    }
    entries_.erase(it);
    return true;
}

OrderSpec* LimitOrderBook::find(const OrderId& id) {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second.spec;
}

const OrderSpec* LimitOrderBook::find(const OrderId& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second.spec;
}

std::vector<MatchHit> LimitOrderBook::match(const OrderSpec& incoming, SimTime now) const {
    std::vector<MatchHit> hits;
    const OrderCore& in = incoming.order.core;
    if (normalized_pair_id(in.pair) != pair_) return hits;
    NormView vin = normalize(in);
    u64 in_rem = normalized_remaining(incoming);
    if (in_rem == 0) return hits;

    auto scan_level = [&](const Level& lv) {
        for (const OrderId& id : lv) {
            const Entry& e = entries_.at(id);
            if (e.spec.order.core.creator == in.creator) continue;
            if (e.spec.order.core.expires_at() <= now) continue;
            u64 rem = normalized_remaining(e.spec);
            if (rem == 0) continue;
            hits.push_back({id, rem < in_rem ? rem : in_rem});
        }
    };

    if (vin.bid) {
        for (auto it = asks_.begin(); it != asks_.end() && it->first <= vin.price; ++it)
            scan_level(it->second);
    } else {
        for (auto it = bids_.rbegin(); it != bids_.rend() && it->first >= vin.price; ++it)
            scan_level(it->second);
    }
    return hits;
}

std::vector<OrderId> LimitOrderBook::expire_due(SimTime now) {
    std::vector<OrderId> due;
    for (const auto& [id, e] : entries_)
        if (e.spec.order.core.expires_at() <= now) due.push_back(id);
    for (const OrderId& id : due) remove(id);
    return due;
}

std::vector<OrderId> LimitOrderBook::ids() const {
    std::vector<OrderId> out;
    for (const auto& [p, lv] : asks_) out.insert(out.end(), lv.begin(), lv.end());
    for (auto it = bids_.rbegin(); it != bids_.rend(); ++it)
        out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
}

std::string LimitOrderBook::snapshot() const {
    std::ostringstream os;
    auto line = [&](const char* tag, const Rational& price, const Level& lv) {
        os << tag << ' ' << price.str();
        for (const OrderId& id : lv)
            os << ' ' << id.str() << '@' << normalized_remaining(entries_.at(id).spec);
        os << '\n';
    };
    for (const auto& [p, lv] : asks_) line("ask", p, lv);
    for (auto it = bids_.rbegin(); it != bids_.rend(); ++it) line("bid", it->first, it->second);
    return os.str();
}

MatchPolicyRegistry::MatchPolicyRegistry() {
    fns_["price-time"] = [](const LimitOrderBook& b, const OrderSpec& in, SimTime now) {
        return b.match(in, now);
    };
}

MatchPolicyRegistry& MatchPolicyRegistry::instance() {
    static MatchPolicyRegistry reg;
    return reg;
}

bool MatchPolicyRegistry::add(const std::string& name, MatchPolicy fn) {
    return fns_.emplace(name, std::move(fn)).second;
}

const MatchPolicy* MatchPolicyRegistry::find(const std::string& name) const {
    auto it = fns_.find(name);
    return it == fns_.end() ? nullptr : &it->second;
}

std::vector<std::string> MatchPolicyRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [n, f] : fns_) out.push_back(n);
    return out;
}

bool MatchQueue::add(const SignedOrder& candidate, const PeerId& nominator, Rational quality,
                     SimTime now) {
    OrderId id = candidate.core.id();
    auto it = entries_.find(id);
    if (it != entries_.end()) {
        for (const auto& n : it->second.nominators)
            if (n == nominator) return false;
        it->second.nominators.push_back(nominator);
        return false;
    }
    MatchCandidate c;
    c.order = candidate;
    c.quality = quality;
    c.first_seen = now;
    c.nominators.push_back(nominator);
    entries_.emplace(id, std::move(c));
    return true;
}

const MatchCandidate* MatchQueue::peek() const {
    const MatchCandidate* best = nullptr;
    for (const auto& [id, c] : entries_) {
        if (!best) {
            best = &c;
            continue;
        }
        bool better;
        if (c.retries != best->retries) {
            better = c.retries < best->retries;
        } else if (c.quality != best->quality) {
            better = best->quality < c.quality;
        } else if (c.first_seen != best->first_seen) {
            better = c.first_seen < best->first_seen;
        } else {
            better = c.order.core.id() < best->order.core.id();
        }
        if (better) best = &c;
    }
    return best;
}

std::optional<MatchCandidate> MatchQueue::pop() {
    const MatchCandidate* best = peek();
    if (!best) return std::nullopt;
    MatchCandidate out = *best;
    entries_.erase(out.order.core.id());
    return out;
}

void MatchQueue::requeue(MatchCandidate c) {
    c.retries += 1;
    OrderId id = c.order.core.id();
    entries_.insert_or_assign(id, std::move(c));
}

bool MatchQueue::remove(const OrderId& id) { return entries_.erase(id) > 0; }

}  // namespace xdx::book
