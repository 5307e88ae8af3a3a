#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "oracles.hpp"
#include "orderbook.hpp"

using namespace xdx;
using namespace xdx::book;
using xdx::testing::test_keys;

namespace {

SignedOrder order_of(const crypto::Keypair& kp, u64 seq, bool is_offer, u64 bq, u64 qq,
                     SimTime created = 0, SimTime timeout = 3600_s) {
    SignedOrder o;
    o.core.creator = kp.pub;
    o.core.order_seq = seq;
    o.core.created_at = created;
    o.core.timeout = timeout;
    o.core.is_offer = is_offer;
    o.core.pair = {"alpha", "beta", bq, qq};
    o.sig = crypto::sign(kp, o.core.digest());
    return o;
}

SignedOrder flipped_order(const crypto::Keypair& kp, u64 seq, bool is_offer, u64 bq, u64 qq,
                          SimTime created = 0) {
    SignedOrder o;
    o.core.creator = kp.pub;
    o.core.order_seq = seq;
    o.core.created_at = created;
    o.core.timeout = 3600_s;
    o.core.is_offer = is_offer;
    o.core.pair = {"beta", "alpha", bq, qq};  // reversed orientation
    o.sig = crypto::sign(kp, o.core.digest());
    return o;
}

OrderSpec spec_of(const SignedOrder& o, u64 traded = 0, u64 reserved = 0) {
    OrderSpec s;
    s.order = o;
    s.traded = traded;
    s.reserved = reserved;
    return s;
}

// Naive reference: flat list of residents, filter + sort per the book's
// documented preference, min remaining on both sides.
std::vector<MatchHit> match_reference(const std::vector<OrderSpec>& residents,
                                      const OrderSpec& incoming, SimTime now) {
    std::vector<MatchHit> out;
    NormView vin = normalize(incoming.order.core);
    u64 in_rem = normalized_remaining(incoming);
    if (in_rem == 0) return out;
    std::vector<const OrderSpec*> live;
    for (const auto& s : residents) {
        if (s.order.core.creator == incoming.order.core.creator) continue;
        if (s.order.core.expires_at() <= now) continue;
        if (!compatible(incoming.order.core, s.order.core)) continue;
        if (normalized_remaining(s) == 0) continue;
        live.push_back(&s);
    }
    std::sort(live.begin(), live.end(), [&](const OrderSpec* a, const OrderSpec* b) {
        NormView va = normalize(a->order.core), vb = normalize(b->order.core);
        if (va.price != vb.price) return vin.bid ? va.price < vb.price : vb.price < va.price;
        if (a->order.core.created_at != b->order.core.created_at)
            return a->order.core.created_at < b->order.core.created_at;
        return a->order.core.id() < b->order.core.id();
    });
    for (const OrderSpec* s : live) {
        u64 rem = normalized_remaining(*s);
        out.push_back({s->order.core.id(), rem < in_rem ? rem : in_rem});
    }
    return out;
}

bool same_hits(const std::vector<MatchHit>& a, const std::vector<MatchHit>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].id != b[i].id || a[i].qty != b[i].qty) return false;
    return true;
}

}  // namespace

TEST_CASE("normalization folds both orientations into one book view") {
    auto ka = test_keys(1);
    SignedOrder offer = order_of(ka, 1, true, 2, 3);  // sells 2 alpha for 3 beta
    NormView v = normalize(offer.core);
    CHECK(v.pair_id == "alpha/beta");
    CHECK(!v.bid);
    CHECK(v.price == Rational(3, 2));

    // selling 3 beta for 2 alpha is buying alpha at the same price
    SignedOrder rev = flipped_order(ka, 2, true, 3, 2);
    NormView vr = normalize(rev.core);
    CHECK(vr.pair_id == "alpha/beta");
    CHECK(vr.bid);
    CHECK(vr.price == Rational(3, 2));

    CHECK(normalized_pair_id(offer.core.pair) == normalized_pair_id(rev.core.pair));

    // remaining of the flipped order converts into normalized base units
    OrderSpec srev = spec_of(rev);
    CHECK(normalized_remaining(srev) == 2);
    srev.reserved = 2;  // 1 of 3 beta left -> floor(1 * 2/3) = 0 alpha
    CHECK(normalized_remaining(srev) == 0);
}

TEST_CASE("compatibility crosses sides, pairs and prices") {
    auto ka = test_keys(1), kb = test_keys(2);
    SignedOrder offer = order_of(ka, 1, true, 2, 3);     // sells base at 3/2
    SignedOrder bid_hi = order_of(kb, 1, false, 4, 8);   // buys base at 2/1
    SignedOrder bid_lo = order_of(kb, 2, false, 4, 4);   // buys base at 1/1
    CHECK(compatible(offer.core, bid_hi.core));
    CHECK(compatible(bid_hi.core, offer.core));
    CHECK(!compatible(offer.core, bid_lo.core));
    CHECK(!compatible(offer.core, offer.core));
    CHECK(!compatible(bid_hi.core, bid_lo.core));   // same side

    SignedOrder own_clone = order_of(ka, 3, false, 4, 8);
    CHECK(!compatible(offer.core, own_clone.core));  // self trade

    SignedOrder other_pair = order_of(kb, 4, false, 4, 8);
    other_pair.core.pair.quote = "gamma";
    other_pair.sig = crypto::sign(kb, other_pair.core.digest());
    CHECK(!compatible(offer.core, other_pair.core));

    // a reversed-orientation buyer still crosses the canonical seller
    SignedOrder rev_buy = flipped_order(kb, 5, true, 3, 2);  // gives 3 beta, takes 2 alpha
    CHECK(compatible(offer.core, rev_buy.core));
    SignedOrder rev_same_side = flipped_order(kb, 6, false, 3, 2);  // takes beta = sells alpha
    CHECK(!compatible(offer.core, rev_same_side.core));
}

TEST_CASE("price advantage is signed toward the owner") {
    auto ka = test_keys(1), kb = test_keys(2);
    SignedOrder buyer = order_of(ka, 1, false, 1, 10);    // willing to pay 10
    SignedOrder cheap = order_of(kb, 1, true, 1, 8);      // asks 8
    SignedOrder rich = order_of(kb, 2, true, 1, 12);      // asks 12
    CHECK(price_advantage(buyer.core, cheap.core) == Rational(2, 1));
    CHECK(price_advantage(buyer.core, rich.core) == Rational(-2, 1));
    CHECK(price_advantage(cheap.core, buyer.core) == Rational(2, 1));   // seller gains 2
    CHECK(price_advantage(rich.core, buyer.core) == Rational(-2, 1));
}

TEST_CASE("trade size snaps to the resident price grid") {
    AssetPair coarse{"alpha", "beta", 3, 2};
    TradeSize t = size_trade(coarse, 3);
    CHECK(t.base_amount == 3);
    CHECK(t.quote_amount == 2);
    CHECK(size_trade(coarse, 2).base_amount == 0);   // below the grid step
    CHECK(size_trade(coarse, 5).base_amount == 3);   // snapped down

    AssetPair fine{"alpha", "beta", 1000000, 1500000};  // step 2
    TradeSize f = size_trade(fine, 999999);
    CHECK(f.base_amount == 999998);
    CHECK(f.quote_amount == 1499997);
    CHECK(size_trade(fine, 2000000).base_amount == 1000000);  // capped at resident size

    AssetPair degenerate{"alpha", "beta", 0, 5};
    CHECK(size_trade(degenerate, 10).base_amount == 0);
}

TEST_CASE("resident base cap converts the initiator's remainder") {
    auto ka = test_keys(1);
    AssetPair resident{"alpha", "beta", 2, 3};
    SignedOrder same = order_of(ka, 1, false, 10, 15);
    CHECK(resident_base_cap(same.core, 7, resident) == 7);
    SignedOrder rev = flipped_order(ka, 2, true, 9, 6);  // base asset is beta
    CHECK(resident_base_cap(rev.core, 3, resident) == 2);  // 3 beta -> 2 alpha at 3/2
    CHECK(resident_base_cap(rev.core, 2, resident) == 1);  // floor(2 * 2/3)
    SignedOrder foreign = order_of(ka, 3, false, 1, 1);
    foreign.core.pair.base = "gamma";
    CHECK(resident_base_cap(foreign.core, 5, resident) == 0);
}

TEST_CASE("book validates and rejects with named reasons") {
    auto ka = test_keys(1);
    LimitOrderBook bk("alpha/beta");
    SignedOrder good = order_of(ka, 1, true, 2, 3);
    CHECK(bk.validate(good, 0) == Validity::ok);
    CHECK(bk.insert(good, 0) == Validity::ok);
    CHECK(bk.insert(good, 0) == Validity::duplicate);

    SignedOrder zero = order_of(ka, 2, true, 0, 3);
    CHECK(bk.insert(zero, 0) == Validity::nonpositive_quantity);

    SignedOrder same = order_of(ka, 3, true, 2, 3);
    same.core.pair.quote = "alpha";
    same.sig = crypto::sign(ka, same.core.digest());
    CHECK(bk.insert(same, 0) == Validity::same_asset);

    SignedOrder late = order_of(ka, 4, true, 2, 3, 0, 10_s);
    CHECK(bk.insert(late, 11_s) == Validity::expired);

    SignedOrder forged = order_of(ka, 5, true, 2, 3);
    forged.core.pair.base_qty = 4;  // tamper after signing
    CHECK(bk.insert(forged, 0) == Validity::bad_signature);

    SignedOrder alien = order_of(ka, 6, true, 2, 3);
    alien.core.pair.base = "gamma";
    alien.sig = crypto::sign(ka, alien.core.digest());
    CHECK(bk.insert(alien, 0) == Validity::foreign_pair);

    CHECK(bk.size() == 1);
    CHECK(validity_name(Validity::nonpositive_quantity) == std::string("nonpositive-quantity"));
}

TEST_CASE("match walks price levels best-first with FIFO inside") {
    auto ka = test_keys(1), kb = test_keys(2), kc = test_keys(3), kd = test_keys(4);
    LimitOrderBook bk("alpha/beta");
    // two asks at 1/1 (older first), one ask at 3/2, one bid that must not appear
    SignedOrder a_old = order_of(ka, 1, true, 4, 4, 100);
    SignedOrder a_new = order_of(kb, 1, true, 6, 6, 200);
    SignedOrder a_dear = order_of(ka, 2, true, 2, 3, 50);
    SignedOrder b_other = order_of(kb, 2, false, 5, 5, 10);
    REQUIRE(bk.insert(a_old, 0) == Validity::ok);
    REQUIRE(bk.insert(a_new, 0) == Validity::ok);
    REQUIRE(bk.insert(a_dear, 0) == Validity::ok);
    REQUIRE(bk.insert(b_other, 0) == Validity::ok);

    SignedOrder probe = order_of(kc, 1, false, 5, 8, 300);  // bid at 8/5, crosses both levels
    auto hits = bk.match(spec_of(probe), 300);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].id == a_old.core.id());
    CHECK(hits[0].qty == 4);
    CHECK(hits[1].id == a_new.core.id());
    CHECK(hits[1].qty == 5);  // capped by the probe's own 5
    CHECK(hits[2].id == a_dear.core.id());
    CHECK(hits[2].qty == 2);

    SignedOrder cheap_probe = order_of(kc, 2, false, 9, 9, 300);  // bid at 1/1 only
    auto low = bk.match(spec_of(cheap_probe), 300);
    REQUIRE(low.size() == 2);
    CHECK(low[0].id == a_old.core.id());
    CHECK(low[1].id == a_new.core.id());

    // an incoming ask scans bids from the top
    SignedOrder sell_probe = order_of(kd, 1, true, 3, 3, 300);
    auto sells = bk.match(spec_of(sell_probe), 300);
    REQUIRE(sells.size() == 1);
    CHECK(sells[0].id == b_other.core.id());
    CHECK(sells[0].qty == 3);

    // the probe's creator never matches itself
    SignedOrder own_probe = order_of(ka, 3, false, 9, 14, 300);
    auto own = bk.match(spec_of(own_probe), 300);
    REQUIRE(own.size() == 1);
    CHECK(own[0].id == a_new.core.id());

    // match must not mutate
    CHECK(bk.size() == 4);
    CHECK(bk.find(a_old.core.id())->remaining() == 4);
}

TEST_CASE("fill bookkeeping caps matchable quantity") {
    auto ka = test_keys(1), kb = test_keys(2);
    LimitOrderBook bk("alpha/beta");
    SignedOrder ask = order_of(ka, 1, true, 10, 10);
    REQUIRE(bk.insert(ask, 0) == Validity::ok);
    OrderSpec* s = bk.find(ask.core.id());
    REQUIRE(s != nullptr);
    s->traded = 4;
    s->reserved = 3;
    CHECK(s->remaining() == 3);

    SignedOrder probe = order_of(kb, 1, false, 8, 8);
    auto hits = bk.match(spec_of(probe), 0);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].qty == 3);

    s->reserved = 6;  // fully taken
    CHECK(s->remaining() == 0);
    CHECK(bk.match(spec_of(probe), 0).empty());

    // a partially used probe is capped by its own remainder too
    s->reserved = 0;
    auto part = bk.match(spec_of(probe, 6, 1), 0);
    REQUIRE(part.size() == 1);
    CHECK(part[0].qty == 1);
}

TEST_CASE("remove and expiry keep levels tidy") {
    auto ka = test_keys(1), kb = test_keys(2);
    LimitOrderBook bk("alpha/beta");
    SignedOrder keep = order_of(ka, 1, true, 2, 2, 0, 3600_s);
    SignedOrder fleet = order_of(kb, 1, true, 3, 3, 0, 5_s);
    REQUIRE(bk.insert(keep, 0) == Validity::ok);
    REQUIRE(bk.insert(fleet, 0) == Validity::ok);
    CHECK(bk.size() == 2);

    OrderId ghost = OrderId{test_keys(9).pub, 7};
    CHECK(!bk.remove(ghost));  // unknown id is a signalled no-op

    auto due = bk.expire_due(6_s);
    REQUIRE(due.size() == 1);
    CHECK(due[0] == fleet.core.id());
    CHECK(bk.size() == 1);
    CHECK(bk.find(fleet.core.id()) == nullptr);

    CHECK(bk.remove(keep.core.id()));
    CHECK(bk.empty());
    CHECK(bk.snapshot().empty());
}

TEST_CASE("snapshot lists levels asks-first with remainders") {
    auto ka = test_keys(1), kb = test_keys(2);
    LimitOrderBook bk("alpha/beta");
    SignedOrder ask = order_of(ka, 1, true, 2, 3, 10);
    SignedOrder bid = order_of(kb, 1, false, 4, 4, 20);
    SignedOrder bid2 = order_of(ka, 2, false, 6, 6, 30);
    REQUIRE(bk.insert(ask, 0) == Validity::ok);
    REQUIRE(bk.insert(bid, 0) == Validity::ok);
    REQUIRE(bk.insert(bid2, 0) == Validity::ok);
    bk.find(bid.core.id())->traded = 1;

    std::string expect = "ask 3/2 " + ask.core.id().str() + "@2\n" +
                         "bid 1/1 " + bid.core.id().str() + "@3 " + bid2.core.id().str() + "@6\n";
    CHECK(bk.snapshot() == expect);

    auto ids = bk.ids();
    REQUIRE(ids.size() == 3);
    CHECK(ids[0] == ask.core.id());
    CHECK(ids[1] == bid.core.id());
    CHECK(ids[2] == bid2.core.id());
}

TEST_CASE("reversed-orientation orders meet canonical ones in the same book") {
    auto ka = test_keys(1), kb = test_keys(2);
    LimitOrderBook bk("alpha/beta");
    SignedOrder offer = order_of(ka, 1, true, 2, 3);        // sells 2 alpha at 3/2
    SignedOrder rev_buy = flipped_order(kb, 1, true, 3, 2); // gives 3 beta for 2 alpha
    REQUIRE(bk.insert(offer, 0) == Validity::ok);
    CHECK(bk.insert(rev_buy, 0) == Validity::ok);

    // the reversed order sits on the bid side; a fresh canonical ask meets it
    auto kc = test_keys(3);
    SignedOrder probe = order_of(kc, 1, true, 2, 3);
    auto hits = bk.match(spec_of(probe), 0);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].id == rev_buy.core.id());
    CHECK(hits[0].qty == 2);  // 3 beta converts to 2 alpha at 3/2
}

TEST_CASE("match policy registry serves the built-in and rejects strangers") {
    auto& reg = MatchPolicyRegistry::instance();
    const MatchPolicy* pt = reg.find("price-time");
    REQUIRE(pt != nullptr);
    CHECK(reg.find("mystery") == nullptr);

    auto ka = test_keys(1), kb = test_keys(2);
    LimitOrderBook bk("alpha/beta");
    SignedOrder ask = order_of(ka, 1, true, 2, 2);
    REQUIRE(bk.insert(ask, 0) == Validity::ok);
    SignedOrder probe = order_of(kb, 1, false, 2, 2);
    auto via_policy = (*pt)(bk, spec_of(probe), 0);
    auto direct = bk.match(spec_of(probe), 0);
    CHECK(same_hits(via_policy, direct));

    std::vector<std::string> names = reg.names();
    CHECK(std::find(names.begin(), names.end(), "price-time") != names.end());
}

TEST_CASE("book equals the flat-list reference over random operations") {
    Rng rng(0x0b00c5eed);
    std::vector<crypto::Keypair> keys;
    for (u8 i = 1; i <= 6; ++i) keys.push_back(test_keys(i));

    for (int round = 0; round < 30; ++round) {
        LimitOrderBook bk("alpha/beta");
        std::vector<OrderSpec> model;
        u64 next_seq = 1;
        SimTime now = 0;
        int ops = static_cast<int>(rng.range(20, 200));
        for (int op = 0; op < ops; ++op) {
            now += static_cast<SimTime>(rng.range(0, 500)) * 1_ms;
            u64 dice = rng.range(0, 99);
            if (dice < 45) {
                // insert: sometimes flipped orientation, occasional short expiry
                const auto& kp = keys[rng.range(0, keys.size() - 1)];
                bool offer = rng.range(0, 1) == 0;
                u64 bq = rng.range(1, 12);
                u64 qq = rng.range(1, 12);
                SimTime tmo = rng.range(0, 9) == 0 ? 2_s : 3600_s;
                SignedOrder o;
                bool flip = rng.range(0, 3) == 0;
                o = flip ? flipped_order(kp, next_seq, offer, bq, qq, now)
                         : order_of(kp, next_seq, offer, bq, qq, now, tmo);
                if (flip) {
                    o.core.timeout = tmo;
                    o.sig = crypto::sign(kp, o.core.digest());
                }
                ++next_seq;
                Validity v = bk.insert(o, now);
                if (v == Validity::ok) model.push_back(spec_of(o));
            } else if (dice < 55 && !model.empty()) {
                // remove a known resident
                size_t pick = rng.range(0, model.size() - 1);
                OrderId id = model[pick].order.core.id();
                CHECK(bk.remove(id));
                model.erase(model.begin() + static_cast<long>(pick));
            } else if (dice < 60) {
                // remove an unknown id: both sides shrug
                OrderId ghost{keys[0].pub, static_cast<u64>(999980 + rng.range(0, 9))};
                CHECK(!bk.remove(ghost));
            } else if (dice < 72 && !model.empty()) {
                // mutate fill state on a random resident
                size_t pick = rng.range(0, model.size() - 1);
                OrderSpec& m = model[pick];
                u64 total = m.order.core.pair.base_qty;
                u64 t = rng.range(0, total);
                u64 r = rng.range(0, total - t);
                m.traded = t;
                m.reserved = r;
                OrderSpec* s = bk.find(m.order.core.id());
                REQUIRE(s != nullptr);
                s->traded = t;
                s->reserved = r;
            } else if (dice < 78) {
                // expiry sweep
                auto due = bk.expire_due(now);
                for (const OrderId& id : due) {
                    auto it = std::find_if(model.begin(), model.end(), [&](const OrderSpec& s) {
                        return s.order.core.id() == id;
                    });
                    REQUIRE(it != model.end());
                    CHECK(it->order.core.expires_at() <= now);
                    model.erase(it);
                }
                for (const auto& s : model) CHECK(s.order.core.expires_at() > now);
            } else {
                // probe: match output must equal the reference exactly
                const auto& kp = keys[rng.range(0, keys.size() - 1)];
                bool offer = rng.range(0, 1) == 0;
                bool flip = rng.range(0, 3) == 0;
                u64 bq = rng.range(1, 12);
                u64 qq = rng.range(1, 12);
                SignedOrder probe = flip ? flipped_order(kp, 500000 + next_seq, offer, bq, qq, now)
                                         : order_of(kp, 500000 + next_seq, offer, bq, qq, now);
                ++next_seq;
                u64 total = probe.core.pair.base_qty;
                u64 t = rng.range(0, total);
                OrderSpec ps = spec_of(probe, t, rng.range(0, total - t));
                CHECK(same_hits(bk.match(ps, now), match_reference(model, ps, now)));
            }
            CHECK(bk.size() == model.size());
        }
    }
}

TEST_CASE("match queue collapses duplicate nominations") {
    auto ka = test_keys(1), kb = test_keys(2);
    auto m1 = test_keys(11), m2 = test_keys(12);
    MatchQueue q;
    SignedOrder cand = order_of(ka, 1, true, 2, 3);
    CHECK(q.add(cand, m1.pub, Rational(1, 2), 100));
    CHECK(!q.add(cand, m2.pub, Rational(1, 2), 200));
    CHECK(!q.add(cand, m1.pub, Rational(1, 2), 300));  // same nominator repeats
    CHECK(q.size() == 1);
    const MatchCandidate* c = q.peek();
    REQUIRE(c != nullptr);
    CHECK(c->nominators.size() == 2);
    CHECK(c->first_seen == 100);

    SignedOrder other = order_of(kb, 1, true, 2, 3);
    CHECK(q.add(other, m1.pub, Rational(0, 1), 150));
    CHECK(q.size() == 2);
}

TEST_CASE("match queue pops by retries, quality, age, id") {
    Rng rng(77);
    MatchQueue q;
    struct Ref {
        OrderId id;
        u32 retries;
        Rational quality;
        SimTime seen;
    };
    std::vector<Ref> refs;
    auto nominator = test_keys(20);
    for (int i = 0; i < 40; ++i) {
        auto kp = test_keys(static_cast<u8>(30 + (i % 8)));
        SignedOrder cand = order_of(kp, static_cast<u64>(1000 + i), true,
                                    rng.range(1, 9), rng.range(1, 9), 0);
        Rational quality(static_cast<i64>(rng.range(0, 6)) - 3, 1 + static_cast<i64>(rng.range(0, 2)));
        SimTime seen = static_cast<SimTime>(rng.range(0, 5000));
        if (!q.add(cand, nominator.pub, quality, seen)) continue;
        refs.push_back({cand.core.id(), 0, quality, seen});
    }
    // randomly requeue some to bump retry counts
    for (int i = 0; i < 10 && !refs.empty(); ++i) {
        size_t pick = rng.range(0, refs.size() - 1);
        auto popped = q.pop();
        REQUIRE(popped.has_value());
        // find and drop the popped ref, then requeue a random other candidate
        auto it = std::find_if(refs.begin(), refs.end(),
                               [&](const Ref& r) { return r.id == popped->order.core.id(); });
        REQUIRE(it != refs.end());
        Ref back = *it;
        back.retries = popped->retries + 1;
        refs.erase(it);
        MatchCandidate c = *popped;
        q.requeue(c);
        refs.push_back(back);
        (void)pick;
    }
    // drain: order must equal the reference sort
    std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
        if (a.retries != b.retries) return a.retries < b.retries;
        if (a.quality != b.quality) return b.quality < a.quality;
        if (a.seen != b.seen) return a.seen < b.seen;
        return a.id < b.id;
    });
    for (const Ref& r : refs) {
        auto got = q.pop();
        REQUIRE(got.has_value());
        CHECK(got->order.core.id() == r.id);
        CHECK(got->retries == r.retries);
    }
    CHECK(q.empty());
}

TEST_CASE("requeued candidates fall behind fresh ones") {
    auto ka = test_keys(1), kb = test_keys(2);
    auto m = test_keys(20);
    MatchQueue q;
    SignedOrder first = order_of(ka, 1, true, 1, 1);
    SignedOrder second = order_of(kb, 1, true, 1, 2);  // worse price
    q.add(first, m.pub, Rational(2, 1), 0);
    auto popped = q.pop();
    REQUIRE(popped.has_value());
    q.requeue(*popped);                       // retries = 1 now
    q.add(second, m.pub, Rational(-1, 1), 5); // fresh but low quality
    auto next = q.pop();
    REQUIRE(next.has_value());
    CHECK(next->order.core.id() == second.core.id());  // fresh beats retried
    auto last = q.pop();
    REQUIRE(last.has_value());
    CHECK(last->order.core.id() == first.core.id());
    CHECK(last->retries == 1);
}
