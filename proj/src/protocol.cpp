#include "protocol.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace xdx::proto {

namespace {

std::string kv_order(const OrderId& id) { return id.str(); }

std::string q(const std::string& s) { return s; }  // asset names are token-safe

}  // namespace

const char* adversary_name(Adversary a) {
    switch (a) {
        case Adversary::none: return "none";
        case Adversary::payment_withholder: return "payment-withholder";
        case Adversary::agreement_withholder: return "agreement-withholder";
        case Adversary::biased_matchmaker: return "biased-matchmaker";
        case Adversary::negotiation_staller: return "negotiation-staller";
    }
    return "none";
}

std::optional<Adversary> adversary_from_name(const std::string& s) {
    for (Adversary a : {Adversary::none, Adversary::payment_withholder,
                        Adversary::agreement_withholder, Adversary::biased_matchmaker,
                        Adversary::negotiation_staller}) {
        if (s == adversary_name(a)) return a;
    }
    return std::nullopt;
}

Peer::Peer(crypto::Keypair keys, PolicyConfig policy, bool matchmaker,
           std::vector<PeerId> matchmakers, std::string match_policy, PeerEnv* env)
    : keys_(std::move(keys)),
      policy_(policy),
      matchmaker_(matchmaker),
      matchmakers_(std::move(matchmakers)),
      env_(env) {
    match_policy_ = book::MatchPolicyRegistry::instance().find(match_policy);
    if (!match_policy_) throw std::invalid_argument("unknown match policy: " + match_policy);
    corr_hi_ = (u64(keys_.pub[0]) << 56) | (u64(keys_.pub[1]) << 48) |
               (u64(keys_.pub[2]) << 40) | (u64(keys_.pub[3]) << 32);
    retry_rng_ = Rng(corr_hi_);
}

// ---- plumbing -----------------------------------------------------------------

SimTime Peer::backoff_deadline() {
    SimTime b = policy_.requeue_backoff;
    return env_->now() + b / 2 + retry_rng_.range(0, b);
}

u64 Peer::arm_timer(TimerTag tag, SimTime at) {
    u64 h = ++timer_seq_;
    timers_[h] = tag;
    env_->set_timer(h, at);
    return h;
}

void Peer::drop_timer(u64& handle) {
    if (!handle) return;
    env_->cancel_timer(handle);
    timers_.erase(handle);
    handle = 0;
}

Peer::Trade* Peer::trade_of(const PeerId& other, u64 corr) {
    auto it = trades_.find({other, corr});
    return it == trades_.end() ? nullptr : &it->second;
}

Peer::OwnOrder* Peer::own_of(const OrderId& id) {
    auto it = own_orders_.find(id);
    return it == own_orders_.end() ? nullptr : &it->second;
}

bool Peer::restrict_refuses(const PeerId& subject) const {
    if (policy_.restrict_t == 0 || policy_.at_own_risk) return false;
    u32 held = ledger::audit_responsibilities(env_->audit_view(), subject, env_->chain_query());
    return held >= policy_.restrict_t;
}

u64 Peer::own_units(const msg::TradeTerms& terms, const OrderCore& own) const {
    if (own.pair.base == terms.base) return terms.base_amount;
    if (own.pair.base == terms.quote) return terms.quote_amount;
    return 0;
}

// ---- order entry --------------------------------------------------------------

OrderId Peer::create_order(const AssetPair& pair, bool is_offer, SimTime timeout) {
    OrderCore core;
    core.creator = id();
    core.order_seq = ++order_seq_;
    core.created_at = env_->now();
    core.timeout = timeout > 0 ? timeout : policy_.order_timeout;
    core.is_offer = is_offer;
    core.pair = pair;

    SignedOrder so{core, crypto::sign(keys_, core.digest())};
    env_->publish(ledger::append_unilateral(store_, keys_, so));

    OwnOrder o;
    o.order = so;
    OrderId oid = core.id();
    o.expiry_timer = arm_timer({TimerTag::Kind::order_expiry, oid, {}, 0}, core.expires_at());
    own_orders_.emplace(oid, std::move(o));

    trace("order_created", "order=" + oid.str() + " side=" + (is_offer ? "offer" : "request") +
                               " base=" + q(pair.base) + " quote=" + q(pair.quote) +
                               " base_qty=" + std::to_string(pair.base_qty) +
                               " quote_qty=" + std::to_string(pair.quote_qty) +
                               " timeout_us=" + std::to_string(core.timeout));

    msg::MsgOrder body{so};
    for (const PeerId& mm : matchmakers_) send_to(mm, msg::make_envelope(keys_, 0, body));
    return oid;
}

void Peer::cancel_order(const OrderId& oid) {
    OwnOrder* o = own_of(oid);
    if (!o || o->state != book::OrderState::active) return;
    o->state = book::OrderState::cancelled;
    drop_timer(o->expiry_timer);
    drop_timer(o->window_timer);
    drop_timer(o->backoff_timer);
    trace("order_cancelled", "order=" + oid.str());
    msg::MsgCancelOrder body{oid};
    for (const PeerId& mm : matchmakers_) send_to(mm, msg::make_envelope(keys_, 0, body));
}

// ---- dispatch -----------------------------------------------------------------

void Peer::on_message(const msg::Envelope& env) {
    if (!env.verify()) {
        trace("protocol_reject", "reason=bad-signature from=" + hex8(env.sender));
        return;
    }
    const PeerId& from = env.sender;
    u64 corr = env.correlation;
    switch (env.kind()) {
        case msg::MsgKind::order: return on_order(from, std::get<msg::MsgOrder>(env.body));
        case msg::MsgKind::cancel_order:
            return on_cancel_order(from, std::get<msg::MsgCancelOrder>(env.body));
        case msg::MsgKind::match: return on_match(from, std::get<msg::MsgMatch>(env.body));
        case msg::MsgKind::reject_match:
            return on_reject_match(from, std::get<msg::MsgRejectMatch>(env.body));
        case msg::MsgKind::trade_proposal:
            return on_trade_proposal(from, corr, std::get<msg::MsgTradeProposal>(env.body));
        case msg::MsgKind::negotiate:
            return on_negotiate(from, corr, std::get<msg::MsgNegotiate>(env.body));
        case msg::MsgKind::trade_accept:
            return on_trade_accept(from, corr, std::get<msg::MsgTradeAccept>(env.body));
        case msg::MsgKind::trade_reject:
            return on_trade_reject(from, corr, std::get<msg::MsgTradeReject>(env.body));
        case msg::MsgKind::payment:
            return on_payment(from, corr, std::get<msg::MsgPayment>(env.body));
        case msg::MsgKind::partial_agreement:
            return on_partial_agreement(from, corr, std::get<msg::MsgPartialAgreement>(env.body));
        case msg::MsgKind::agreement:
            return on_agreement(from, corr, std::get<msg::MsgAgreement>(env.body));
        case msg::MsgKind::partial_trade_done:
            return on_partial_trade_done(from, corr,
                                         std::get<msg::MsgPartialTradeDone>(env.body));
        case msg::MsgKind::trade_done:
            return on_trade_done(from, corr, std::get<msg::MsgTradeDone>(env.body));
    }
}

// ---- matchmaker role ----------------------------------------------------------

void Peer::on_order(const PeerId& from, const msg::MsgOrder& m) {
    if (!matchmaker_) {
        trace("protocol_reject", "reason=not-matchmaker kind=order from=" + hex8(from));
        return;
    }
    const OrderCore& core = m.order.core;
    OrderId oid = core.id();
    if (mm_.states.count(oid)) return;  // replay of a known order

    std::string pid = book::normalized_pair_id(core.pair);
    auto [it, fresh] = mm_.books.try_emplace(pid, pid);
    book::LimitOrderBook& bk = it->second;
    book::Validity v = bk.insert(m.order, env_->now());
    if (v != book::Validity::ok) {
        trace("protocol_reject", std::string("reason=") + book::validity_name(v) +
                                     " kind=order order=" + oid.str());
        if (fresh && bk.empty()) mm_.books.erase(it);
        return;
    }
    mm_.states[oid] = book::OrderState::active;
    mm_.expiry_timers[oid] =
        arm_timer({TimerTag::Kind::mm_order_expiry, oid, {}, 0}, core.expires_at());

    auto hits = (*match_policy_)(bk, *bk.find(oid), env_->now());
    nominate(oid, hits, bk);
}

void Peer::nominate(const OrderId& target, const std::vector<book::MatchHit>& hits,
                    book::LimitOrderBook& bk) {
    // One fresh candidate per call; the next alternative flows only after a
    // RejectMatch. Sending the whole hit list at once makes traffic grow with
    // book depth and deep books melt down in a nominate/reject feedback loop.
    std::set<OrderId>& sent = mm_.nominated[target];
    const book::MatchHit* pick = nullptr;
    if (adversary_ == Adversary::biased_matchmaker) {
        for (auto it = hits.rbegin(); it != hits.rend() && !pick; ++it)
            if (!sent.count(it->id)) pick = &*it;
    } else {
        for (const auto& h : hits) {
            if (!sent.count(h.id)) {
                pick = &h;
                break;
            }
        }
    }
    if (!pick) return;
    const book::OrderSpec* cand = bk.find(pick->id);
    if (!cand) return;
    sent.insert(pick->id);
    msg::MsgMatch body{target, cand->order, pick->qty};
    send_to(target.creator, msg::make_envelope(keys_, 0, body));
}

void Peer::mm_rematch(const OrderId& target) {
    auto st = mm_.states.find(target);
    if (st == mm_.states.end() || st->second != book::OrderState::active) return;
    for (auto& [pid, bk] : mm_.books) {
        if (const book::OrderSpec* spec = bk.find(target)) {
            auto hits = (*match_policy_)(bk, *spec, env_->now());
            nominate(target, hits, bk);
            return;
        }
    }
}

void Peer::mm_retire(const OrderId& oid, book::OrderState state) {
    auto st = mm_.states.find(oid);
    if (st == mm_.states.end() || st->second != book::OrderState::active) return;
    st->second = state;
    for (auto& [pid, bk] : mm_.books) {
        if (bk.remove(oid)) break;
    }
    mm_.nominated.erase(oid);
    auto t = mm_.expiry_timers.find(oid);
    if (t != mm_.expiry_timers.end()) {
        drop_timer(t->second);
        mm_.expiry_timers.erase(t);
    }
}

void Peer::on_cancel_order(const PeerId& from, const msg::MsgCancelOrder& m) {
    if (!matchmaker_) return;
    if (m.id.creator != from) {
        trace("protocol_reject", "reason=not-creator kind=cancel-order from=" + hex8(from));
        return;
    }
    mm_retire(m.id, book::OrderState::cancelled);
}

void Peer::on_reject_match(const PeerId& from, const msg::MsgRejectMatch& m) {
    if (!matchmaker_) return;
    if (m.own_order.creator != from) {
        trace("protocol_reject", "reason=not-creator kind=reject-match from=" + hex8(from));
        return;
    }
    if (!m.candidate) {
        // the reporter's own order is dead; drop it from the book
        book::OrderState s = m.reason == msg::RejectReason::expired ? book::OrderState::expired
                                                                    : book::OrderState::cancelled;
        mm_retire(m.own_order, s);
        return;
    }
    // a nomination failed; leave the candidate excluded for this target only
    // and offer whatever else crosses now
    mm_.nominated[m.own_order].insert(*m.candidate);
    mm_rematch(m.own_order);
}

void Peer::apply_trade_done_to_books(const ledger::BlockPartition& done,
                                     const ledger::BlockPartition& agreement) {
    Hash dh = done.hash();
    if (mm_.seen_dones.count(dh)) return;
    if (!done.sig_valid() || !agreement.sig_valid()) return;
    const auto* dp = std::get_if<ledger::TradeDonePayload>(&done.payload);
    const auto* ap = std::get_if<ledger::AgreementPayload>(&agreement.payload);
    if (!dp || !ap) return;
    BlockRef aref = agreement.ref();
    if (dp->trade.creator != aref.creator || dp->trade.seq != aref.seq ||
        dp->trade.hash != aref.hash)
        return;
    mm_.seen_dones.insert(dh);

    AssetPair pr{ap->base, ap->quote, 1, 1};
    std::string pid = book::normalized_pair_id(pr);
    auto bit = mm_.books.find(pid);
    if (bit == mm_.books.end()) return;
    book::LimitOrderBook& bk = bit->second;

    for (const OrderId& oid : {ap->initiator_order, ap->counterparty_order}) {
        book::OrderSpec* spec = bk.find(oid);
        if (!spec) continue;
        u64 units = spec->core().pair.base == ap->base ? ap->base_amount : ap->quote_amount;
        spec->traded += units;
        if (spec->remaining() == 0) mm_retire(oid, book::OrderState::fulfilled);
    }
}

// ---- trader: match intake and counterparty selection ----------------------------

void Peer::on_match(const PeerId& from, const msg::MsgMatch& m) {
    OwnOrder* o = own_of(m.target);
    const OrderCore& cand = m.candidate.core;
    auto bounce = [&](msg::RejectReason r, bool include_candidate) {
        msg::MsgRejectMatch body{m.target,
                                 include_candidate ? std::optional<OrderId>(cand.id())
                                                   : std::nullopt,
                                 r};
        send_to(from, msg::make_envelope(keys_, 0, body));
    };
    if (!o) return bounce(msg::RejectReason::unknown_order, false);
    if (o->state != book::OrderState::active) {
        // fulfilled and cancelled orders read the same from outside
        return bounce(o->state == book::OrderState::expired ? msg::RejectReason::expired
                                                            : msg::RejectReason::cancelled,
                      false);
    }
    if (cand.creator == id() || !m.candidate.verify_sig() ||
        !book::compatible(o->order.core, cand)) {
        return bounce(msg::RejectReason::malformed, true);
    }
    if (cand.expires_at() <= env_->now()) return bounce(msg::RejectReason::expired, true);

    Rational quality = book::price_advantage(o->order.core, cand);
    o->mpq.add(m.candidate, from, quality, env_->now());

    if (!o->window_passed) {
        if (!o->window_armed) {
            o->window_armed = true;
            o->window_timer = arm_timer({TimerTag::Kind::match_window, m.target, {}, 0},
                                        env_->now() + policy_.match_window);
        }
        return;
    }
    if (!o->negotiating) select_trader(*o);
}

void Peer::send_reject_match(const OwnOrder& o, const book::MatchCandidate& cand,
                             msg::RejectReason reason) {
    msg::MsgRejectMatch body{o.order.core.id(), cand.order.core.id(), reason};
    for (const PeerId& mm : cand.nominators) send_to(mm, msg::make_envelope(keys_, 0, body));
}

void Peer::select_trader(OwnOrder& o) {
    if (o.negotiating || o.state != book::OrderState::active || !o.window_passed) return;
    while (true) {
        if (o.remaining() == 0) return;
        const book::MatchCandidate* head = o.mpq.peek();
        if (!head) return;
        // any failure pauses the order, fresh nominations included; otherwise a
        // crowded book gets hammered at network rate instead of backoff rate
        if (env_->now() < o.backoff_until) {
            if (!o.backoff_timer) {
                o.backoff_timer = arm_timer({TimerTag::Kind::requeue_backoff,
                                             o.order.core.id(), {}, 0},
                                            o.backoff_until);
            }
            return;
        }
        book::MatchCandidate cand = *o.mpq.pop();
        const OrderCore& cc = cand.order.core;

        if (o.fail_counts[cc.id()] >= policy_.candidate_attempts) continue;
        if (cc.expires_at() <= env_->now()) {
            send_reject_match(o, cand, msg::RejectReason::expired);
            continue;
        }
        if (restrict_refuses(cc.creator)) {
            o.fail_counts[cc.id()]++;
            send_reject_match(o, cand, msg::RejectReason::responsibility_held);
            o.backoff_until = backoff_deadline();
            o.mpq.requeue(std::move(cand));
            continue;
        }
        u64 want = book::resident_base_cap(o.order.core, o.remaining(), cc.pair);
        book::TradeSize ts = book::size_trade(cc.pair, want);
        if (ts.base_amount == 0) {
            // remainder too small at this price; candidate is of no further use
            send_reject_match(o, cand, msg::RejectReason::negotiation_failed);
            continue;
        }
        start_attempt(o, std::move(cand));
        return;
    }
}

void Peer::start_attempt(OwnOrder& o, book::MatchCandidate cand) {
    const OrderCore& cc = cand.order.core;
    u64 want = book::resident_base_cap(o.order.core, o.remaining(), cc.pair);
    book::TradeSize ts = book::size_trade(cc.pair, want);

    msg::TradeTerms terms;
    terms.initiator_order = o.order;
    terms.target = cc.id();
    terms.base = cc.pair.base;
    terms.quote = cc.pair.quote;
    terms.base_amount = ts.base_amount;
    terms.quote_amount = ts.quote_amount;
    terms.n = policy_.incset_n;

    u64 units = own_units(terms, o.order.core);
    o.reserved += units;
    o.negotiating = true;
    o.last_attempt = env_->now();

    u64 corr = fresh_corr();
    Request req;
    req.to = cc.creator;
    req.own_order = o.order.core.id();
    req.cand = std::move(cand);
    req.terms = terms;
    req.reserved_qty = units;
    req.env = msg::make_envelope(keys_, corr, msg::MsgTradeProposal{terms});
    req.expiry_timer = arm_timer({TimerTag::Kind::request_expiry, {}, req.to, corr},
                                 env_->now() + policy_.proposal_timeout);
    req.retransmit_timer = arm_timer({TimerTag::Kind::request_retransmit, {}, req.to, corr},
                                     env_->now() + policy_.retransmit_every);
    send_to(req.to, req.env);
    requests_.emplace(corr, std::move(req));
}

void Peer::fail_attempt(u64 corr, msg::RejectReason reason, bool drop_candidate) {
    auto it = requests_.find(corr);
    if (it == requests_.end()) return;
    Request req = std::move(it->second);
    requests_.erase(it);
    drop_timer(req.expiry_timer);
    drop_timer(req.retransmit_timer);

    OwnOrder* o = own_of(req.own_order);
    if (!o) return;
    release_reservation(req.own_order, req.reserved_qty);
    o->negotiating = false;

    OrderId cid = req.cand.order.core.id();
    o->fail_counts[cid]++;
    send_reject_match(*o, req.cand, reason);
    if (!drop_candidate && o->fail_counts[cid] < policy_.candidate_attempts) {
        o->backoff_until = backoff_deadline();
        o->mpq.requeue(std::move(req.cand));
    }
    select_trader(*o);
}

void Peer::release_reservation(const OrderId& own, u64 qty) {
    OwnOrder* o = own_of(own);
    if (!o) return;
    o->reserved = o->reserved >= qty ? o->reserved - qty : 0;
}

void Peer::settle_order_fill(const OrderId& own, u64 qty) {
    OwnOrder* o = own_of(own);
    if (!o) return;
    o->reserved = o->reserved >= qty ? o->reserved - qty : 0;
    o->traded += qty;
    if (o->traded >= o->order.core.pair.base_qty && o->state == book::OrderState::active) {
        o->state = book::OrderState::fulfilled;
        drop_timer(o->expiry_timer);
        drop_timer(o->window_timer);
        drop_timer(o->backoff_timer);
        trace("order_fulfilled", "order=" + own.str());
    }
}

// ---- counterparty: negotiation ---------------------------------------------------

void Peer::on_trade_proposal(const PeerId& from, u64 corr, const msg::MsgTradeProposal& m) {
    if (adversary_ == Adversary::negotiation_staller) return;
    if (trade_of(from, corr)) return;  // stale retransmit, agreement already landed
    TradeKey key{from, corr};
    auto known = cp_negs_.find(key);
    if (known != cp_negs_.end()) {
        send_to(from, known->second.reply);  // duplicate proposal, repeat the answer
        return;
    }

    const msg::TradeTerms& t = m.terms;
    auto refuse = [&](msg::RejectReason r) {
        CpNegotiation neg;
        neg.reply = msg::make_envelope(keys_, corr, msg::MsgTradeReject{r});
        neg.own_order = t.target;
        neg.expiry_timer =
            arm_timer({TimerTag::Kind::cp_neg_expiry, {}, from, corr},
                      env_->now() + policy_.proposal_timeout);
        send_to(from, neg.reply);
        cp_negs_.emplace(key, std::move(neg));
    };

    OwnOrder* o = own_of(t.target);
    if (!o) return refuse(msg::RejectReason::unknown_order);
    if (o->state == book::OrderState::expired) return refuse(msg::RejectReason::expired);
    if (o->state == book::OrderState::cancelled) return refuse(msg::RejectReason::cancelled);

    const OrderCore& own = o->order.core;
    bool shape_ok = t.base == own.pair.base && t.quote == own.pair.quote &&
                    t.initiator_order.core.creator == from && t.initiator_order.verify_sig() &&
                    t.initiator_order.core.expires_at() > env_->now() &&
                    book::compatible(own, t.initiator_order.core) && t.n >= 1 &&
                    t.base_amount > 0;
    if (shape_ok) {
        book::TradeSize ts = book::size_trade(own.pair, t.base_amount);
        shape_ok = ts.base_amount == t.base_amount && ts.quote_amount == t.quote_amount;
    }
    if (!shape_ok) return refuse(msg::RejectReason::malformed);

    if (restrict_refuses(from)) return refuse(msg::RejectReason::responsibility_held);

    // mutual proposal on the same order pair: the lower peer id keeps its own
    OrderId their_order = t.initiator_order.core.id();
    for (auto it = requests_.begin(); it != requests_.end(); ++it) {
        Request& mine = it->second;
        if (mine.to != from || mine.own_order != t.target ||
            mine.cand.order.core.id() != their_order)
            continue;
        if (id() < from) return refuse(msg::RejectReason::assets_reserved);
        u64 my_corr = it->first;
        Request doomed = std::move(mine);
        requests_.erase(it);
        drop_timer(doomed.expiry_timer);
        drop_timer(doomed.retransmit_timer);
        release_reservation(doomed.own_order, doomed.reserved_qty);
        o->negotiating = false;
        o->backoff_until = backoff_deadline();
        o->mpq.requeue(std::move(doomed.cand));
        trace("protocol_reject", "reason=mutual-proposal-yield corr=" + std::to_string(my_corr));
        break;
    }

    u64 rem = o->remaining();
    if (rem == 0) return refuse(msg::RejectReason::assets_reserved);

    CpNegotiation neg;
    neg.own_order = t.target;
    u32 n = std::max(t.n, policy_.incset_n);

    if (t.base_amount <= rem) {
        msg::TradeTerms agreed = t;
        agreed.n = n;
        o->reserved += agreed.base_amount;
        neg.terms = agreed;
        neg.accepted = true;
        neg.reserved_qty = agreed.base_amount;
        neg.reply = msg::make_envelope(keys_, corr, msg::MsgTradeAccept{agreed});
    } else {
        book::TradeSize ts = book::size_trade(own.pair, rem);
        if (ts.base_amount == 0) return refuse(msg::RejectReason::assets_reserved);
        msg::TradeTerms counter = t;
        counter.base_amount = ts.base_amount;
        counter.quote_amount = ts.quote_amount;
        counter.n = n;
        o->reserved += counter.base_amount;
        neg.terms = counter;
        neg.counter_outstanding = true;
        neg.reserved_qty = counter.base_amount;
        neg.reply = msg::make_envelope(keys_, corr, msg::MsgNegotiate{counter});
    }
    neg.expiry_timer = arm_timer({TimerTag::Kind::cp_neg_expiry, {}, from, corr},
                                 env_->now() + policy_.proposal_timeout);
    send_to(from, neg.reply);
    cp_negs_.emplace(key, std::move(neg));
}

void Peer::on_negotiate(const PeerId& from, u64 corr, const msg::MsgNegotiate& m) {
    if (adversary_ == Adversary::negotiation_staller) return;
    auto it = requests_.find(corr);
    if (it == requests_.end() || !(it->second.to == from)) return;
    Request& req = it->second;
    if (req.counter_sent) {  // a second counter round is off the table
        trace("protocol_reject", "reason=extra-counter corr=" + std::to_string(corr));
        return fail_attempt(corr, msg::RejectReason::negotiation_failed, false);
    }
    const msg::TradeTerms& c = m.terms;
    bool ok = c.base == req.terms.base && c.quote == req.terms.quote &&
              c.target == req.terms.target &&
              c.initiator_order.core.id() == req.terms.initiator_order.core.id() &&
              c.n >= req.terms.n && c.base_amount > 0 &&
              c.base_amount < req.terms.base_amount;
    if (ok) {
        book::TradeSize ts = book::size_trade(req.cand.order.core.pair, c.base_amount);
        ok = ts.base_amount == c.base_amount && ts.quote_amount == c.quote_amount;
    }
    if (!ok) return fail_attempt(corr, msg::RejectReason::malformed, true);

    OwnOrder* o = own_of(req.own_order);
    if (!o) return fail_attempt(corr, msg::RejectReason::negotiation_failed, true);

    u64 new_units = own_units(c, o->order.core);
    if (new_units == 0 || new_units > req.reserved_qty)
        return fail_attempt(corr, msg::RejectReason::malformed, true);
    release_reservation(req.own_order, req.reserved_qty - new_units);
    req.reserved_qty = new_units;
    req.terms = c;
    req.counter_sent = true;

    send_to(from, msg::make_envelope(keys_, corr, msg::MsgTradeAccept{c}));
    Request moved = std::move(req);
    requests_.erase(it);
    construct_agreement(std::move(moved));
}

void Peer::on_trade_accept(const PeerId& from, u64 corr, const msg::MsgTradeAccept& m) {
    if (adversary_ == Adversary::negotiation_staller) return;

    // counterparty side: the initiator took our counter; await the agreement
    auto nit = cp_negs_.find({from, corr});
    if (nit != cp_negs_.end()) {
        CpNegotiation& neg = nit->second;
        if (neg.counter_outstanding && m.terms == neg.terms) {
            neg.counter_outstanding = false;
            neg.accepted = true;
        }
        return;
    }

    auto it = requests_.find(corr);
    if (it == requests_.end() || !(it->second.to == from)) return;
    Request& req = it->second;
    const msg::TradeTerms& a = m.terms;
    bool ok = a.base == req.terms.base && a.quote == req.terms.quote &&
              a.target == req.terms.target &&
              a.initiator_order.core.id() == req.terms.initiator_order.core.id() &&
              a.base_amount == req.terms.base_amount &&
              a.quote_amount == req.terms.quote_amount && a.n >= req.terms.n &&
              a.n <= std::max<u64>(a.base_amount, 1) && a.n <= 1000000;
    if (!ok) return fail_attempt(corr, msg::RejectReason::malformed, true);
    req.terms = a;  // the counterparty may have raised n
    Request moved = std::move(req);
    requests_.erase(it);
    construct_agreement(std::move(moved));
}

void Peer::on_trade_reject(const PeerId& from, u64 corr, const msg::MsgTradeReject& m) {
    if (auto it = requests_.find(corr); it != requests_.end() && it->second.to == from) {
        bool dead = m.reason == msg::RejectReason::unknown_order ||
                    m.reason == msg::RejectReason::cancelled ||
                    m.reason == msg::RejectReason::expired ||
                    m.reason == msg::RejectReason::malformed;
        return fail_attempt(corr, m.reason, dead);
    }
    // a last-look refusal after the agreement partition went out
    if (Trade* t = trade_of(from, corr); t && t->initiator && !t->open && !t->done && !t->aborted)
        abort_trade(*t, msg::reject_name(m.reason));
}

// ---- agreement ------------------------------------------------------------------

void Peer::construct_agreement(Request req) {
    drop_timer(req.expiry_timer);
    drop_timer(req.retransmit_timer);
    if (adversary_ == Adversary::agreement_withholder) return;  // leaves the counterparty hanging

    const msg::TradeTerms& t = req.terms;
    const OrderCore& cand = req.cand.order.core;

    ledger::AgreementPayload ap;
    ap.initiator = id();
    ap.counterparty = req.to;
    ap.initiator_order = t.initiator_order.core.id();
    ap.counterparty_order = cand.id();
    ap.base = t.base;
    ap.quote = t.quote;
    ap.base_amount = t.base_amount;
    ap.quote_amount = t.quote_amount;
    ap.initiator_gives_base = !cand.is_offer;
    ap.n = t.n;
    ap.publication_deadline = env_->now() + policy_.publication_window;
    ap.init_recv_chain = ap.initiator_gives_base ? ap.quote : ap.base;
    ap.init_recv_addr = wallets::address_of(id());
    ap.cp_recv_chain = ap.initiator_gives_base ? ap.base : ap.quote;
    ap.cp_recv_addr = wallets::address_of(req.to);

    ledger::BlockPartition part = ledger::initiate_bilateral(store_, keys_, req.to, ap);
    env_->publish(part);

    u64 corr = req.env.correlation;
    Trade tr;
    tr.corr = corr;
    tr.initiator = true;
    tr.other = req.to;
    tr.own_order = req.own_order;
    tr.terms = t;
    tr.agreement = ap;
    tr.agreement_ref = part.ref();
    tr.agreement_hash = tr.agreement_ref.hash;
    tr.tag = hex8(tr.agreement_hash);
    tr.reserved_qty = req.reserved_qty;
    tr.last_sent = msg::make_envelope(
        keys_, corr, msg::MsgPartialAgreement{part.encode_full()});
    tr.has_last_sent = true;
    tr.deadline_timer =
        arm_timer({TimerTag::Kind::trade_deadline, {}, req.to, corr}, ap.publication_deadline);
    tr.retransmit_timer = arm_timer({TimerTag::Kind::trade_retransmit, {}, req.to, corr},
                                    env_->now() + policy_.retransmit_every);
    send_to(req.to, tr.last_sent);

    trace("trade_open", "trade=" + tr.tag + " role=init other=" + hex8(req.to) +
                            " n=" + std::to_string(ap.n) +
                            " base_amt=" + std::to_string(ap.base_amount) +
                            " quote_amt=" + std::to_string(ap.quote_amount) + " base=" +
                            q(ap.base) + " quote=" + q(ap.quote) +
                            (ap.initiator_gives_base ? " gives=base" : " gives=quote"));

    Trade& ref = trades_.emplace(TradeKey{req.to, corr}, std::move(tr)).first->second;
    arm_watchdog(ref);
}

void Peer::arm_watchdog(Trade& t) {
    drop_timer(t.watchdog_timer);
    t.watchdog_timer = arm_timer({TimerTag::Kind::trade_watchdog, {}, t.other, t.corr},
                                 env_->now() + policy_.stall_watchdog);
}

void Peer::on_partial_agreement(const PeerId& from, u64 corr, const msg::MsgPartialAgreement& m) {
    if (adversary_ == Adversary::agreement_withholder) return;
    if (Trade* t = trade_of(from, corr)) {  // duplicate; repeat the countersignature
        if (t->has_cached_agreement) send_to(from, t->cached_agreement_reply);
        return;
    }
    auto nit = cp_negs_.find({from, corr});
    if (nit == cp_negs_.end() || !nit->second.accepted) {
        trace("protocol_reject", "reason=unsolicited-agreement from=" + hex8(from));
        return;
    }
    CpNegotiation& neg = nit->second;

    ledger::BlockPartition part;
    try {
        Decoder d(m.partition);
        part = ledger::BlockPartition::decode_full(d);
    } catch (const DecodeError&) {
        trace("protocol_reject", "reason=malformed kind=partial-agreement from=" + hex8(from));
        return;
    }
    const auto* ap = std::get_if<ledger::AgreementPayload>(&part.payload);
    OwnOrder* o = own_of(neg.own_order);
    bool ok = ap && part.sig_valid() && part.creator == from && o &&
              ap->initiator == from && ap->counterparty == id() &&
              ap->counterparty_order == neg.own_order &&
              ap->initiator_order == neg.terms.initiator_order.core.id() &&
              ap->base == neg.terms.base && ap->quote == neg.terms.quote &&
              ap->base_amount == neg.terms.base_amount &&
              ap->quote_amount == neg.terms.quote_amount && ap->n == neg.terms.n &&
              ap->initiator_gives_base == !o->order.core.is_offer &&
              ap->cp_recv_addr == wallets::address_of(id()) &&
              ap->init_recv_addr == wallets::address_of(from) &&
              ap->init_recv_chain == (ap->initiator_gives_base ? ap->quote : ap->base) &&
              ap->cp_recv_chain == (ap->initiator_gives_base ? ap->base : ap->quote);
    if (!ok) {
        trace("protocol_reject", "reason=malformed kind=partial-agreement from=" + hex8(from));
        return;
    }
    if (env_->now() > ap->publication_deadline) {
        // stale agreement; the initiator's own deadline already fired or will
        trace("protocol_reject", "reason=expired kind=partial-agreement trade=" +
                                     hex8(part.hash()));
        release_reservation(neg.own_order, neg.reserved_qty);
        drop_timer(neg.expiry_timer);
        cp_negs_.erase(nit);
        return;
    }
    if (restrict_refuses(from)) {  // last look before committing a signature
        trace("protocol_reject", "reason=responsibility-held kind=partial-agreement from=" +
                                     hex8(from));
        send_to(from, msg::make_envelope(keys_, corr,
                                         msg::MsgTradeReject{msg::RejectReason::responsibility_held}));
        release_reservation(neg.own_order, neg.reserved_qty);
        drop_timer(neg.expiry_timer);
        cp_negs_.erase(nit);
        return;
    }

    store_.add(part);
    ledger::CountersignResult cs;
    try {
        cs = ledger::countersign(store_, keys_, part);
    } catch (const std::invalid_argument&) {
        trace("protocol_reject", "reason=malformed kind=partial-agreement from=" + hex8(from));
        return;
    }
    env_->publish_countersig(part.creator, part.seq, id(), cs.countersig);
    env_->publish(cs.responder);

    Trade tr;
    tr.corr = corr;
    tr.initiator = false;
    tr.other = from;
    tr.own_order = neg.own_order;
    tr.terms = neg.terms;
    tr.agreement = *ap;
    tr.agreement_ref = part.ref();
    tr.agreement_hash = tr.agreement_ref.hash;
    tr.tag = hex8(tr.agreement_hash);
    tr.reserved_qty = neg.reserved_qty;
    tr.open = true;
    tr.processed.insert(part.hash());

    msg::BlockAck ack{part.ref(), cs.countersig, cs.responder.encode_full()};
    tr.cached_agreement_reply = msg::make_envelope(keys_, corr, msg::MsgAgreement{ack});
    tr.has_cached_agreement = true;
    tr.last_sent = tr.cached_agreement_reply;
    tr.has_last_sent = true;

    drop_timer(neg.expiry_timer);
    cp_negs_.erase(nit);

    trace("trade_open", "trade=" + tr.tag + " role=cp other=" + hex8(from) +
                            " n=" + std::to_string(ap->n) +
                            " base_amt=" + std::to_string(ap->base_amount) +
                            " quote_amt=" + std::to_string(ap->quote_amount) + " base=" +
                            q(ap->base) + " quote=" + q(ap->quote) +
                            (ap->initiator_gives_base ? " gives=base" : " gives=quote"));

    Trade& ref = trades_.emplace(TradeKey{from, corr}, std::move(tr)).first->second;
    send_to(from, ref.cached_agreement_reply);
    arm_watchdog(ref);
}

bool Peer::process_ack(Trade& t, const msg::BlockAck& ack) {
    if (!(ack.target.creator == id())) return false;
    const ledger::BlockPartition* mine = store_.find(id(), ack.target.seq);
    if (!mine || mine->hash() != ack.target.hash) return false;
    if (!store_.attach_countersig(id(), ack.target.seq, t.other, ack.countersig)) return false;
    try {
        Decoder d(ack.responder);
        ledger::BlockPartition resp = ledger::BlockPartition::decode_full(d);
        if (resp.sig_valid() && resp.creator == t.other) store_.add(resp);
    } catch (const DecodeError&) {
        return false;
    }
    return true;
}

void Peer::on_agreement(const PeerId& from, u64 corr, const msg::MsgAgreement& m) {
    Trade* t = trade_of(from, corr);
    if (!t || !t->initiator || t->done || t->aborted) return;
    if (t->open) return;  // duplicate
    if (!(m.ack.target == t->agreement_ref) || !process_ack(*t, m.ack)) {
        trace("protocol_reject", "reason=malformed kind=agreement trade=" + t->tag);
        return;
    }
    t->open = true;
    drop_timer(t->deadline_timer);
    drop_timer(t->retransmit_timer);
    arm_watchdog(*t);
    pay_increment(*t, 1);
}

// ---- payments -------------------------------------------------------------------

void Peer::pay_increment(Trade& t, u32 my_index) {
    if (adversary_ == Adversary::payment_withholder) return;
    if (t.done || t.aborted || my_index != t.sent + 1 || my_index > t.agreement.n) return;

    // the audit and the transfer sit in the same event, so no other payment
    // can slip in between the check and the money moving. A counterparty that
    // currently owes an increment elsewhere usually clears within moments, so
    // a held responsibility defers this payment rather than killing the trade;
    // against a real withholder the deferral simply never ends and the stall
    // watchdog cleans up with nothing paid.
    if (restrict_refuses(t.other)) {
        if (!t.defer_traced) {
            t.defer_traced = true;
            trace("pay_deferred", "trade=" + t.tag + " idx=" + std::to_string(my_index));
        }
        drop_timer(t.pay_timer);
        t.pay_timer = arm_timer({TimerTag::Kind::pay_retry, {}, t.other, t.corr},
                                env_->now() + policy_.poll_interval);
        return;
    }
    t.defer_traced = false;

    u64 total = t.agreement.gives_amount(t.initiator);
    u64 amount = increment_amount(total, t.agreement.n, my_index);
    const std::string& chain = t.agreement.gives_chain(t.initiator);
    const Bytes& to = t.agreement.recv_addr_of_payee(t.initiator);
    u32 overall = t.initiator ? 2 * my_index - 1 : 2 * my_index;

    auto sub = env_->transfer(chain, to, amount, t.tag, overall);
    if (!sub) {
        if (t.transfer_tries + 1 >= policy_.transfer_attempts) {
            abort_trade(t, "insufficient-funds");
            return;
        }
        t.transfer_tries++;
        drop_timer(t.pay_timer);
        SimTime wait = 1_s * (SimTime(1) << (t.transfer_tries - 1));
        t.pay_timer = arm_timer({TimerTag::Kind::pay_retry, {}, t.other, t.corr},
                                     env_->now() + wait);
        return;
    }
    t.transfer_tries = 0;

    ledger::PaymentPayload pp;
    pp.trade = t.agreement_ref;
    pp.payer = id();
    pp.chain = chain;
    pp.txid = sub->txid;
    pp.amount = amount;
    pp.index = my_index;
    ledger::BlockPartition part = ledger::initiate_bilateral(store_, keys_, t.other, pp);
    env_->publish(part);
    t.payment_refs[overall] = part.ref();
    t.sent = my_index;

    msg::MsgPayment body{part.encode_full(), t.pending_ack};
    t.pending_ack.reset();
    t.last_sent = msg::make_envelope(keys_, t.corr, body);
    t.has_last_sent = true;
    send_to(t.other, t.last_sent);
    drop_timer(t.retransmit_timer);
    t.retransmit_timer = arm_timer({TimerTag::Kind::trade_retransmit, {}, t.other, t.corr},
                                   env_->now() + policy_.retransmit_every);
    arm_watchdog(t);
}

void Peer::on_payment(const PeerId& from, u64 corr, const msg::MsgPayment& m) {
    Trade* t = trade_of(from, corr);
    if (!t || !t->open || t->done || t->aborted) return;
    if (m.ack) process_ack(*t, *m.ack);

    ledger::BlockPartition part;
    try {
        Decoder d(m.partition);
        part = ledger::BlockPartition::decode_full(d);
    } catch (const DecodeError&) {
        trace("protocol_reject", "reason=malformed kind=payment trade=" + t->tag);
        return;
    }
    if (t->processed.count(part.hash())) {
        if (t->has_last_sent) send_to(from, t->last_sent);
        return;
    }
    const auto* pp = std::get_if<ledger::PaymentPayload>(&part.payload);
    bool they_initiate = !t->initiator;
    bool ok = pp && part.sig_valid() && part.creator == from && pp->payer == from &&
              pp->trade == t->agreement_ref && pp->index == t->seen + 1 &&
              pp->index <= t->agreement.n &&
              pp->chain == t->agreement.gives_chain(they_initiate) &&
              pp->amount ==
                  increment_amount(t->agreement.gives_amount(they_initiate), t->agreement.n,
                                   pp->index) &&
              (t->initiator ? t->sent == pp->index : t->sent + 1 == pp->index);
    if (!ok) {
        trace("protocol_reject", "reason=malformed kind=payment trade=" + t->tag);
        return;
    }

    auto tx = env_->chain_query().lookup(pp->chain, pp->txid);
    if (!tx || tx->status != TxStatus::confirmed) {
        t->pending_payment = part;
        drop_timer(t->poll_timer);
        t->poll_timer = arm_timer({TimerTag::Kind::trade_poll, {}, t->other, t->corr},
                                  env_->now() + policy_.poll_interval);
        return;
    }
    if (tx->to != t->agreement.recv_addr_of_payee(they_initiate) || tx->amount != pp->amount ||
        tx->from != wallets::address_of(from)) {
        abort_trade(*t, "bad-payment");
        return;
    }
    accept_their_payment(*t, part);
}

void Peer::accept_their_payment(Trade& t, const ledger::BlockPartition& part) {
    const auto& pp = std::get<ledger::PaymentPayload>(part.payload);
    store_.add(part);
    ledger::CountersignResult cs;
    try {
        cs = ledger::countersign(store_, keys_, part);
    } catch (const std::invalid_argument&) {
        trace("protocol_reject", "reason=malformed kind=payment trade=" + t.tag);
        return;
    }
    env_->publish_countersig(part.creator, part.seq, id(), cs.countersig);
    env_->publish(cs.responder);

    bool they_initiate = !t.initiator;
    u32 overall = they_initiate ? 2 * pp.index - 1 : 2 * pp.index;
    t.payment_refs[overall] = part.ref();
    t.seen = pp.index;
    t.pending_ack = msg::BlockAck{part.ref(), cs.countersig, cs.responder.encode_full()};
    t.pending_payment.reset();
    t.processed.insert(part.hash());
    drop_timer(t.poll_timer);
    arm_watchdog(t);

    bool my_turn = t.initiator ? t.sent == t.seen : t.sent + 1 == t.seen;
    if (my_turn && t.sent < t.agreement.n) {
        pay_increment(t, t.sent + 1);
        return;
    }
    if (t.initiator && t.sent == t.agreement.n && t.seen == t.agreement.n) {
        construct_trade_done(t);
    }
    // as counterparty with everything paid we wait for the finalization round
}

// ---- finalization -----------------------------------------------------------------

void Peer::construct_trade_done(Trade& t) {
    if (adversary_ == Adversary::payment_withholder) return;
    u32 want = 2 * t.agreement.n;
    if (t.payment_refs.size() != want) {
        abort_trade(t, "incomplete-schedule");
        return;
    }
    ledger::TradeDonePayload dp;
    dp.trade = t.agreement_ref;
    for (u32 k = 1; k <= want; k++) dp.payments.push_back(t.payment_refs[k]);

    ledger::BlockPartition part = ledger::initiate_bilateral(store_, keys_, t.other, dp);
    env_->publish(part);

    msg::MsgPartialTradeDone body{part.encode_full(), t.pending_ack};
    t.pending_ack.reset();
    t.last_sent = msg::make_envelope(keys_, t.corr, body);
    t.has_last_sent = true;
    t.finalize_tries = 1;
    send_to(t.other, t.last_sent);
    drop_timer(t.retransmit_timer);
    t.retransmit_timer = arm_timer({TimerTag::Kind::trade_retransmit, {}, t.other, t.corr},
                                   env_->now() + policy_.finalize_retransmit);
    arm_watchdog(t);
}

void Peer::on_partial_trade_done(const PeerId& from, u64 corr, const msg::MsgPartialTradeDone& m) {
    Trade* t = trade_of(from, corr);
    if (!t || !t->open || t->initiator || t->aborted) return;
    if (m.ack) process_ack(*t, *m.ack);
    if (t->done) {
        if (t->has_cached_done) send_to(from, t->cached_done_reply);
        return;
    }

    ledger::BlockPartition part;
    try {
        Decoder d(m.partition);
        part = ledger::BlockPartition::decode_full(d);
    } catch (const DecodeError&) {
        trace("protocol_reject", "reason=malformed kind=partial-trade-done trade=" + t->tag);
        return;
    }
    const auto* dp = std::get_if<ledger::TradeDonePayload>(&part.payload);
    u32 want = 2 * t->agreement.n;
    bool ok = dp && part.sig_valid() && part.creator == from && dp->trade == t->agreement_ref &&
              dp->payments.size() == want && t->seen == t->agreement.n &&
              t->sent == t->agreement.n;
    if (ok) {
        for (u32 k = 1; k <= want; k++) {
            auto it = t->payment_refs.find(k);
            if (it == t->payment_refs.end() || !(dp->payments[k - 1] == it->second)) {
                ok = false;
                break;
            }
        }
    }
    if (!ok) {
        trace("protocol_reject", "reason=malformed kind=partial-trade-done trade=" + t->tag);
        return;
    }

    store_.add(part);
    ledger::CountersignResult cs;
    try {
        cs = ledger::countersign(store_, keys_, part);
    } catch (const std::invalid_argument&) {
        return;
    }
    env_->publish_countersig(part.creator, part.seq, id(), cs.countersig);
    env_->publish(cs.responder);
    t->processed.insert(part.hash());

    const ledger::BlockPartition* agreement = store_.resolve(t->agreement_ref);
    if (!agreement) return;  // cannot happen once open
    msg::BlockAck ack{part.ref(), cs.countersig, cs.responder.encode_full()};
    msg::MsgTradeDone reply{ack, part.encode_full(), agreement->encode_full()};
    t->cached_done_reply = msg::make_envelope(keys_, corr, reply);
    t->has_cached_done = true;
    send_to(from, t->cached_done_reply);

    t->done = true;
    complete_trade(*t, "cp");
}

void Peer::on_trade_done(const PeerId& from, u64 corr, const msg::MsgTradeDone& m) {
    if (corr == 0) {  // a trader reporting a settled trade to its matchmakers
        if (!matchmaker_) return;
        try {
            Decoder dd(m.done);
            ledger::BlockPartition done = ledger::BlockPartition::decode_full(dd);
            Decoder da(m.agreement);
            ledger::BlockPartition agreement = ledger::BlockPartition::decode_full(da);
            apply_trade_done_to_books(done, agreement);
        } catch (const DecodeError&) {
            trace("protocol_reject", "reason=malformed kind=trade-done from=" + hex8(from));
        }
        return;
    }
    Trade* t = trade_of(from, corr);
    if (!t || !t->initiator || t->done || t->aborted) return;
    if (m.ack) {
        if (!process_ack(*t, *m.ack)) {
            trace("protocol_reject", "reason=malformed kind=trade-done trade=" + t->tag);
            return;
        }
    }
    t->done = true;
    complete_trade(*t, "init");
}

void Peer::complete_trade(Trade& t, const char* role) {
    drop_timer(t.deadline_timer);
    drop_timer(t.watchdog_timer);
    drop_timer(t.poll_timer);
    drop_timer(t.retransmit_timer);
    drop_timer(t.pay_timer);
    t.done = true;

    settle_order_fill(t.own_order, t.reserved_qty);
    t.reserved_qty = 0;

    trace("trade_completed", "trade=" + t.tag + " role=" + role + " other=" + hex8(t.other) +
                                 " n=" + std::to_string(t.agreement.n) +
                                 " base_amt=" + std::to_string(t.agreement.base_amount) +
                                 " quote_amt=" + std::to_string(t.agreement.quote_amount));

    // the matchmakers only hear about the trade from its two parties
    const ledger::BlockPartition* agreement = store_.resolve(t.agreement_ref);
    const ledger::BlockPartition* done = nullptr;
    if (t.initiator) {
        // my own trade-done origin partition
        for (u64 s = store_.tip_seq(id()); s >= 1 && !done; s--) {
            const ledger::BlockPartition* p = store_.find(id(), s);
            if (!p) break;
            if (const auto* dp = std::get_if<ledger::TradeDonePayload>(&p->payload);
                dp && dp->trade == t.agreement_ref)
                done = p;
        }
    } else if (t.has_cached_done) {
        // decode back out of the cached reply; it holds the countersigned copy
        const auto& body = std::get<msg::MsgTradeDone>(t.cached_done_reply.body);
        static thread_local ledger::BlockPartition parked;
        try {
            Decoder d(body.done);
            parked = ledger::BlockPartition::decode_full(d);
            done = &parked;
        } catch (const DecodeError&) {
            done = nullptr;
        }
    }
    if (agreement && done) {
        msg::MsgTradeDone notice{std::nullopt, done->encode_full(), agreement->encode_full()};
        for (const PeerId& mm : matchmakers_) send_to(mm, msg::make_envelope(keys_, 0, notice));
    }

    finish_order_maintenance(t.own_order);
}

void Peer::finish_order_maintenance(const OrderId& oid) {
    OwnOrder* o = own_of(oid);
    if (!o) return;
    o->negotiating = false;
    if (o->state == book::OrderState::active && o->remaining() > 0) select_trader(*o);
}

void Peer::abort_trade(Trade& t, const char* reason) {
    if (t.done || t.aborted) return;
    t.aborted = true;
    drop_timer(t.deadline_timer);
    drop_timer(t.watchdog_timer);
    drop_timer(t.poll_timer);
    drop_timer(t.retransmit_timer);
    drop_timer(t.pay_timer);
    release_reservation(t.own_order, t.reserved_qty);
    t.reserved_qty = 0;
    trace("trade_aborted", "trade=" + t.tag + " reason=" + reason +
                               " sent=" + std::to_string(t.sent) +
                               " seen=" + std::to_string(t.seen));
    finish_order_maintenance(t.own_order);
}

// ---- timers ---------------------------------------------------------------------

void Peer::on_timer(u64 handle) {
    auto it = timers_.find(handle);
    if (it == timers_.end()) return;
    TimerTag tag = it->second;
    timers_.erase(it);

    switch (tag.kind) {
        case TimerTag::Kind::match_window: {
            OwnOrder* o = own_of(tag.order);
            if (!o) return;
            o->window_timer = 0;
            o->window_passed = true;
            select_trader(*o);
            return;
        }
        case TimerTag::Kind::requeue_backoff: {
            OwnOrder* o = own_of(tag.order);
            if (!o) return;
            o->backoff_timer = 0;
            select_trader(*o);
            return;
        }
        case TimerTag::Kind::order_expiry: {
            OwnOrder* o = own_of(tag.order);
            if (!o || o->state != book::OrderState::active) return;
            o->expiry_timer = 0;
            o->state = book::OrderState::expired;
            drop_timer(o->window_timer);
            drop_timer(o->backoff_timer);
            trace("order_expired", "order=" + kv_order(tag.order));
            return;
        }
        case TimerTag::Kind::mm_order_expiry: {
            mm_.expiry_timers.erase(tag.order);
            mm_retire(tag.order, book::OrderState::expired);
            return;
        }
        case TimerTag::Kind::request_expiry: {
            auto rit = requests_.find(tag.corr);
            if (rit == requests_.end()) return;
            rit->second.expiry_timer = 0;
            trace("store_timeout", "flow=proposal corr=" + std::to_string(tag.corr) +
                                       " other=" + hex8(tag.other));
            fail_attempt(tag.corr, msg::RejectReason::negotiation_failed, false);
            return;
        }
        case TimerTag::Kind::request_retransmit: {
            auto rit = requests_.find(tag.corr);
            if (rit == requests_.end()) return;
            send_to(rit->second.to, rit->second.env);
            rit->second.retransmit_timer =
                arm_timer({TimerTag::Kind::request_retransmit, {}, tag.other, tag.corr},
                          env_->now() + policy_.retransmit_every);
            return;
        }
        case TimerTag::Kind::cp_neg_expiry: {
            auto nit = cp_negs_.find({tag.other, tag.corr});
            if (nit == cp_negs_.end()) return;
            nit->second.expiry_timer = 0;
            if (nit->second.reserved_qty) {
                // only a live reservation counts as a timed-out negotiation;
                // cached reject replies expire silently
                release_reservation(nit->second.own_order, nit->second.reserved_qty);
                trace("store_timeout", "flow=negotiation corr=" + std::to_string(tag.corr) +
                                           " other=" + hex8(tag.other));
            }
            cp_negs_.erase(nit);
            return;
        }
        case TimerTag::Kind::trade_deadline: {
            Trade* t = trade_of(tag.other, tag.corr);
            if (!t || t->open || t->done || t->aborted) return;
            t->deadline_timer = 0;
            abort_trade(*t, "publication-deadline");
            return;
        }
        case TimerTag::Kind::trade_watchdog: {
            Trade* t = trade_of(tag.other, tag.corr);
            if (!t || t->done || t->aborted) return;
            t->watchdog_timer = 0;
            if (t->open && t->sent == t->agreement.n && t->seen == t->agreement.n) {
                // everything is paid; only the finalization round went missing
                t->done = true;
                trace("store_timeout", "flow=finalize trade=" + t->tag);
                complete_trade(*t, t->initiator ? "init" : "cp");
            } else {
                abort_trade(*t, "stalled");
            }
            return;
        }
        case TimerTag::Kind::trade_poll: {
            Trade* t = trade_of(tag.other, tag.corr);
            if (!t || t->done || t->aborted || !t->pending_payment) return;
            t->poll_timer = 0;
            const auto& pp = std::get<ledger::PaymentPayload>(t->pending_payment->payload);
            auto tx = env_->chain_query().lookup(pp.chain, pp.txid);
            if (!tx || tx->status != TxStatus::confirmed) {
                t->poll_timer = arm_timer({TimerTag::Kind::trade_poll, {}, tag.other, tag.corr},
                                          env_->now() + policy_.poll_interval);
                return;
            }
            bool they_initiate = !t->initiator;
            if (tx->to != t->agreement.recv_addr_of_payee(they_initiate) ||
                tx->amount != pp.amount || tx->from != wallets::address_of(t->other)) {
                abort_trade(*t, "bad-payment");
                return;
            }
            ledger::BlockPartition part = *t->pending_payment;
            accept_their_payment(*t, part);
            return;
        }
        case TimerTag::Kind::trade_retransmit: {
            Trade* t = trade_of(tag.other, tag.corr);
            if (!t || t->done || t->aborted || !t->has_last_sent) return;
            t->retransmit_timer = 0;
            bool finalizing = t->last_sent.kind() == msg::MsgKind::partial_trade_done;
            if (finalizing && t->finalize_tries >= policy_.finalize_attempts) {
                // assets are fully settled; close out locally
                t->done = true;
                trace("store_timeout", "flow=finalize trade=" + t->tag);
                complete_trade(*t, "init");
                return;
            }
            if (finalizing) t->finalize_tries++;
            send_to(t->other, t->last_sent);
            SimTime wait = finalizing ? policy_.finalize_retransmit : policy_.retransmit_every;
            t->retransmit_timer = arm_timer(
                {TimerTag::Kind::trade_retransmit, {}, tag.other, tag.corr}, env_->now() + wait);
            return;
        }
        case TimerTag::Kind::pay_retry: {
            Trade* t = trade_of(tag.other, tag.corr);
            if (!t || t->done || t->aborted) return;
            t->pay_timer = 0;
            pay_increment(*t, t->sent + 1);
            return;
        }
    }
}

// ---- introspection ----------------------------------------------------------------

size_t Peer::open_trade_count() const {
    size_t n = 0;
    for (const auto& [k, t] : trades_)
        if (!t.done && !t.aborted) n++;
    return n;
}

size_t Peer::open_request_count() const { return requests_.size() + cp_negs_.size(); }

size_t Peer::mpq_entries() const {
    size_t n = 0;
    for (const auto& [id, o] : own_orders_) n += o.mpq.size();
    return n;
}

std::vector<Peer::OwnOrderView> Peer::own_orders() const {
    std::vector<OwnOrderView> out;
    for (const auto& [oid, o] : own_orders_)
        out.push_back({oid, o.state, o.order.core.pair.base_qty, o.traded, o.reserved});
    return out;
}

std::string Peer::book_snapshot() const {
    std::string out;
    for (const auto& [pid, bk] : mm_.books) {
        out += pid;
        out += "\n";
        out += bk.snapshot();
    }
    return out;
}

}  // namespace xdx::proto
