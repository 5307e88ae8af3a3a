#include "ledger.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace xdx::ledger {

const char* kind_name(PayloadKind k) {
    switch (k) {
        case PayloadKind::offer: return "offer";
        case PayloadKind::request: return "request";
        case PayloadKind::agreement: return "agreement";
        case PayloadKind::payment: return "payment";
        case PayloadKind::trade_done: return "trade_done";
    }
    return "?";
}

PayloadKind payload_kind(const TxPayload& p) {
    if (const auto* o = std::get_if<OrderPayload>(&p))
        return o->order.core.is_offer ? PayloadKind::offer : PayloadKind::request;
    if (std::holds_alternative<AgreementPayload>(p)) return PayloadKind::agreement;
    if (std::holds_alternative<PaymentPayload>(p)) return PayloadKind::payment;
    return PayloadKind::trade_done;
}

void encode_payload(Encoder& e, const TxPayload& p) {
    e.put_u8(static_cast<u8>(payload_kind(p)));
    if (const auto* o = std::get_if<OrderPayload>(&p)) {
        o->order.encode(e);
    } else if (const auto* a = std::get_if<AgreementPayload>(&p)) {
        e.put_fixed(a->initiator);
        e.put_fixed(a->counterparty);
        a->initiator_order.encode(e);
        a->counterparty_order.encode(e);
        e.put_str(a->base);
        e.put_str(a->quote);
        e.put_u64(a->base_amount);
        e.put_u64(a->quote_amount);
        e.put_bool(a->initiator_gives_base);
        e.put_u32(a->n);
        e.put_i64(a->publication_deadline);
        e.put_str(a->init_recv_chain);
        e.put_bytes(a->init_recv_addr);
        e.put_str(a->cp_recv_chain);
        e.put_bytes(a->cp_recv_addr);
    } else if (const auto* pay = std::get_if<PaymentPayload>(&p)) {
        pay->trade.encode(e);
        e.put_fixed(pay->payer);
        e.put_str(pay->chain);
        e.put_fixed(pay->txid);
        e.put_u64(pay->amount);
        e.put_u32(pay->index);
    } else {
        const auto& d = std::get<TradeDonePayload>(p);
        d.trade.encode(e);
        e.put_u32(static_cast<u32>(d.payments.size()));
        for (const auto& r : d.payments) r.encode(e);
    }
}

TxPayload decode_payload(Decoder& d) {
    u8 kind = d.get_u8();
    switch (static_cast<PayloadKind>(kind)) {
        case PayloadKind::offer:
        case PayloadKind::request: {
            OrderPayload o;
            o.order = SignedOrder::decode(d);
            return o;
        }
        case PayloadKind::agreement: {
            AgreementPayload a;
            a.initiator = d.get_fixed<32>();
            a.counterparty = d.get_fixed<32>();
            a.initiator_order = OrderId::decode(d);
            a.counterparty_order = OrderId::decode(d);
            a.base = d.get_str();
            a.quote = d.get_str();
            a.base_amount = d.get_u64();
            a.quote_amount = d.get_u64();
            a.initiator_gives_base = d.get_bool();
            a.n = d.get_u32();
            a.publication_deadline = d.get_i64();
            a.init_recv_chain = d.get_str();
            a.init_recv_addr = d.get_bytes();
            a.cp_recv_chain = d.get_str();
            a.cp_recv_addr = d.get_bytes();
            return a;
        }
        case PayloadKind::payment: {
            PaymentPayload p;
            p.trade = BlockRef::decode(d);
            p.payer = d.get_fixed<32>();
            p.chain = d.get_str();
            p.txid = d.get_fixed<32>();
            p.amount = d.get_u64();
            p.index = d.get_u32();
            return p;
        }
        case PayloadKind::trade_done: {
            TradeDonePayload t;
            t.trade = BlockRef::decode(d);
            u32 n = d.get_u32();
            for (u32 i = 0; i < n; ++i) t.payments.push_back(BlockRef::decode(d));
            return t;
        }
    }
    throw DecodeError("unknown payload kind");
}

Bytes BlockPartition::hash_scope() const {
    Encoder e;
    e.put_u8(1);   // partition format version
    e.put_u8(static_cast<u8>(role));
    e.put_fixed(creator);
    e.put_u64(seq);
    e.put_fixed(prev_self);
    e.put_bool(prev_counter.has_value());
    if (prev_counter) e.put_fixed(*prev_counter);
    e.put_u32(static_cast<u32>(participants.size()));
    for (const auto& p : participants) e.put_fixed(p);
    encode_payload(e, payload);
    return e.take();
}

Bytes BlockPartition::encode_full() const {
    Encoder e;
    Bytes scope = hash_scope();
    e.put_bytes(scope);
    e.put_fixed(sig);
    auto cs = countersigs;
    std::sort(cs.begin(), cs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    e.put_u32(static_cast<u32>(cs.size()));
    for (const auto& [who, s] : cs) {
        e.put_fixed(who);
        e.put_fixed(s);
    }
    return e.take();
}

BlockPartition BlockPartition::decode_full(Decoder& d) {
    Bytes scope = d.get_bytes();
    Decoder sd(scope);
    BlockPartition p;
    u8 ver = sd.get_u8();
    if (ver != 1) throw DecodeError("unsupported partition version");
    u8 role_raw = sd.get_u8();
    if (role_raw > 2) throw DecodeError("bad role");
    p.role = static_cast<Role>(role_raw);
    p.creator = sd.get_fixed<32>();
    p.seq = sd.get_u64();
    p.prev_self = sd.get_fixed<32>();
    if (sd.get_bool()) p.prev_counter = sd.get_fixed<32>();
    u32 np = sd.get_u32();
    if (np > 1024) throw DecodeError("participant count");
    for (u32 i = 0; i < np; ++i) p.participants.push_back(sd.get_fixed<32>());
    p.payload = decode_payload(sd);
    sd.expect_done();
    p.sig = d.get_fixed<64>();
    u32 nc = d.get_u32();
    if (nc > 1024) throw DecodeError("countersig count");
    for (u32 i = 0; i < nc; ++i) {
        PeerId who = d.get_fixed<32>();
        Signature s = d.get_fixed<64>();
        p.countersigs.emplace_back(who, s);
    }
    return p;
}

std::string Violation::str() const {
    std::ostringstream os;
    os << kind << " chain=" << to_hex(creator.data(), 8) << " seq=" << seq;
    if (!detail.empty()) os << " " << detail;
    return os.str();
}

// -- LedgerStore ---------------------------------------------------------------

void LedgerStore::add(const BlockPartition& p) {
    auto& chain = chains_[p.creator];
    auto it = chain.find(p.seq);
    if (it != chain.end()) {
        if (it->second.hash() != p.hash()) {
            conflicts_.emplace_back(it->second, p);
            return;
        }
        // same partition, possibly fresher countersignatures: merge
        for (const auto& [who, s] : p.countersigs) attach_countersig(p.creator, p.seq, who, s);
        return;
    }
    chain.emplace(p.seq, p);
    ++count_;
    index_partition(p);
    // countersignatures carried on the incoming copy feed the trade index too
    const auto& stored = chain.at(p.seq);
    if (!stored.countersigs.empty() && stored.role == Role::origin) {
        if (payload_kind(stored.payload) == PayloadKind::agreement)
            mark_countersigned(stored.hash());
        else if (payload_kind(stored.payload) == PayloadKind::trade_done)
            close_trade(std::get<TradeDonePayload>(stored.payload).trade.hash);
    }
}

bool LedgerStore::attach_countersig(const PeerId& creator, u64 seq, const PeerId& signer,
                                    const Signature& s) {
    auto ci = chains_.find(creator);
    if (ci == chains_.end()) return false;
    auto pi = ci->second.find(seq);
    if (pi == ci->second.end()) return false;
    BlockPartition& p = pi->second;
    if (!crypto::verify(signer, p.hash(), s)) return false;
    for (const auto& [who, existing] : p.countersigs)
        if (who == signer) return true;
    p.countersigs.emplace_back(signer, s);

    if (p.role == Role::origin) {
        PayloadKind k = payload_kind(p.payload);
        if (k == PayloadKind::agreement)
            mark_countersigned(p.hash());
        else if (k == PayloadKind::trade_done)
            close_trade(std::get<TradeDonePayload>(p.payload).trade.hash);
    }
    return true;
}

void LedgerStore::index_partition(const BlockPartition& p) {
    PayloadKind k = payload_kind(p.payload);
    if (p.role == Role::origin) {
        if (k == PayloadKind::agreement) {
            Hash h = p.hash();
            TradeRecord rec;
            rec.ref = p.ref();
            rec.agreement = std::get<AgreementPayload>(p.payload);
            TradeRecord& stored = trades_.emplace(h, std::move(rec)).first->second;
            if (auto pp = pending_payments_.find(h); pp != pending_payments_.end()) {
                for (const auto& pay : pp->second) record_payment(stored, pay);
                pending_payments_.erase(pp);
            }
            if (pending_open_.erase(h)) mark_countersigned(h);
            if (pending_close_.erase(h)) close_trade(h);
        } else if (k == PayloadKind::payment) {
            const auto& pay = std::get<PaymentPayload>(p.payload);
            if (auto t = trades_.find(pay.trade.hash); t != trades_.end())
                record_payment(t->second, pay);
            else
                pending_payments_[pay.trade.hash].push_back(pay);
        }
    } else if (p.role == Role::responder && p.prev_counter) {
        responders_[*p.prev_counter].push_back(p.ref());
        // a responder partition is itself proof the counterparty agreed
        if (k == PayloadKind::agreement)
            mark_countersigned(*p.prev_counter);
        else if (k == PayloadKind::trade_done)
            close_trade(std::get<TradeDonePayload>(p.payload).trade.hash);
    }
}

void LedgerStore::record_payment(TradeRecord& rec, const PaymentPayload& pay) {
    bool payer_is_cp = pay.payer == rec.agreement.counterparty;
    if (payer_is_cp || pay.payer == rec.agreement.initiator)
        rec.payments.emplace(std::make_pair(payer_is_cp, pay.index), pay);
}

void LedgerStore::mark_countersigned(const Hash& h) {
    auto t = trades_.find(h);
    if (t == trades_.end()) {
        pending_open_.insert(h);
        return;
    }
    if (!t->second.countersigned) {
        t->second.countersigned = true;
        open_trade(h, t->second.agreement);
    }
}

void LedgerStore::open_trade(const Hash& h, const AgreementPayload& a) {
    open_[a.initiator].push_back(h);
    open_[a.counterparty].push_back(h);
}

void LedgerStore::close_trade(const Hash& h) {
    auto t = trades_.find(h);
    if (t == trades_.end()) {
        pending_close_.insert(h);
        return;
    }
    if (t->second.done) return;
    t->second.done = true;
    for (const PeerId* pid : {&t->second.agreement.initiator, &t->second.agreement.counterparty}) {
        auto oi = open_.find(*pid);
        if (oi == open_.end()) continue;
        auto& v = oi->second;
        v.erase(std::remove(v.begin(), v.end(), h), v.end());
    }
}

const BlockPartition* LedgerStore::find(const PeerId& creator, u64 seq) const {
    auto ci = chains_.find(creator);
    if (ci == chains_.end()) return nullptr;
    auto pi = ci->second.find(seq);
    return pi == ci->second.end() ? nullptr : &pi->second;
}

const BlockPartition* LedgerStore::find_by_hash(const PeerId& creator, const Hash& h) const {
    auto ci = chains_.find(creator);
    if (ci == chains_.end()) return nullptr;
    for (const auto& [seq, p] : ci->second)
        if (p.hash() == h) return &p;
    return nullptr;
}

const BlockPartition* LedgerStore::resolve(const BlockRef& r) const {
    const BlockPartition* p = find(r.creator, r.seq);
    return p && p->hash() == r.hash ? p : nullptr;
}

u64 LedgerStore::tip_seq(const PeerId& creator) const {
    auto ci = chains_.find(creator);
    if (ci == chains_.end() || ci->second.empty()) return 0;
    return ci->second.rbegin()->first;
}

Hash LedgerStore::tip_hash(const PeerId& creator) const {
    auto ci = chains_.find(creator);
    if (ci == chains_.end() || ci->second.empty()) return kZeroHash;
    return ci->second.rbegin()->second.hash();
}

const TradeRecord* LedgerStore::trade(const Hash& agreement_hash) const {
    auto it = trades_.find(agreement_hash);
    return it == trades_.end() ? nullptr : &it->second;
}

const std::vector<Hash>* LedgerStore::open_trades(const PeerId& peer) const {
    auto it = open_.find(peer);
    return it == open_.end() ? nullptr : &it->second;
}

const std::vector<BlockRef>* LedgerStore::responders_of(const Hash& origin_hash) const {
    auto it = responders_.find(origin_hash);
    return it == responders_.end() ? nullptr : &it->second;
}

// -- chain growth ---------------------------------------------------------------

static BlockPartition seal_and_append(LedgerStore& store, const crypto::Keypair& keys,
                                      BlockPartition p) {
    p.creator = keys.pub;
    p.seq = store.tip_seq(keys.pub) + 1;
    p.prev_self = store.tip_hash(keys.pub);
    p.sig = crypto::sign(keys, p.hash());
    store.add(p);
    return p;
}

BlockPartition append_unilateral(LedgerStore& store, const crypto::Keypair& keys,
                                 const SignedOrder& order) {
    if (order.core.creator != keys.pub)
        throw std::invalid_argument("unilateral record for someone else's order");
    BlockPartition p;
    p.role = Role::unilateral;
    p.payload = OrderPayload{order};
    return seal_and_append(store, keys, std::move(p));
}

BlockPartition initiate_bilateral(LedgerStore& store, const crypto::Keypair& keys,
                                  const PeerId& counterparty, TxPayload payload) {
    if (counterparty == keys.pub)
        throw std::invalid_argument("bilateral record with self");
    if (std::holds_alternative<OrderPayload>(payload))
        throw std::invalid_argument("order payloads are unilateral");
    BlockPartition p;
    p.role = Role::origin;
    p.participants = {counterparty};
    p.prev_counter = store.tip_hash(counterparty);   // zero sentinel when unknown
    p.payload = std::move(payload);
    return seal_and_append(store, keys, std::move(p));
}

CountersignResult countersign(LedgerStore& store, const crypto::Keypair& keys,
                              const BlockPartition& incoming) {
    if (incoming.role != Role::origin)
        throw std::invalid_argument("countersign: not an origin partition");
    if (incoming.creator == keys.pub)
        throw std::invalid_argument("countersign: own partition");
    bool addressed = false;
    for (const auto& pid : incoming.participants) addressed |= pid == keys.pub;
    if (!addressed)
        throw std::invalid_argument("countersign: partition names a different counterparty");
    if (!incoming.sig_valid())
        throw std::invalid_argument("countersign: invalid creator signature");

    Hash oh = incoming.hash();

    // Re-delivery of a partition already answered must not grow the chain:
    // recompute the same deterministic countersignature and hand back the
    // responder partition already appended.
    if (const auto* refs = store.responders_of(oh)) {
        for (const auto& r : *refs) {
            if (r.creator != keys.pub) continue;
            const BlockPartition* existing = store.resolve(r);
            if (existing) return {crypto::sign(keys, oh), *existing};
        }
    }

    store.add(incoming);
    Signature cs = crypto::sign(keys, oh);
    store.attach_countersig(incoming.creator, incoming.seq, keys.pub, cs);

    BlockPartition mine;
    mine.role = Role::responder;
    mine.participants = {incoming.creator};
    mine.prev_counter = oh;
    mine.payload = incoming.payload;
    BlockPartition appended = seal_and_append(store, keys, std::move(mine));
    return {cs, appended};
}

MultipartyTree build_multiparty_block(LedgerStore& initiator_store, const crypto::Keypair& initiator_keys,
                                      std::vector<std::pair<LedgerStore*, const crypto::Keypair*>> others,
                                      TxPayload payload) {
    if (others.empty()) throw std::invalid_argument("multiparty record needs counterparties");
    if (std::holds_alternative<OrderPayload>(payload))
        throw std::invalid_argument("order payloads are unilateral");

    BlockPartition root;
    root.role = Role::origin;
    for (const auto& [st, kp] : others) {
        if (kp->pub == initiator_keys.pub) throw std::invalid_argument("multiparty with self");
        root.participants.push_back(kp->pub);
    }
    root.prev_counter = kZeroHash;
    root.payload = std::move(payload);
    root = seal_and_append(initiator_store, initiator_keys, std::move(root));

    MultipartyTree tree;
    for (auto& [st, kp] : others) {
        CountersignResult r = countersign(*st, *kp, root);
        initiator_store.attach_countersig(root.creator, root.seq, kp->pub, r.countersig);
        initiator_store.add(r.responder);
        tree.leaves.push_back(r.responder);
        tree.root_countersigs.emplace_back(kp->pub, r.countersig);
    }
    tree.root = *initiator_store.find(root.creator, root.seq);
    return tree;
}

// -- verification -----------------------------------------------------------------

static void check_payload_shape(const BlockPartition& p, std::vector<Violation>& out) {
    PayloadKind k = payload_kind(p.payload);
    auto flag = [&](const std::string& kind, const std::string& detail) {
        out.push_back({kind, p.creator, p.seq, detail});
    };

    if (p.role == Role::unilateral) {
        if (k != PayloadKind::offer && k != PayloadKind::request)
            return flag("role-payload", std::string("unilateral partition with ") + kind_name(k));
        if (p.prev_counter || !p.participants.empty())
            flag("role-shape", "unilateral partition carries counterparty links");
        const auto& o = std::get<OrderPayload>(p.payload).order;
        if (o.core.creator != p.creator) flag("order-creator", "order signed by a different peer");
        else if (!o.verify_sig()) flag("order-signature", "order signature invalid");
        if (o.core.pair.base_qty == 0 || o.core.pair.quote_qty == 0)
            flag("order-quantity", "zero quantity");
        if (o.core.pair.base == o.core.pair.quote) flag("order-pair", "identical assets");
        return;
    }

    if (k == PayloadKind::offer || k == PayloadKind::request)
        return flag("role-payload", "order payload on a shared record");
    if (!p.prev_counter) flag("role-shape", "shared record without counterparty link");
    if (p.participants.empty()) flag("role-shape", "shared record without participants");
    std::set<PeerId> uniq(p.participants.begin(), p.participants.end());
    if (uniq.size() != p.participants.size()) flag("role-shape", "duplicate participants");
    if (uniq.count(p.creator)) flag("role-shape", "creator listed as participant");
    if (p.role == Role::responder && p.participants.size() != 1)
        flag("role-shape", "responder partition with multiple participants");
    if (p.role == Role::responder && p.prev_counter && *p.prev_counter == kZeroHash)
        flag("role-shape", "responder partition with null origin link");

    if (k == PayloadKind::agreement) {
        const auto& a = std::get<AgreementPayload>(p.payload);
        if (a.n < 1) flag("agreement-n", "zero increments");
        if (a.base_amount == 0 || a.quote_amount == 0) flag("agreement-amount", "zero amount");
        if (a.base == a.quote) flag("agreement-pair", "identical assets");
        if (a.initiator == a.counterparty) flag("agreement-parties", "self trade");
        if (p.role == Role::origin && p.creator != a.initiator)
            flag("agreement-parties", "origin partition not created by the initiator");
        if (p.role == Role::origin && p.participants.size() == 1 && p.participants[0] != a.counterparty)
            flag("agreement-parties", "participant differs from the named counterparty");
        bool init_gets = !a.initiator_gives_base;   // initiator receives base?
        const std::string& init_chain_expected = init_gets ? a.base : a.quote;
        const std::string& cp_chain_expected = init_gets ? a.quote : a.base;
        if (a.init_recv_chain != init_chain_expected || a.cp_recv_chain != cp_chain_expected)
            flag("agreement-wallets", "receive wallets on the wrong chains");
        if (a.init_recv_addr.empty() || a.cp_recv_addr.empty())
            flag("agreement-wallets", "missing wallet address");
    } else if (k == PayloadKind::payment) {
        const auto& pay = std::get<PaymentPayload>(p.payload);
        if (p.role == Role::origin && pay.payer != p.creator)
            flag("payment-payer", "payment recorded by someone other than the payer");
        if (pay.amount == 0) flag("payment-amount", "zero amount");
        if (pay.index == 0) flag("payment-index", "index zero");
    } else {
        const auto& d = std::get<TradeDonePayload>(p.payload);
        if (d.payments.empty()) flag("done-refs", "no payment references");
        std::set<BlockRef> uniq_refs(d.payments.begin(), d.payments.end());
        if (uniq_refs.size() != d.payments.size()) flag("done-refs", "duplicate payment references");
    }
}

std::vector<Violation> verify_chain(const std::map<u64, BlockPartition>& chain, const PeerId& owner) {
    std::vector<Violation> out;
    if (chain.empty()) return out;

    u64 expect = 1;
    for (const auto& [seq, p] : chain) {
        if (seq > expect) {
            out.push_back({"seq-gap", owner, expect,
                           "missing " + std::to_string(expect) + ".." + std::to_string(seq - 1)});
        }
        expect = seq + 1;

        if (p.creator != owner)
            out.push_back({"chain-owner", owner, seq, "partition created by a different peer"});
        if (seq == 1) {
            if (p.prev_self != kZeroHash)
                out.push_back({"self-link", owner, seq, "first partition must link the zero sentinel"});
        } else if (auto prev = chain.find(seq - 1); prev != chain.end()) {
            if (p.prev_self != prev->second.hash())
                out.push_back({"self-link", owner, seq, "previous-partition hash mismatch"});
        }
        if (!p.sig_valid())
            out.push_back({"signature", owner, seq, "creator signature invalid"});
        check_payload_shape(p, out);
    }
    return out;
}

// Checks that need the whole store: entanglement between chains, counterpart
// existence for countersigned records, payment schedules against agreements.
static void cross_checks(const LedgerStore& store, std::vector<Violation>& out) {
    struct PayKey {
        Hash trade;
        PeerId payer;
        auto operator<=>(const PayKey&) const = default;
    };
    std::map<PayKey, std::vector<const BlockPartition*>> pay_seqs;

    for (const auto& [creator, chain] : store.chains()) {
        for (const auto& [seq, p] : chain) {
            PayloadKind k = payload_kind(p.payload);

            for (const auto& [who, s] : p.countersigs) {
                bool member = false;
                for (const auto& pid : p.participants) member |= pid == who;
                if (!member) {
                    out.push_back({"stray-countersig", creator, seq,
                                   "countersigned by a non-participant"});
                    continue;
                }
                if (!crypto::verify(who, p.hash(), s))
                    out.push_back({"bad-countersig", creator, seq, "countersignature invalid"});
                else if (p.role == Role::origin) {
                    bool counterpart = false;
                    if (const auto* refs = store.responders_of(p.hash()))
                        for (const auto& r : *refs) counterpart |= r.creator == who;
                    if (!counterpart)
                        out.push_back({"missing-counterpart", creator, seq,
                                       "countersigned record lacks the signer's own partition"});
                }
            }

            if (p.role == Role::responder && p.prev_counter) {
                const BlockPartition* origin =
                    store.find_by_hash(p.participants.empty() ? PeerId{} : p.participants[0],
                                       *p.prev_counter);
                if (!origin) {
                    out.push_back({"dangling-counter-ref", creator, seq,
                                   "origin partition not present"});
                } else {
                    Encoder a, b;
                    encode_payload(a, p.payload);
                    encode_payload(b, origin->payload);
                    if (a.bytes() != b.bytes())
                        out.push_back({"payload-mismatch", creator, seq,
                                       "responder payload differs from origin"});
                    if (origin->role != Role::origin)
                        out.push_back({"entanglement", creator, seq,
                                       "counterparty link points at a non-origin partition"});
                }
            }

            if (p.role == Role::origin && k == PayloadKind::payment) {
                const auto& pay = std::get<PaymentPayload>(p.payload);
                pay_seqs[{pay.trade.hash, pay.payer}].push_back(&p);
            }

            if (p.role == Role::origin && k == PayloadKind::trade_done) {
                const auto& d = std::get<TradeDonePayload>(p.payload);
                const TradeRecord* t = store.trade(d.trade.hash);
                if (t) {
                    if (d.payments.size() != 2ull * t->agreement.n)
                        out.push_back({"done-refs-count", creator, seq,
                                       "expected " + std::to_string(2 * t->agreement.n) +
                                           " payment references, found " +
                                           std::to_string(d.payments.size())});
                    for (const auto& r : d.payments) {
                        const BlockPartition* pb = store.resolve(r);
                        if (!pb)
                            out.push_back({"done-ref-dangling", creator, seq,
                                           "payment partition " + r.str() + " not present"});
                        else if (payload_kind(pb->payload) != PayloadKind::payment ||
                                 std::get<PaymentPayload>(pb->payload).trade.hash != d.trade.hash)
                            out.push_back({"done-ref-kind", creator, seq,
                                           "reference is not a payment of this trade"});
                    }
                }
            }
        }
    }

    for (auto& [key, blocks] : pay_seqs) {
        const TradeRecord* t = store.trade(key.trade);
        std::set<u32> seen;
        for (const BlockPartition* p : blocks) {
            const auto& pay = std::get<PaymentPayload>(p->payload);
            if (!seen.insert(pay.index).second)
                out.push_back({"payment-index-dup", p->creator, p->seq,
                               "index " + std::to_string(pay.index) + " recorded twice"});
            if (t) {
                const auto& a = t->agreement;
                bool is_init = pay.payer == a.initiator;
                bool is_cp = pay.payer == a.counterparty;
                if (!is_init && !is_cp) {
                    out.push_back({"payment-party", p->creator, p->seq,
                                   "payer is not part of the referenced trade"});
                    continue;
                }
                if (pay.index > a.n)
                    out.push_back({"payment-index-range", p->creator, p->seq,
                                   "index beyond the agreed schedule"});
                else {
                    u64 want = increment_amount(a.gives_amount(is_init), a.n, pay.index);
                    if (pay.amount != want)
                        out.push_back({"payment-amount", p->creator, p->seq,
                                       "amount off schedule: " + std::to_string(pay.amount) +
                                           " expected " + std::to_string(want)});
                    if (pay.chain != a.gives_chain(is_init))
                        out.push_back({"payment-chain", p->creator, p->seq,
                                       "settled on the wrong chain"});
                }
            }
        }
        if (!seen.empty()) {
            u32 top = *seen.rbegin();
            for (u32 i = 1; i <= top; ++i)
                if (!seen.count(i))
                    out.push_back({"payment-index-gap", key.payer, 0,
                                   "index " + std::to_string(i) + " missing below " +
                                       std::to_string(top)});
        }
    }
}

std::vector<Violation> verify_store(const LedgerStore& store) {
    std::vector<Violation> out;
    for (const auto& [creator, chain] : store.chains()) {
        auto v = verify_chain(chain, creator);
        out.insert(out.end(), v.begin(), v.end());
    }
    for (const auto& [a, b] : store.conflicts()) {
        out.push_back({"conflicting-pair", a.creator, a.seq,
                       "two partitions at one position: " + to_hex(a.hash().data(), 8) + " vs " +
                           to_hex(b.hash().data(), 8)});
    }
    cross_checks(store, out);
    return out;
}

// -- responsibility audit -----------------------------------------------------------

std::optional<PeerId> next_responsible(const TradeRecord& t, const ChainQuery& chains) {
    const AgreementPayload& a = t.agreement;
    for (u32 k = 1; k <= 2 * a.n; ++k) {
        bool payer_is_cp = (k % 2 == 0);
        u32 idx = (k + 1) / 2;
        bool verified = false;
        if (auto it = t.payments.find({payer_is_cp, idx}); it != t.payments.end()) {
            const PaymentPayload& p = it->second;
            u64 want = increment_amount(a.gives_amount(!payer_is_cp), a.n, idx);
            const std::string& chain = a.gives_chain(!payer_is_cp);
            const Bytes& dest = a.recv_addr_of_payee(!payer_is_cp);
            if (p.chain == chain && p.amount == want) {
                auto tx = chains.lookup(p.chain, p.txid);
                verified = tx && tx->status == TxStatus::confirmed && tx->amount == want &&
                           tx->to == dest;
            }
        }
        if (!verified) return payer_is_cp ? a.counterparty : a.initiator;
    }
    return std::nullopt;
}

u32 audit_responsibilities(const LedgerStore& view, const PeerId& subject, const ChainQuery& chains) {
    const auto* open = view.open_trades(subject);
    if (!open) return 0;
    u32 count = 0;
    for (const Hash& h : *open) {
        const TradeRecord* t = view.trade(h);
        if (!t || !t->countersigned || t->done) continue;
        auto who = next_responsible(*t, chains);
        if (who && *who == subject) ++count;
    }
    return count;
}

// -- dump / load ------------------------------------------------------------------

void dump_store(const LedgerStore& store, const PeerId& holder, std::string& out) {
    std::string holder_hex = to_hex(holder);
    for (const auto& [creator, chain] : store.chains()) {
        for (const auto& [seq, p] : chain) {
            out += holder_hex;
            out += ' ';
            out += to_hex(p.encode_full());
            out += '\n';
        }
    }
}

std::vector<DumpRecord> load_dump(const std::string& text) {
    std::vector<DumpRecord> records;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        size_t sp = line.find(' ');
        if (sp != 64)
            throw DecodeError("line " + std::to_string(line_no) + ": expected <holder> <partition>");
        Bytes holder_raw, part_raw;
        if (!from_hex(line.substr(0, sp), holder_raw) || holder_raw.size() != 32)
            throw DecodeError("line " + std::to_string(line_no) + ": bad holder id");
        if (!from_hex(line.substr(sp + 1), part_raw))
            throw DecodeError("line " + std::to_string(line_no) + ": bad partition hex");
        DumpRecord rec;
        std::copy(holder_raw.begin(), holder_raw.end(), rec.holder.begin());
        try {
            Decoder d(part_raw);
            rec.partition = BlockPartition::decode_full(d);
            d.expect_done();
        } catch (const DecodeError& e) {
            throw DecodeError("line " + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<Violation> verify_dump(const std::vector<DumpRecord>& records) {
    LedgerStore combined;
    std::map<PeerId, std::map<u64, BlockPartition>> own;
    std::set<PeerId> holders;
    std::vector<Violation> out;

    for (const auto& rec : records) {
        holders.insert(rec.holder);
        combined.add(rec.partition);
        if (rec.holder == rec.partition.creator) {
            auto& chain = own[rec.holder];
            auto it = chain.find(rec.partition.seq);
            if (it == chain.end()) {
                chain.emplace(rec.partition.seq, rec.partition);
            } else if (it->second.hash() != rec.partition.hash()) {
                out.push_back({"conflicting-pair", rec.holder, rec.partition.seq,
                               "creator's own store holds two versions"});
            }
        }
    }

    for (const auto& [creator, chain] : own) {
        auto v = verify_chain(chain, creator);
        out.insert(out.end(), v.begin(), v.end());
    }

    for (const auto& [a, b] : combined.conflicts()) {
        out.push_back({"conflicting-pair", a.creator, a.seq,
                       "two partitions at one position: " + to_hex(a.hash().data(), 8) + " vs " +
                           to_hex(b.hash().data(), 8)});
    }

    // Copies held by others past the creator's own advertised tip: the only
    // evidence of a silently truncated chain.
    for (const auto& [creator, chain] : combined.chains()) {
        if (!holders.count(creator)) continue;   // creator's store absent from this dump
        u64 own_tip = 0;
        if (auto it = own.find(creator); it != own.end() && !it->second.empty())
            own_tip = it->second.rbegin()->first;
        for (const auto& [seq, p] : chain) {
            if (seq > own_tip)
                out.push_back({"beyond-tip", creator, seq,
                               "counterparty holds a partition past the creator's tip " +
                                   std::to_string(own_tip)});
        }
    }

    cross_checks(combined, out);
    return out;
}

}  // namespace xdx::ledger
