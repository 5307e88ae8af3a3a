#include "messages.hpp"

namespace xdx::msg {

const char* kind_name(MsgKind k) {
    switch (k) {
        case MsgKind::order: return "order";
        case MsgKind::cancel_order: return "cancel-order";
        case MsgKind::match: return "match";
        case MsgKind::reject_match: return "reject-match";
        case MsgKind::trade_proposal: return "trade-proposal";
        case MsgKind::negotiate: return "negotiate";
        case MsgKind::trade_accept: return "trade-accept";
        case MsgKind::trade_reject: return "trade-reject";
        case MsgKind::payment: return "payment";
        case MsgKind::partial_agreement: return "partial-agreement";
        case MsgKind::agreement: return "agreement";
        case MsgKind::partial_trade_done: return "partial-trade-done";
        case MsgKind::trade_done: return "trade-done";
    }
    return "?";
}

const char* reject_name(RejectReason r) {
    switch (r) {
        case RejectReason::unknown_order: return "unknown-order";
        case RejectReason::expired: return "expired";
        case RejectReason::cancelled: return "cancelled";
        case RejectReason::assets_reserved: return "assets-reserved";
        case RejectReason::negotiation_failed: return "negotiation-failed";
        case RejectReason::responsibility_held: return "responsibility-held";
        case RejectReason::malformed: return "malformed";
    }
    return "?";
}

void TradeTerms::encode(Encoder& e) const {
    initiator_order.encode(e);
    target.encode(e);
    e.put_str(base);
    e.put_str(quote);
    e.put_u64(base_amount);
    e.put_u64(quote_amount);
    e.put_u32(n);
}

TradeTerms TradeTerms::decode(Decoder& d) {
    TradeTerms t;
    t.initiator_order = SignedOrder::decode(d);
    t.target = OrderId::decode(d);
    t.base = d.get_str();
    t.quote = d.get_str();
    t.base_amount = d.get_u64();
    t.quote_amount = d.get_u64();
    t.n = d.get_u32();
    return t;
}

bool TradeTerms::operator==(const TradeTerms& o) const {
    Encoder a, b;
    encode(a);
    o.encode(b);
    return a.bytes() == b.bytes();
}

void BlockAck::encode(Encoder& e) const {
    target.encode(e);
    e.put_fixed(countersig);
    e.put_bytes(responder);
}

BlockAck BlockAck::decode(Decoder& d) {
    BlockAck a;
    a.target = BlockRef::decode(d);
    a.countersig = d.get_fixed<64>();
    a.responder = d.get_bytes();
    return a;
}

namespace {

void put_opt_ack(Encoder& e, const std::optional<BlockAck>& a) {
    e.put_bool(a.has_value());
    if (a) a->encode(e);
}

std::optional<BlockAck> get_opt_ack(Decoder& d) {
    if (!d.get_bool()) return std::nullopt;
    return BlockAck::decode(d);
}

struct BodyEncoder {
    Encoder& e;
    void operator()(const MsgOrder& m) { m.order.encode(e); }
    void operator()(const MsgCancelOrder& m) { m.id.encode(e); }
    void operator()(const MsgMatch& m) {
        m.target.encode(e);
        m.candidate.encode(e);
        e.put_u64(m.qty);
    }
    void operator()(const MsgRejectMatch& m) {
        m.own_order.encode(e);
        e.put_bool(m.candidate.has_value());
        if (m.candidate) m.candidate->encode(e);
        e.put_u8(static_cast<u8>(m.reason));
    }
    void operator()(const MsgTradeProposal& m) { m.terms.encode(e); }
    void operator()(const MsgNegotiate& m) { m.terms.encode(e); }
    void operator()(const MsgTradeAccept& m) { m.terms.encode(e); }
    void operator()(const MsgTradeReject& m) { e.put_u8(static_cast<u8>(m.reason)); }
    void operator()(const MsgPayment& m) {
        e.put_bytes(m.partition);
        put_opt_ack(e, m.ack);
    }
    void operator()(const MsgPartialAgreement& m) { e.put_bytes(m.partition); }
    void operator()(const MsgAgreement& m) { m.ack.encode(e); }
    void operator()(const MsgPartialTradeDone& m) {
        e.put_bytes(m.partition);
        put_opt_ack(e, m.ack);
    }
    void operator()(const MsgTradeDone& m) {
        put_opt_ack(e, m.ack);
        e.put_bytes(m.done);
        e.put_bytes(m.agreement);
    }
};

RejectReason decode_reason(u8 raw) {
    if (raw < 1 || raw > static_cast<u8>(RejectReason::malformed))
        throw DecodeError("bad reject reason");
    return static_cast<RejectReason>(raw);
}

MsgBody decode_body(MsgKind k, Decoder& d) {
    switch (k) {
        case MsgKind::order: return MsgOrder{SignedOrder::decode(d)};
        case MsgKind::cancel_order: return MsgCancelOrder{OrderId::decode(d)};
        case MsgKind::match: {
            MsgMatch m;
            m.target = OrderId::decode(d);
            m.candidate = SignedOrder::decode(d);
            m.qty = d.get_u64();
            return m;
        }
        case MsgKind::reject_match: {
            MsgRejectMatch m;
            m.own_order = OrderId::decode(d);
            if (d.get_bool()) m.candidate = OrderId::decode(d);
            m.reason = decode_reason(d.get_u8());
            return m;
        }
        case MsgKind::trade_proposal: return MsgTradeProposal{TradeTerms::decode(d)};
        case MsgKind::negotiate: return MsgNegotiate{TradeTerms::decode(d)};
        case MsgKind::trade_accept: return MsgTradeAccept{TradeTerms::decode(d)};
        case MsgKind::trade_reject: return MsgTradeReject{decode_reason(d.get_u8())};
        case MsgKind::payment: {
            MsgPayment m;
            m.partition = d.get_bytes();
            m.ack = get_opt_ack(d);
            return m;
        }
        case MsgKind::partial_agreement: return MsgPartialAgreement{d.get_bytes()};
        case MsgKind::agreement: return MsgAgreement{BlockAck::decode(d)};
        case MsgKind::partial_trade_done: {
            MsgPartialTradeDone m;
            m.partition = d.get_bytes();
            m.ack = get_opt_ack(d);
            return m;
        }
        case MsgKind::trade_done: {
            MsgTradeDone m;
            m.ack = get_opt_ack(d);
            m.done = d.get_bytes();
            m.agreement = d.get_bytes();
            return m;
        }
    }
    throw DecodeError("bad message kind");
}

}  // namespace

MsgKind Envelope::kind() const { return static_cast<MsgKind>(body.index() + 1); }

static Bytes envelope_scope(const Envelope& v) {
    Encoder e;
    e.put_u8(static_cast<u8>(v.kind()));
    e.put_fixed(v.sender);
    e.put_u64(v.correlation);
    std::visit(BodyEncoder{e}, v.body);
    return e.take();
}

Hash Envelope::digest() const { return crypto::sha256(envelope_scope(*this)); }

Bytes Envelope::encode() const {
    Encoder e;
    e.put_bytes(envelope_scope(*this));
    e.put_fixed(sig);
    return e.take();
}

Envelope Envelope::decode(Decoder& d) {
    Bytes scope = d.get_bytes();
    Envelope v;
    Decoder sd(scope);
    u8 raw = sd.get_u8();
    if (raw < 1 || raw > 13) throw DecodeError("bad message kind");
    v.sender = sd.get_fixed<32>();
    v.correlation = sd.get_u64();
    v.body = decode_body(static_cast<MsgKind>(raw), sd);
    sd.expect_done();
    v.sig = d.get_fixed<64>();
    return v;
}

void Envelope::sign(const crypto::Keypair& kp) { sig = crypto::sign(kp, digest()); }

bool Envelope::verify() const { return crypto::verify(sender, digest(), sig); }

}  // namespace xdx::msg
