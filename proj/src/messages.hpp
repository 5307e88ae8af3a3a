#pragma once

// Wire vocabulary between peers. Thirteen message kinds cover the whole
// lifecycle: order intake and matching, quantity negotiation, the dual-signed
// agreement, alternating payments, and finalization. Ledger partitions travel
// as opaque encoded blobs; a BlockAck carries the countersignature plus the
// responder-side partition back to whoever holds the origin half.
//
// Every envelope is signed by its sender. Stateful exchanges echo a
// correlation id chosen by the requester; receivers drop replies whose id
// they do not recognize.

#include <optional>
#include <variant>

#include "ledger.hpp"
#include "types.hpp"

namespace xdx::msg {

enum class MsgKind : u8 {
    order = 1,
    cancel_order,
    match,
    reject_match,
    trade_proposal,
    negotiate,
    trade_accept,
    trade_reject,
    payment,
    partial_agreement,
    agreement,
    partial_trade_done,
    trade_done,
};

const char* kind_name(MsgKind k);

enum class RejectReason : u8 {
    unknown_order = 1,
    expired,
    cancelled,
    assets_reserved,
    negotiation_failed,
    responsibility_held,
    malformed,
};

const char* reject_name(RejectReason r);

// What a negotiation converges on. Amounts are denominated in the target
// (resident) order's pair, so the counterparty can check its own grid.
struct TradeTerms {
    SignedOrder initiator_order;
    OrderId target;
    std::string base, quote;
    u64 base_amount = 0;
    u64 quote_amount = 0;
    u32 n = 1;  // alternating increments per side

    void encode(Encoder& e) const;
    static TradeTerms decode(Decoder& d);
    bool operator==(const TradeTerms& o) const;
};

// Countersignature plus responder partition for a block the receiver created.
struct BlockAck {
    BlockRef target;
    Signature countersig{};
    Bytes responder;  // encoded responder partition

    void encode(Encoder& e) const;
    static BlockAck decode(Decoder& d);
};

struct MsgOrder {
    SignedOrder order;
};
struct MsgCancelOrder {
    OrderId id;  // envelope sender must be the creator
};
struct MsgMatch {
    OrderId target;        // the receiver's own order
    SignedOrder candidate; // the nominated counterpart
    u64 qty = 0;           // matchable amount, normalized base units
};
struct MsgRejectMatch {
    OrderId own_order;                  // the sender's order the report is about
    std::optional<OrderId> candidate;   // absent when the own order itself died
    RejectReason reason = RejectReason::unknown_order;
};
struct MsgTradeProposal {
    TradeTerms terms;
};
struct MsgNegotiate {
    TradeTerms terms;  // counter-proposal
};
struct MsgTradeAccept {
    TradeTerms terms;  // the accepted (possibly countered) terms
};
struct MsgTradeReject {
    RejectReason reason = RejectReason::negotiation_failed;
};
struct MsgPayment {
    Bytes partition;               // payer's origin payment partition
    std::optional<BlockAck> ack;   // countersign of the other side's previous payment
};
struct MsgPartialAgreement {
    Bytes partition;  // initiator's origin agreement partition
};
struct MsgAgreement {
    BlockAck ack;  // counterparty's countersignature + responder partition
};
struct MsgPartialTradeDone {
    Bytes partition;              // initiator's origin trade-done partition
    std::optional<BlockAck> ack;  // countersign of the counterparty's final payment
};
struct MsgTradeDone {
    std::optional<BlockAck> ack;  // present counterparty->initiator, absent toward matchmakers
    Bytes done;                   // origin trade-done partition, countersigned
    Bytes agreement;              // origin agreement partition, countersigned
};

using MsgBody = std::variant<MsgOrder, MsgCancelOrder, MsgMatch, MsgRejectMatch, MsgTradeProposal,
                             MsgNegotiate, MsgTradeAccept, MsgTradeReject, MsgPayment,
                             MsgPartialAgreement, MsgAgreement, MsgPartialTradeDone, MsgTradeDone>;

struct Envelope {
    PeerId sender{};
    u64 correlation = 0;  // 0 = unsolicited
    MsgBody body;
    Signature sig{};

    MsgKind kind() const;
    Hash digest() const;  // everything but the signature
    Bytes encode() const;
    static Envelope decode(Decoder& d);  // throws DecodeError on malformed input

    void sign(const crypto::Keypair& kp);
    bool verify() const;
};

template <typename T>
Envelope make_envelope(const crypto::Keypair& kp, u64 correlation, T body) {
    Envelope e;
    e.sender = kp.pub;
    e.correlation = correlation;
    e.body = std::move(body);
    e.sign(kp);
    return e;
}

}  // namespace xdx::msg
