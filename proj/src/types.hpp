#pragma once

#include <compare>
#include <optional>
#include <string>

#include "codec.hpp"
#include "crypto.hpp"
#include "util.hpp"

namespace xdx {

// Asset ids double as chain ids: each asset lives on its own mock chain.
struct AssetPair {
    std::string base;
    std::string quote;
    u64 base_qty = 0;    // amount of base offered or requested
    u64 quote_qty = 0;   // amount of quote asked or bid in exchange

    // price of one base unit expressed in quote units, exact
    Rational price() const {
        return Rational(static_cast<i64>(quote_qty), static_cast<i64>(base_qty));
    }

    void encode(Encoder& e) const {
        e.put_str(base);
        e.put_str(quote);
        e.put_u64(base_qty);
        e.put_u64(quote_qty);
    }
    static AssetPair decode(Decoder& d) {
        AssetPair p;
        p.base = d.get_str();
        p.quote = d.get_str();
        p.base_qty = d.get_u64();
        p.quote_qty = d.get_u64();
        return p;
    }
};

struct OrderId {
    PeerId creator{};
    u64 seq = 0;

    auto operator<=>(const OrderId&) const = default;

    void encode(Encoder& e) const {
        e.put_fixed(creator);
        e.put_u64(seq);
    }
    static OrderId decode(Decoder& d) {
        OrderId id;
        id.creator = d.get_fixed<32>();
        id.seq = d.get_u64();
        return id;
    }
    std::string str() const { return to_hex(creator.data(), 4) + ":" + std::to_string(seq); }
};

// The immutable, signed part of an order. Fill state lives outside: quantity
// already traded or reserved changes over an order's life and is never signed.
struct OrderCore {
    PeerId creator{};
    u64 order_seq = 0;
    SimTime created_at = 0;
    SimTime timeout = 0;     // relative to created_at
    bool is_offer = false;   // offer sells base for quote; request buys base
    AssetPair pair;

    OrderId id() const { return {creator, order_seq}; }
    SimTime expires_at() const { return created_at + timeout; }

    Bytes encode() const {
        Encoder e;
        e.put_fixed(creator);
        e.put_u64(order_seq);
        e.put_i64(created_at);
        e.put_i64(timeout);
        e.put_bool(is_offer);
        pair.encode(e);
        return e.take();
    }
    static OrderCore decode(Decoder& d) {
        OrderCore c;
        c.creator = d.get_fixed<32>();
        c.order_seq = d.get_u64();
        c.created_at = d.get_i64();
        c.timeout = d.get_i64();
        c.is_offer = d.get_bool();
        c.pair = AssetPair::decode(d);
        return c;
    }
    Hash digest() const { return crypto::sha256(encode()); }
};

struct SignedOrder {
    OrderCore core;
    Signature sig{};

    bool verify_sig() const { return crypto::verify(core.creator, core.digest(), sig); }

    void encode(Encoder& e) const {
        Bytes c = core.encode();
        e.put_bytes(c);
        e.put_fixed(sig);
    }
    static SignedOrder decode(Decoder& d) {
        SignedOrder o;
        Bytes c = d.get_bytes();
        Decoder cd(c);
        o.core = OrderCore::decode(cd);
        cd.expect_done();
        o.sig = d.get_fixed<64>();
        return o;
    }
};

// Stable handle to a ledger partition.
struct BlockRef {
    PeerId creator{};
    u64 seq = 0;
    Hash hash{};

    auto operator<=>(const BlockRef&) const = default;

    void encode(Encoder& e) const {
        e.put_fixed(creator);
        e.put_u64(seq);
        e.put_fixed(hash);
    }
    static BlockRef decode(Decoder& d) {
        BlockRef r;
        r.creator = d.get_fixed<32>();
        r.seq = d.get_u64();
        r.hash = d.get_fixed<32>();
        return r;
    }
    std::string str() const { return to_hex(hash.data(), 8); }
};

// External-chain state as seen by wallets and auditors.
enum class TxStatus : u8 { unknown = 0, pending = 1, confirmed = 2 };

struct ExternalTx {
    TxStatus status = TxStatus::unknown;
    Bytes from;
    Bytes to;
    u64 amount = 0;
    SimTime submitted_at = 0;
    SimTime confirmed_at = 0;
};

// Read-only view of the external chains, the only thing an auditor needs.
class ChainQuery {
public:
    virtual ~ChainQuery() = default;
    virtual std::optional<ExternalTx> lookup(const std::string& chain, const Hash& txid) const = 0;
};

// Evenly split a payment side into n increments; the remainder rides on the
// final increment so the total is exact.
inline u64 increment_amount(u64 total, u32 n, u32 idx) {
    u64 base = total / n;
    return idx == n ? total - base * (n - 1) : base;
}

}  // namespace xdx
