#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "oracles.hpp"

using namespace xdx;
using namespace xdx::ledger;
using namespace xdx::testing;

namespace {

SignedOrder make_order(const crypto::Keypair& kp, u64 seq, bool is_offer, u64 base_qty = 1000000,
                       u64 quote_qty = 1000000) {
    SignedOrder o;
    o.core.creator = kp.pub;
    o.core.order_seq = seq;
    o.core.created_at = 5_s;
    o.core.timeout = 3600_s;
    o.core.is_offer = is_offer;
    o.core.pair = {"alpha", "beta", base_qty, quote_qty};
    o.sig = crypto::sign(kp, o.core.digest());
    return o;
}

AgreementPayload make_agreement(const crypto::Keypair& a, const crypto::Keypair& b, u32 n,
                                u64 base_amount = 10, u64 quote_amount = 1000000) {
    AgreementPayload ag;
    ag.initiator = a.pub;
    ag.counterparty = b.pub;
    ag.initiator_order = {a.pub, 1};
    ag.counterparty_order = {b.pub, 1};
    ag.base = "alpha";
    ag.quote = "beta";
    ag.base_amount = base_amount;
    ag.quote_amount = quote_amount;
    ag.initiator_gives_base = true;
    ag.n = n;
    ag.publication_deadline = 60_s;
    ag.init_recv_chain = "beta";    // initiator gives base, receives quote
    ag.init_recv_addr = Bytes{'w', 'a'};
    ag.cp_recv_chain = "alpha";
    ag.cp_recv_addr = Bytes{'w', 'b'};
    return ag;
}

// Route a bilateral record the way the protocol will: origin appended by the
// initiator, countersigned by the counterparty, signature and responder copy
// handed back.
BlockPartition bilateral(LedgerStore& sa, const crypto::Keypair& ka, LedgerStore& sb,
                         const crypto::Keypair& kb, TxPayload payload) {
    BlockPartition origin = initiate_bilateral(sa, ka, kb.pub, std::move(payload));
    CountersignResult r = countersign(sb, kb, origin);
    REQUIRE(sa.attach_countersig(origin.creator, origin.seq, kb.pub, r.countersig));
    sa.add(r.responder);
    return *sa.find(origin.creator, origin.seq);
}

// Flatten stores into one deduplicated partition list for the oracle.
std::vector<BlockPartition> collect(std::initializer_list<const LedgerStore*> stores) {
    std::map<Hash, BlockPartition> by_hash;
    for (const LedgerStore* s : stores)
        for (const auto& [creator, chain] : s->chains())
            for (const auto& [seq, p] : chain) by_hash.emplace(p.hash(), p);
    std::vector<BlockPartition> out;
    for (auto& [h, p] : by_hash) out.push_back(p);
    return out;
}

struct TradeFixture {
    crypto::Keypair ka = test_keys(1);
    crypto::Keypair kb = test_keys(2);
    LedgerStore sa, sb;
    FakeChains chains;
    AgreementPayload ag;
    BlockRef trade;

    explicit TradeFixture(u32 n) : ag(make_agreement(ka, kb, n)) {
        BlockPartition origin = bilateral(sa, ka, sb, kb, ag);
        trade = origin.ref();
    }

    // Author payment k of the alternating schedule (1-based, initiator first).
    // The transfer is fabricated on the fake chain, then recorded on-ledger by
    // the payer and countersigned by the payee.
    void pay(u32 k, TxStatus status = TxStatus::confirmed, i64 amount_delta = 0,
             bool wrong_dest = false, bool skip_record = false) {
        bool payer_is_init = (k % 2 == 1);
        u32 idx = (k + 1) / 2;
        u64 amount = static_cast<u64>(
            static_cast<i64>(increment_amount(ag.gives_amount(payer_is_init), ag.n, idx)) +
            amount_delta);
        const std::string& chain = ag.gives_chain(payer_is_init);
        Bytes dest = ag.recv_addr_of_payee(payer_is_init);
        if (wrong_dest) dest.push_back('x');

        PaymentPayload p;
        p.trade = trade;
        p.payer = payer_is_init ? ka.pub : kb.pub;
        p.chain = chain;
        p.txid = chains.put(chain, dest, amount, status);
        p.amount = amount;
        p.index = idx;
        if (skip_record) return;
        if (payer_is_init)
            bilateral(sa, ka, sb, kb, p);
        else
            bilateral(sb, kb, sa, ka, p);
    }

    void finish() {
        TradeDonePayload d;
        d.trade = trade;
        const TradeRecord* t = sa.trade(trade.hash);
        REQUIRE(t != nullptr);
        for (const auto& [key, pay] : t->payments) {
            const auto* refs = sa.chains().at(pay.payer).empty() ? nullptr : &sa.chains().at(pay.payer);
            REQUIRE(refs != nullptr);
            bool found = false;
            for (const auto& [seq, part] : *refs) {
                if (part.role != Role::origin) continue;
                if (payload_kind(part.payload) != PayloadKind::payment) continue;
                const auto& pp = std::get<PaymentPayload>(part.payload);
                if (pp.trade.hash == trade.hash && pp.payer == pay.payer && pp.index == pay.index) {
                    d.payments.push_back(part.ref());
                    found = true;
                    break;
                }
            }
            REQUIRE(found);
        }
        bilateral(sa, ka, sb, kb, d);
    }

    u32 audit_engine(const PeerId& subject) const {
        return audit_responsibilities(sa, subject, chains);
    }
    u32 audit_reference(const PeerId& subject) const {
        return audit_bruteforce(collect({&sa, &sb}), subject, chains);
    }
};

}  // namespace

TEST_CASE("payload codecs roundtrip") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2);
    std::vector<TxPayload> payloads;
    payloads.push_back(OrderPayload{make_order(ka, 7, true)});
    payloads.push_back(make_agreement(ka, kb, 3));
    PaymentPayload pay;
    pay.trade = {ka.pub, 4, crypto::sha256(Bytes{1, 2, 3})};
    pay.payer = kb.pub;
    pay.chain = "beta";
    pay.txid = crypto::sha256(Bytes{9});
    pay.amount = 333333;
    pay.index = 2;
    payloads.push_back(pay);
    TradeDonePayload d;
    d.trade = pay.trade;
    d.payments.push_back({ka.pub, 5, crypto::sha256(Bytes{4})});
    d.payments.push_back({kb.pub, 2, crypto::sha256(Bytes{5})});
    payloads.push_back(d);

    for (const auto& p : payloads) {
        Encoder e;
        encode_payload(e, p);
        Bytes first = e.take();
        Decoder dec(first);
        TxPayload back = decode_payload(dec);
        dec.expect_done();
        CHECK(payload_kind(back) == payload_kind(p));
        Encoder e2;
        encode_payload(e2, back);
        CHECK(e2.bytes() == first);
    }
}

TEST_CASE("partition hash ignores countersignatures and the full codec roundtrips") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2), kc = test_keys(3);
    LedgerStore sa;
    BlockPartition origin = initiate_bilateral(sa, ka, kb.pub, make_agreement(ka, kb, 1));
    Hash before = origin.hash();

    Signature cs_b = crypto::sign(kb, before);
    Signature cs_c = crypto::sign(kc, before);
    BlockPartition signed_once = origin;
    signed_once.countersigs.emplace_back(kb.pub, cs_b);
    CHECK(signed_once.hash() == before);

    // attachment order must not change the canonical bytes
    BlockPartition ab = origin, ba = origin;
    ab.countersigs = {{kb.pub, cs_b}, {kc.pub, cs_c}};
    ba.countersigs = {{kc.pub, cs_c}, {kb.pub, cs_b}};
    CHECK(ab.encode_full() == ba.encode_full());

    Bytes wire = signed_once.encode_full();
    Decoder dec(wire);
    BlockPartition back = BlockPartition::decode_full(dec);
    dec.expect_done();
    CHECK(back.hash() == before);
    CHECK(back.sig_valid());
    REQUIRE(back.countersigs.size() == 1);
    CHECK(back.countersigs[0].first == kb.pub);
    CHECK(back.encode_full() == wire);
}

TEST_CASE("unilateral appends grow a clean chain") {
    crypto::Keypair ka = test_keys(1);
    LedgerStore sa;
    BlockPartition p1 = append_unilateral(sa, ka, make_order(ka, 1, true));
    BlockPartition p2 = append_unilateral(sa, ka, make_order(ka, 2, false));
    CHECK(p1.seq == 1);
    CHECK(p1.prev_self == kZeroHash);
    CHECK(p2.seq == 2);
    CHECK(p2.prev_self == p1.hash());
    CHECK(p2.sig_valid());
    CHECK(verify_store(sa).empty());

    crypto::Keypair kb = test_keys(2);
    CHECK_THROWS_AS(append_unilateral(sa, ka, make_order(kb, 3, true)), std::invalid_argument);
}

TEST_CASE("bilateral record lands on both chains and opens the trade") {
    TradeFixture fx(2);
    // origin on A's chain, responder on B's chain, copies on both sides
    CHECK(fx.sa.tip_seq(fx.ka.pub) == 1);
    CHECK(fx.sa.tip_seq(fx.kb.pub) == 1);
    CHECK(fx.sb.tip_seq(fx.ka.pub) == 1);
    CHECK(fx.sb.tip_seq(fx.kb.pub) == 1);

    const BlockPartition* origin = fx.sa.find(fx.ka.pub, 1);
    REQUIRE(origin != nullptr);
    CHECK(origin->role == Role::origin);
    REQUIRE(origin->countersigs.size() == 1);

    const BlockPartition* resp = fx.sa.find(fx.kb.pub, 1);
    REQUIRE(resp != nullptr);
    CHECK(resp->role == Role::responder);
    REQUIRE(resp->prev_counter.has_value());
    CHECK(*resp->prev_counter == origin->hash());

    for (const LedgerStore* s : {&fx.sa, &fx.sb}) {
        const TradeRecord* t = s->trade(fx.trade.hash);
        REQUIRE(t != nullptr);
        CHECK(t->countersigned);
        CHECK(!t->done);
        const auto* open = s->open_trades(fx.ka.pub);
        REQUIRE(open != nullptr);
        CHECK(open->size() == 1);
    }
    CHECK(verify_store(fx.sa).empty());
    CHECK(verify_store(fx.sb).empty());
}

TEST_CASE("countersign rejects tampered or misaddressed partitions") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2), kc = test_keys(3);
    LedgerStore sa, sb;
    BlockPartition origin = initiate_bilateral(sa, ka, kb.pub, make_agreement(ka, kb, 1));

    BlockPartition tampered = origin;
    std::get<AgreementPayload>(tampered.payload).base_amount += 1;
    CHECK_THROWS_AS(countersign(sb, kb, tampered), std::invalid_argument);

    LedgerStore sc;
    CHECK_THROWS_AS(countersign(sc, kc, origin), std::invalid_argument);

    BlockPartition unsigned_copy = origin;
    unsigned_copy.sig = Signature{};
    CHECK_THROWS_AS(countersign(sb, kb, unsigned_copy), std::invalid_argument);

    CHECK(sb.partition_count() == 0);
}

TEST_CASE("countersign is idempotent on re-delivery") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2);
    LedgerStore sa, sb;
    BlockPartition origin = initiate_bilateral(sa, ka, kb.pub, make_agreement(ka, kb, 1));

    CountersignResult first = countersign(sb, kb, origin);
    CountersignResult second = countersign(sb, kb, origin);
    CHECK(first.countersig == second.countersig);
    CHECK(first.responder.hash() == second.responder.hash());
    CHECK(sb.tip_seq(kb.pub) == 1);   // chain did not grow twice
}

TEST_CASE("conflicting partitions are kept aside as fraud material") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2);
    LedgerStore sa;
    BlockPartition origin = initiate_bilateral(sa, ka, kb.pub, make_agreement(ka, kb, 1));

    BlockPartition rewrite = origin;
    std::get<AgreementPayload>(rewrite.payload).quote_amount -= 1;
    rewrite.sig = crypto::sign(ka, rewrite.hash());
    sa.add(rewrite);

    REQUIRE(sa.conflicts().size() == 1);
    auto violations = verify_store(sa);
    bool flagged = false;
    for (const auto& v : violations) flagged |= v.kind == "conflicting-pair";
    CHECK(flagged);
}

TEST_CASE("multiparty tree links every leaf to the root") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2), kc = test_keys(3);
    LedgerStore sa, sb, sc;
    // shared record: reuse the agreement payload shape, three chains involved
    MultipartyTree tree = build_multiparty_block(sa, ka, {{&sb, &kb}, {&sc, &kc}},
                                                 make_agreement(ka, kb, 1));
    CHECK(tree.root.participants.size() == 2);
    CHECK(tree.leaves.size() == 2);
    CHECK(tree.root_countersigs.size() == 2);
    for (const auto& leaf : tree.leaves) {
        REQUIRE(leaf.prev_counter.has_value());
        CHECK(*leaf.prev_counter == tree.root.hash());
    }
    const BlockPartition* root = sa.find(ka.pub, 1);
    REQUIRE(root != nullptr);
    CHECK(root->countersigs.size() == 2);
    CHECK(sb.tip_seq(kb.pub) == 1);
    CHECK(sc.tip_seq(kc.pub) == 1);
    CHECK(verify_store(sa).empty());
}

TEST_CASE("responsibility audit matches the brute-force walker") {
    for (u32 n : {1u, 2u, 3u}) {
        for (u32 paid = 0; paid <= 2 * n; ++paid) {
            TradeFixture fx(n);
            for (u32 k = 1; k <= paid; ++k) fx.pay(k);
            for (const PeerId& subject : {fx.ka.pub, fx.kb.pub}) {
                INFO("n=", n, " paid=", paid);
                CHECK(fx.audit_engine(subject) == fx.audit_reference(subject));
                CHECK(audit_responsibilities(fx.sb, subject, fx.chains) ==
                      fx.audit_reference(subject));
            }
            // alternation pinned by hand: before any payment the initiator is
            // the responsible party, after one it is the counterparty
            if (paid == 0) CHECK(fx.audit_engine(fx.ka.pub) == 1);
            if (paid == 1) {
                CHECK(fx.audit_engine(fx.ka.pub) == 0);
                CHECK(fx.audit_engine(fx.kb.pub) == 1);
            }
            if (paid == 2 * n) {
                // schedule complete, nobody owes anything
                CHECK(fx.audit_engine(fx.ka.pub) == 0);
                CHECK(fx.audit_engine(fx.kb.pub) == 0);
            }
        }
    }
}

TEST_CASE("audit holds the payer responsible until external confirmation") {
    TradeFixture fx(2);
    fx.pay(1);

    SUBCASE("pending transfer") { fx.pay(2, TxStatus::pending); }
    SUBCASE("wrong amount") { fx.pay(2, TxStatus::confirmed, -1); }
    SUBCASE("wrong destination") { fx.pay(2, TxStatus::confirmed, 0, true); }
    SUBCASE("transfer confirmed but never recorded on-ledger") {
        fx.pay(2, TxStatus::confirmed, 0, false, true);
    }

    CHECK(fx.audit_engine(fx.kb.pub) == 1);
    CHECK(fx.audit_engine(fx.ka.pub) == 0);
    CHECK(fx.audit_reference(fx.kb.pub) == 1);
}

TEST_CASE("completed trade closes and stops counting") {
    TradeFixture fx(3);
    for (u32 k = 1; k <= 6; ++k) fx.pay(k);
    fx.finish();

    const TradeRecord* t = fx.sa.trade(fx.trade.hash);
    REQUIRE(t != nullptr);
    CHECK(t->done);
    const auto* open = fx.sa.open_trades(fx.ka.pub);
    CHECK((open == nullptr || open->empty()));
    CHECK(fx.audit_engine(fx.ka.pub) == 0);
    CHECK(fx.audit_reference(fx.ka.pub) == 0);
    CHECK(verify_store(fx.sa).empty());
    CHECK(verify_store(fx.sb).empty());
}

TEST_CASE("two concurrent trades count independently") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2);
    LedgerStore sa, sb;
    FakeChains chains;
    bilateral(sa, ka, sb, kb, make_agreement(ka, kb, 1));
    bilateral(sa, ka, sb, kb, make_agreement(ka, kb, 2, 20, 500000));
    CHECK(audit_responsibilities(sa, ka.pub, chains) == 2);
    CHECK(audit_responsibilities(sa, kb.pub, chains) == 0);
    CHECK(audit_bruteforce(collect({&sa, &sb}), ka.pub, chains) == 2);
}

TEST_CASE("store assembled out of causal order still indexes trades") {
    TradeFixture fx(2);
    for (u32 k = 1; k <= 4; ++k) fx.pay(k);
    fx.finish();

    // replay every partition into a fresh store in reverse chain order
    std::vector<BlockPartition> all = collect({&fx.sa, &fx.sb});
    LedgerStore rebuilt;
    for (auto it = all.rbegin(); it != all.rend(); ++it) rebuilt.add(*it);

    const TradeRecord* t = rebuilt.trade(fx.trade.hash);
    REQUIRE(t != nullptr);
    CHECK(t->countersigned);
    CHECK(t->done);
    CHECK(t->payments.size() == 4);
    CHECK(audit_responsibilities(rebuilt, fx.ka.pub, fx.chains) == 0);
}

TEST_CASE("dump and load roundtrip, clean stores verify clean") {
    TradeFixture fx(2);
    for (u32 k = 1; k <= 4; ++k) fx.pay(k);
    fx.finish();

    std::string text;
    dump_store(fx.sa, fx.ka.pub, text);
    dump_store(fx.sb, fx.kb.pub, text);

    std::vector<DumpRecord> records = load_dump(text);
    CHECK(records.size() == fx.sa.partition_count() + fx.sb.partition_count());
    CHECK(verify_dump(records).empty());
}

namespace {
std::vector<DumpRecord> dump_records(const TradeFixture& fx) {
    std::string text;
    dump_store(fx.sa, fx.ka.pub, text);
    dump_store(fx.sb, fx.kb.pub, text);
    return load_dump(text);
}

bool has_kind(const std::vector<Violation>& vs, const std::string& kind) {
    for (const auto& v : vs)
        if (v.kind == kind) return true;
    return false;
}
}  // namespace

TEST_CASE("dump verification detects a truncated chain") {
    TradeFixture fx(1);
    fx.pay(1);
    fx.pay(2);

    std::vector<DumpRecord> records = dump_records(fx);
    u64 tip = fx.sb.tip_seq(fx.kb.pub);

    SUBCASE("tip deleted") {
        std::erase_if(records, [&](const DumpRecord& r) {
            return r.holder == fx.kb.pub && r.partition.creator == fx.kb.pub &&
                   r.partition.seq == tip;
        });
        CHECK(has_kind(verify_dump(records), "beyond-tip"));
    }
    SUBCASE("middle deleted") {
        std::erase_if(records, [&](const DumpRecord& r) {
            return r.holder == fx.kb.pub && r.partition.creator == fx.kb.pub &&
                   r.partition.seq == tip - 1;
        });
        auto vs = verify_dump(records);
        CHECK(has_kind(vs, "seq-gap"));
    }
}

TEST_CASE("dump verification detects a rewritten history") {
    TradeFixture fx(1);
    fx.pay(1);
    fx.pay(2);

    // B regrets its payment record: rebuild its chain from that partition on,
    // with the amount altered and every signature and self link recomputed.
    // Copies held by A expose the fork.
    u64 fork_seq = 0;
    const auto& bchain = fx.sb.chains().at(fx.kb.pub);
    for (const auto& [seq, p] : bchain)
        if (p.role == Role::origin && payload_kind(p.payload) == PayloadKind::payment)
            fork_seq = seq;
    REQUIRE(fork_seq > 0);

    std::vector<DumpRecord> records = dump_records(fx);
    std::erase_if(records, [&](const DumpRecord& r) {
        return r.holder == fx.kb.pub && r.partition.creator == fx.kb.pub &&
               r.partition.seq >= fork_seq;
    });
    Hash prev = fork_seq == 1 ? kZeroHash : bchain.at(fork_seq - 1).hash();
    for (u64 seq = fork_seq; seq <= fx.sb.tip_seq(fx.kb.pub); ++seq) {
        BlockPartition p = bchain.at(seq);
        if (seq == fork_seq) std::get<PaymentPayload>(p.payload).amount -= 1;
        p.prev_self = prev;
        p.countersigs.clear();
        p.sig = crypto::sign(fx.kb, p.hash());
        prev = p.hash();
        records.push_back({fx.kb.pub, p});
    }

    auto vs = verify_dump(records);
    CHECK(has_kind(vs, "conflicting-pair"));
}

TEST_CASE("dump verification detects a countersigned record with no counterpart") {
    crypto::Keypair ka = test_keys(1), kb = test_keys(2);
    LedgerStore sa, sb;
    BlockPartition origin = initiate_bilateral(sa, ka, kb.pub, make_agreement(ka, kb, 1));
    CountersignResult r = countersign(sb, kb, origin);
    sa.attach_countersig(origin.creator, origin.seq, kb.pub, r.countersig);
    // A never stores B's responder partition and B's store is not dumped

    std::string text;
    dump_store(sa, ka.pub, text);
    auto vs = verify_dump(load_dump(text));
    CHECK(has_kind(vs, "missing-counterpart"));
}

TEST_CASE("load rejects malformed dumps with a line number") {
    TradeFixture fx(1);
    std::string text;
    dump_store(fx.sa, fx.ka.pub, text);
    text += "zz not hex\n";
    try {
        load_dump(text);
        FAIL("expected a decode error");
    } catch (const DecodeError& e) {
        std::string what = e.what();
        CHECK(what.find("line") != std::string::npos);
    }
}

TEST_CASE("payment schedule deviations are flagged structurally") {
    TradeFixture fx(2);
    fx.pay(1);

    SUBCASE("amount off schedule") {
        PaymentPayload p;
        p.trade = fx.trade;
        p.payer = fx.kb.pub;
        p.chain = fx.ag.gives_chain(false);
        p.txid = crypto::sha256(Bytes{1});
        p.amount = 1;   // schedule says half of quote_amount
        p.index = 1;
        bilateral(fx.sb, fx.kb, fx.sa, fx.ka, p);
        CHECK(has_kind(verify_store(fx.sa), "payment-amount"));
    }
    SUBCASE("index beyond the schedule") {
        PaymentPayload p;
        p.trade = fx.trade;
        p.payer = fx.kb.pub;
        p.chain = fx.ag.gives_chain(false);
        p.txid = crypto::sha256(Bytes{2});
        p.amount = increment_amount(fx.ag.quote_amount, fx.ag.n, 1);
        p.index = 9;
        bilateral(fx.sb, fx.kb, fx.sa, fx.ka, p);
        auto vs = verify_store(fx.sa);
        CHECK(has_kind(vs, "payment-index-range"));
        CHECK(has_kind(vs, "payment-index-gap"));
    }
    SUBCASE("trade-done referencing too few payments") {
        TradeDonePayload d;
        d.trade = fx.trade;
        d.payments.push_back(fx.trade);   // wrong kind on purpose, count 1 of 4
        bilateral(fx.sa, fx.ka, fx.sb, fx.kb, d);
        auto vs = verify_store(fx.sa);
        CHECK(has_kind(vs, "done-refs-count"));
        CHECK(has_kind(vs, "done-ref-kind"));
    }
}

TEST_CASE("chain verification flags broken links and bad signatures") {
    crypto::Keypair ka = test_keys(1);
    LedgerStore sa;
    append_unilateral(sa, ka, make_order(ka, 1, true));
    append_unilateral(sa, ka, make_order(ka, 2, false));

    std::map<u64, BlockPartition> chain = sa.chains().at(ka.pub);

    SUBCASE("self link") {
        chain.at(2).prev_self = crypto::sha256(Bytes{1});
        chain.at(2).sig = crypto::sign(ka, chain.at(2).hash());
        CHECK(has_kind(verify_chain(chain, ka.pub), "self-link"));
    }
    SUBCASE("signature") {
        std::get<OrderPayload>(chain.at(1).payload).order.core.timeout += 1;
        CHECK(has_kind(verify_chain(chain, ka.pub), "signature"));
    }
    SUBCASE("order signed by someone else") {
        crypto::Keypair kb = test_keys(2);
        BlockPartition p = chain.at(2);
        p.seq = 3;
        p.prev_self = chain.at(2).hash();
        std::get<OrderPayload>(p.payload).order = make_order(kb, 1, true);
        p.sig = crypto::sign(ka, p.hash());
        chain.emplace(3, p);
        CHECK(has_kind(verify_chain(chain, ka.pub), "order-creator"));
    }
}
