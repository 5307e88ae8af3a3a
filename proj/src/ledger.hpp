#pragma once

// Accountability ledger: every peer grows an individual hash chain of block
// partitions. A bilateral record exists as two partitions, one per chain.
// The origin partition is appended by its creator immediately, WITHOUT the
// counterparty's signature: the partition hash commits to every field except
// the countersignature list, so the countersignature can be attached later
// without disturbing the chain. That is what lets a peer run many bilateral
// exchanges concurrently instead of blocking on one countersignature at a
// time. The responder links the origin partition by hash from its own chain,
// which entangles the two chains and turns each party's copy into tamper
// evidence against the other.

#include <functional>
#include <map>
#include <set>
#include <variant>
#include <vector>

#include "types.hpp"

namespace xdx::ledger {

enum class PayloadKind : u8 { offer = 1, request = 2, agreement = 3, payment = 4, trade_done = 5 };

const char* kind_name(PayloadKind k);

// Unilateral record of an order placement.
struct OrderPayload {
    SignedOrder order;
};

struct AgreementPayload {
    PeerId initiator{};
    PeerId counterparty{};
    OrderId initiator_order;
    OrderId counterparty_order;
    std::string base;
    std::string quote;
    u64 base_amount = 0;    // negotiated, settled in full by one side
    u64 quote_amount = 0;   // settled by the other
    bool initiator_gives_base = false;
    u32 n = 1;              // payment increments per side
    SimTime publication_deadline = 0;
    std::string init_recv_chain;   // counterparty pays the initiator here
    Bytes init_recv_addr;
    std::string cp_recv_chain;     // initiator pays the counterparty here
    Bytes cp_recv_addr;

    // what a given side must transfer in total
    u64 gives_amount(bool as_initiator) const {
        return as_initiator == initiator_gives_base ? base_amount : quote_amount;
    }
    const std::string& gives_chain(bool as_initiator) const {
        return as_initiator == initiator_gives_base ? base : quote;
    }
    const Bytes& recv_addr_of_payee(bool payer_is_initiator) const {
        return payer_is_initiator ? cp_recv_addr : init_recv_addr;
    }
};

struct PaymentPayload {
    BlockRef trade;       // origin agreement partition
    PeerId payer{};
    std::string chain;
    Hash txid{};
    u64 amount = 0;
    u32 index = 0;        // 1..n within the payer's side
};

struct TradeDonePayload {
    BlockRef trade;
    std::vector<BlockRef> payments;   // all 2n payment origin partitions
};

using TxPayload = std::variant<OrderPayload, AgreementPayload, PaymentPayload, TradeDonePayload>;

PayloadKind payload_kind(const TxPayload& p);
void encode_payload(Encoder& e, const TxPayload& p);
TxPayload decode_payload(Decoder& d);

enum class Role : u8 { unilateral = 0, origin = 1, responder = 2 };

struct BlockPartition {
    Role role = Role::unilateral;
    PeerId creator{};
    u64 seq = 0;                         // 1-based position in the creator's chain
    Hash prev_self = kZeroHash;
    std::optional<Hash> prev_counter;    // responder: hash of the origin partition;
                                         // origin: latest counterparty partition known (zero if none)
    std::vector<PeerId> participants;    // empty / [counterparty] / several for a shared record
    TxPayload payload = OrderPayload{};
    Signature sig{};                     // creator, over hash()
    std::vector<std::pair<PeerId, Signature>> countersigs;   // outside the hash scope

    Bytes hash_scope() const;
    Hash hash() const { return crypto::sha256(hash_scope()); }
    bool sig_valid() const { return crypto::verify(creator, hash(), sig); }

    Bytes encode_full() const;           // hash scope + signatures, for dumps and the wire
    static BlockPartition decode_full(Decoder& d);

    const PeerId* counterparty() const {
        return participants.size() == 1 ? &participants[0] : nullptr;
    }
    BlockRef ref() const { return {creator, seq, hash()}; }
};

struct Violation {
    std::string kind;
    PeerId creator{};
    u64 seq = 0;
    std::string detail;

    std::string str() const;
};

// Everything a running trade needs for a fast responsibility walk; maintained
// incrementally by LedgerStore so audits stay O(open trades of the subject).
struct TradeRecord {
    BlockRef ref;
    AgreementPayload agreement;
    bool countersigned = false;
    bool done = false;   // trade-done origin partition countersigned
    std::map<std::pair<bool, u32>, PaymentPayload> payments;   // (payer is counterparty?, index)
};

// A bag of partitions: a peer's local store (own chain plus copies received
// from counterparties) or the simulator's shared oracle view. Append-only.
class LedgerStore {
public:
    // Record a partition. Identical duplicates are ignored; a partition with
    // the same (creator, seq) but different hash is kept aside as a conflict
    // pair, the raw material of a fraud proof.
    void add(const BlockPartition& p);

    // Attach a countersignature to an already-stored partition. Returns false
    // if the partition is unknown or the signature does not verify.
    bool attach_countersig(const PeerId& creator, u64 seq, const PeerId& signer, const Signature& s);

    const BlockPartition* find(const PeerId& creator, u64 seq) const;
    const BlockPartition* find_by_hash(const PeerId& creator, const Hash& h) const;
    const BlockPartition* resolve(const BlockRef& r) const;   // checks the hash too

    u64 tip_seq(const PeerId& creator) const;
    Hash tip_hash(const PeerId& creator) const;

    const std::map<PeerId, std::map<u64, BlockPartition>>& chains() const { return chains_; }
    const std::vector<std::pair<BlockPartition, BlockPartition>>& conflicts() const { return conflicts_; }

    const TradeRecord* trade(const Hash& agreement_hash) const;
    const std::vector<Hash>* open_trades(const PeerId& peer) const;

    // Responder partitions stored here that link the given origin hash.
    const std::vector<BlockRef>* responders_of(const Hash& origin_hash) const;

    size_t partition_count() const { return count_; }

private:
    void index_partition(const BlockPartition& p);
    void record_payment(TradeRecord& rec, const PaymentPayload& pay);
    void mark_countersigned(const Hash& h);
    void open_trade(const Hash& h, const AgreementPayload& a);
    void close_trade(const Hash& h);

    std::map<PeerId, std::map<u64, BlockPartition>> chains_;
    std::vector<std::pair<BlockPartition, BlockPartition>> conflicts_;
    std::map<Hash, TradeRecord> trades_;
    std::map<PeerId, std::vector<Hash>> open_;
    std::map<Hash, std::vector<BlockRef>> responders_;   // origin hash -> responder refs

    // Dumps and gossip can deliver partitions out of causal order; evidence
    // about a trade whose agreement has not arrived yet parks here.
    std::map<Hash, std::vector<PaymentPayload>> pending_payments_;
    std::set<Hash> pending_open_;
    std::set<Hash> pending_close_;

    size_t count_ = 0;
};

// -- chain growth ------------------------------------------------------------

// Append a unilateral order record to the owner's chain.
BlockPartition append_unilateral(LedgerStore& store, const crypto::Keypair& keys,
                                 const SignedOrder& order);

// Start a bilateral record: build the origin partition, append it to the
// owner's chain immediately, and hand it back for transmission. Throws on a
// self-referential record.
BlockPartition initiate_bilateral(LedgerStore& store, const crypto::Keypair& keys,
                                  const PeerId& counterparty, TxPayload payload);

struct CountersignResult {
    Signature countersig;        // over the origin partition's hash
    BlockPartition responder;    // appended to the responder's chain
};

// Respond to an incoming origin partition: validate structure and signature,
// sign it, and append the responder partition. Throws std::invalid_argument
// when the partition is malformed, tampered, or addressed to someone else.
CountersignResult countersign(LedgerStore& store, const crypto::Keypair& keys,
                              const BlockPartition& incoming);

struct MultipartyTree {
    BlockPartition root;
    std::vector<BlockPartition> leaves;
    std::vector<std::pair<PeerId, Signature>> root_countersigs;
};

// Shared record across 3+ chains: a root partition on the initiator's chain
// and one leaf per other participant, every leaf hash-linked to the root.
// Takes each participant's store so the tree lands on every chain at once;
// the degenerate single-counterparty call collapses to the bilateral pair.
MultipartyTree build_multiparty_block(LedgerStore& initiator_store, const crypto::Keypair& initiator_keys,
                                      std::vector<std::pair<LedgerStore*, const crypto::Keypair*>> others,
                                      TxPayload payload);

// -- verification ------------------------------------------------------------

// Structural checks over one creator's own chain: contiguous sequence, intact
// self links, valid signatures, per-payload sanity.
std::vector<Violation> verify_chain(const std::map<u64, BlockPartition>& chain, const PeerId& owner);

// Full-store pass: per-chain checks plus cross-chain entanglement (responder
// partitions resolve to matching origins, countersigned records have their
// counterpart, payment indexes are gapless per trade and payer).
std::vector<Violation> verify_store(const LedgerStore& store);

// -- responsibility audit ------------------------------------------------------

// Number of open trades in which `subject` owes the next payment: for each
// countersigned agreement without a completed trade-done, walk the alternating
// schedule (initiator first) past every payment that checks out on the
// external chain (confirmed, exact amount, agreed destination); the walk stops
// at the first payment not yet made, and whoever owes it is responsible.
u32 audit_responsibilities(const LedgerStore& view, const PeerId& subject, const ChainQuery& chains);

// Single-trade version used by the audit and handy in tests: returns the peer
// owing the next payment, or nullopt when the schedule is complete.
std::optional<PeerId> next_responsible(const TradeRecord& t, const ChainQuery& chains);

// -- dump / load ---------------------------------------------------------------

// One line per stored partition: "<holder_hex> <partition_hex>". The holder
// column attributes each instance, which is what makes a silently truncated
// chain detectable against copies held by others.
void dump_store(const LedgerStore& store, const PeerId& holder, std::string& out);

struct DumpRecord {
    PeerId holder{};
    BlockPartition partition;
};

// Throws DecodeError with a line number on malformed input.
std::vector<DumpRecord> load_dump(const std::string& text);

// The cmd-level verifier: rebuilds per-holder stores from dump records, runs
// the structural pass on every creator's own chain, and layers on the checks
// that need holder attribution (conflicting instances, copies held beyond a
// creator's advertised tip).
std::vector<Violation> verify_dump(const std::vector<DumpRecord>& records);

}  // namespace xdx::ledger
