#pragma once

// Mock external chains. Each asset lives on its own chain with integer unit
// balances. A transfer debits the sender the moment it is submitted and
// credits the receiver when it confirms; with a zero confirmation delay that
// happens inside submit(), which is what lets a payment and the checks that
// depend on it land in one indivisible engine step.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "types.hpp"

namespace xdx::wallets {

class MockChain {
public:
    explicit MockChain(std::string id, SimTime confirm_delay = 0)
        : id_(std::move(id)), confirm_delay_(confirm_delay) {}

    const std::string& id() const { return id_; }
    SimTime confirm_delay() const { return confirm_delay_; }

    // Mint units into an address. Setup only; tracked so conservation checks
    // know the expected total. Rejected once the chain is sealed.
    bool faucet(const Bytes& addr, u64 amount);

    // No further minting after setup.
    void seal() { sealed_ = true; }
    bool sealed() const { return sealed_; }

    struct Submitted {
        Hash txid{};
        SimTime confirm_at = 0;
    };

    // Returns nothing when the sender lacks the balance. The debit is
    // immediate either way.
    std::optional<Submitted> submit(const Bytes& from, const Bytes& to, u64 amount, SimTime now);

    // Confirm every pending transfer due by `now`, crediting receivers.
    // Returns the confirmed ids in deterministic order.
    std::vector<Hash> confirm_due(SimTime now);

    std::optional<ExternalTx> lookup(const Hash& txid) const;
    u64 balance(const Bytes& addr) const;

    // Confirmed transfers into `addr` in confirmation order, starting at the
    // caller's cursor; the cursor advances past what was returned, so every
    // transfer is seen exactly once per cursor.
    std::vector<Hash> poll_incoming(const Bytes& addr, size_t& cursor) const;

    // Units never appear or vanish: balances plus in-flight equals minted.
    bool conserved() const;
    u64 issued() const { return issued_; }
    u64 in_flight() const { return in_flight_; }
    const std::map<Hash, ExternalTx>& txs() const { return txs_; }

    // One line per transfer in submission order:
    // "tx <chain> <txid> <from> <to> <amount> <submitted_us> <confirmed_us> <status>"
    std::string export_log() const;

private:
    void credit_confirmed(const Hash& txid, ExternalTx& tx, SimTime now);

    std::string id_;
    SimTime confirm_delay_;
    bool sealed_ = false;
    std::map<Bytes, u64> balances_;
    std::map<Hash, ExternalTx> txs_;
    std::vector<Hash> submit_order_;
    std::map<SimTime, std::vector<Hash>> pending_;      // confirm_at -> ids, submit order
    std::map<Bytes, std::vector<Hash>> confirmed_to_;   // receiver -> ids, confirm order
    u64 issued_ = 0;
    u64 in_flight_ = 0;
    u64 nonce_ = 0;
};

// All chains of a run, addressable by asset id. Doubles as the auditors'
// read-only view.
class ChainSet : public ChainQuery {
public:
    MockChain& add_chain(const std::string& id, SimTime confirm_delay = 0);
    MockChain* chain(const std::string& id);
    const MockChain* chain(const std::string& id) const;

    std::optional<ExternalTx> lookup(const std::string& chain, const Hash& txid) const override;

    bool all_conserved() const;
    void seal_all();
    std::string export_log() const;  // all chains, chain-id order
    std::map<std::string, MockChain>& chains() { return chains_; }
    const std::map<std::string, MockChain>& chains() const { return chains_; }

private:
    std::map<std::string, MockChain> chains_;
};

// Peers use their identity key as their address on every chain.
inline Bytes address_of(const PeerId& peer) { return Bytes(peer.begin(), peer.end()); }

}  // namespace xdx::wallets
