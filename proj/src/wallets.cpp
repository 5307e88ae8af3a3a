#include "wallets.hpp"

#include "codec.hpp"
#include "crypto.hpp"

namespace xdx::wallets {

bool MockChain::faucet(const Bytes& addr, u64 amount) {
    if (sealed_) return false;
    balances_[addr] += amount;
    issued_ += amount;
    return true;
}

std::optional<MockChain::Submitted> MockChain::submit(const Bytes& from, const Bytes& to,
                                                      u64 amount, SimTime now) {
    auto it = balances_.find(from);
    if (it == balances_.end() || it->second < amount) return std::nullopt;
    it->second -= amount;
    in_flight_ += amount;

    Encoder e;
    e.put_str(id_);
    e.put_u64(nonce_++);
    e.put_bytes(from);
    e.put_bytes(to);
    e.put_u64(amount);
    Hash txid = crypto::sha256(e.bytes());

    ExternalTx tx;
    tx.status = TxStatus::pending;
    tx.from = from;
    tx.to = to;
    tx.amount = amount;
    tx.submitted_at = now;

    SimTime confirm_at = now + confirm_delay_;
    if (confirm_delay_ == 0) {
        credit_confirmed(txid, tx, now);
        txs_.emplace(txid, std::move(tx));
    } else {
        txs_.emplace(txid, std::move(tx));
        pending_[confirm_at].push_back(txid);
    }
    submit_order_.push_back(txid);
    return Submitted{txid, confirm_at};
}

void MockChain::credit_confirmed(const Hash& txid, ExternalTx& tx, SimTime now) {
    tx.status = TxStatus::confirmed;
    tx.confirmed_at = now;
    balances_[tx.to] += tx.amount;
    in_flight_ -= tx.amount;
    confirmed_to_[tx.to].push_back(txid);
}

std::vector<Hash> MockChain::confirm_due(SimTime now) {
    std::vector<Hash> out;
    while (!pending_.empty() && pending_.begin()->first <= now) {
        for (const Hash& txid : pending_.begin()->second) {
            ExternalTx& tx = txs_.at(txid);
            credit_confirmed(txid, tx, now);
            out.push_back(txid);
        }
        pending_.erase(pending_.begin());
    }
    return out;
}

std::optional<ExternalTx> MockChain::lookup(const Hash& txid) const {
    auto it = txs_.find(txid);
    if (it == txs_.end()) return std::nullopt;
    return it->second;
}

u64 MockChain::balance(const Bytes& addr) const {
    auto it = balances_.find(addr);
    return it == balances_.end() ? 0 : it->second;
}

std::vector<Hash> MockChain::poll_incoming(const Bytes& addr, size_t& cursor) const {
    std::vector<Hash> out;
    auto it = confirmed_to_.find(addr);
    if (it == confirmed_to_.end()) return out;
    const auto& log = it->second;
    for (; cursor < log.size(); ++cursor) out.push_back(log[cursor]);
    return out;
}

bool MockChain::conserved() const {
    u64 total = in_flight_;
    for (const auto& [addr, bal] : balances_) total += bal;
    return total == issued_;
}

std::string MockChain::export_log() const {
    std::string out;
    for (const Hash& txid : submit_order_) {
        const ExternalTx& tx = txs_.at(txid);
        const char* st = tx.status == TxStatus::confirmed ? "confirmed" : "pending";
        out += "tx " + id_ + " " + to_hex(txid.data(), txid.size()) + " " +
               to_hex(tx.from.data(), tx.from.size()) + " " +
               to_hex(tx.to.data(), tx.to.size()) + " " + std::to_string(tx.amount) + " " +
               std::to_string(tx.submitted_at) + " " +
               std::to_string(tx.status == TxStatus::confirmed ? tx.confirmed_at : -1) + " " +
               st + "\n";
    }
    return out;
}

MockChain& ChainSet::add_chain(const std::string& id, SimTime confirm_delay) {
    auto [it, fresh] = chains_.try_emplace(id, MockChain(id, confirm_delay));
    (void)fresh;
    return it->second;
}

MockChain* ChainSet::chain(const std::string& id) {
    auto it = chains_.find(id);
    return it == chains_.end() ? nullptr : &it->second;
}

const MockChain* ChainSet::chain(const std::string& id) const {
    auto it = chains_.find(id);
    return it == chains_.end() ? nullptr : &it->second;
}

std::optional<ExternalTx> ChainSet::lookup(const std::string& chain, const Hash& txid) const {
    const MockChain* c = this->chain(chain);
    if (!c) return std::nullopt;
    return c->lookup(txid);
}

bool ChainSet::all_conserved() const {
    for (const auto& [id, c] : chains_)
        if (!c.conserved()) return false;
    return true;
}

void ChainSet::seal_all() {
    for (auto& [id, c] : chains_) c.seal();
}

std::string ChainSet::export_log() const {
    std::string out;
    for (const auto& [id, c] : chains_) out += c.export_log();
    return out;
}

}  // namespace xdx::wallets
