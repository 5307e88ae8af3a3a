#include "metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

namespace xdx::metrics {

namespace {

const char* kTraceHeader = "# crossdex-trace v1";

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string format_trace(const std::vector<TraceEvent>& evs) {
    std::string out = kTraceHeader;
    out += "\n";
    for (const TraceEvent& e : evs) {
        out += "EV t=" + std::to_string(e.t) + " seq=" + std::to_string(e.seq) +
               " peer=" + e.peer + " k=" + e.kind;
        if (!e.kv.empty()) {
            out += " ";
            out += e.kv;
        }
        out += "\n";
    }
    return out;
}

bool parse_trace(const std::string& text, std::vector<TraceEvent>& out, std::string* err) {
    auto fail = [&](size_t line, const std::string& why) {
        if (err) *err = "line " + std::to_string(line) + ": " + why;
        return false;
    };
    size_t pos = 0, line_no = 0;
    bool saw_header = false;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        line_no++;
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kTraceHeader) return fail(line_no, "missing trace header");
            saw_header = true;
            continue;
        }
        if (line.rfind("EV ", 0) != 0) return fail(line_no, "expected EV record");

        TraceEvent e;
        size_t at = 3;
        auto take_field = [&](const char* key) -> std::optional<std::string> {
            std::string want = std::string(key) + "=";
            if (line.compare(at, want.size(), want) != 0) return std::nullopt;
            size_t start = at + want.size();
            size_t end = line.find(' ', start);
            if (end == std::string::npos) end = line.size();
            std::string v = line.substr(start, end - start);
            at = end < line.size() ? end + 1 : end;
            return v;
        };
        auto t = take_field("t");
        auto seq = take_field("seq");
        auto peer = take_field("peer");
        auto kind = take_field("k");
        if (!t || !seq || !peer || !kind) return fail(line_no, "malformed EV fields");
        char* endp = nullptr;
        e.t = std::strtoll(t->c_str(), &endp, 10);
        if (!endp || *endp) return fail(line_no, "bad t value");
        e.seq = std::strtoull(seq->c_str(), &endp, 10);
        if (!endp || *endp) return fail(line_no, "bad seq value");
        e.peer = *peer;
        e.kind = *kind;
        e.kv = at < line.size() ? line.substr(at) : "";
        out.push_back(std::move(e));
    }
    if (!saw_header) return fail(0, "empty trace");
    return true;
}

std::optional<std::string> kv_get(const std::string& kv, const std::string& key) {
    std::string want = key + "=";
    size_t at = 0;
    while (at < kv.size()) {
        size_t end = kv.find(' ', at);
        if (end == std::string::npos) end = kv.size();
        if (kv.compare(at, want.size(), want) == 0 && at + want.size() <= end)
            return kv.substr(at + want.size(), end - at - want.size());
        at = end + 1;
    }
    return std::nullopt;
}

std::optional<u64> kv_get_u64(const std::string& kv, const std::string& key) {
    auto s = kv_get(kv, key);
    if (!s) return std::nullopt;
    char* endp = nullptr;
    u64 v = std::strtoull(s->c_str(), &endp, 10);
    if (!endp || *endp) return std::nullopt;
    return v;
}

std::optional<i64> kv_get_i64(const std::string& kv, const std::string& key) {
    auto s = kv_get(kv, key);
    if (!s) return std::nullopt;
    char* endp = nullptr;
    i64 v = std::strtoll(s->c_str(), &endp, 10);
    if (!endp || *endp) return std::nullopt;
    return v;
}

Metrics build(const std::vector<TraceEvent>& evs) {
    Metrics m;
    Summary& s = m.summary;
    s.records = evs.size();

    std::map<std::string, OrderRow> orders;
    std::map<std::string, TradeRow> trades;
    std::map<std::string, PeerRow> peers;
    // txid -> (trade tag, payer hex)
    std::map<std::string, std::pair<std::string, std::string>> tx_meta;
    std::vector<SimTime> completions;

    auto peer_row = [&](const std::string& p) -> PeerRow& {
        PeerRow& r = peers[p];
        if (r.peer.empty()) r.peer = p;
        return r;
    };

    for (const TraceEvent& e : evs) {
        if (e.t > s.duration) s.duration = e.t;
        if (e.kind == "order_created") {
            s.orders_created++;
            auto id = kv_get(e.kv, "order");
            if (!id) continue;
            OrderRow& r = orders[*id];
            r.order = *id;
            r.creator = e.peer;
            r.side = kv_get(e.kv, "side").value_or("");
            r.base = kv_get(e.kv, "base").value_or("");
            r.quote = kv_get(e.kv, "quote").value_or("");
            r.base_qty = kv_get_u64(e.kv, "base_qty").value_or(0);
            r.quote_qty = kv_get_u64(e.kv, "quote_qty").value_or(0);
            r.created_at = e.t;
            r.outcome = "open";
            peer_row(e.peer).orders++;
        } else if (e.kind == "order_fulfilled" || e.kind == "order_cancelled" ||
                   e.kind == "order_expired") {
            auto id = kv_get(e.kv, "order");
            if (!id) continue;
            OrderRow& r = orders[*id];
            if (r.order.empty()) r.order = *id;
            r.closed_at = e.t;
            if (e.kind == "order_fulfilled") {
                r.outcome = "fulfilled";
                s.orders_fulfilled++;
                peer_row(e.peer).fulfilled++;
            } else if (e.kind == "order_cancelled") {
                r.outcome = "cancelled";
                s.orders_cancelled++;
            } else {
                r.outcome = "expired";
                s.orders_expired++;
            }
        } else if (e.kind == "trade_open") {
            auto tag = kv_get(e.kv, "trade");
            if (!tag) continue;
            TradeRow& r = trades[*tag];
            bool fresh = r.trade.empty();
            if (fresh) {
                r.trade = *tag;
                r.outcome = "open";
                s.trades_opened++;
            }
            if (r.open_at < 0 || e.t < r.open_at) r.open_at = e.t;
            std::string role = kv_get(e.kv, "role").value_or("");
            if (role == "init") {
                r.init = e.peer;
                peer_row(e.peer).trades_init++;
            } else if (role == "cp") {
                r.cp = e.peer;
                peer_row(e.peer).trades_cp++;
            }
            r.n = static_cast<u32>(kv_get_u64(e.kv, "n").value_or(r.n));
            r.base = kv_get(e.kv, "base").value_or(r.base);
            r.quote = kv_get(e.kv, "quote").value_or(r.quote);
            r.base_amount = kv_get_u64(e.kv, "base_amt").value_or(r.base_amount);
            r.quote_amount = kv_get_u64(e.kv, "quote_amt").value_or(r.quote_amount);
            if (auto g = kv_get(e.kv, "gives")) r.init_gives_base = *g == "base";
        } else if (e.kind == "trade_completed") {
            auto tag = kv_get(e.kv, "trade");
            if (!tag) continue;
            TradeRow& r = trades[*tag];
            if (r.trade.empty()) r.trade = *tag;
            if (e.t > r.closed_at) r.closed_at = e.t;
            peer_row(e.peer).completed++;
            if (r.outcome != "completed") {  // count each trade once
                r.outcome = "completed";
                s.trades_completed++;
                completions.push_back(e.t);
            }
        } else if (e.kind == "trade_aborted") {
            auto tag = kv_get(e.kv, "trade");
            if (!tag) continue;
            TradeRow& r = trades[*tag];
            if (r.trade.empty()) r.trade = *tag;
            if (e.t > r.closed_at) r.closed_at = e.t;
            peer_row(e.peer).aborted++;
            if (r.outcome != "completed" && r.outcome != "aborted") {
                r.outcome = "aborted";
                r.abort_reason = kv_get(e.kv, "reason").value_or("");
                s.trades_aborted++;
            }
        } else if (e.kind == "msg_sent") {
            s.msgs_sent++;
            peer_row(e.peer).msgs_sent++;
        } else if (e.kind == "msg_delivered") {
            s.msgs_delivered++;
        } else if (e.kind == "msg_dropped") {
            s.msgs_dropped++;
        } else if (e.kind == "tx_submitted") {
            s.txs_submitted++;
            auto txid = kv_get(e.kv, "txid");
            auto tag = kv_get(e.kv, "trade");
            if (txid && tag) tx_meta[*txid] = {*tag, e.peer};
        } else if (e.kind == "tx_confirmed") {
            s.txs_confirmed++;
            auto txid = kv_get(e.kv, "txid");
            u64 amount = kv_get_u64(e.kv, "amount").value_or(0);
            if (!txid) continue;
            auto mit = tx_meta.find(*txid);
            if (mit == tx_meta.end()) continue;
            TradeRow& r = trades[mit->second.first];
            if (r.trade.empty()) r.trade = mit->second.first;
            // attribute by payer once the roles are known; the init stamp wins
            if (!r.init.empty() && mit->second.second == r.init) {
                r.init_paid += amount;
                r.init_txs++;
            } else {
                r.cp_paid += amount;
                r.cp_txs++;
            }
        } else if (e.kind == "store_timeout") {
            s.store_timeouts++;
        } else if (e.kind == "protocol_reject") {
            s.protocol_rejects++;
        }
    }

    if (s.duration > 0)
        s.throughput_per_s = double(s.trades_completed) / (double(s.duration) / 1e6);

    std::sort(completions.begin(), completions.end());
    size_t lo = 0;
    for (size_t hi = 0; hi < completions.size(); hi++) {
        while (completions[hi] - completions[lo] >= 1_s) lo++;
        u64 width = hi - lo + 1;
        if (width > s.peak_1s) s.peak_1s = width;
    }

    std::vector<i64> lat;
    for (const auto& [tag, r] : trades)
        if (r.outcome == "completed" && r.open_at >= 0 && r.closed_at >= r.open_at)
            lat.push_back(r.closed_at - r.open_at);
    if (!lat.empty()) {
        std::sort(lat.begin(), lat.end());
        double total = 0;
        for (i64 v : lat) total += double(v);
        s.latency_mean_us = total / double(lat.size());
        s.latency_p50_us = lat[lat.size() / 2];
        s.latency_p90_us = lat[(lat.size() * 9) / 10];
    }

    for (auto& [k, r] : orders) m.orders.push_back(std::move(r));
    for (auto& [k, r] : trades) m.trades.push_back(std::move(r));
    for (auto& [k, r] : peers) m.peers.push_back(std::move(r));
    return m;
}

std::string to_json(const Metrics& m) {
    const Summary& s = m.summary;
    std::string o = "{";
    auto add_u = [&](const char* k, u64 v, bool last = false) {
        o += "\"" + std::string(k) + "\":" + std::to_string(v) + (last ? "" : ",");
    };
    auto add_i = [&](const char* k, i64 v) {
        o += "\"" + std::string(k) + "\":" + std::to_string(v) + ",";
    };
    auto add_d = [&](const char* k, double v) {
        o += "\"" + std::string(k) + "\":" + fmt_double(v) + ",";
    };
    add_i("duration_us", s.duration);
    add_u("records", s.records);
    add_u("orders_created", s.orders_created);
    add_u("orders_fulfilled", s.orders_fulfilled);
    add_u("orders_cancelled", s.orders_cancelled);
    add_u("orders_expired", s.orders_expired);
    add_u("trades_opened", s.trades_opened);
    add_u("trades_completed", s.trades_completed);
    add_u("trades_aborted", s.trades_aborted);
    add_u("msgs_sent", s.msgs_sent);
    add_u("msgs_delivered", s.msgs_delivered);
    add_u("msgs_dropped", s.msgs_dropped);
    add_u("txs_submitted", s.txs_submitted);
    add_u("txs_confirmed", s.txs_confirmed);
    add_u("store_timeouts", s.store_timeouts);
    add_u("protocol_rejects", s.protocol_rejects);
    add_d("throughput_per_s", s.throughput_per_s);
    add_u("peak_1s", s.peak_1s);
    add_d("latency_mean_us", s.latency_mean_us);
    add_i("latency_p50_us", s.latency_p50_us);
    add_i("latency_p90_us", s.latency_p90_us);
    add_u("order_rows", m.orders.size());
    add_u("trade_rows", m.trades.size());
    add_u("peer_rows", m.peers.size(), true);
    o += "}";
    return o;
}

std::string summary_csv(const Metrics& m) {
    const Summary& s = m.summary;
    std::string o = "key,value\n";
    auto row = [&](const char* k, const std::string& v) { o += std::string(k) + "," + v + "\n"; };
    row("duration_us", std::to_string(s.duration));
    row("records", std::to_string(s.records));
    row("orders_created", std::to_string(s.orders_created));
    row("orders_fulfilled", std::to_string(s.orders_fulfilled));
    row("orders_cancelled", std::to_string(s.orders_cancelled));
    row("orders_expired", std::to_string(s.orders_expired));
    row("trades_opened", std::to_string(s.trades_opened));
    row("trades_completed", std::to_string(s.trades_completed));
    row("trades_aborted", std::to_string(s.trades_aborted));
    row("msgs_sent", std::to_string(s.msgs_sent));
    row("msgs_delivered", std::to_string(s.msgs_delivered));
    row("msgs_dropped", std::to_string(s.msgs_dropped));
    row("txs_submitted", std::to_string(s.txs_submitted));
    row("txs_confirmed", std::to_string(s.txs_confirmed));
    row("store_timeouts", std::to_string(s.store_timeouts));
    row("protocol_rejects", std::to_string(s.protocol_rejects));
    row("throughput_per_s", fmt_double(s.throughput_per_s));
    row("peak_1s", std::to_string(s.peak_1s));
    row("latency_mean_us", fmt_double(s.latency_mean_us));
    row("latency_p50_us", std::to_string(s.latency_p50_us));
    row("latency_p90_us", std::to_string(s.latency_p90_us));
    return o;
}

std::string orders_csv(const Metrics& m) {
    std::string o =
        "order,creator,side,base,quote,base_qty,quote_qty,created_us,closed_us,outcome\n";
    for (const OrderRow& r : m.orders) {
        o += r.order + "," + r.creator + "," + r.side + "," + r.base + "," + r.quote + "," +
             std::to_string(r.base_qty) + "," + std::to_string(r.quote_qty) + "," +
             std::to_string(r.created_at) + "," + std::to_string(r.closed_at) + "," + r.outcome +
             "\n";
    }
    return o;
}

std::string trades_csv(const Metrics& m) {
    std::string o =
        "trade,init,cp,n,base,quote,base_amt,quote_amt,init_gives,open_us,closed_us,outcome,"
        "reason,init_paid,cp_paid,init_txs,cp_txs\n";
    for (const TradeRow& r : m.trades) {
        o += r.trade + "," + r.init + "," + r.cp + "," + std::to_string(r.n) + "," + r.base +
             "," + r.quote + "," + std::to_string(r.base_amount) + "," +
             std::to_string(r.quote_amount) + "," + (r.init_gives_base ? "base" : "quote") +
             "," + std::to_string(r.open_at) + "," + std::to_string(r.closed_at) + "," +
             r.outcome + "," + r.abort_reason + "," + std::to_string(r.init_paid) + "," +
             std::to_string(r.cp_paid) + "," + std::to_string(r.init_txs) + "," +
             std::to_string(r.cp_txs) + "\n";
    }
    return o;
}

std::string peers_csv(const Metrics& m) {
    std::string o = "peer,orders,fulfilled,trades_init,trades_cp,completed,aborted,msgs_sent\n";
    for (const PeerRow& r : m.peers) {
        o += r.peer + "," + std::to_string(r.orders) + "," + std::to_string(r.fulfilled) + "," +
             std::to_string(r.trades_init) + "," + std::to_string(r.trades_cp) + "," +
             std::to_string(r.completed) + "," + std::to_string(r.aborted) + "," +
             std::to_string(r.msgs_sent) + "\n";
    }
    return o;
}

}  // namespace xdx::metrics
