#pragma once

// Run records and the aggregation built from them. A live run collects
// TraceEvents in memory; a replay parses the same records back out of trace
// text. Both feed the one builder, so a replayed trace yields byte-identical
// metrics to the run that produced it.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "util.hpp"

namespace xdx::metrics {

struct TraceEvent {
    SimTime t = 0;
    u64 seq = 0;
    std::string peer;  // hex of the first 8 id bytes
    std::string kind;
    std::string kv;    // space-separated key=value tail
};

// "# crossdex-trace v1" header, then one "EV t=.. seq=.. peer=.. k=<kind> <kv>"
// line per record.
std::string format_trace(const std::vector<TraceEvent>& evs);
bool parse_trace(const std::string& text, std::vector<TraceEvent>& out, std::string* err);

// First value for the key in a kv tail, if present.
std::optional<std::string> kv_get(const std::string& kv, const std::string& key);
std::optional<u64> kv_get_u64(const std::string& kv, const std::string& key);
std::optional<i64> kv_get_i64(const std::string& kv, const std::string& key);

struct OrderRow {
    std::string order;    // id string
    std::string creator;  // hex8
    std::string side;     // offer | request
    std::string base, quote;
    u64 base_qty = 0, quote_qty = 0;
    SimTime created_at = -1;
    SimTime closed_at = -1;
    std::string outcome;  // open | fulfilled | cancelled | expired
};

struct TradeRow {
    std::string trade;  // hex8 of the agreement hash
    std::string init, cp;
    u32 n = 0;
    std::string base, quote;
    u64 base_amount = 0, quote_amount = 0;
    bool init_gives_base = false;
    SimTime open_at = -1;    // earliest trade_open
    SimTime closed_at = -1;  // latest completion / abort
    std::string outcome;     // open | completed | aborted
    std::string abort_reason;
    u64 init_paid = 0, cp_paid = 0;  // confirmed units, payer's asset each
    u32 init_txs = 0, cp_txs = 0;
};

struct PeerRow {
    std::string peer;
    u64 orders = 0, fulfilled = 0;
    u64 trades_init = 0, trades_cp = 0;
    u64 completed = 0, aborted = 0;
    u64 msgs_sent = 0;
};

struct Summary {
    SimTime duration = 0;          // last record time
    u64 records = 0;
    u64 orders_created = 0, orders_fulfilled = 0, orders_cancelled = 0, orders_expired = 0;
    u64 trades_opened = 0, trades_completed = 0, trades_aborted = 0;
    u64 msgs_sent = 0, msgs_delivered = 0, msgs_dropped = 0;
    u64 txs_submitted = 0, txs_confirmed = 0;
    u64 store_timeouts = 0, protocol_rejects = 0;
    double throughput_per_s = 0;   // completed trades per simulated second
    u64 peak_1s = 0;               // most completions in any one-second window
    double latency_mean_us = 0;    // trade open -> close, completed only
    i64 latency_p50_us = 0, latency_p90_us = 0;
};

struct Metrics {
    Summary summary;
    std::vector<OrderRow> orders;   // by order id string
    std::vector<TradeRow> trades;   // by trade tag
    std::vector<PeerRow> peers;     // by peer hex
};

Metrics build(const std::vector<TraceEvent>& evs);

std::string to_json(const Metrics& m);       // summary plus row counts
std::string summary_csv(const Metrics& m);   // key,value
std::string orders_csv(const Metrics& m);
std::string trades_csv(const Metrics& m);
std::string peers_csv(const Metrics& m);

}  // namespace xdx::metrics
