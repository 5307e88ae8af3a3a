#include "crossdex.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>

#include "ledger.hpp"
#include "metrics.hpp"
#include "scenario.hpp"
#include "sim.hpp"

using namespace xdx;

struct xdx_scenario {
    sim::SimConfig cfg;
};

struct xdx_result {
    int status = XDX_OK;
    std::string trace;
    std::string metrics_json;
    std::string summary_csv;
    std::string orders_csv;
    std::string trades_csv;
    std::string peers_csv;
    std::string ledger_dump;
    std::string chain_log;
    std::string violations;
};

namespace {

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_err(char** err, const std::string& msg) {
    if (err) *err = dup_string(msg);
}

int parse_u64(const char* value, u64& out) {
    if (!value || !*value) return 1;
    char* end = nullptr;
    unsigned long long v = std::strtoull(value, &end, 10);
    if (!end || *end) return 1;
    out = v;
    return 0;
}

int parse_double(const char* value, double& out) {
    if (!value || !*value) return 1;
    char* end = nullptr;
    double v = std::strtod(value, &end);
    if (!end || *end) return 1;
    out = v;
    return 0;
}

}  // namespace

extern "C" {

const char* xdx_version(void) { return "crossdex 1.0.0"; }

int xdx_scenario_from_json(const char* text, xdx_scenario** out, char** err) {
    if (!text || !out) {
        set_err(err, "null argument");
        return XDX_CONFIG;
    }
    *out = nullptr;
    try {
        auto* s = new xdx_scenario{scenario::from_json(text)};
        *out = s;
        return XDX_OK;
    } catch (const scenario::ParseError& e) {
        set_err(err, e.what());
        return XDX_CONFIG;
    } catch (const std::exception& e) {
        set_err(err, std::string("internal: ") + e.what());
        return XDX_INTERNAL;
    }
}

int xdx_scenario_from_file(const char* path, xdx_scenario** out, char** err) {
    if (!path || !out) {
        set_err(err, "null argument");
        return XDX_CONFIG;
    }
    *out = nullptr;
    try {
        auto* s = new xdx_scenario{scenario::from_file(path)};
        *out = s;
        return XDX_OK;
    } catch (const scenario::ParseError& e) {
        set_err(err, e.what());
        return XDX_CONFIG;
    } catch (const std::exception& e) {
        set_err(err, std::string("internal: ") + e.what());
        return XDX_INTERNAL;
    }
}

void xdx_scenario_free(xdx_scenario* s) { delete s; }

void xdx_scenario_set_seed(xdx_scenario* s, uint64_t seed) {
    if (s) s->cfg.seed = seed;
}

int xdx_scenario_set_option(xdx_scenario* s, const char* key, const char* value, char** err) {
    if (!s || !key) {
        set_err(err, "null argument");
        return XDX_CONFIG;
    }
    std::string k = key;
    u64 u = 0;
    double d = 0;
    if (k == "restrict") {
        if (parse_u64(value, u)) goto bad_value;
        s->cfg.policy.restrict_t = static_cast<u32>(u);
    } else if (k == "incset") {
        if (parse_u64(value, u) || u < 1) goto bad_value;
        s->cfg.policy.incset_n = static_cast<u32>(u);
    } else if (k == "load") {
        // total orders/sec across all traders
        if (parse_double(value, d) || d <= 0) goto bad_value;
        if (s->cfg.traders == 0) goto bad_value;
        s->cfg.workload.orders_per_peer_per_sec = d / s->cfg.traders;
    } else if (k == "traders") {
        if (parse_u64(value, u) || u < 2) goto bad_value;
        s->cfg.traders = static_cast<u32>(u);
    } else if (k == "matchmakers") {
        if (parse_u64(value, u) || u < 1) goto bad_value;
        s->cfg.matchmakers = static_cast<u32>(u);
    } else if (k == "fanout") {
        if (parse_u64(value, u) || u < 1) goto bad_value;
        s->cfg.fanout = static_cast<u32>(u);
    } else if (k == "duration_ms") {
        if (parse_double(value, d) || d < 0) goto bad_value;
        s->cfg.workload.duration = static_cast<SimTime>(std::llround(d * 1000.0));
    } else if (k == "loss") {
        if (parse_double(value, d) || d < 0 || d > 1) goto bad_value;
        s->cfg.loss = d;
    } else if (k == "name") {
        if (!value) goto bad_value;
        s->cfg.name = value;
    } else {
        set_err(err, "unknown option \"" + k + "\"");
        return XDX_CONFIG;
    }
    return XDX_OK;

bad_value:
    set_err(err, "bad value for \"" + k + "\": " + (value ? value : "(null)"));
    return XDX_CONFIG;
}

char* xdx_scenario_to_json(const xdx_scenario* s) {
    if (!s) return nullptr;
    return dup_string(scenario::to_json(s->cfg));
}

int xdx_run(const xdx_scenario* s, int with_trace, xdx_result** out, char** err) {
    if (!s || !out) {
        set_err(err, "null argument");
        return XDX_CONFIG;
    }
    *out = nullptr;
    try {
        sim::Simnet net(s->cfg);
        net.run();

        auto r = std::make_unique<xdx_result>();
        if (with_trace) r->trace = metrics::format_trace(net.events());
        metrics::Metrics m = metrics::build(net.events());
        r->metrics_json = metrics::to_json(m);
        r->summary_csv = metrics::summary_csv(m);
        r->orders_csv = metrics::orders_csv(m);
        r->trades_csv = metrics::trades_csv(m);
        r->peers_csv = metrics::peers_csv(m);
        r->ledger_dump = net.ledger_dump();
        r->chain_log = net.chain_log();
        for (const auto& v : net.violations()) {
            r->violations += v;
            r->violations += '\n';
        }
        r->status = r->violations.empty() ? XDX_OK : XDX_VIOLATION;
        int status = r->status;
        *out = r.release();
        return status;
    } catch (const std::exception& e) {
        set_err(err, std::string("run failed: ") + e.what());
        return XDX_INTERNAL;
    }
}

int xdx_result_status(const xdx_result* r) { return r ? r->status : XDX_INTERNAL; }
const char* xdx_result_trace(const xdx_result* r) { return r ? r->trace.c_str() : ""; }
const char* xdx_result_metrics_json(const xdx_result* r) {
    return r ? r->metrics_json.c_str() : "";
}
const char* xdx_result_summary_csv(const xdx_result* r) {
    return r ? r->summary_csv.c_str() : "";
}
const char* xdx_result_orders_csv(const xdx_result* r) { return r ? r->orders_csv.c_str() : ""; }
const char* xdx_result_trades_csv(const xdx_result* r) { return r ? r->trades_csv.c_str() : ""; }
const char* xdx_result_peers_csv(const xdx_result* r) { return r ? r->peers_csv.c_str() : ""; }
const char* xdx_result_ledger_dump(const xdx_result* r) {
    return r ? r->ledger_dump.c_str() : "";
}
const char* xdx_result_chain_log(const xdx_result* r) { return r ? r->chain_log.c_str() : ""; }
const char* xdx_result_violations(const xdx_result* r) {
    return r ? r->violations.c_str() : "";
}
void xdx_result_free(xdx_result* r) { delete r; }

int xdx_replay_metrics(const char* trace, char** metrics_json, char** err) {
    if (!trace || !metrics_json) {
        set_err(err, "null argument");
        return XDX_CONFIG;
    }
    *metrics_json = nullptr;
    try {
        std::vector<metrics::TraceEvent> evs;
        std::string perr;
        if (!metrics::parse_trace(trace, evs, &perr)) {
            set_err(err, "trace: " + perr);
            return XDX_CONFIG;
        }
        metrics::Metrics m = metrics::build(evs);
        *metrics_json = dup_string(metrics::to_json(m));
        return XDX_OK;
    } catch (const std::exception& e) {
        set_err(err, std::string("replay failed: ") + e.what());
        return XDX_INTERNAL;
    }
}

int xdx_verify_dump(const char* dump, char** report, char** err) {
    if (!dump || !report) {
        set_err(err, "null argument");
        return XDX_CONFIG;
    }
    *report = nullptr;
    try {
        std::vector<ledger::DumpRecord> recs = ledger::load_dump(dump);
        std::string out;
        bool any = false;
        for (const auto& v : ledger::verify_dump(recs)) {
            out += v.str();
            out += '\n';
            any = true;
        }
        *report = dup_string(out);
        return any ? XDX_VIOLATION : XDX_OK;
    } catch (const std::exception& e) {
        set_err(err, std::string("dump: ") + e.what());
        return XDX_CONFIG;
    }
}

void xdx_string_free(char* s) { std::free(s); }

}  // extern "C"
