#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "crossdex.h"
#include "ledger.hpp"

// Exercises the shared-library surface end to end: scenario parsing and
// overrides, running, trace replay, and dump verification, including the
// error paths and ownership rules.

namespace {

const char* kGolden = R"({
  "name": "capi-golden",
  "seed": 7,
  "traders": 2,
  "matchmakers": 1,
  "fanout": 1,
  "chains": [
    {"id": "alpha", "confirm_delay_ms": 0},
    {"id": "beta", "confirm_delay_ms": 0}
  ],
  "latency": {"base_ms": 5, "jitter_ms": 0, "loss": 0.0},
  "policy": {"restrict_t": 1, "incset_n": 1},
  "actions": [
    {"at_ms": 10, "peer": 0, "action": "create_order", "side": "offer",
     "base": "alpha", "quote": "beta", "base_qty": 10, "quote_qty": 20, "timeout_ms": 60000},
    {"at_ms": 20, "peer": 1, "action": "create_order", "side": "request",
     "base": "alpha", "quote": "beta", "base_qty": 10, "quote_qty": 20, "timeout_ms": 60000}
  ]
})";

struct Str {
    char* p = nullptr;
    ~Str() { xdx_string_free(p); }
    std::string view() const { return p ? p : ""; }
};

struct Scenario {
    xdx_scenario* p = nullptr;
    ~Scenario() { xdx_scenario_free(p); }
};

struct Result {
    xdx_result* p = nullptr;
    ~Result() { xdx_result_free(p); }
};

}  // namespace

TEST_CASE("version names the library") {
    CHECK(std::string(xdx_version()) == "crossdex 1.0.0");
}

TEST_CASE("scenario parsing accepts the golden config and round-trips") {
    Scenario s;
    Str err;
    REQUIRE(xdx_scenario_from_json(kGolden, &s.p, &err.p) == XDX_OK);
    REQUIRE(s.p != nullptr);

    Str one, two;
    one.p = xdx_scenario_to_json(s.p);
    Scenario again;
    REQUIRE(xdx_scenario_from_json(one.p, &again.p, &err.p) == XDX_OK);
    two.p = xdx_scenario_to_json(again.p);
    CHECK(one.view() == two.view());
    CHECK(one.view().find("\"capi-golden\"") != std::string::npos);
}

TEST_CASE("scenario parsing rejects malformed input with a message") {
    Scenario s;

    SUBCASE("broken json") {
        Str err;
        CHECK(xdx_scenario_from_json("{nope", &s.p, &err.p) == XDX_CONFIG);
        CHECK(s.p == nullptr);
        CHECK(!err.view().empty());
    }
    SUBCASE("unknown key") {
        Str err;
        CHECK(xdx_scenario_from_json(R"({"tarders": 4})", &s.p, &err.p) == XDX_CONFIG);
        CHECK(err.view().find("tarders") != std::string::npos);
    }
    SUBCASE("out-of-range value") {
        Str err;
        CHECK(xdx_scenario_from_json(R"({"traders": 1})", &s.p, &err.p) == XDX_CONFIG);
    }
    SUBCASE("null arguments") {
        Str err;
        CHECK(xdx_scenario_from_json(nullptr, &s.p, &err.p) == XDX_CONFIG);
    }
    SUBCASE("missing file") {
        Str err;
        CHECK(xdx_scenario_from_file("/nonexistent/x.json", &s.p, &err.p) == XDX_CONFIG);
        CHECK(err.view().find("/nonexistent/x.json") != std::string::npos);
    }
}

TEST_CASE("options rewrite a parsed scenario") {
    Scenario s;
    Str err;
    REQUIRE(xdx_scenario_from_json(kGolden, &s.p, &err.p) == XDX_OK);

    CHECK(xdx_scenario_set_option(s.p, "traders", "10", nullptr) == XDX_OK);
    CHECK(xdx_scenario_set_option(s.p, "matchmakers", "3", nullptr) == XDX_OK);
    CHECK(xdx_scenario_set_option(s.p, "fanout", "2", nullptr) == XDX_OK);
    CHECK(xdx_scenario_set_option(s.p, "restrict", "0", nullptr) == XDX_OK);
    CHECK(xdx_scenario_set_option(s.p, "incset", "2", nullptr) == XDX_OK);
    CHECK(xdx_scenario_set_option(s.p, "duration_ms", "1500", nullptr) == XDX_OK);
    CHECK(xdx_scenario_set_option(s.p, "loss", "0.25", nullptr) == XDX_OK);
    CHECK(xdx_scenario_set_option(s.p, "name", "tweaked", nullptr) == XDX_OK);
    // load is a total rate, spread across the 10 traders
    CHECK(xdx_scenario_set_option(s.p, "load", "50", nullptr) == XDX_OK);

    Str json;
    json.p = xdx_scenario_to_json(s.p);
    std::string j = json.view();
    CHECK(j.find("\"traders\": 10") != std::string::npos);
    CHECK(j.find("\"matchmakers\": 3") != std::string::npos);
    CHECK(j.find("\"restrict_t\": 0") != std::string::npos);
    CHECK(j.find("\"incset_n\": 2") != std::string::npos);
    CHECK(j.find("\"orders_per_peer_per_sec\": 5") != std::string::npos);
    CHECK(j.find("\"tweaked\"") != std::string::npos);

    SUBCASE("bad key and bad values report config errors") {
        Str e1, e2, e3;
        CHECK(xdx_scenario_set_option(s.p, "warp", "9", &e1.p) == XDX_CONFIG);
        CHECK(e1.view().find("warp") != std::string::npos);
        CHECK(xdx_scenario_set_option(s.p, "traders", "1", &e2.p) == XDX_CONFIG);
        CHECK(xdx_scenario_set_option(s.p, "loss", "1.5", &e3.p) == XDX_CONFIG);
    }
}

TEST_CASE("a run produces every artifact and replay agrees") {
    Scenario s;
    Str err;
    REQUIRE(xdx_scenario_from_json(kGolden, &s.p, &err.p) == XDX_OK);

    Result r;
    REQUIRE(xdx_run(s.p, 1, &r.p, &err.p) == XDX_OK);
    REQUIRE(r.p != nullptr);
    CHECK(xdx_result_status(r.p) == XDX_OK);
    CHECK(std::string(xdx_result_violations(r.p)).empty());

    std::string trace = xdx_result_trace(r.p);
    CHECK(trace.rfind("# crossdex-trace v1", 0) == 0);

    std::string metrics = xdx_result_metrics_json(r.p);
    CHECK(metrics.find("\"trades_completed\":1") != std::string::npos);
    CHECK(std::string(xdx_result_summary_csv(r.p)).rfind("key,value", 0) == 0);
    CHECK(std::string(xdx_result_orders_csv(r.p)).rfind("order,", 0) == 0);
    CHECK(std::string(xdx_result_trades_csv(r.p)).rfind("trade,", 0) == 0);
    CHECK(std::string(xdx_result_peers_csv(r.p)).rfind("peer,", 0) == 0);
    CHECK(!std::string(xdx_result_ledger_dump(r.p)).empty());
    CHECK(!std::string(xdx_result_chain_log(r.p)).empty());

    Str replayed;
    REQUIRE(xdx_replay_metrics(trace.c_str(), &replayed.p, &err.p) == XDX_OK);
    CHECK(replayed.view() == metrics);

    SUBCASE("trace can be omitted") {
        Result lean;
        REQUIRE(xdx_run(s.p, 0, &lean.p, &err.p) == XDX_OK);
        CHECK(std::string(xdx_result_trace(lean.p)).empty());
        CHECK(std::string(xdx_result_metrics_json(lean.p)) == metrics);
    }
    SUBCASE("garbage trace is a config error") {
        Str out, e;
        CHECK(xdx_replay_metrics("not a trace", &out.p, &e.p) == XDX_CONFIG);
        CHECK(out.p == nullptr);
    }
}

TEST_CASE("seed changes the run, same seed repeats it") {
    Scenario s;
    Str err;
    REQUIRE(xdx_scenario_from_json(kGolden, &s.p, &err.p) == XDX_OK);
    xdx_scenario_set_seed(s.p, 99);

    Result a, b;
    REQUIRE(xdx_run(s.p, 1, &a.p, &err.p) == XDX_OK);
    REQUIRE(xdx_run(s.p, 1, &b.p, &err.p) == XDX_OK);
    CHECK(std::string(xdx_result_trace(a.p)) == xdx_result_trace(b.p));

    xdx_scenario_set_seed(s.p, 100);
    Result c;
    REQUIRE(xdx_run(s.p, 1, &c.p, &err.p) == XDX_OK);
    CHECK(std::string(xdx_result_trace(a.p)) != xdx_result_trace(c.p));
}

TEST_CASE("dump verification separates clean, tampered, and unreadable") {
    Scenario s;
    Str err;
    REQUIRE(xdx_scenario_from_json(kGolden, &s.p, &err.p) == XDX_OK);
    Result r;
    REQUIRE(xdx_run(s.p, 0, &r.p, &err.p) == XDX_OK);
    std::string dump = xdx_result_ledger_dump(r.p);

    Str report;
    REQUIRE(xdx_verify_dump(dump.c_str(), &report.p, &err.p) == XDX_OK);
    CHECK(report.view().empty());

    // drop the creator's own copy of a mid-chain partition; the gap cannot be
    // papered over by the copies other holders still carry
    auto recs = xdx::ledger::load_dump(dump);
    size_t victim = recs.size();
    for (size_t i = 0; i < recs.size(); i++) {
        if (recs[i].holder == recs[i].partition.creator && recs[i].partition.seq == 3) {
            victim = i;
            break;
        }
    }
    REQUIRE(victim < recs.size());
    std::string bad;
    size_t line = 0, pos = 0;
    while (pos < dump.size()) {
        size_t eol = dump.find('\n', pos);
        if (eol == std::string::npos) eol = dump.size();
        if (line++ != victim) bad += dump.substr(pos, eol - pos + 1);
        pos = eol + 1;
    }
    Str bad_report;
    CHECK(xdx_verify_dump(bad.c_str(), &bad_report.p, &err.p) == XDX_VIOLATION);
    CHECK(!bad_report.view().empty());

    Str e2, rep2;
    CHECK(xdx_verify_dump("...", &rep2.p, &e2.p) == XDX_CONFIG);
}
