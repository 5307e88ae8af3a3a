// crossdex command line: run scenarios, sweep load/policy grids, replay traces
// into metrics, and verify ledger dumps. Links only the public C surface.
//
// Exit codes: 0 success, 1 invariant/verification failure, 2 bad input.
// CROSSDEX_LOG=quiet|info|debug controls stderr chatter (default info).

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crossdex.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
    const char* v = std::getenv("CROSSDEX_LOG");
    if (!v) return LogLevel::info;
    if (!std::strcmp(v, "quiet")) return LogLevel::quiet;
    if (!std::strcmp(v, "debug")) return LogLevel::debug;
    return LogLevel::info;
}

void note(const std::string& line) {
    if (log_level() >= LogLevel::info) std::cerr << line << "\n";
}

void debug_note(const std::string& line) {
    if (log_level() >= LogLevel::debug) std::cerr << line << "\n";
}

struct OwnedStr {
    char* p = nullptr;
    ~OwnedStr() { xdx_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

struct Scenario {
    xdx_scenario* s = nullptr;
    ~Scenario() { xdx_scenario_free(s); }
};

struct Result {
    xdx_result* r = nullptr;
    ~Result() { xdx_result_free(r); }
};

int fail_config(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return XDX_CONFIG;
}

bool write_file(const fs::path& path, const std::string& content, std::string& err) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        err = "cannot write " + path.string();
        return false;
    }
    out << content;
    return out.good();
}

std::string read_file(const fs::path& path, std::string& err) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        err = "cannot open " + path.string();
        return "";
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// numeric summary keys aggregated across repetitions, in output order
const std::vector<std::string> kAggKeys = {
    "orders_created",  "orders_fulfilled", "orders_cancelled", "orders_expired",
    "trades_opened",   "trades_completed", "trades_aborted",   "msgs_sent",
    "msgs_delivered",  "msgs_dropped",     "txs_submitted",    "txs_confirmed",
    "store_timeouts",  "protocol_rejects", "throughput_per_s", "peak_1s",
    "latency_mean_us", "latency_p50_us",   "latency_p90_us",
};

std::string fmt_num(double v) {
    if (std::floor(v) == v && std::fabs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.0f", v);
        return buf;
    }
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct RepStats {
    std::map<std::string, std::vector<double>> values;  // key -> one entry per rep

    void add(const json& metrics) {
        for (const auto& k : kAggKeys)
            if (metrics.contains(k)) values[k].push_back(metrics[k].get<double>());
    }
    double mean(const std::string& k) const {
        auto it = values.find(k);
        if (it == values.end() || it->second.empty()) return 0;
        double s = 0;
        for (double v : it->second) s += v;
        return s / static_cast<double>(it->second.size());
    }
    double stddev(const std::string& k) const {
        auto it = values.find(k);
        if (it == values.end() || it->second.size() < 2) return 0;
        double m = mean(k);
        double s = 0;
        for (double v : it->second) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(it->second.size() - 1));
    }
};

struct Overrides {
    std::vector<std::string> policy;  // key=value pairs
    double load = 0;                  // total orders/sec; 0 = keep scenario
    bool has_seed = false;
    uint64_t seed = 0;
};

int apply_overrides(xdx_scenario* s, const Overrides& ov) {
    for (const auto& kv : ov.policy) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            return fail_config("--policy expects key=value, got \"" + kv + "\"");
        OwnedStr err;
        if (xdx_scenario_set_option(s, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str(),
                                    &err.p))
            return fail_config(err.str());
    }
    if (ov.load > 0) {
        OwnedStr err;
        if (xdx_scenario_set_option(s, "load", fmt_num(ov.load).c_str(), &err.p))
            return fail_config(err.str());
    }
    if (ov.has_seed) xdx_scenario_set_seed(s, ov.seed);
    return XDX_OK;
}

// One full run set: R repetitions with consecutive seeds off the scenario's
// base seed. Writes per-rep outputs when out_dir is set. Returns worst status.
int run_reps(const xdx_scenario* base, uint64_t base_seed, int reps, bool with_trace,
             const fs::path& out_dir, bool write_outputs, RepStats& stats,
             std::string& first_error, std::ostream& summary_out) {
    int worst = XDX_OK;
    for (int rep = 0; rep < reps; rep++) {
        OwnedStr cfg_json;
        cfg_json.p = xdx_scenario_to_json(base);
        Scenario s;
        OwnedStr perr;
        if (xdx_scenario_from_json(cfg_json.p, &s.s, &perr.p)) {
            first_error = perr.str();
            return XDX_CONFIG;
        }
        uint64_t seed = base_seed + static_cast<uint64_t>(rep);
        xdx_scenario_set_seed(s.s, seed);

        Result res;
        OwnedStr err;
        int rc = xdx_run(s.s, with_trace ? 1 : 0, &res.r, &err.p);
        if (rc >= XDX_CONFIG) {
            first_error = err.str();
            return rc;
        }
        worst = std::max(worst, rc);

        json m = json::parse(xdx_result_metrics_json(res.r));
        stats.add(m);

        summary_out << "# rep " << rep << " seed=" << seed << "\n"
                    << xdx_result_summary_csv(res.r);

        std::string viols = xdx_result_violations(res.r);
        if (!viols.empty()) {
            std::cerr << "rep " << rep << " violations:\n" << viols;
        }
        note("rep " + std::to_string(rep) + " seed=" + std::to_string(seed) +
             (rc == XDX_OK ? " ok" : " VIOLATION") +
             " completed=" + m["trades_completed"].dump() +
             " aborted=" + m["trades_aborted"].dump());
        debug_note(std::string("metrics: ") + xdx_result_metrics_json(res.r));

        if (write_outputs) {
            fs::path dir = out_dir / ("rep" + std::to_string(rep));
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec) {
                first_error = "cannot create " + dir.string();
                return XDX_CONFIG;
            }
            std::string werr;
            bool ok = write_file(dir / "metrics.json", xdx_result_metrics_json(res.r), werr) &&
                      write_file(dir / "summary.csv", xdx_result_summary_csv(res.r), werr) &&
                      write_file(dir / "orders.csv", xdx_result_orders_csv(res.r), werr) &&
                      write_file(dir / "trades.csv", xdx_result_trades_csv(res.r), werr) &&
                      write_file(dir / "peers.csv", xdx_result_peers_csv(res.r), werr) &&
                      write_file(dir / "ledger_dump.txt", xdx_result_ledger_dump(res.r), werr) &&
                      write_file(dir / "chain_log.txt", xdx_result_chain_log(res.r), werr);
            if (ok && with_trace)
                ok = write_file(dir / "trace.txt", xdx_result_trace(res.r), werr);
            if (ok && !viols.empty())
                ok = write_file(dir / "violations.txt", viols, werr);
            if (!ok) {
                first_error = werr;
                return XDX_CONFIG;
            }
        }
    }
    return worst;
}

std::string aggregate_csv(const RepStats& stats) {
    std::string out = "metric,mean,stddev\n";
    for (const auto& k : kAggKeys)
        out += k + "," + fmt_num(stats.mean(k)) + "," + fmt_num(stats.stddev(k)) + "\n";
    return out;
}

uint64_t scenario_seed(const xdx_scenario* s) {
    OwnedStr j;
    j.p = xdx_scenario_to_json(s);
    return json::parse(j.str())["seed"].get<uint64_t>();
}

int write_manifest(const fs::path& out_dir, const char* command, const xdx_scenario* s,
                   uint64_t base_seed, int reps, std::string& err) {
    OwnedStr cfg;
    cfg.p = xdx_scenario_to_json(s);
    json manifest = {
        {"version", xdx_version()},
        {"command", command},
        {"base_seed", base_seed},
        {"reps", reps},
        {"scenario", json::parse(cfg.str())},
    };
    if (!write_file(out_dir / "manifest.json", manifest.dump(2) + "\n", err)) return XDX_CONFIG;
    // the scenario alone, re-runnable directly via --scenario
    if (!write_file(out_dir / "scenario.json", cfg.str(), err)) return XDX_CONFIG;
    return XDX_OK;
}

int cmd_run(const std::string& scenario_path, const Overrides& ov, int reps,
            const std::string& out_dir, bool no_trace) {
    Scenario s;
    OwnedStr err;
    if (xdx_scenario_from_file(scenario_path.c_str(), &s.s, &err.p))
        return fail_config(err.str());
    if (int rc = apply_overrides(s.s, ov)) return rc;
    uint64_t base_seed = scenario_seed(s.s);

    bool writing = !out_dir.empty();
    fs::path dir(out_dir);
    if (writing) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) return fail_config("cannot create " + dir.string());
        std::string werr;
        if (write_manifest(dir, "run", s.s, base_seed, reps, werr)) return fail_config(werr);
    }

    RepStats stats;
    std::string run_err;
    std::ostringstream summaries;
    int rc = run_reps(s.s, base_seed, reps, !no_trace, dir, writing, stats, run_err, summaries);
    if (rc >= XDX_CONFIG) return fail_config(run_err);

    std::cout << summaries.str();
    if (reps > 1) {
        std::string agg = aggregate_csv(stats);
        std::cout << "# aggregate over " << reps << " reps\n" << agg;
        if (writing) {
            std::string werr;
            if (!write_file(dir / "aggregate.csv", agg, werr)) return fail_config(werr);
        }
    }
    return rc;
}

int cmd_verify(const std::string& dump_path) {
    std::string err;
    std::string dump = read_file(dump_path, err);
    if (!err.empty()) return fail_config(err);
    OwnedStr report, verr;
    int rc = xdx_verify_dump(dump.c_str(), &report.p, &verr.p);
    if (rc >= XDX_CONFIG) return fail_config(verr.str());
    std::cout << report.str();
    if (rc == XDX_OK) note("dump clean");
    return rc;
}

int cmd_replay(const std::string& trace_path, const std::string& out_dir) {
    std::string err;
    std::string trace = read_file(trace_path, err);
    if (!err.empty()) return fail_config(err);
    OwnedStr metrics, rerr;
    int rc = xdx_replay_metrics(trace.c_str(), &metrics.p, &rerr.p);
    if (rc) return fail_config(rerr.str());
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) return fail_config("cannot create " + out_dir);
        std::string werr;
        if (!write_file(fs::path(out_dir) / "metrics.json", metrics.str(), werr))
            return fail_config(werr);
    }
    std::cout << metrics.str() << "\n";
    return XDX_OK;
}

struct PolicyPoint {
    std::string name;
    const char* restrict_t;
    const char* incset_n;
};

int cmd_sweep(const std::string& scenario_path, const Overrides& ov,
              const std::string& loads_arg, const std::string& policies_arg, int reps,
              const std::string& out_dir, double peers_per_load) {
    Scenario base;
    OwnedStr err;
    if (xdx_scenario_from_file(scenario_path.c_str(), &base.s, &err.p))
        return fail_config(err.str());
    if (int rc = apply_overrides(base.s, ov)) return rc;
    uint64_t base_seed = scenario_seed(base.s);

    std::vector<double> loads;
    {
        std::istringstream in(loads_arg);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            try {
                loads.push_back(std::stod(tok));
            } catch (...) {
                return fail_config("bad --loads entry \"" + tok + "\"");
            }
            if (loads.back() <= 0) return fail_config("loads must be > 0");
        }
    }
    if (loads.empty()) return fail_config("--loads is empty");

    const std::vector<PolicyPoint> kPolicies = {
        {"none", "0", "1"},
        {"restrict", "1", "1"},
        {"incset", "0", "2"},
        {"both", "1", "2"},
    };
    std::vector<PolicyPoint> policies;
    {
        std::istringstream in(policies_arg);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            bool found = false;
            for (const auto& p : kPolicies)
                if (p.name == tok) {
                    policies.push_back(p);
                    found = true;
                }
            if (!found) return fail_config("unknown policy point \"" + tok + "\"");
        }
    }
    if (policies.empty()) return fail_config("--policies is empty");

    bool writing = !out_dir.empty();
    fs::path dir(out_dir);
    if (writing) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) return fail_config("cannot create " + dir.string());
        std::string werr;
        if (write_manifest(dir, "sweep", base.s, base_seed, reps, werr))
            return fail_config(werr);
    }

    std::string table =
        "load,policy,traders,reps,status,completed_mean,completed_stddev,aborted_mean,"
        "throughput_mean,throughput_stddev,peak_1s_mean,latency_ms_mean,latency_ms_stddev,"
        "latency_p50_ms_mean,latency_p90_ms_mean\n";
    int worst = XDX_OK;

    for (double load : loads) {
        for (const auto& pol : policies) {
            OwnedStr base_json;
            base_json.p = xdx_scenario_to_json(base.s);
            Scenario pt;
            OwnedStr perr;
            if (xdx_scenario_from_json(base_json.p, &pt.s, &perr.p))
                return fail_config(perr.str());

            OwnedStr oerr;
            int rc = 0;
            if (peers_per_load > 0) {
                uint64_t traders =
                    std::max<uint64_t>(2, static_cast<uint64_t>(std::llround(load * peers_per_load)));
                rc = xdx_scenario_set_option(pt.s, "traders", std::to_string(traders).c_str(),
                                             &oerr.p);
            }
            if (!rc) rc = xdx_scenario_set_option(pt.s, "load", fmt_num(load).c_str(), &oerr.p);
            if (!rc) rc = xdx_scenario_set_option(pt.s, "restrict", pol.restrict_t, &oerr.p);
            if (!rc) rc = xdx_scenario_set_option(pt.s, "incset", pol.incset_n, &oerr.p);
            if (!rc)
                rc = xdx_scenario_set_option(
                    pt.s, "name", ("L" + fmt_num(load) + "-" + pol.name).c_str(), &oerr.p);
            if (rc) return fail_config(oerr.str());

            OwnedStr pt_json;
            pt_json.p = xdx_scenario_to_json(pt.s);
            uint64_t traders = json::parse(pt_json.str())["traders"].get<uint64_t>();

            note("sweep point load=" + fmt_num(load) + " policy=" + pol.name +
                 " traders=" + std::to_string(traders));

            RepStats stats;
            std::string run_err;
            std::ostringstream sink;  // per-rep summaries not interesting in sweeps
            int status = run_reps(pt.s, base_seed, reps, false, {}, false, stats, run_err, sink);
            if (status >= XDX_CONFIG) {
                // a broken point is recorded and the sweep continues
                std::cerr << "point load=" << fmt_num(load) << " policy=" << pol.name
                          << " failed: " << run_err << "\n";
                worst = std::max(worst, static_cast<int>(XDX_VIOLATION));
            } else {
                worst = std::max(worst, status);
            }

            std::ostringstream row;
            row << fmt_num(load) << ',' << pol.name << ',' << traders << ',' << reps << ','
                << status << ',' << fmt_num(stats.mean("trades_completed")) << ','
                << fmt_num(stats.stddev("trades_completed")) << ','
                << fmt_num(stats.mean("trades_aborted")) << ','
                << fmt_num(stats.mean("throughput_per_s")) << ','
                << fmt_num(stats.stddev("throughput_per_s")) << ','
                << fmt_num(stats.mean("peak_1s")) << ','
                << fmt_num(stats.mean("latency_mean_us") / 1000.0) << ','
                << fmt_num(stats.stddev("latency_mean_us") / 1000.0) << ','
                << fmt_num(stats.mean("latency_p50_us") / 1000.0) << ','
                << fmt_num(stats.mean("latency_p90_us") / 1000.0) << '\n';
            table += row.str();
        }
    }

    std::cout << table;
    if (writing) {
        std::string werr;
        if (!write_file(dir / "sweep.csv", table, werr)) return fail_config(werr);
    }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crossdex: deterministic cross-chain trading simulator"};
    app.set_version_flag("--version", std::string(xdx_version()));
    app.require_subcommand(1);

    std::string scenario_path, out_dir, dump_path, trace_path;
    std::string loads = "10,50,100,200";
    std::string policies = "none,restrict,incset,both";
    Overrides ov;
    int reps = 1;
    bool no_trace = false;
    double peers_per_load = 0;
    uint64_t seed_opt = 0;

    auto add_common = [&](CLI::App* c, bool needs_scenario) {
        if (needs_scenario)
            c->add_option("--scenario", scenario_path, "scenario JSON file")
                ->required()
                ->check(CLI::ExistingFile);
        c->add_option("--seed", seed_opt, "override the scenario seed")
            ->each([&](const std::string&) { ov.has_seed = true; });
        c->add_option("--reps", reps, "repetitions, consecutive seeds")
            ->check(CLI::PositiveNumber);
        c->add_option("--out", out_dir, "output directory");
        c->add_option("--policy", ov.policy,
                      "override, e.g. restrict=1 or incset=2 (repeatable)");
        c->add_option("--load", ov.load, "total orders/sec across traders")
            ->check(CLI::PositiveNumber);
    };

    CLI::App* run = app.add_subcommand("run", "run a scenario");
    add_common(run, true);
    run->add_flag("--no-trace", no_trace, "skip writing the event trace");

    CLI::App* verify = app.add_subcommand("verify", "verify a ledger dump");
    verify->add_option("dump", dump_path, "holder-attributed ledger dump")
        ->required()
        ->check(CLI::ExistingFile);

    CLI::App* sweep = app.add_subcommand("sweep", "run a load x policy grid");
    add_common(sweep, true);
    sweep->add_option("--loads", loads, "comma list of total orders/sec");
    sweep->add_option("--policies", policies,
                      "comma list from none,restrict,incset,both");
    sweep->add_option("--peers-per-load", peers_per_load,
                      "traders = max(2, round(load * this)); 0 keeps the scenario count");

    CLI::App* replay = app.add_subcommand("replay", "recompute metrics from a trace");
    replay->add_option("trace", trace_path, "trace file from a run")
        ->required()
        ->check(CLI::ExistingFile);
    replay->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : XDX_CONFIG;
    }

    ov.seed = seed_opt;
    if (run->parsed()) return cmd_run(scenario_path, ov, reps, out_dir, no_trace);
    if (verify->parsed()) return cmd_verify(dump_path);
    if (sweep->parsed())
        return cmd_sweep(scenario_path, ov, loads, policies, reps, out_dir, peers_per_load);
    if (replay->parsed()) return cmd_replay(trace_path, out_dir);
    return XDX_CONFIG;
}
