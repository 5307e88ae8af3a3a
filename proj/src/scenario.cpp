#include "scenario.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "json.hpp"
#include "orderbook.hpp"

namespace xdx::scenario {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw ParseError("scenario: " + path + ": " + why);
}

std::string sub(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
}

void expect_keys(const json& j, const std::string& path,
                 std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) fail(sub(path, it.key()), "unknown key");
    }
}

u64 get_u64(const json& j, const std::string& path, const char* key, u64 defv) {
    auto it = j.find(key);
    if (it == j.end()) return defv;
    if (it->is_number_unsigned()) return it->get<u64>();
    if (it->is_number_integer()) {
        i64 v = it->get<i64>();
        if (v < 0) fail(sub(path, key), "must be >= 0");
        return static_cast<u64>(v);
    }
    fail(sub(path, key), "expected an integer");
}

u32 get_u32(const json& j, const std::string& path, const char* key, u32 defv) {
    u64 v = get_u64(j, path, key, defv);
    if (v > 0xffffffffull) fail(sub(path, key), "too large");
    return static_cast<u32>(v);
}

double get_num(const json& j, const std::string& path, const char* key, double defv) {
    auto it = j.find(key);
    if (it == j.end()) return defv;
    if (!it->is_number()) fail(sub(path, key), "expected a number");
    return it->get<double>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool defv) {
    auto it = j.find(key);
    if (it == j.end()) return defv;
    if (!it->is_boolean()) fail(sub(path, key), "expected true or false");
    return it->get<bool>();
}

std::string get_str(const json& j, const std::string& path, const char* key,
                    const std::string& defv) {
    auto it = j.find(key);
    if (it == j.end()) return defv;
    if (!it->is_string()) fail(sub(path, key), "expected a string");
    return it->get<std::string>();
}

// durations appear in the file as milliseconds (fractional allowed)
SimTime get_ms(const json& j, const std::string& path, const char* key, SimTime defv) {
    auto it = j.find(key);
    if (it == j.end()) return defv;
    if (!it->is_number()) fail(sub(path, key), "expected a duration in ms");
    double ms = it->get<double>();
    if (ms < 0) fail(sub(path, key), "must be >= 0");
    return static_cast<SimTime>(std::llround(ms * 1000.0));
}

sim::QtyDist get_qty(const json& j, const std::string& path, const char* key,
                     sim::QtyDist defv) {
    auto it = j.find(key);
    if (it == j.end()) return defv;
    sim::QtyDist d;
    if (it->is_number()) {
        d.lo = d.hi = get_u64(j, path, key, 0);
    } else if (it->is_array() && it->size() == 2) {
        const json& a = *it;
        if (!a[0].is_number() || !a[1].is_number())
            fail(sub(path, key), "range bounds must be integers");
        d.lo = a[0].get<u64>();
        d.hi = a[1].get<u64>();
    } else {
        fail(sub(path, key), "expected a quantity or [lo, hi]");
    }
    if (d.lo < 1) fail(sub(path, key), "quantities start at 1");
    if (d.lo > d.hi) fail(sub(path, key), "lo > hi");
    return d;
}

proto::PolicyConfig parse_policy(const json& j, const std::string& path) {
    expect_object(j, path);
    expect_keys(j, path,
                {"restrict_t", "incset_n", "at_own_risk", "match_window_ms",
                 "proposal_timeout_ms", "publication_window_ms", "poll_interval_ms",
                 "stall_watchdog_ms", "requeue_backoff_ms", "retransmit_ms",
                 "finalize_retransmit_ms", "finalize_attempts", "transfer_attempts",
                 "candidate_attempts", "order_timeout_ms"});
    proto::PolicyConfig p;
    p.restrict_t = get_u32(j, path, "restrict_t", p.restrict_t);
    p.incset_n = get_u32(j, path, "incset_n", p.incset_n);
    p.at_own_risk = get_bool(j, path, "at_own_risk", p.at_own_risk);
    p.match_window = get_ms(j, path, "match_window_ms", p.match_window);
    p.proposal_timeout = get_ms(j, path, "proposal_timeout_ms", p.proposal_timeout);
    p.publication_window = get_ms(j, path, "publication_window_ms", p.publication_window);
    p.poll_interval = get_ms(j, path, "poll_interval_ms", p.poll_interval);
    p.stall_watchdog = get_ms(j, path, "stall_watchdog_ms", p.stall_watchdog);
    p.requeue_backoff = get_ms(j, path, "requeue_backoff_ms", p.requeue_backoff);
    p.retransmit_every = get_ms(j, path, "retransmit_ms", p.retransmit_every);
    p.finalize_retransmit = get_ms(j, path, "finalize_retransmit_ms", p.finalize_retransmit);
    p.finalize_attempts = get_u32(j, path, "finalize_attempts", p.finalize_attempts);
    p.transfer_attempts = get_u32(j, path, "transfer_attempts", p.transfer_attempts);
    p.candidate_attempts = get_u32(j, path, "candidate_attempts", p.candidate_attempts);
    p.order_timeout = get_ms(j, path, "order_timeout_ms", p.order_timeout);

    if (p.incset_n < 1) fail(sub(path, "incset_n"), "at least 1 increment per side");
    if (p.poll_interval <= 0) fail(sub(path, "poll_interval_ms"), "must be > 0");
    if (p.proposal_timeout <= 0) fail(sub(path, "proposal_timeout_ms"), "must be > 0");
    if (p.publication_window <= 0) fail(sub(path, "publication_window_ms"), "must be > 0");
    if (p.stall_watchdog <= 0) fail(sub(path, "stall_watchdog_ms"), "must be > 0");
    if (p.retransmit_every <= 0) fail(sub(path, "retransmit_ms"), "must be > 0");
    if (p.finalize_retransmit <= 0) fail(sub(path, "finalize_retransmit_ms"), "must be > 0");
    if (p.finalize_attempts < 1) fail(sub(path, "finalize_attempts"), "must be >= 1");
    if (p.transfer_attempts < 1) fail(sub(path, "transfer_attempts"), "must be >= 1");
    if (p.candidate_attempts < 1) fail(sub(path, "candidate_attempts"), "must be >= 1");
    if (p.order_timeout <= 0) fail(sub(path, "order_timeout_ms"), "must be > 0");
    return p;
}

sim::WorkloadSpec parse_workload(const json& j, const std::string& path) {
    expect_object(j, path);
    expect_keys(j, path,
                {"duration_ms", "orders_per_peer_per_sec", "base", "quote", "base_qty",
                 "quote_qty", "order_timeout_ms"});
    sim::WorkloadSpec w;
    w.duration = get_ms(j, path, "duration_ms", w.duration);
    w.orders_per_peer_per_sec =
        get_num(j, path, "orders_per_peer_per_sec", w.orders_per_peer_per_sec);
    w.base = get_str(j, path, "base", w.base);
    w.quote = get_str(j, path, "quote", w.quote);
    w.base_qty = get_qty(j, path, "base_qty", w.base_qty);
    w.quote_qty = get_qty(j, path, "quote_qty", w.quote_qty);
    w.order_timeout = get_ms(j, path, "order_timeout_ms", w.order_timeout);

    if (w.duration > 0) {
        if (w.orders_per_peer_per_sec <= 0)
            fail(sub(path, "orders_per_peer_per_sec"), "must be > 0 when duration is set");
        if (w.base == w.quote) fail(sub(path, "quote"), "base and quote must differ");
    }
    if (w.orders_per_peer_per_sec < 0)
        fail(sub(path, "orders_per_peer_per_sec"), "must be >= 0");
    return w;
}

sim::ScenarioAction parse_action(const json& j, const std::string& path) {
    expect_object(j, path);
    sim::ScenarioAction act;
    act.at = get_ms(j, path, "at_ms", -1);
    if (act.at < 0) fail(sub(path, "at_ms"), "required");
    act.peer = get_u32(j, path, "peer", 0xffffffffu);
    if (act.peer == 0xffffffffu) fail(sub(path, "peer"), "required");

    std::string kind = get_str(j, path, "action", "");
    if (kind == "create_order") {
        expect_keys(j, path,
                    {"at_ms", "peer", "action", "side", "base", "quote", "base_qty",
                     "quote_qty", "timeout_ms"});
        sim::CreateOrderAction c;
        std::string side = get_str(j, path, "side", "");
        if (side == "offer") {
            c.is_offer = true;
        } else if (side == "request") {
            c.is_offer = false;
        } else {
            fail(sub(path, "side"), "expected \"offer\" or \"request\"");
        }
        c.base = get_str(j, path, "base", "");
        c.quote = get_str(j, path, "quote", "");
        if (c.base.empty()) fail(sub(path, "base"), "required");
        if (c.quote.empty()) fail(sub(path, "quote"), "required");
        if (c.base == c.quote) fail(sub(path, "quote"), "base and quote must differ");
        c.base_qty = get_u64(j, path, "base_qty", 0);
        c.quote_qty = get_u64(j, path, "quote_qty", 0);
        if (c.base_qty == 0) fail(sub(path, "base_qty"), "must be > 0");
        if (c.quote_qty == 0) fail(sub(path, "quote_qty"), "must be > 0");
        c.timeout = get_ms(j, path, "timeout_ms", 0);
        act.act = c;
    } else if (kind == "cancel_order") {
        expect_keys(j, path, {"at_ms", "peer", "action", "order_index"});
        sim::CancelOrderAction c;
        c.order_index = get_u64(j, path, "order_index", 0);
        act.act = c;
    } else {
        fail(sub(path, "action"), "expected \"create_order\" or \"cancel_order\"");
    }
    return act;
}

}  // namespace

sim::SimConfig from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }
    expect_object(j, "");
    expect_keys(j, "",
                {"name", "seed", "traders", "matchmakers", "fanout", "chains", "faucet",
                 "latency", "policy", "match_policy", "workload", "actions", "adversaries",
                 "record_msgs", "max_events", "max_sim_time_ms"});

    sim::SimConfig c;
    c.name = get_str(j, "", "name", c.name);
    c.seed = get_u64(j, "", "seed", c.seed);
    c.traders = get_u32(j, "", "traders", c.traders);
    c.matchmakers = get_u32(j, "", "matchmakers", c.matchmakers);
    c.fanout = get_u32(j, "", "fanout", c.fanout);
    c.faucet = get_u64(j, "", "faucet", c.faucet);
    if (c.traders < 2) fail("traders", "need at least 2");
    if (c.matchmakers < 1) fail("matchmakers", "need at least 1");
    if (c.fanout < 1) fail("fanout", "must be >= 1");

    if (auto it = j.find("latency"); it != j.end()) {
        expect_object(*it, "latency");
        expect_keys(*it, "latency", {"base_ms", "jitter_ms", "loss"});
        c.latency_base = get_ms(*it, "latency", "base_ms", c.latency_base);
        c.latency_jitter = get_ms(*it, "latency", "jitter_ms", c.latency_jitter);
        c.loss = get_num(*it, "latency", "loss", c.loss);
        if (c.loss < 0.0 || c.loss > 1.0) fail("latency.loss", "must be in [0, 1]");
    }

    if (auto it = j.find("policy"); it != j.end()) c.policy = parse_policy(*it, "policy");

    c.match_policy = get_str(j, "", "match_policy", c.match_policy);
    if (!book::MatchPolicyRegistry::instance().find(c.match_policy))
        fail("match_policy", "unknown policy \"" + c.match_policy + "\"");

    if (auto it = j.find("workload"); it != j.end())
        c.workload = parse_workload(*it, "workload");

    if (auto it = j.find("actions"); it != j.end()) {
        if (!it->is_array()) fail("actions", "expected an array");
        for (size_t i = 0; i < it->size(); i++) {
            std::string path = "actions[" + std::to_string(i) + "]";
            sim::ScenarioAction a = parse_action((*it)[i], path);
            if (a.peer >= c.traders) fail(sub(path, "peer"), "not a trader index");
            c.actions.push_back(std::move(a));
        }
    }

    if (auto it = j.find("adversaries"); it != j.end()) {
        if (!it->is_array()) fail("adversaries", "expected an array");
        for (size_t i = 0; i < it->size(); i++) {
            std::string path = "adversaries[" + std::to_string(i) + "]";
            const json& a = (*it)[i];
            expect_object(a, path);
            expect_keys(a, path, {"peer", "profile"});
            sim::AdversarySpec spec;
            spec.peer = get_u32(a, path, "peer", 0xffffffffu);
            if (spec.peer >= c.traders + c.matchmakers)
                fail(sub(path, "peer"), "peer index out of range");
            std::string prof = get_str(a, path, "profile", "");
            auto adv = proto::adversary_from_name(prof);
            if (!adv) fail(sub(path, "profile"), "unknown profile \"" + prof + "\"");
            spec.profile = *adv;
            bool is_mm = spec.peer >= c.traders;
            if (spec.profile == proto::Adversary::biased_matchmaker && !is_mm)
                fail(sub(path, "peer"), "biased-matchmaker must be a matchmaker index");
            if (is_mm && spec.profile != proto::Adversary::biased_matchmaker &&
                spec.profile != proto::Adversary::none)
                fail(sub(path, "profile"), "trader profile assigned to a matchmaker");
            c.adversaries.push_back(spec);
        }
    }

    if (auto it = j.find("chains"); it != j.end()) {
        if (!it->is_array()) fail("chains", "expected an array");
        for (size_t i = 0; i < it->size(); i++) {
            std::string path = "chains[" + std::to_string(i) + "]";
            const json& ch = (*it)[i];
            expect_object(ch, path);
            expect_keys(ch, path, {"id", "confirm_delay_ms"});
            sim::ChainSpec spec;
            spec.id = get_str(ch, path, "id", "");
            if (spec.id.empty()) fail(sub(path, "id"), "required");
            for (const auto& prev : c.chains)
                if (prev.id == spec.id) fail(sub(path, "id"), "duplicate chain id");
            spec.confirm_delay = get_ms(ch, path, "confirm_delay_ms", 0);
            c.chains.push_back(std::move(spec));
        }
    } else {
        // derive one instant chain per asset named anywhere in the scenario
        std::set<std::string> assets;
        if (c.workload.duration > 0) {
            assets.insert(c.workload.base);
            assets.insert(c.workload.quote);
        }
        for (const auto& a : c.actions)
            if (const auto* co = std::get_if<sim::CreateOrderAction>(&a.act)) {
                assets.insert(co->base);
                assets.insert(co->quote);
            }
        for (const auto& id : assets) c.chains.push_back({id, 0});
    }
    if (c.chains.empty()) fail("chains", "no chains configured and none derivable");

    auto has_chain = [&](const std::string& id) {
        for (const auto& ch : c.chains)
            if (ch.id == id) return true;
        return false;
    };
    if (c.workload.duration > 0) {
        if (!has_chain(c.workload.base)) fail("workload.base", "no such chain");
        if (!has_chain(c.workload.quote)) fail("workload.quote", "no such chain");
    }
    for (size_t i = 0; i < c.actions.size(); i++)
        if (const auto* co = std::get_if<sim::CreateOrderAction>(&c.actions[i].act)) {
            std::string path = "actions[" + std::to_string(i) + "]";
            if (!has_chain(co->base)) fail(sub(path, "base"), "no such chain");
            if (!has_chain(co->quote)) fail(sub(path, "quote"), "no such chain");
        }

    c.record_msgs = get_bool(j, "", "record_msgs", c.record_msgs);
    c.max_events = get_u64(j, "", "max_events", c.max_events);
    if (c.max_events == 0) fail("max_events", "must be > 0");
    c.max_sim_time = get_ms(j, "", "max_sim_time_ms", c.max_sim_time);
    return c;
}

sim::SimConfig from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("scenario: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return from_json(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(std::string(e.what()) + " (" + path + ")");
    }
}

namespace {

double to_ms(SimTime t) { return static_cast<double>(t) / 1000.0; }

json qty_json(const sim::QtyDist& d) {
    if (d.lo == d.hi) return json(d.lo);
    return json::array({d.lo, d.hi});
}

}  // namespace

std::string to_json(const sim::SimConfig& c) {
    json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["traders"] = c.traders;
    j["matchmakers"] = c.matchmakers;
    j["fanout"] = c.fanout;
    j["faucet"] = c.faucet;
    j["latency"] = {{"base_ms", to_ms(c.latency_base)},
                    {"jitter_ms", to_ms(c.latency_jitter)},
                    {"loss", c.loss}};
    const proto::PolicyConfig& p = c.policy;
    j["policy"] = {{"restrict_t", p.restrict_t},
                   {"incset_n", p.incset_n},
                   {"at_own_risk", p.at_own_risk},
                   {"match_window_ms", to_ms(p.match_window)},
                   {"proposal_timeout_ms", to_ms(p.proposal_timeout)},
                   {"publication_window_ms", to_ms(p.publication_window)},
                   {"poll_interval_ms", to_ms(p.poll_interval)},
                   {"stall_watchdog_ms", to_ms(p.stall_watchdog)},
                   {"requeue_backoff_ms", to_ms(p.requeue_backoff)},
                   {"retransmit_ms", to_ms(p.retransmit_every)},
                   {"finalize_retransmit_ms", to_ms(p.finalize_retransmit)},
                   {"finalize_attempts", p.finalize_attempts},
                   {"transfer_attempts", p.transfer_attempts},
                   {"candidate_attempts", p.candidate_attempts},
                   {"order_timeout_ms", to_ms(p.order_timeout)}};
    j["match_policy"] = c.match_policy;

    json chains = json::array();
    for (const auto& ch : c.chains)
        chains.push_back({{"id", ch.id}, {"confirm_delay_ms", to_ms(ch.confirm_delay)}});
    j["chains"] = chains;

    const sim::WorkloadSpec& w = c.workload;
    j["workload"] = {{"duration_ms", to_ms(w.duration)},
                     {"orders_per_peer_per_sec", w.orders_per_peer_per_sec},
                     {"base", w.base},
                     {"quote", w.quote},
                     {"base_qty", qty_json(w.base_qty)},
                     {"quote_qty", qty_json(w.quote_qty)},
                     {"order_timeout_ms", to_ms(w.order_timeout)}};

    json actions = json::array();
    for (const auto& a : c.actions) {
        json e;
        e["at_ms"] = to_ms(a.at);
        e["peer"] = a.peer;
        if (const auto* co = std::get_if<sim::CreateOrderAction>(&a.act)) {
            e["action"] = "create_order";
            e["side"] = co->is_offer ? "offer" : "request";
            e["base"] = co->base;
            e["quote"] = co->quote;
            e["base_qty"] = co->base_qty;
            e["quote_qty"] = co->quote_qty;
            e["timeout_ms"] = to_ms(co->timeout);
        } else if (const auto* ca = std::get_if<sim::CancelOrderAction>(&a.act)) {
            e["action"] = "cancel_order";
            e["order_index"] = ca->order_index;
        }
        actions.push_back(std::move(e));
    }
    j["actions"] = actions;

    json advs = json::array();
    for (const auto& a : c.adversaries)
        advs.push_back({{"peer", a.peer}, {"profile", proto::adversary_name(a.profile)}});
    j["adversaries"] = advs;

    j["record_msgs"] = c.record_msgs;
    j["max_events"] = c.max_events;
    j["max_sim_time_ms"] = to_ms(c.max_sim_time);
    return j.dump(2) + "\n";
}

}  // namespace xdx::scenario
