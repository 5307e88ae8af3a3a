/* crossdex: deterministic cross-chain trading simulator, C interface.
 *
 * Every function that can fail returns a status code and, when err is
 * non-NULL, stores a malloc'd message there on failure (free it with
 * xdx_string_free). Pointers returned by xdx_result_* accessors stay valid
 * until xdx_result_free; strings returned as char* are owned by the caller.
 */
#ifndef CROSSDEX_H
#define CROSSDEX_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
    XDX_OK = 0,        /* success, all run invariants held */
    XDX_VIOLATION = 1, /* run finished but an invariant or verification failed */
    XDX_CONFIG = 2,    /* bad scenario / input file */
    XDX_INTERNAL = 3,  /* unexpected engine error */
};

typedef struct xdx_scenario xdx_scenario;
typedef struct xdx_result xdx_result;

const char* xdx_version(void);

/* -- scenario ---------------------------------------------------------- */

int xdx_scenario_from_json(const char* text, xdx_scenario** out, char** err);
int xdx_scenario_from_file(const char* path, xdx_scenario** out, char** err);
void xdx_scenario_free(xdx_scenario* s);

void xdx_scenario_set_seed(xdx_scenario* s, uint64_t seed);

/* Targeted overrides on a parsed scenario. Keys:
 *   "restrict"     counterparty-risk threshold t (0 disables)
 *   "incset"       increments per side n (>= 1)
 *   "load"         total orders per second; rewrites the per-peer rate
 *   "traders"      trader count (>= 2)
 *   "matchmakers"  matchmaker count (>= 1)
 *   "fanout"       matchmakers contacted per trader (>= 1)
 *   "duration_ms"  workload duration
 *   "loss"         message loss probability [0, 1]
 *   "name"         run label used in outputs
 */
int xdx_scenario_set_option(xdx_scenario* s, const char* key, const char* value, char** err);

/* canonical JSON for manifests; caller frees */
char* xdx_scenario_to_json(const xdx_scenario* s);

/* -- running ------------------------------------------------------------ */

/* Runs to completion. with_trace != 0 keeps the full event trace text in the
 * result (metrics are computed either way). Returns XDX_OK or XDX_VIOLATION
 * with a result; XDX_CONFIG / XDX_INTERNAL leave *out NULL. */
int xdx_run(const xdx_scenario* s, int with_trace, xdx_result** out, char** err);

int xdx_result_status(const xdx_result* r); /* XDX_OK or XDX_VIOLATION */
const char* xdx_result_trace(const xdx_result* r);
const char* xdx_result_metrics_json(const xdx_result* r);
const char* xdx_result_summary_csv(const xdx_result* r);
const char* xdx_result_orders_csv(const xdx_result* r);
const char* xdx_result_trades_csv(const xdx_result* r);
const char* xdx_result_peers_csv(const xdx_result* r);
const char* xdx_result_ledger_dump(const xdx_result* r);
const char* xdx_result_chain_log(const xdx_result* r);
const char* xdx_result_violations(const xdx_result* r); /* one per line; empty if clean */
void xdx_result_free(xdx_result* r);

/* -- offline tools ------------------------------------------------------ */

/* Recompute the metrics JSON from a trace alone. */
int xdx_replay_metrics(const char* trace, char** metrics_json, char** err);

/* Structural and cross-signature verification of a holder-attributed ledger
 * dump. *report gets one violation per line (empty string when clean). */
int xdx_verify_dump(const char* dump, char** report, char** err);

void xdx_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* CROSSDEX_H */
