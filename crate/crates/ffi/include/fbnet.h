#ifndef FBNET_H
#define FBNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum FbnetStatus {
  FBNET_STATUS_OK = 0,
  FBNET_STATUS_NULL_POINTER = 1,
  FBNET_STATUS_INVALID_UTF8 = 2,
  /*
   Malformed or invalid network, or an invalid option.
   */
  FBNET_STATUS_CONFIG = 3,
  /*
   A stationary solve failed to converge.
   */
  FBNET_STATUS_NO_CONVERGENCE = 4,
  /*
   The exact oracle was asked for a network beyond its state cap.
   */
  FBNET_STATUS_STATE_SPACE_TOO_LARGE = 5,
  /*
   Node or edge lookup failed, or an output buffer is too short.
   */
  FBNET_STATUS_NOT_FOUND = 6,
  /*
   The library panicked; the handle arguments should be considered unusable.
   */
  FBNET_STATUS_PANIC = 7,
} FbnetStatus;

typedef enum FbnetMode {
  FBNET_MODE_ANALYZE = 0,
  FBNET_MODE_SIMULATE = 1,
  FBNET_MODE_COMPARE = 2,
  FBNET_MODE_ORACLE = 3,
} FbnetMode;

typedef struct FbnetAnalysis FbnetAnalysis;

typedef struct FbnetNetwork FbnetNetwork;

typedef struct FbnetSimulation FbnetSimulation;

/*
 Fixed-point options. `max_iters == 0` iterates until converged.
 */
typedef struct FbnetIterationConfig {
  uint64_t max_iters;
  double tol;
  double damping;
  bool gauss_seidel;
} FbnetIterationConfig;

/*
 Simulator options; `epochs` includes the warmup.
 */
typedef struct FbnetSimConfig {
  uint64_t epochs;
  uint64_t warmup;
  uint64_t seed;
  uint64_t replications;
} FbnetSimConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Description of the last failure on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *fbnet_last_error(void);

struct FbnetIterationConfig fbnet_iteration_config_default(void);

struct FbnetSimConfig fbnet_sim_config_default(void);

/*
 Parse and validate a network from a JSON config string.

 # Safety
 `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum FbnetStatus fbnet_network_from_json(const char *json, struct FbnetNetwork **out);

/*
 # Safety
 `net` must come from [`fbnet_network_from_json`] and not be used afterwards.
 */
void fbnet_network_free(struct FbnetNetwork *net);

/*
 # Safety
 `net` must be a live network handle or null (which yields 0).
 */
size_t fbnet_network_node_count(const struct FbnetNetwork *net);

/*
 # Safety
 `net` must be a live network handle or null (which yields 0).
 */
size_t fbnet_network_edge_count(const struct FbnetNetwork *net);

/*
 Solve the fixed point. A null `cfg` uses the defaults. Hitting the
 iteration limit is not an error; check [`fbnet_analysis_converged`].

 # Safety
 `net` must be live, `cfg` valid or null, `out` valid.
 */
enum FbnetStatus fbnet_analyze(const struct FbnetNetwork *net,
                               const struct FbnetIterationConfig *cfg,
                               struct FbnetAnalysis **out);

/*
 # Safety
 `a` must come from [`fbnet_analyze`] and not be used afterwards.
 */
void fbnet_analysis_free(struct FbnetAnalysis *a);

/*
 Packets per epoch reaching the destination; NaN for a null handle.

 # Safety
 `a` must be a live analysis handle or null.
 */
double fbnet_analysis_throughput(const struct FbnetAnalysis *a);

/*
 Mean end-to-end delay in epochs; `+inf` when no path carries traffic.

 # Safety
 `a` must be a live analysis handle or null.
 */
double fbnet_analysis_mean_delay(const struct FbnetAnalysis *a);

/*
 # Safety
 `a` must be a live analysis handle or null.
 */
bool fbnet_analysis_converged(const struct FbnetAnalysis *a);

/*
 # Safety
 `a` must be a live analysis handle or null.
 */
size_t fbnet_analysis_iterations(const struct FbnetAnalysis *a);

/*
 Copy the occupancy distribution of intermediate node `label` into `buf`
 (post-arrival, or post-departure when `post_departure` is set). `written`
 receives the number of states, `m + 1`, even when `len` is too small.

 # Safety
 `net` and `a` must be live and belong together; `buf` must hold `len`
 doubles; `written` must be valid.
 */
enum FbnetStatus fbnet_analysis_occupancy(const struct FbnetNetwork *net,
                                          const struct FbnetAnalysis *a,
                                          int64_t label,
                                          bool post_departure,
                                          double *buf,
                                          size_t len,
                                          size_t *written);

/*
 Offered rate `varrho` and blocking probability `q` of edge `from → to`.

 # Safety
 `net` and `a` must be live and belong together; outputs must be valid.
 */
enum FbnetStatus fbnet_analysis_edge(const struct FbnetNetwork *net,
                                     const struct FbnetAnalysis *a,
                                     int64_t from,
                                     int64_t to,
                                     double *varrho,
                                     double *q);

/*
 Run the packet-level simulator. A null `cfg` uses the defaults.

 # Safety
 `net` must be live, `cfg` valid or null, `out` valid.
 */
enum FbnetStatus fbnet_simulate(const struct FbnetNetwork *net,
                                const struct FbnetSimConfig *cfg,
                                struct FbnetSimulation **out);

/*
 # Safety
 `s` must come from [`fbnet_simulate`] and not be used afterwards.
 */
void fbnet_simulation_free(struct FbnetSimulation *s);

/*
 Empirical throughput and its standard error.

 # Safety
 `s` must be live; outputs must be valid.
 */
enum FbnetStatus fbnet_simulation_throughput(const struct FbnetSimulation *s,
                                             double *mean,
                                             double *se);

/*
 Empirical mean delay and its standard error; `NotFound` when nothing
 was delivered.

 # Safety
 `s` must be live; outputs must be valid.
 */
enum FbnetStatus fbnet_simulation_mean_delay(const struct FbnetSimulation *s,
                                             double *mean,
                                             double *se);

/*
 Exact throughput from the joint chain of a tiny network.

 # Safety
 `net` must be live; `out` valid.
 */
enum FbnetStatus fbnet_exact_throughput(const struct FbnetNetwork *net, double *out);

/*
 Render the JSON report the CLI would print for `mode`. Null configs use
 the defaults; compare uses the default thresholds. Release the string
 with [`fbnet_string_free`].

 # Safety
 `net` must be live, configs valid or null, `out` valid.
 */
enum FbnetStatus fbnet_report_json(const struct FbnetNetwork *net,
                                   enum FbnetMode mode,
                                   const struct FbnetIterationConfig *iter,
                                   const struct FbnetSimConfig *sim,
                                   char **out);

/*
 # Safety
 `s` must come from this library and not be used afterwards.
 */
void fbnet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FBNET_H */
