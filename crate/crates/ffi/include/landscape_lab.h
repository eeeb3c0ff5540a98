#ifndef LANDSCAPE_LAB_H
#define LANDSCAPE_LAB_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LlStatus {
  LL_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  LL_STATUS_NULL = 1,
  /**
   * Invalid argument, dimension mismatch or undersized buffer.
   */
  LL_STATUS_INPUT = 2,
  /**
   * Non-finite values during integration.
   */
  LL_STATUS_NUMERICAL = 3,
  /**
   * Internal panic caught at the boundary.
   */
  LL_STATUS_PANIC = 4,
} LlStatus;

typedef enum LlDecoderFamily {
  LL_DECODER_FAMILY_DIAGONAL = 0,
  LL_DECODER_FAMILY_TANH = 1,
} LlDecoderFamily;

/**
 * Opaque abstraction hierarchy.
 */
typedef struct LlHierarchy LlHierarchy;

/**
 * Opaque energy landscape.
 */
typedef struct LlLandscape LlLandscape;

typedef struct LlFlowConfig {
  double step_size;
  double grad_tol;
  size_t max_steps;
  double tau_rate;
} LlFlowConfig;

typedef struct LlFlowResult {
  double energy;
  double grad_norm;
  size_t steps_taken;
  bool converged;
  /**
   * Nearest memory to the terminal.
   */
  size_t basin_memory_index;
} LlFlowResult;

typedef struct LlSmoothnessRow {
  size_t level;
  double hessian_norm_est;
  double lipschitz_est;
  double jacobian_norm_est;
} LlSmoothnessRow;

typedef struct LlCensusRow {
  size_t level;
  double p_gen_majority;
  double amplification;
  double amplification_stderr;
  double diversity;
  double privacy_k1;
  size_t failures;
} LlCensusRow;

typedef struct LlMergeCounts {
  uint64_t pure_a;
  uint64_t pure_b;
  uint64_t mixed;
} LlMergeCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ll_last_error_message(void);

struct LlFlowConfig ll_flow_config_default(void);

/**
 * Builds a landscape from `n` row-major points of dimension `dim`.
 *
 * # Safety
 * `points` must hold `n * dim` values and `labels` `n` values.
 */
enum LlStatus ll_landscape_new(const double *points,
                               const uint32_t *labels,
                               size_t n,
                               size_t dim,
                               double beta,
                               struct LlLandscape **out);

/**
 * # Safety
 * `l` must come from [`ll_landscape_new`] and not be used afterwards.
 */
void ll_landscape_free(struct LlLandscape *l);

/**
 * # Safety
 * `l` must be a live landscape handle.
 */
size_t ll_landscape_dim(const struct LlLandscape *l);

/**
 * # Safety
 * `l` must be a live landscape handle.
 */
size_t ll_landscape_len(const struct LlLandscape *l);

/**
 * # Safety
 * `x` must hold `dim` values.
 */
enum LlStatus ll_energy(const struct LlLandscape *l, const double *x, size_t dim, double *out);

/**
 * # Safety
 * `x` and `grad` must each hold `dim` values.
 */
enum LlStatus ll_grad(const struct LlLandscape *l, const double *x, size_t dim, double *grad);

/**
 * Flows `query` to an attractor; `terminal` receives `dim` values.
 *
 * # Safety
 * `query` and `terminal` must hold `dim` values; `config` may be null for defaults.
 */
enum LlStatus ll_flow(const struct LlLandscape *l,
                      const double *query,
                      size_t dim,
                      const struct LlFlowConfig *config,
                      double *terminal,
                      struct LlFlowResult *result);

/**
 * Soft k-NN weights (`n` values) and mean label at `query`.
 *
 * # Safety
 * `query` must hold `dim` values and `weights` `n_memories` values.
 */
enum LlStatus ll_soft_knn(const struct LlLandscape *l,
                          const double *query,
                          size_t dim,
                          double tau,
                          double *weights,
                          size_t n_memories,
                          double *mean_label);

/**
 * Hierarchy with `c_a = ratio^a` for `a = 0..=top_level` and
 * `beta_a = beta * c_a^temperature_exponent`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LlStatus ll_hierarchy_geometric(enum LlDecoderFamily family,
                                     double ratio,
                                     size_t top_level,
                                     size_t dim,
                                     double temperature_exponent,
                                     struct LlHierarchy **out);

/**
 * # Safety
 * `h` must come from [`ll_hierarchy_geometric`] and not be used afterwards.
 */
void ll_hierarchy_free(struct LlHierarchy *h);

/**
 * Number of levels, `top_level + 1`.
 *
 * # Safety
 * `h` must be a live hierarchy handle.
 */
size_t ll_hierarchy_levels(const struct LlHierarchy *h);

/**
 * `E_a(z)` on level `a`.
 *
 * # Safety
 * `z` must hold `dim` values.
 */
enum LlStatus ll_level_energy(const struct LlHierarchy *h,
                              const struct LlLandscape *l,
                              size_t level,
                              const double *z,
                              size_t dim,
                              double *out);

/**
 * One row per level into `rows`, which must hold [`ll_hierarchy_levels`] entries.
 *
 * # Safety
 * `rows` must hold `capacity` entries.
 */
enum LlStatus ll_smoothness(const struct LlHierarchy *h,
                            const struct LlLandscape *l,
                            size_t probes,
                            double probe_radius,
                            uint64_t seed,
                            struct LlSmoothnessRow *rows,
                            size_t capacity);

/**
 * Basin census at every level (weighted-vote classification, default flow).
 *
 * # Safety
 * `rows` must hold `capacity` entries.
 */
enum LlStatus ll_census(const struct LlHierarchy *h,
                        const struct LlLandscape *l,
                        size_t n_queries,
                        uint64_t seed,
                        struct LlCensusRow *rows,
                        size_t capacity);

/**
 * Red share at levels `0..=levels` of a coarsened random grid.
 *
 * # Safety
 * `shares` must hold `capacity` values, at least `levels + 1`.
 */
enum LlStatus ll_grid_curve(size_t side,
                            double p_red,
                            size_t levels,
                            uint64_t seed,
                            double *shares,
                            size_t capacity);

/**
 * `p/q` and `(p/q)^S` (infinite once above 1e300).
 *
 * # Safety
 * Output pointers must be valid.
 */
enum LlStatus ll_odds(uint64_t p,
                      uint64_t q,
                      uint32_t s,
                      double *lambda_init,
                      double *lambda_smooth);

/**
 * Monte Carlo pure/mixed counts for a merged minimum.
 *
 * # Safety
 * `out` must be valid.
 */
enum LlStatus ll_simulate_merge(uint64_t p,
                                uint64_t q,
                                uint32_t s,
                                uint64_t trials,
                                uint64_t seed,
                                struct LlMergeCounts *out);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ll_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LANDSCAPE_LAB_H */
