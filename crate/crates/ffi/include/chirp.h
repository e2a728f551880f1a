#ifndef CHIRP_H
#define CHIRP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChirpRewardScale {
  CHIRP_REWARD_SCALE_GOAL_ECCENTRICITY = 0,
  CHIRP_REWARD_SCALE_START_DISTANCE = 1,
} ChirpRewardScale;

/**
 * Result code of every fallible call.
 */
typedef enum ChirpStatus {
  CHIRP_STATUS_OK = 0,
  CHIRP_STATUS_NULL_POINTER = 1,
  CHIRP_STATUS_DOMAIN = 2,
  CHIRP_STATUS_NUMERICAL = 3,
  CHIRP_STATUS_CALCULABILITY = 4,
  CHIRP_STATUS_DEGENERATE = 5,
  CHIRP_STATUS_SHAPE = 6,
  CHIRP_STATUS_TOO_LARGE = 7,
  CHIRP_STATUS_CONFIG = 8,
  CHIRP_STATUS_VALIDATION = 9,
  CHIRP_STATUS_INSUFFICIENT_SAMPLES = 10,
  CHIRP_STATUS_UNDEFINED_CORRELATION = 11,
  CHIRP_STATUS_EXACTNESS_UNAVAILABLE = 12,
  CHIRP_STATUS_IO = 13,
  CHIRP_STATUS_PARSE = 14,
  CHIRP_STATUS_PANIC = 15,
} ChirpStatus;

typedef enum ChirpScheme {
  CHIRP_SCHEME_RANDOM = 0,
  CHIRP_SCHEME_REWARD_SHAPED = 1,
} ChirpScheme;

/**
 * Opaque MDP handle. Create with [`chirp_mdp_new`], release with [`chirp_mdp_free`].
 */
typedef struct ChirpMdp ChirpMdp;

/**
 * Grid construction options; see [`chirp_grid_options_default`].
 */
typedef struct ChirpGridOptions {
  int32_t grid_size;
  enum ChirpRewardScale reward_scale;
  double discount;
  size_t horizon;
} ChirpGridOptions;

/**
 * Transfer-performance ratio with its three policy returns on the target.
 */
typedef struct ChirpSopr {
  double value;
  double target_optimal;
  double transferred;
  double target_pessimal;
} ChirpSopr;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *chirp_version(void);

/**
 * Copy of the calling thread's last error message, or NULL when the last
 * call succeeded. Free the result with [`chirp_string_free`].
 */
char *chirp_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a pointer returned by this library that has not been freed.
 */
void chirp_string_free(char *s);

struct ChirpGridOptions chirp_grid_options_default(void);

/**
 * Builds a default-size grid MDP.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum ChirpStatus chirp_mdp_new(int32_t goal_x,
                               int32_t goal_y,
                               int32_t start_x,
                               int32_t start_y,
                               double slip_prob,
                               struct ChirpMdp **out);

/**
 * # Safety
 * `options` must point to a valid [`ChirpGridOptions`]; `out` must be writable.
 */
enum ChirpStatus chirp_mdp_new_with_options(int32_t goal_x,
                                            int32_t goal_y,
                                            int32_t start_x,
                                            int32_t start_y,
                                            double slip_prob,
                                            const struct ChirpGridOptions *options,
                                            struct ChirpMdp **out);

/**
 * # Safety
 * `mdp` must be NULL or a handle from [`chirp_mdp_new`] not yet freed.
 */
void chirp_mdp_free(struct ChirpMdp *mdp);

/**
 * Reward scaling constant of the MDP.
 *
 * # Safety
 * `mdp` must be a live handle; `out` must be writable.
 */
enum ChirpStatus chirp_mdp_reward_scale(const struct ChirpMdp *mdp, double *out);

/**
 * Transfer performance of the source's optimal policy on the target.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum ChirpStatus chirp_sopr(const struct ChirpMdp *source,
                            const struct ChirpMdp *target,
                            struct ChirpSopr *out);

/**
 * Exact distance over all state-action pairs; slip-free MDPs only.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum ChirpStatus chirp_distance_exact(const struct ChirpMdp *a,
                                      const struct ChirpMdp *b,
                                      double *out);

/**
 * Sampled distance estimate with `n_s` state-action pairs and `n_t`
 * transitions each. Deterministic in `seed`.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum ChirpStatus chirp_distance_estimate(const struct ChirpMdp *a,
                                         const struct ChirpMdp *b,
                                         enum ChirpScheme scheme,
                                         size_t n_s,
                                         size_t n_t,
                                         uint64_t seed,
                                         double *out);

/**
 * Exact 1-Wasserstein distance between two equal-size uniform point clouds
 * given row-major as `n * dim` doubles. `assignment` may be NULL; otherwise
 * it receives `n` target indices.
 *
 * # Safety
 * `x` and `y` must hold `n * dim` doubles; `assignment`, if non-NULL, `n` slots.
 */
enum ChirpStatus chirp_w1(const double *x,
                          const double *y,
                          size_t n,
                          size_t dim,
                          double *out_cost,
                          size_t *assignment);

/**
 * k-medoids over a row-major `n * n` distance matrix. Writes the sorted
 * medoid indices (`k` slots), a dense cluster id per point (`n` slots,
 * ids index into `medoids`) and the total within-cluster cost. Any output
 * may be NULL.
 *
 * # Safety
 * `matrix` must hold `n * n` doubles; non-NULL outputs must have the sizes above.
 */
enum ChirpStatus chirp_k_medoids(const double *matrix,
                                 size_t n,
                                 size_t k,
                                 uint64_t seed,
                                 size_t *medoids,
                                 size_t *labels,
                                 double *cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHIRP_H */
