#ifndef TTSA_H
#define TTSA_H

#include <stddef.h>
#include <stdint.h>

typedef enum TtsaStatus {
  TTSA_STATUS_OK = 0,
  TTSA_STATUS_NULL_POINTER = 1,
  TTSA_STATUS_INVALID_ARGUMENT = 2,
  TTSA_STATUS_DIMENSION_MISMATCH = 3,
  // Non-finite values, singular systems, divergence or non-convergence.
  TTSA_STATUS_NUMERICAL = 4,
  TTSA_STATUS_CONFIG = 5,
  TTSA_STATUS_IO = 6,
  TTSA_STATUS_PANIC = 7,
} TtsaStatus;

// Tabular MDP.
typedef struct TtsaMdp TtsaMdp;

// Quadratic bilevel instance.
typedef struct TtsaQuadratic TtsaQuadratic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next call.
const char *ttsa_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ttsa_version(void);

// `regime`: 0 strongly convex, 1 convex, 2 weakly convex. Noise is `sigma` on every oracle.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle pointer.
enum TtsaStatus ttsa_quadratic_new(uint32_t regime,
                                   size_t d1,
                                   size_t d2,
                                   double condition_number,
                                   double sigma,
                                   uint64_t seed,
                                   struct TtsaQuadratic **out);

// Builds an instance from a JSON quadratic spec (the `[problem]` fields of a config).
//
// # Safety
// `json` must be a NUL-terminated string; `out` as in [`ttsa_quadratic_new`].
enum TtsaStatus ttsa_quadratic_from_json(const char *json, struct TtsaQuadratic **out);

// # Safety
// `handle` must come from a constructor above and not be used afterwards. Null is ignored.
void ttsa_quadratic_free(struct TtsaQuadratic *handle);

// # Safety
// `handle` must be live; `d1`, `d2` writable.
enum TtsaStatus ttsa_quadratic_dims(const struct TtsaQuadratic *handle, size_t *d1, size_t *d2);

// Outer objective `ell(x)`.
//
// # Safety
// `x` must point to `x_len` doubles; `out` writable.
enum TtsaStatus ttsa_quadratic_ell(const struct TtsaQuadratic *handle,
                                   const double *x,
                                   size_t x_len,
                                   double *out);

// Exact `grad ell(x)` into `out` (length d1).
//
// # Safety
// `x` and `out` must point to `len` doubles each.
enum TtsaStatus ttsa_quadratic_grad_ell(const struct TtsaQuadratic *handle,
                                        const double *x,
                                        double *out,
                                        size_t len);

// One randomized Neumann hypergradient draw at `(x, y)` into `out` (length d1).
//
// # Safety
// `x`/`out` hold d1 doubles, `y` holds d2.
enum TtsaStatus ttsa_quadratic_hypergradient(const struct TtsaQuadratic *handle,
                                             const double *x,
                                             size_t d1,
                                             const double *y,
                                             size_t d2,
                                             size_t tmax,
                                             double c_h,
                                             uint64_t seed,
                                             double *out);

// TTSA with the regime's default schedule from `x0` (d1) and `y = 0`; final iterates into
// `x_out` (d1) and `y_out` (d2), final `|x - x*|^2` into `delta_x` when known (NaN otherwise).
//
// # Safety
// Buffers must hold the stated number of doubles; `delta_x` may be null.
enum TtsaStatus ttsa_quadratic_run(const struct TtsaQuadratic *handle,
                                   uint64_t k_max,
                                   uint64_t seed,
                                   const double *x0,
                                   double *x_out,
                                   size_t d1,
                                   double *y_out,
                                   size_t d2,
                                   double *delta_x);

// # Safety
// `out` must be writable.
enum TtsaStatus ttsa_mdp_random(size_t n_states,
                                size_t n_actions,
                                double gamma,
                                uint64_t seed,
                                struct TtsaMdp **out);

// JSON with fields `n_states`, `n_actions`, `P`, `r`, `gamma`, `rho0`.
//
// # Safety
// `json` must be NUL-terminated; `out` writable.
enum TtsaStatus ttsa_mdp_from_json(const char *json, struct TtsaMdp **out);

// # Safety
// `handle` must come from a constructor above and not be used afterwards. Null is ignored.
void ttsa_mdp_free(struct TtsaMdp *handle);

// # Safety
// `handle` live; outputs writable.
enum TtsaStatus ttsa_mdp_shape(const struct TtsaMdp *handle, size_t *n_states, size_t *n_actions);

// Exact `V^pi` (length S) for a row-major `S x A` policy.
//
// # Safety
// `probs` holds `len = S*A` doubles, `v_out` holds S.
enum TtsaStatus ttsa_mdp_value(const struct TtsaMdp *handle,
                               const double *probs,
                               size_t len,
                               double *v_out,
                               size_t n_states);

// Residual of the performance-difference identity between `probs` and the optimal policy.
//
// # Safety
// `probs` holds `len = S*A` doubles; `residual` writable.
enum TtsaStatus ttsa_mdp_pdl_residual(const struct TtsaMdp *handle,
                                      const double *probs,
                                      size_t len,
                                      double *residual);

// Tabular actor-critic from the uniform policy with `alpha = alpha_scale K^{-3/4}` and
// `beta = min(beta_cap, beta_scale K^{-1/2})` (`beta_cap <= 0` means uncapped).
//
// # Safety
// `opt0` and `final_opt` writable.
enum TtsaStatus ttsa_mdp_run_nac(const struct TtsaMdp *handle,
                                 uint64_t k_max,
                                 uint64_t seed,
                                 double alpha_scale,
                                 double beta_scale,
                                 double beta_cap,
                                 double *opt0,
                                 double *final_opt);

// Runs a TOML experiment config (as `ttsa run` does), writing artifacts under its output
// directory. `pass` receives 1 when every configured rate target holds.
//
// # Safety
// `config_toml` must be NUL-terminated; `pass` may be null.
enum TtsaStatus ttsa_run_config(const char *config_toml, size_t jobs, int32_t *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TTSA_H */
