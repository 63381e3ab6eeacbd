#ifndef REGRET_DISSECT_H
#define REGRET_DISSECT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Codes 1 to 4 match the command-line exit codes.
typedef enum RdStatus {
  RD_STATUS_OK = 0,
  RD_STATUS_IO = 1,
  RD_STATUS_CONFIG = 2,
  RD_STATUS_SOLVER = 3,
  RD_STATUS_EXPERIMENT = 4,
  RD_STATUS_REGION = 5,
  RD_STATUS_INVALID_ARGUMENT = 6,
  RD_STATUS_PANIC = 7,
} RdStatus;

// Opaque handle to a validated problem instance.
typedef struct RdInstance RdInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rd_version(void);

// Message of the last failed call on this thread, or NULL.
//
// The pointer stays valid until the next library call on the same thread.
const char *rd_last_error_message(void);

// Builds an instance from a run configuration in JSON.
//
// # Safety
// `json` must be a NUL-terminated string and `out_handle` a writable pointer.
enum RdStatus rd_instance_from_json(const char *json, struct RdInstance **out_handle);

// Releases an instance. NULL is ignored.
//
// # Safety
// `h` must come from [`rd_instance_from_json`] and not be used afterwards.
void rd_instance_free(struct RdInstance *h);

// Parameter dimension, data dimension and decision dimension.
//
// # Safety
// `h` must be a live handle and the outputs writable.
enum RdStatus rd_instance_dims(const struct RdInstance *h,
                               size_t *dim_q,
                               size_t *dim_d,
                               size_t *dim_p);

// Population asymptotic summary as a JSON string.
//
// The summary is computed on first use and cached in the handle. Free the
// string with [`rd_string_free`].
//
// # Safety
// `h` must be a live handle and `out_json` writable.
enum RdStatus rd_theory_summary_json(const struct RdInstance *h, char **out_json);

// Releases a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void rd_string_free(char *s);

// Oracle decision for parameter `theta`, written to `omega_out`.
//
// # Safety
// `theta` must hold `theta_len` values and `omega_out` room for `omega_len`.
enum RdStatus rd_oracle_decision(const struct RdInstance *h,
                                 const double *theta,
                                 size_t theta_len,
                                 double *omega_out,
                                 size_t omega_len);

// Regret of decision `omega` under the true distribution.
//
// # Safety
// `omega` must hold `omega_len` values and `regret_out` be writable.
enum RdStatus rd_regret(const struct RdInstance *h,
                        const double *omega,
                        size_t omega_len,
                        double *regret_out);

// Tail probability `P(Σ wᵢ Yᵢ² > t)` with its Monte Carlo standard error.
//
// # Safety
// `weights` must hold `len` values and the outputs be writable.
enum RdStatus rd_mixture_tail(const double *weights,
                              size_t len,
                              double t,
                              double *prob_out,
                              double *std_error_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGRET_DISSECT_H */
