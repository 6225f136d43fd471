#ifndef EXPERT_BOUNDS_H
#define EXPERT_BOUNDS_H

/* Generated by cbindgen from expert-bounds-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum EbStatus {
  EB_STATUS_OK = 0,
  EB_STATUS_NULL_POINTER = 1,
  EB_STATUS_INVALID_INPUT = 2,
  EB_STATUS_VALIDATION_FAILED = 3,
  EB_STATUS_DOMAIN_ERROR = 4,
  EB_STATUS_INFEASIBLE = 5,
  EB_STATUS_PRECONDITION_FAILED = 6,
  EB_STATUS_SOLVER_FAILURE = 7,
  EB_STATUS_INTERNAL_ERROR = 8,
} EbStatus;

/**
 * Which candidate terms enter the harm upper bound.
 */
typedef enum EbPhiUMode {
  EB_PHI_U_MODE_AUTO = 0,
  EB_PHI_U_MODE_WITH_JOINT = 1,
  EB_PHI_U_MODE_MARGINALS_ONLY = 2,
} EbPhiUMode;

typedef enum EbBoundBranch {
  EB_BOUND_BRANCH_DELTA_ZERO = 0,
  EB_BOUND_BRANCH_INTERIOR = 1,
  EB_BOUND_BRANCH_ABOVE_PHI_U = 2,
} EbBoundBranch;

typedef enum EbBindingTerm {
  EB_BINDING_TERM_RATIO_TERM = 0,
  EB_BINDING_TERM_TREATMENT_SHARE_TERM = 1,
  EB_BINDING_TERM_CLAMP_ZERO = 2,
  EB_BINDING_TERM_NOT_APPLICABLE = 3,
} EbBindingTerm;

/**
 * Opaque study summary handle.
 */
typedef struct EbSummary EbSummary;

/**
 * Proportion-bound result.
 */
typedef struct EbBoundReport {
  /**
   * Upper bound on the proportion of physicians beating treat-all by
   * delta_star.
   */
  double value;
  enum EbBoundBranch branch;
  enum EbBindingTerm binding_term;
  double phi_u_used;
  /**
   * True when the joint-law terms entered phi_u.
   */
  bool used_joint;
} EbBoundReport;

/**
 * Two-type trust-model result.
 */
typedef struct EbTrustReport {
  double pi_used;
  double v_bad;
  double threshold;
  bool trust_always;
} EbTrustReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *eb_version(void);

/**
 * Message of the last failing call on this thread. Valid until the next
 * failing call; never NULL.
 */
const char *eb_last_error_message(void);

/**
 * Create a summary from the four marginals. On success writes a handle to
 * `out` that must be released with `eb_summary_free`.
 *
 * # Safety
 * `out` must be a valid pointer to writable memory for one pointer.
 */
enum EbStatus eb_summary_new(double v_t, double v_c, double v_u, double p, struct EbSummary **out);

/**
 * Create a summary carrying the usual-care joint law `P(A=a, Y=y)`.
 *
 * # Safety
 * `out` must be a valid pointer to writable memory for one pointer.
 */
enum EbStatus eb_summary_with_joint(double v_t,
                                    double v_c,
                                    double v_u,
                                    double p,
                                    double p_a1y1,
                                    double p_a1y0,
                                    double p_a0y1,
                                    double p_a0y0,
                                    struct EbSummary **out);

/**
 * Release a summary handle. NULL is a no-op.
 *
 * # Safety
 * `summary` must be NULL or a pointer returned by a summary constructor
 * that has not been freed yet.
 */
void eb_summary_free(struct EbSummary *summary);

/**
 * Run the precondition checks. `Ok` when no hard check fails;
 * `ValidationFailed` otherwise. `out_has_warnings` (optional) is set when
 * any check warns.
 *
 * # Safety
 * `summary` must be a live handle; `out_has_warnings` NULL or writable.
 */
enum EbStatus eb_validate(const struct EbSummary *summary, bool *out_has_warnings);

/**
 * Bounds on the proportion counterfactually harmed by treatment.
 *
 * # Safety
 * `summary` must be a live handle; `out_phi_l` and `out_phi_u` writable.
 */
enum EbStatus eb_harm_bounds(const struct EbSummary *summary, double *out_phi_l, double *out_phi_u);

/**
 * Informativeness gain `v_u - (p*v_t + (1-p)*v_c)`.
 *
 * # Safety
 * `summary` must be a live handle; `out` writable.
 */
enum EbStatus eb_gain(const struct EbSummary *summary, double *out);

/**
 * Sharp upper bound on the proportion of physicians beating treat-all by
 * `delta_star`.
 *
 * # Safety
 * `summary` must be a live handle; `out` writable.
 */
enum EbStatus eb_proportion_bound(const struct EbSummary *summary,
                                  double delta_star,
                                  enum EbPhiUMode mode,
                                  struct EbBoundReport *out);

/**
 * Two-type trust model: bad-doctor effect and rational-trust threshold.
 *
 * # Safety
 * `out` must be writable.
 */
enum EbStatus eb_trust_threshold(double v_t,
                                 double v_u,
                                 double delta_star,
                                 double pi,
                                 struct EbTrustReport *out);

/**
 * Build the bound-attaining population and return it as a JSON string
 * (`{"q": .., "doctors": ..}` with 17-significant-digit numbers). The
 * string is released with `eb_string_free`.
 *
 * # Safety
 * `summary` must be a live handle; `out_json` writable.
 */
enum EbStatus eb_construct_sharp_json(const struct EbSummary *summary,
                                      double delta_star,
                                      char **out_json);

/**
 * Full attainment report for a construction, as an envelope-style JSON
 * string (released with `eb_string_free`).
 *
 * # Safety
 * `summary` must be a live handle; `out_json` writable.
 */
enum EbStatus eb_verify_sharp_json(const struct EbSummary *summary,
                                   double delta_star,
                                   char **out_json);

/**
 * LP refinement of the proportion bound over the harm-mass sweep.
 * Requires a summary constructed with a joint law.
 *
 * # Safety
 * `summary` must be a live handle; `out_value` writable.
 */
enum EbStatus eb_lp_refined_bound(const struct EbSummary *summary,
                                  double delta_star,
                                  uintptr_t grid_m,
                                  uintptr_t q_h_steps,
                                  double *out_value);

/**
 * Release a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a pointer returned by this library that has not been
 * freed yet.
 */
void eb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPERT_BOUNDS_H */
