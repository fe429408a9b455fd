#ifndef CLDP_H
#define CLDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CldpStatus {
  CLDP_STATUS_OK = 0,
  CLDP_STATUS_NULL_POINTER = 1,
  CLDP_STATUS_INVALID_ARGUMENT = 2,
  CLDP_STATUS_SUPPORT_MISMATCH = 3,
  // A divergence is infinite or undefined for the given pair.
  CLDP_STATUS_UNDEFINED = 4,
  // JSON or UTF-8 input could not be decoded.
  CLDP_STATUS_PARSE = 5,
  CLDP_STATUS_PANIC = 6,
} CldpStatus;

// Divergence selector for [`cldp_divergence`].
typedef enum CldpDivergence {
  CLDP_DIVERGENCE_KL = 0,
  CLDP_DIVERGENCE_JEFFREYS = 1,
  // `sum q |p/q - 1|^l`; the order is passed separately.
  CLDP_DIVERGENCE_FL = 2,
} CldpDivergence;

// Opaque privacy channel for one component.
typedef struct CldpChannel CldpChannel;

// Opaque finite joint distribution.
typedef struct CldpDist CldpDist;

// Both sides of the KL contraction bound for one pair of priors.
typedef struct CldpContraction {
  double lhs_jeffreys;
  double rhs;
  // Nonzero when the KL bound or any default f_l bound is exceeded.
  bool violation;
} CldpContraction;

// Leakage summary for component 1.
typedef struct CldpLeakage {
  double delta_ind;
  double effective_alpha;
  double sound_alpha;
  // Audited supremum of the likelihood ratio (not its log).
  double audited_sup;
  bool violation;
} CldpLeakage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none.
//
// The pointer stays valid until the next failing call on the same thread.
const char *cldp_last_error(void);

// Builds a distribution from a dense row-major table.
//
// `supports` holds the support points of every axis back to back, with axis
// `j` contributing `shape[j]` values; `probs` has `prod(shape)` entries.
//
// # Safety
// All pointers must reference arrays of the stated lengths.
enum CldpStatus cldp_dist_new(size_t dim,
                              const size_t *shape,
                              const double *supports,
                              const double *probs,
                              struct CldpDist **out);

// Parses a distribution from its JSON form.
//
// # Safety
// `json` must be a NUL-terminated string.
enum CldpStatus cldp_dist_from_json(const char *json, struct CldpDist **out);

// Releases a distribution; null is ignored.
//
// # Safety
// `d` must come from a `cldp_dist_*` constructor and not be used afterwards.
void cldp_dist_free(struct CldpDist *d);

// Number of components, or 0 for a null handle.
//
// # Safety
// `d` must be null or a live handle.
size_t cldp_dist_dim(const struct CldpDist *d);

// Total variation (L1, in `[0, 2]`) between two distributions.
//
// # Safety
// Handles must be live; `out` must be writable.
enum CldpStatus cldp_tv(const struct CldpDist *p, const struct CldpDist *q, double *out);

// Divergence of `p` from `q` in nats; `l` is read only for [`CldpDivergence::FL`].
//
// # Safety
// Handles must be live; `out` must be writable.
enum CldpStatus cldp_divergence(const struct CldpDist *p,
                                const struct CldpDist *q,
                                enum CldpDivergence kind,
                                double l,
                                double *out);

// Randomized response at level `alpha` on `m` support points.
//
// # Safety
// `support` must reference `m` values; `out` must be writable.
enum CldpStatus cldp_channel_rr(const double *support,
                                size_t m,
                                double alpha,
                                struct CldpChannel **out);

// Truncate to `[-t, t]` and add Laplace noise of scale `2t / alpha`.
//
// # Safety
// `out` must be writable.
enum CldpStatus cldp_channel_laplace(double t, double alpha, struct CldpChannel **out);

// Parses any channel variant from its JSON form.
//
// # Safety
// `json` must be a NUL-terminated string.
enum CldpStatus cldp_channel_from_json(const char *json, struct CldpChannel **out);

// Releases a channel; null is ignored.
//
// # Safety
// `c` must come from a `cldp_channel_*` constructor and not be used afterwards.
void cldp_channel_free(struct CldpChannel *c);

// Declared level, or NaN for a null handle.
//
// # Safety
// `c` must be null or a live handle.
double cldp_channel_alpha(const struct CldpChannel *c);

// Largest likelihood ratio found on the default audit grids.
//
// # Safety
// `c` must be live; `out` must be writable.
enum CldpStatus cldp_audit(const struct CldpChannel *c, double *out_max_ratio);

// Checks the KL contraction bound for priors `p`, `q` through one channel per axis.
//
// # Safety
// Handles must be live and `channels` must hold `n_channels` handles.
enum CldpStatus cldp_verify_contraction(const struct CldpDist *p,
                                        const struct CldpDist *q,
                                        const struct CldpChannel *const *channels,
                                        size_t n_channels,
                                        struct CldpContraction *out);

// KL bound for priors that share every proper marginal and differ by `tv` jointly.
//
// # Safety
// `alphas` must reference `d` levels; `out` must be writable.
enum CldpStatus cldp_equal_marginals_bound(double tv, const double *alphas, size_t d, double *out);

// Closed-form effective and sound levels for component 1.
//
// # Safety
// Output pointers must be writable.
enum CldpStatus cldp_effective_level(double alpha1,
                                     double alpha_max,
                                     size_t d,
                                     double delta_ind,
                                     double *out_effective,
                                     double *out_sound);

// Exact leakage audit of component 1 of `p` through one channel per axis.
//
// # Safety
// Handles must be live and `channels` must hold `n_channels` handles.
enum CldpStatus cldp_leakage(const struct CldpDist *p,
                             const struct CldpChannel *const *channels,
                             size_t n_channels,
                             struct CldpLeakage *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLDP_H */
