/* C interface to the sharpcov covariance estimators. */

#ifndef SHARPCOV_H
#define SHARPCOV_H

/* This file is generated by cbindgen from sharpcov-capi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum SharpcovStatus {
  SHARPCOV_STATUS_OK = 0,
  SHARPCOV_STATUS_NULL_ARGUMENT = 1,
  SHARPCOV_STATUS_INVALID_ARGUMENT = 2,
  SHARPCOV_STATUS_NON_FINITE = 3,
  SHARPCOV_STATUS_RANK_DEFICIENT = 4,
  SHARPCOV_STATUS_SPIKE_BELOW_NOISE_FLOOR = 5,
  SHARPCOV_STATUS_TARGET_IN_SPIKE_SPAN = 6,
  SHARPCOV_STATUS_NOT_POSITIVE_DEFINITE = 7,
  SHARPCOV_STATUS_DEGENERATE_CORRECTION = 8,
  SHARPCOV_STATUS_PANIC = 9,
} SharpcovStatus;

// Which spike basis to compute.
typedef enum SharpcovBasisKind {
  SHARPCOV_BASIS_KIND_PCA = 0,
  SHARPCOV_BASIS_KIND_FLAT = 1,
  SHARPCOV_BASIS_KIND_SHARP = 2,
} SharpcovBasisKind;

// Opaque spike basis handle.
typedef struct SharpcovBasis SharpcovBasis;

// Opaque covariance model handle.
typedef struct SharpcovModel SharpcovModel;

// Opaque data panel handle.
typedef struct SharpcovPanel SharpcovPanel;

// Opaque sample spectrum handle.
typedef struct SharpcovSpectrum SharpcovSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Human-readable name of a status code; returns a static string.
const char *sharpcov_status_name(enum SharpcovStatus status);

// Wraps a column-major `p x n` panel. On success writes a new handle to
// `out`; free it with `sharpcov_panel_free`.
//
// # Safety
// `values` must point to `p * n` readable doubles and `out` must be a
// valid pointer.
enum SharpcovStatus sharpcov_panel_create(const double *values,
                                          size_t p,
                                          size_t n,
                                          struct SharpcovPanel **out);

// # Safety
// `panel` must be a handle from `sharpcov_panel_create` or null.
void sharpcov_panel_free(struct SharpcovPanel *panel);

// Computes the top-`q` sample spectrum of a panel. `center` toggles mean
// removal; `mp_adjust` selects the aspect-ratio-adjusted bulk noise
// estimate.
//
// # Safety
// `panel` must be a live panel handle and `out` a valid pointer.
enum SharpcovStatus sharpcov_spectrum_compute(const struct SharpcovPanel *panel,
                                              size_t q,
                                              bool center,
                                              bool mp_adjust,
                                              struct SharpcovSpectrum **out);

// # Safety
// `spectrum` must be a handle from `sharpcov_spectrum_compute` or null.
void sharpcov_spectrum_free(struct SharpcovSpectrum *spectrum);

// # Safety
// `spectrum` must be a live spectrum handle.
size_t sharpcov_spectrum_p(const struct SharpcovSpectrum *spectrum);

// # Safety
// `spectrum` must be a live spectrum handle.
size_t sharpcov_spectrum_q(const struct SharpcovSpectrum *spectrum);

// # Safety
// `spectrum` must be a live spectrum handle.
size_t sharpcov_spectrum_n_plus(const struct SharpcovSpectrum *spectrum);

// # Safety
// `spectrum` must be a live spectrum handle.
double sharpcov_spectrum_kappa_sq(const struct SharpcovSpectrum *spectrum);

// # Safety
// `spectrum` must be a live spectrum handle.
double sharpcov_spectrum_gamma_hat_sq(const struct SharpcovSpectrum *spectrum);

// Writes the `q` spike eigenvalues (descending).
//
// # Safety
// `out` must point to `q` writable doubles.
enum SharpcovStatus sharpcov_spectrum_eigenvalues(const struct SharpcovSpectrum *spectrum,
                                                  double *out);

// Writes the `p x q` orthonormal eigenvector matrix, column-major.
//
// # Safety
// `out` must point to `p * q` writable doubles.
enum SharpcovStatus sharpcov_spectrum_eigenvectors(const struct SharpcovSpectrum *spectrum,
                                                   double *out);

// Computes the data-only bias length estimate: writes the `q`-vector `phi`.
//
// # Safety
// `zeta` must point to `zeta_len` readable doubles and `out_phi` to `q`
// writable doubles.
enum SharpcovStatus sharpcov_spectrum_phi(const struct SharpcovSpectrum *spectrum,
                                          const double *zeta,
                                          size_t zeta_len,
                                          double *out_phi);

// Derives a spike basis from the spectrum. `zeta` (the optimization
// target) is required for the corrected kinds and ignored for `Pca`; pass
// null with `zeta_len = 0` in that case.
//
// # Safety
// `spectrum` must be live; `zeta` must point to `zeta_len` readable
// doubles when non-null; `out` must be valid.
enum SharpcovStatus sharpcov_basis_compute(const struct SharpcovSpectrum *spectrum,
                                           enum SharpcovBasisKind kind,
                                           const double *zeta,
                                           size_t zeta_len,
                                           struct SharpcovBasis **out);

// # Safety
// `basis` must be a handle from `sharpcov_basis_compute` or null.
void sharpcov_basis_free(struct SharpcovBasis *basis);

// Writes the `p x q` orthonormal basis, column-major.
//
// # Safety
// `out` must point to `p * q` writable doubles.
enum SharpcovStatus sharpcov_basis_vectors(const struct SharpcovBasis *basis, double *out);

// Assembles the plug-in covariance model `H (S Psi)^2 H^T + gamma_hat^2 I`.
//
// # Safety
// `basis` and `spectrum` must be live handles and `out` a valid pointer.
enum SharpcovStatus sharpcov_model_assemble(const struct SharpcovBasis *basis,
                                            const struct SharpcovSpectrum *spectrum,
                                            struct SharpcovModel **out);

// # Safety
// `model` must be a handle from `sharpcov_model_assemble` or null.
void sharpcov_model_free(struct SharpcovModel *model);

// Minimum-variance weights: `Sigma_hat^-1 zeta / <zeta, Sigma_hat^-1 zeta>`.
//
// # Safety
// `zeta` must point to `len` readable doubles, `out_weights` to `len`
// writable doubles.
enum SharpcovStatus sharpcov_model_min_variance(const struct SharpcovModel *model,
                                                const double *zeta,
                                                size_t len,
                                                double *out_weights);

// Applies the model precision: writes `Sigma_hat^-1 v`.
//
// # Safety
// `v` must point to `len` readable doubles, `out` to `len` writable
// doubles.
enum SharpcovStatus sharpcov_model_precision_apply(const struct SharpcovModel *model,
                                                   const double *v,
                                                   size_t len,
                                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHARPCOV_H */
