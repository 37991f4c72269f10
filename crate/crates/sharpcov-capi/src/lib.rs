//! C ABI for the sharpcov estimators.
//!
//! The surface mirrors the library pipeline: wrap a column-major data panel
//! in a handle, compute its sample spectrum, derive a (possibly corrected)
//! spike basis, assemble the covariance model, and apply precisions or
//! minimum-variance weights. All handles are opaque; every fallible call
//! returns a status code and writes results through out-pointers. Matrices
//! cross the boundary in column-major order.

use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use sharpcov::bias::phi_estimator;
use sharpcov::correction::{
    assemble_model, correct_flat, correct_sharp, pca_basis, CorrectedBasis, CovarianceModel,
};
use sharpcov::optimize::{min_variance, precision_apply};
use sharpcov::spectra::{
    make_centering, sample_spectrum, CenteringProjector, DataMatrix as Panel, KappaMode,
    SampleSpectrum,
};
use sharpcov::Error;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharpcovStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NonFinite = 3,
    RankDeficient = 4,
    SpikeBelowNoiseFloor = 5,
    TargetInSpikeSpan = 6,
    NotPositiveDefinite = 7,
    DegenerateCorrection = 8,
    Panic = 9,
}

/// Which spike basis to compute.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharpcovBasisKind {
    Pca = 0,
    Flat = 1,
    Sharp = 2,
}

fn status_of(err: &Error) -> SharpcovStatus {
    match err {
        Error::InvalidProjector(_) | Error::DimensionError(_) | Error::Config(_) => {
            SharpcovStatus::InvalidArgument
        }
        Error::NonFinite(_) => SharpcovStatus::NonFinite,
        Error::RankDeficient(_) => SharpcovStatus::RankDeficient,
        Error::SpikeBelowNoiseFloor(_) => SharpcovStatus::SpikeBelowNoiseFloor,
        Error::ZeroTarget | Error::TargetInSpikeSpan(_) => SharpcovStatus::TargetInSpikeSpan,
        Error::NotPositiveDefinite(_) | Error::DegenerateObjective => {
            SharpcovStatus::NotPositiveDefinite
        }
        Error::SingularTransform | Error::DegenerateCorrection(_) => {
            SharpcovStatus::DegenerateCorrection
        }
        _ => SharpcovStatus::InvalidArgument,
    }
}

/// Opaque data panel handle.
pub struct SharpcovPanel {
    inner: Panel,
}

/// Opaque sample spectrum handle.
pub struct SharpcovSpectrum {
    inner: SampleSpectrum,
}

/// Opaque spike basis handle.
pub struct SharpcovBasis {
    inner: CorrectedBasis,
}

/// Opaque covariance model handle.
pub struct SharpcovModel {
    inner: CovarianceModel,
}

/// Human-readable name of a status code; returns a static string.
#[no_mangle]
pub extern "C" fn sharpcov_status_name(status: SharpcovStatus) -> *const std::os::raw::c_char {
    let name: &'static [u8] = match status {
        SharpcovStatus::Ok => b"ok\0",
        SharpcovStatus::NullArgument => b"null argument\0",
        SharpcovStatus::InvalidArgument => b"invalid argument\0",
        SharpcovStatus::NonFinite => b"non-finite values\0",
        SharpcovStatus::RankDeficient => b"rank deficient\0",
        SharpcovStatus::SpikeBelowNoiseFloor => b"spike below noise floor\0",
        SharpcovStatus::TargetInSpikeSpan => b"target in spike span\0",
        SharpcovStatus::NotPositiveDefinite => b"not positive definite\0",
        SharpcovStatus::DegenerateCorrection => b"degenerate correction\0",
        SharpcovStatus::Panic => b"internal panic\0",
    };
    name.as_ptr() as *const std::os::raw::c_char
}

fn guarded(body: impl FnOnce() -> SharpcovStatus) -> SharpcovStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => SharpcovStatus::Panic,
    }
}

/// Wraps a column-major `p x n` panel. On success writes a new handle to
/// `out`; free it with `sharpcov_panel_free`.
///
/// # Safety
/// `values` must point to `p * n` readable doubles and `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_panel_create(
    values: *const f64,
    p: usize,
    n: usize,
    out: *mut *mut SharpcovPanel,
) -> SharpcovStatus {
    if values.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let slice = std::slice::from_raw_parts(values, p.saturating_mul(n));
    guarded(|| {
        let matrix = DMatrix::from_column_slice(p, n, slice);
        match Panel::new(matrix) {
            Ok(panel) => {
                *out = Box::into_raw(Box::new(SharpcovPanel { inner: panel }));
                SharpcovStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `panel` must be a handle from `sharpcov_panel_create` or null.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_panel_free(panel: *mut SharpcovPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Computes the top-`q` sample spectrum of a panel. `center` toggles mean
/// removal; `mp_adjust` selects the aspect-ratio-adjusted bulk noise
/// estimate.
///
/// # Safety
/// `panel` must be a live panel handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_compute(
    panel: *const SharpcovPanel,
    q: usize,
    center: bool,
    mp_adjust: bool,
    out: *mut *mut SharpcovSpectrum,
) -> SharpcovStatus {
    if panel.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let panel = &(*panel).inner;
    guarded(|| {
        let projector = if center {
            match make_centering(panel.n(), None) {
                Ok(j) => j,
                Err(e) => return status_of(&e),
            }
        } else {
            CenteringProjector::identity(panel.n())
        };
        let mode = if mp_adjust {
            KappaMode::Mp
        } else {
            KappaMode::Plain
        };
        match sample_spectrum(panel, &projector, q, mode) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(SharpcovSpectrum { inner: spec }));
                SharpcovStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `spectrum` must be a handle from `sharpcov_spectrum_compute` or null.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_free(spectrum: *mut SharpcovSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// # Safety
/// `spectrum` must be a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_p(spectrum: *const SharpcovSpectrum) -> usize {
    if spectrum.is_null() {
        return 0;
    }
    (*spectrum).inner.p()
}

/// # Safety
/// `spectrum` must be a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_q(spectrum: *const SharpcovSpectrum) -> usize {
    if spectrum.is_null() {
        return 0;
    }
    (*spectrum).inner.q()
}

/// # Safety
/// `spectrum` must be a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_n_plus(spectrum: *const SharpcovSpectrum) -> usize {
    if spectrum.is_null() {
        return 0;
    }
    (*spectrum).inner.n_plus()
}

/// # Safety
/// `spectrum` must be a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_kappa_sq(spectrum: *const SharpcovSpectrum) -> f64 {
    if spectrum.is_null() {
        return f64::NAN;
    }
    (*spectrum).inner.kappa_sq()
}

/// # Safety
/// `spectrum` must be a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_gamma_hat_sq(spectrum: *const SharpcovSpectrum) -> f64 {
    if spectrum.is_null() {
        return f64::NAN;
    }
    (*spectrum).inner.gamma_hat_sq()
}

/// Writes the `q` spike eigenvalues (descending).
///
/// # Safety
/// `out` must point to `q` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_eigenvalues(
    spectrum: *const SharpcovSpectrum,
    out: *mut f64,
) -> SharpcovStatus {
    if spectrum.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let spec = &(*spectrum).inner;
    let dst = std::slice::from_raw_parts_mut(out, spec.q());
    for (d, s) in dst.iter_mut().zip(spec.eigvals().iter()) {
        *d = *s;
    }
    SharpcovStatus::Ok
}

/// Writes the `p x q` orthonormal eigenvector matrix, column-major.
///
/// # Safety
/// `out` must point to `p * q` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_eigenvectors(
    spectrum: *const SharpcovSpectrum,
    out: *mut f64,
) -> SharpcovStatus {
    if spectrum.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let spec = &(*spectrum).inner;
    let dst = std::slice::from_raw_parts_mut(out, spec.p() * spec.q());
    dst.copy_from_slice(spec.eigvecs().as_slice());
    SharpcovStatus::Ok
}

/// Computes the data-only bias length estimate: writes the `q`-vector `phi`.
///
/// # Safety
/// `zeta` must point to `zeta_len` readable doubles and `out_phi` to `q`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_spectrum_phi(
    spectrum: *const SharpcovSpectrum,
    zeta: *const f64,
    zeta_len: usize,
    out_phi: *mut f64,
) -> SharpcovStatus {
    if spectrum.is_null() || zeta.is_null() || out_phi.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let spec = &(*spectrum).inner;
    let zeta = DVector::from_column_slice(std::slice::from_raw_parts(zeta, zeta_len));
    guarded(|| match phi_estimator(spec, &zeta) {
        Ok(est) => {
            let dst = std::slice::from_raw_parts_mut(out_phi, spec.q());
            for (d, s) in dst.iter_mut().zip(est.phi().iter()) {
                *d = *s;
            }
            SharpcovStatus::Ok
        }
        Err(e) => status_of(&e),
    })
}

/// Derives a spike basis from the spectrum. `zeta` (the optimization
/// target) is required for the corrected kinds and ignored for `Pca`; pass
/// null with `zeta_len = 0` in that case.
///
/// # Safety
/// `spectrum` must be live; `zeta` must point to `zeta_len` readable
/// doubles when non-null; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_basis_compute(
    spectrum: *const SharpcovSpectrum,
    kind: SharpcovBasisKind,
    zeta: *const f64,
    zeta_len: usize,
    out: *mut *mut SharpcovBasis,
) -> SharpcovStatus {
    if spectrum.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    if kind != SharpcovBasisKind::Pca && zeta.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let spec = &(*spectrum).inner;
    let zeta_vec = if zeta.is_null() {
        None
    } else {
        Some(DVector::from_column_slice(std::slice::from_raw_parts(
            zeta, zeta_len,
        )))
    };
    guarded(|| {
        let basis = match kind {
            SharpcovBasisKind::Pca => Ok(pca_basis(spec)),
            SharpcovBasisKind::Flat => correct_flat(spec, zeta_vec.as_ref().unwrap()),
            SharpcovBasisKind::Sharp => correct_sharp(spec, zeta_vec.as_ref().unwrap()),
        };
        match basis {
            Ok(basis) => {
                *out = Box::into_raw(Box::new(SharpcovBasis { inner: basis }));
                SharpcovStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// # Safety
/// `basis` must be a handle from `sharpcov_basis_compute` or null.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_basis_free(basis: *mut SharpcovBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Writes the `p x q` orthonormal basis, column-major.
///
/// # Safety
/// `out` must point to `p * q` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_basis_vectors(
    basis: *const SharpcovBasis,
    out: *mut f64,
) -> SharpcovStatus {
    if basis.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let vectors = (*basis).inner.vectors();
    let dst = std::slice::from_raw_parts_mut(out, vectors.nrows() * vectors.ncols());
    dst.copy_from_slice(vectors.as_slice());
    SharpcovStatus::Ok
}

/// Assembles the plug-in covariance model `H (S Psi)^2 H^T + gamma_hat^2 I`.
///
/// # Safety
/// `basis` and `spectrum` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_model_assemble(
    basis: *const SharpcovBasis,
    spectrum: *const SharpcovSpectrum,
    out: *mut *mut SharpcovModel,
) -> SharpcovStatus {
    if basis.is_null() || spectrum.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    guarded(
        || match assemble_model(&(*basis).inner, &(*spectrum).inner) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SharpcovModel { inner: model }));
                SharpcovStatus::Ok
            }
            Err(e) => status_of(&e),
        },
    )
}

/// # Safety
/// `model` must be a handle from `sharpcov_model_assemble` or null.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_model_free(model: *mut SharpcovModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Minimum-variance weights: `Sigma_hat^-1 zeta / <zeta, Sigma_hat^-1 zeta>`.
///
/// # Safety
/// `zeta` must point to `len` readable doubles, `out_weights` to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_model_min_variance(
    model: *const SharpcovModel,
    zeta: *const f64,
    len: usize,
    out_weights: *mut f64,
) -> SharpcovStatus {
    if model.is_null() || zeta.is_null() || out_weights.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let zeta = DVector::from_column_slice(std::slice::from_raw_parts(zeta, len));
    guarded(|| match min_variance(&(*model).inner, &zeta) {
        Ok(weights) => {
            let dst = std::slice::from_raw_parts_mut(out_weights, len);
            dst.copy_from_slice(weights.as_slice());
            SharpcovStatus::Ok
        }
        Err(e) => status_of(&e),
    })
}

/// Applies the model precision: writes `Sigma_hat^-1 v`.
///
/// # Safety
/// `v` must point to `len` readable doubles, `out` to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sharpcov_model_precision_apply(
    model: *const SharpcovModel,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> SharpcovStatus {
    if model.is_null() || v.is_null() || out.is_null() {
        return SharpcovStatus::NullArgument;
    }
    let v = DVector::from_column_slice(std::slice::from_raw_parts(v, len));
    guarded(|| match precision_apply(&(*model).inner, &v) {
        Ok(result) => {
            let dst = std::slice::from_raw_parts_mut(out, len);
            dst.copy_from_slice(result.as_slice());
            SharpcovStatus::Ok
        }
        Err(e) => status_of(&e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn spiked_values(p: usize, n: usize, q: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(207);
        let b = DMatrix::<f64>::from_fn(p, q, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * 4.0
        });
        let x = DMatrix::<f64>::from_fn(q, n, |_, _| StandardNormal.sample(&mut rng));
        let e = DMatrix::<f64>::from_fn(p, n, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * 0.5
        });
        let y = b * x + e;
        y.as_slice().to_vec()
    }

    #[test]
    fn full_pipeline_roundtrip() {
        let (p, n, q) = (60usize, 12usize, 2usize);
        let values = spiked_values(p, n, q);
        unsafe {
            let mut panel: *mut SharpcovPanel = std::ptr::null_mut();
            assert_eq!(
                sharpcov_panel_create(values.as_ptr(), p, n, &mut panel),
                SharpcovStatus::Ok
            );

            let mut spectrum: *mut SharpcovSpectrum = std::ptr::null_mut();
            assert_eq!(
                sharpcov_spectrum_compute(panel, q, true, true, &mut spectrum),
                SharpcovStatus::Ok
            );
            assert_eq!(sharpcov_spectrum_p(spectrum), p);
            assert_eq!(sharpcov_spectrum_q(spectrum), q);
            assert_eq!(sharpcov_spectrum_n_plus(spectrum), n - 1);
            assert!(sharpcov_spectrum_kappa_sq(spectrum) > 0.0);
            assert!(sharpcov_spectrum_gamma_hat_sq(spectrum) > 0.0);

            let mut eigvals = vec![0.0; q];
            assert_eq!(
                sharpcov_spectrum_eigenvalues(spectrum, eigvals.as_mut_ptr()),
                SharpcovStatus::Ok
            );
            assert!(eigvals[0] >= eigvals[1] && eigvals[1] > 0.0);

            let zeta = vec![1.0; p];
            let mut phi = vec![0.0; q];
            assert_eq!(
                sharpcov_spectrum_phi(spectrum, zeta.as_ptr(), p, phi.as_mut_ptr()),
                SharpcovStatus::Ok
            );

            let mut basis: *mut SharpcovBasis = std::ptr::null_mut();
            assert_eq!(
                sharpcov_basis_compute(
                    spectrum,
                    SharpcovBasisKind::Sharp,
                    zeta.as_ptr(),
                    p,
                    &mut basis
                ),
                SharpcovStatus::Ok
            );
            let mut vectors = vec![0.0; p * q];
            assert_eq!(
                sharpcov_basis_vectors(basis, vectors.as_mut_ptr()),
                SharpcovStatus::Ok
            );
            let m = DMatrix::from_column_slice(p, q, &vectors);
            let gram = m.tr_mul(&m);
            assert!((gram - DMatrix::identity(q, q)).norm() < 1e-10);

            let mut model: *mut SharpcovModel = std::ptr::null_mut();
            assert_eq!(
                sharpcov_model_assemble(basis, spectrum, &mut model),
                SharpcovStatus::Ok
            );
            let mut weights = vec![0.0; p];
            assert_eq!(
                sharpcov_model_min_variance(model, zeta.as_ptr(), p, weights.as_mut_ptr()),
                SharpcovStatus::Ok
            );
            let budget: f64 = weights.iter().sum();
            assert!((budget - 1.0).abs() < 1e-12);

            let mut applied = vec![0.0; p];
            assert_eq!(
                sharpcov_model_precision_apply(model, zeta.as_ptr(), p, applied.as_mut_ptr()),
                SharpcovStatus::Ok
            );
            assert!(applied.iter().all(|v| v.is_finite()));

            sharpcov_model_free(model);
            sharpcov_basis_free(basis);
            sharpcov_spectrum_free(spectrum);
            sharpcov_panel_free(panel);
        }
    }

    #[test]
    fn errors_surface_as_status_codes() {
        unsafe {
            let mut panel: *mut SharpcovPanel = std::ptr::null_mut();
            assert_eq!(
                sharpcov_panel_create(std::ptr::null(), 3, 3, &mut panel),
                SharpcovStatus::NullArgument
            );

            let bad = [f64::NAN; 9];
            assert_eq!(
                sharpcov_panel_create(bad.as_ptr(), 3, 3, &mut panel),
                SharpcovStatus::NonFinite
            );

            // rank-deficient spectrum from an exactly rank-1 panel
            let (p, n) = (20usize, 6usize);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let u = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let low_rank = u * v.transpose();
            let mut ok_panel: *mut SharpcovPanel = std::ptr::null_mut();
            assert_eq!(
                sharpcov_panel_create(low_rank.as_slice().as_ptr(), p, n, &mut ok_panel),
                SharpcovStatus::Ok
            );
            let mut spectrum: *mut SharpcovSpectrum = std::ptr::null_mut();
            assert_eq!(
                sharpcov_spectrum_compute(ok_panel, 2, false, false, &mut spectrum),
                SharpcovStatus::RankDeficient
            );

            let name = sharpcov_status_name(SharpcovStatus::RankDeficient);
            let text = std::ffi::CStr::from_ptr(name).to_str().unwrap();
            assert_eq!(text, "rank deficient");

            sharpcov_panel_free(ok_panel);
        }
    }
}
