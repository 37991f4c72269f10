//! Corrected spike bases and low-rank covariance assembly.
//!
//! Three orthonormal bases can back a low-rank-plus-scalar covariance
//! estimate: the raw sample eigenvectors, a partial correction that adjusts
//! only the leading eigenvector, and the full correction that rotates the
//! whole spike basis toward the target direction using the data-only bias
//! estimate `phi`. The full correction is exactly orthonormal by
//! construction and drives the optimization bias to zero as the dimension
//! grows.

use nalgebra::{DMatrix, DVector};

use crate::bias::{phi_estimator, SPAN_TOL};
use crate::error::{Error, Result};
use crate::spectra::{select_singvecs, selected_symmetric_eigen, SampleSpectrum};

/// A corrected spike magnitude below this tolerance makes the rescaling
/// step ill-posed.
const CORRECTION_TOL: f64 = 1e-10;

/// Which correction produced a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// Raw sample eigenvectors.
    Pca,
    /// Leading-eigenvector-only correction.
    Flat,
    /// Full spike-basis correction.
    Sharp,
}

impl BasisKind {
    pub fn label(&self) -> &'static str {
        match self {
            BasisKind::Pca => "pca",
            BasisKind::Flat => "flat",
            BasisKind::Sharp => "sharp",
        }
    }
}

/// An orthonormal spike basis along with the diagonal that estimates the
/// squared projections of its columns onto the population spike space.
#[derive(Debug, Clone)]
pub struct CorrectedBasis {
    vectors: DMatrix<f64>,
    phi_sq: DVector<f64>,
    kind: BasisKind,
}

impl CorrectedBasis {
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Squared-projection diagonal: `Phi^2` for the full correction, `Psi^2`
    /// otherwise.
    pub fn phi_sq(&self) -> &DVector<f64> {
        &self.phi_sq
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }
}

/// The uncorrected sample eigenvectors packaged as a basis.
pub fn pca_basis(spec: &SampleSpectrum) -> CorrectedBasis {
    CorrectedBasis {
        vectors: spec.eigvecs().clone(),
        phi_sq: spec.psi_sq(),
        kind: BasisKind::Pca,
    }
}

/// Full correction: rotates the augmented basis `[H, z_perp]` so that the
/// optimization bias vanishes asymptotically.
///
/// With `M Phi^2 M^T` the eigendecomposition of `Psi^2 + phi phi^T`, the
/// output is `(H Psi + z_perp phi^T) M Phi^-1`, which has exactly
/// orthonormal columns.
pub fn correct_sharp(spec: &SampleSpectrum, zeta: &DVector<f64>) -> Result<CorrectedBasis> {
    let est = phi_estimator(spec, zeta)?;
    let q = spec.q();
    let psi = spec.psi();
    let phi = est.phi();

    let mut w = DMatrix::from_diagonal(&spec.psi_sq());
    w += phi * phi.transpose();
    let eig = selected_symmetric_eigen(&w, q)?;
    let phi_sq = DVector::from_fn(q, |i, _| eig.values[i]);
    if phi_sq.iter().any(|&v| v.sqrt() < CORRECTION_TOL) {
        return Err(Error::DegenerateCorrection(format!(
            "corrected spike magnitude below {CORRECTION_TOL:.0e}"
        )));
    }

    // H Psi + z_perp phi^T, then the rotation and rescale.
    let mut augmented = spec.eigvecs().clone();
    for (j, mut col) in augmented.column_iter_mut().enumerate() {
        col *= psi[j];
    }
    augmented += est.z_perp() * phi.transpose();
    let mut vectors = augmented * eig.vectors;
    for (j, mut col) in vectors.column_iter_mut().enumerate() {
        col /= phi_sq[j].sqrt();
    }

    Ok(CorrectedBasis {
        vectors,
        phi_sq,
        kind: BasisKind::Sharp,
    })
}

/// Partial correction: applies the single-spike two-parameter update to the
/// leading eigenvector only, then re-orthonormalizes the scaled basis.
///
/// The leading column is replaced by `t1 h + t2 z_perp` with
/// `(t1, t2) proportional to (psi1^2, psi1 phi1)`, where `z_perp` and `phi1`
/// are computed from the leading eigenvector alone. The final basis is the
/// deterministic left-singular basis of the updated columns scaled by the
/// corrected spike scales.
pub fn correct_flat(spec: &SampleSpectrum, zeta: &DVector<f64>) -> Result<CorrectedBasis> {
    let psi1 = spec.psi()[0];
    if psi1 <= 0.0 {
        return Err(Error::SpikeBelowNoiseFloor(
            "leading signal-to-noise ratio is not positive".into(),
        ));
    }
    let zlen = zeta.norm();
    if zlen == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let z = zeta / zlen;
    let h1 = spec.eigvecs().column(0).into_owned();
    let hz = h1.dot(&z);
    let resid = &z - &h1 * hz;
    let denom = resid.norm();
    if denom < SPAN_TOL {
        return Err(Error::TargetInSpikeSpan(denom));
    }
    let z_perp = resid / denom;
    let phi1 = (1.0 / psi1 - psi1) * hz / denom;

    let scale = (psi1.powi(4) + psi1 * psi1 * phi1 * phi1).sqrt();
    let (t1, t2) = (psi1 * psi1 / scale, psi1 * phi1 / scale);
    let updated = &h1 * t1 + &z_perp * t2;

    let mut k = spec.eigvecs().clone();
    k.set_column(0, &(&updated / updated.norm()));
    // columns scaled by the corrected spike scales before re-orthonormalizing
    let spike = spec.spike_scale();
    let psi = spec.psi();
    for (j, mut col) in k.column_iter_mut().enumerate() {
        col *= spike[j] * psi[j];
    }
    let vectors = select_singvecs(&k, spec.q())?;

    Ok(CorrectedBasis {
        vectors,
        phi_sq: spec.psi_sq(),
        kind: BasisKind::Flat,
    })
}

/// Spike eigenvalues with the bulk noise level removed:
/// `(S Psi)^2 = S^2 - kappa^2` entrywise.
pub fn corrected_eigenvalues(spec: &SampleSpectrum) -> DVector<f64> {
    spec.eigvals().map(|s2| s2 - spec.kappa_sq())
}

/// Noise part of a low-rank covariance model.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Scalar noise `gamma^2 I`.
    Scalar(f64),
    /// Heterogeneous diagonal noise.
    Diagonal(DVector<f64>),
}

impl NoiseModel {
    fn validate(&self, p: usize) -> Result<()> {
        match self {
            NoiseModel::Scalar(g) => {
                if !g.is_finite() || *g <= 0.0 {
                    return Err(Error::NotPositiveDefinite(format!(
                        "scalar noise variance {g} must be positive"
                    )));
                }
            }
            NoiseModel::Diagonal(d) => {
                if d.len() != p {
                    return Err(Error::DimensionError(format!(
                        "noise diagonal has length {}, expected {p}",
                        d.len()
                    )));
                }
                if d.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                    return Err(Error::NotPositiveDefinite(
                        "noise diagonal must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseModel::Scalar(g) => v * *g,
            NoiseModel::Diagonal(d) => d.component_mul(v),
        }
    }

    pub(crate) fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseModel::Scalar(g) => v / *g,
            NoiseModel::Diagonal(d) => v.component_div(d),
        }
    }
}

/// A covariance matrix in either factored or dense form.
///
/// The factored form `H diag(spike_sq) H^T + noise` is the working
/// representation for both the estimators and the simulated population;
/// its precision is applied through the low-rank update identity without
/// ever forming a `p x p` inverse. Dense matrices are factorized directly.
#[derive(Debug, Clone)]
pub enum CovarianceModel {
    LowRank {
        basis: DMatrix<f64>,
        spike_sq: DVector<f64>,
        noise: NoiseModel,
    },
    Dense {
        sigma: DMatrix<f64>,
    },
}

impl CovarianceModel {
    /// Factored model, validating positive spike variances and noise.
    pub fn low_rank(
        basis: DMatrix<f64>,
        spike_sq: DVector<f64>,
        noise: NoiseModel,
    ) -> Result<Self> {
        let (p, q) = basis.shape();
        if spike_sq.len() != q {
            return Err(Error::DimensionError(format!(
                "{} spike variances for a p x {q} basis",
                spike_sq.len()
            )));
        }
        if spike_sq.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::NotPositiveDefinite(
                "spike variances must be positive".into(),
            ));
        }
        noise.validate(p)?;
        Ok(CovarianceModel::LowRank {
            basis,
            spike_sq,
            noise,
        })
    }

    /// Dense model, validating symmetry and positive definiteness.
    pub fn dense(sigma: DMatrix<f64>) -> Result<Self> {
        let (r, c) = sigma.shape();
        if r != c {
            return Err(Error::DimensionError(
                "dense covariance must be square".into(),
            ));
        }
        let scale = sigma.amax().max(1.0);
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(
                "dense covariance has no Cholesky factorization".into(),
            ));
        }
        Ok(CovarianceModel::Dense { sigma })
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceModel::LowRank { basis, .. } => basis.nrows(),
            CovarianceModel::Dense { sigma } => sigma.nrows(),
        }
    }

    /// `Sigma v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionError(format!(
                "vector length {} does not match model dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(match self {
            CovarianceModel::LowRank {
                basis,
                spike_sq,
                noise,
            } => {
                let coeff = spike_sq.component_mul(&basis.tr_mul(v));
                basis * coeff + noise.apply(v)
            }
            CovarianceModel::Dense { sigma } => sigma * v,
        })
    }

    /// Materializes the dense matrix; intended for small dimensions.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            CovarianceModel::LowRank {
                basis,
                spike_sq,
                noise,
            } => {
                let mut scaled = basis.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= spike_sq[j];
                }
                let mut out = scaled * basis.transpose();
                match noise {
                    NoiseModel::Scalar(g) => {
                        for i in 0..out.nrows() {
                            out[(i, i)] += g;
                        }
                    }
                    NoiseModel::Diagonal(d) => {
                        for i in 0..out.nrows() {
                            out[(i, i)] += d[i];
                        }
                    }
                }
                out
            }
            CovarianceModel::Dense { sigma } => sigma.clone(),
        }
    }

    /// Sum of the diagonal.
    pub fn trace(&self) -> f64 {
        match self {
            CovarianceModel::LowRank {
                basis,
                spike_sq,
                noise,
            } => {
                let spikes: f64 = (0..spike_sq.len())
                    .map(|j| spike_sq[j] * basis.column(j).norm_squared())
                    .sum();
                let noise_tr = match noise {
                    NoiseModel::Scalar(g) => g * basis.nrows() as f64,
                    NoiseModel::Diagonal(d) => d.sum(),
                };
                spikes + noise_tr
            }
            CovarianceModel::Dense { sigma } => sigma.trace(),
        }
    }
}

/// Plug-in covariance estimate from a spike basis and the spectrum it came
/// from: `H (S Psi)^2 H^T + gamma_hat^2 I`.
pub fn assemble_model(basis: &CorrectedBasis, spec: &SampleSpectrum) -> Result<CovarianceModel> {
    if basis.vectors().nrows() != spec.p() {
        return Err(Error::DimensionError(
            "basis dimension does not match the spectrum".into(),
        ));
    }
    CovarianceModel::low_rank(
        basis.vectors().clone(),
        corrected_eigenvalues(spec),
        NoiseModel::Scalar(spec.gamma_hat_sq()),
    )
}
