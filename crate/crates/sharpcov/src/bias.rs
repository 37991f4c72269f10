//! The quadratic optimization bias functional and its data-only norm
//! estimator.
//!
//! `opt_bias` measures, against a known population spike basis, how an
//! estimated basis `H` misaligns with the target direction; its roots are
//! exactly the bases for which plug-in quadratic optimization stays honest.
//! `phi_estimator` produces the vector `phi` whose length consistently
//! estimates the bias length of the sample eigenvectors using observed data
//! alone.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectra::{select_singvecs, SampleSpectrum};

/// Reject the bias quotient when `|z - z_H|` falls below this tolerance;
/// the target is then indistinguishable from a vector in the spike span.
pub(crate) const SPAN_TOL: f64 = 1e-8;

/// Orthonormal population spike basis (the top left singular vectors of the
/// population loading matrix).
#[derive(Debug, Clone)]
pub struct SpikeBasis {
    vectors: DMatrix<f64>,
}

impl SpikeBasis {
    /// Derives the orthonormal basis from a `p x q` loading matrix via the
    /// deterministic selection rule.
    pub fn from_loadings(b: &DMatrix<f64>) -> Result<Self> {
        let q = b.ncols();
        Ok(Self {
            vectors: select_singvecs(b, q)?,
        })
    }

    /// Wraps an already orthonormal `p x q` matrix.
    pub fn from_orthonormal(vectors: DMatrix<f64>) -> Result<Self> {
        let q = vectors.ncols();
        let gram = vectors.tr_mul(&vectors);
        if (gram - DMatrix::identity(q, q)).norm() > 1e-8 {
            return Err(Error::DimensionError(
                "population basis columns are not orthonormal".into(),
            ));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn q(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Value of the optimization bias functional at a basis estimate.
#[derive(Debug, Clone)]
pub struct BiasVector {
    values: DVector<f64>,
    denom: f64,
}

impl BiasVector {
    /// The bias vector itself.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// `|z - z_H|`, guaranteed positive.
    pub fn denom(&self) -> f64 {
        self.denom
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// `z - z_H` pieces shared by the bias functional and the discrepancy
/// diagnostics. `H` may be any full-column-rank matrix.
pub(crate) fn residual_direction(
    h: &DMatrix<f64>,
    zeta: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let zlen = zeta.norm();
    if zlen == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let z = zeta / zlen;
    let hth = h.tr_mul(h);
    let chol = hth
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("basis estimate is column rank deficient".into()))?;
    let coeff = chol.solve(&h.tr_mul(&z));
    let z_h = h * coeff;
    let resid = &z - &z_h;
    let denom = resid.norm();
    if denom < SPAN_TOL {
        return Err(Error::TargetInSpikeSpan(denom));
    }
    Ok((resid, denom))
}

/// Optimization bias of the estimate `h` against the population basis,
/// relative to the target `zeta`.
pub fn opt_bias(pop: &SpikeBasis, h: &DMatrix<f64>, zeta: &DVector<f64>) -> Result<BiasVector> {
    if h.nrows() != pop.vectors.nrows() || h.nrows() != zeta.len() {
        return Err(Error::DimensionError(
            "population basis, estimate and target must share the ambient dimension".into(),
        ));
    }
    let (resid, denom) = residual_direction(h, zeta)?;
    Ok(BiasVector {
        values: pop.vectors.tr_mul(&resid) / denom,
        denom,
    })
}

/// Evaluates the bias at `h * k`. The result must agree with the bias at
/// `h` for any invertible `k`; exposed so that callers can exercise that
/// invariance directly.
pub fn bias_invariance_check(
    pop: &SpikeBasis,
    h: &DMatrix<f64>,
    k: &DMatrix<f64>,
    zeta: &DVector<f64>,
) -> Result<BiasVector> {
    if k.nrows() != k.ncols() || k.nrows() != h.ncols() {
        return Err(Error::DimensionError("transform must be q x q".into()));
    }
    if k.clone().try_inverse().is_none() {
        return Err(Error::SingularTransform);
    }
    opt_bias(pop, &(h * k), zeta)
}

/// Data-only estimator of the bias length for the sample eigenvectors,
/// together with the residual target direction.
#[derive(Debug, Clone)]
pub struct PhiEstimator {
    phi: DVector<f64>,
    pi: DVector<f64>,
    z_perp: DVector<f64>,
}

impl PhiEstimator {
    pub fn phi(&self) -> &DVector<f64> {
        &self.phi
    }

    /// `|phi|`, the estimate of the bias length.
    pub fn norm(&self) -> f64 {
        self.phi.norm()
    }

    /// Diagonal entries of `Pi = Psi^-1 - Psi`.
    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    /// Unit vector `(z - z_H) / |z - z_H|`, orthogonal to the sample spikes.
    pub fn z_perp(&self) -> &DVector<f64> {
        &self.z_perp
    }
}

/// Computes `phi = Pi H^T z / |z - z_H|` and the unit residual direction
/// from the sample spectrum and the target.
pub fn phi_estimator(spec: &SampleSpectrum, zeta: &DVector<f64>) -> Result<PhiEstimator> {
    if zeta.len() != spec.p() {
        return Err(Error::DimensionError(format!(
            "target has length {}, expected {}",
            zeta.len(),
            spec.p()
        )));
    }
    let zlen = zeta.norm();
    if zlen == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let z = zeta / zlen;
    let h = spec.eigvecs();
    let coeff = h.tr_mul(&z);
    let resid = &z - h * &coeff;
    let denom = resid.norm();
    if denom < SPAN_TOL {
        return Err(Error::TargetInSpikeSpan(denom));
    }
    let pi = spec.pi();
    Ok(PhiEstimator {
        phi: pi.component_mul(&coeff) / denom,
        pi,
        z_perp: resid / denom,
    })
}
