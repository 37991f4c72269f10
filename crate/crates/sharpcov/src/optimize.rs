//! Plug-in quadratic optimization and its discrepancy diagnostics.
//!
//! The quadratic `Q(x) = c0 + c1 <x, zeta> - <x, Sigma x> / 2` is maximized
//! with an estimated covariance in place of the truth. Everything here is a
//! function of precision applications `Sigma_hat^-1 v`, which for factored
//! models run through the low-rank update identity in `O(p q)` per apply.

use nalgebra::{DMatrix, DVector};

use crate::bias::{opt_bias, residual_direction, SpikeBasis};
use crate::correction::{CovarianceModel, NoiseModel};
use crate::error::{Error, Result};

/// A quadratic maximization problem with a plug-in covariance model.
#[derive(Debug, Clone)]
pub struct QuadProblem {
    pub c0: f64,
    pub c1: f64,
    pub zeta: DVector<f64>,
    pub model: CovarianceModel,
}

/// Outcome of maximizing the estimated quadratic and evaluating the result
/// under the true covariance.
#[derive(Debug, Clone)]
pub struct OptimizationReport {
    /// Maximizer of the estimated quadratic, `c1 Sigma_hat^-1 zeta`.
    pub x_hat: DVector<f64>,
    /// `<zeta, Sigma_hat^-1 zeta>`.
    pub m_hat_sq: f64,
    /// Estimated maximum `c0 + c1^2 m_hat_sq / 2`.
    pub q_hat: f64,
    /// Realized objective under the true covariance.
    pub q_realized: f64,
    /// Discrepancy multiplier `2 - m_hat_sq v_sq`; equals 1 at the truth.
    pub d_hat: f64,
    /// Out-of-sample variance of the normalized weights.
    pub v_sq: f64,
    /// Unit residual direction `(z - z_H) / |z - z_H|` of the model basis,
    /// when the model is factored and the residual is nondegenerate.
    pub u_h: Option<DVector<f64>>,
}

/// Applies the precision `Sigma^-1 v` of a covariance model.
///
/// Factored models use the low-rank update identity with an `O(p q^2)`
/// setup and never materialize a `p x p` inverse; dense models are solved
/// through their Cholesky factorization.
pub fn precision_apply(model: &CovarianceModel, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != model.dim() {
        return Err(Error::DimensionError(format!(
            "vector length {} does not match model dimension {}",
            v.len(),
            model.dim()
        )));
    }
    match model {
        CovarianceModel::LowRank {
            basis,
            spike_sq,
            noise,
        } => {
            let q = spike_sq.len();
            // core = diag(spike_sq)^-1 + B^T N^-1 B
            let mut scaled = basis.clone();
            match noise {
                NoiseModel::Scalar(g) => scaled /= *g,
                NoiseModel::Diagonal(d) => {
                    for i in 0..scaled.nrows() {
                        let inv = 1.0 / d[i];
                        for j in 0..q {
                            scaled[(i, j)] *= inv;
                        }
                    }
                }
            }
            let mut core = basis.tr_mul(&scaled);
            for j in 0..q {
                core[(j, j)] += 1.0 / spike_sq[j];
            }
            let chol = core.cholesky().ok_or_else(|| {
                Error::NotPositiveDefinite("low-rank precision core is singular".into())
            })?;
            let nv = noise.solve(v);
            let coeff = chol.solve(&basis.tr_mul(&nv));
            Ok(&nv - scaled * coeff)
        }
        CovarianceModel::Dense { sigma } => {
            let chol = sigma
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("dense covariance".into()))?;
            Ok(chol.solve(v))
        }
    }
}

/// Weights minimizing `<w, Sigma_hat w>` subject to `<w, zeta> = 1`.
pub fn min_variance(model: &CovarianceModel, zeta: &DVector<f64>) -> Result<DVector<f64>> {
    if zeta.norm() == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let u = precision_apply(model, zeta)?;
    let m_sq = zeta.dot(&u);
    if m_sq <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "target precision quadratic form {m_sq:.3e} is not positive"
        )));
    }
    Ok(u / m_sq)
}

/// Maximizes the estimated quadratic and reports the realized objective and
/// discrepancy under the true covariance.
pub fn evaluate(problem: &QuadProblem, truth: &CovarianceModel) -> Result<OptimizationReport> {
    if problem.c1 == 0.0 {
        return Err(Error::DegenerateObjective);
    }
    if problem.zeta.norm() == 0.0 {
        return Err(Error::ZeroTarget);
    }
    if truth.dim() != problem.model.dim() || problem.zeta.len() != truth.dim() {
        return Err(Error::DimensionError(
            "problem, model and truth dimensions disagree".into(),
        ));
    }
    let u = precision_apply(&problem.model, &problem.zeta)?;
    let m_hat_sq = problem.zeta.dot(&u);
    if m_hat_sq <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "estimated precision quadratic form {m_hat_sq:.3e} is not positive"
        )));
    }
    let x_hat = &u * problem.c1;
    let q_hat = problem.c0 + problem.c1 * problem.c1 * m_hat_sq / 2.0;

    let w_hat = &u / m_hat_sq;
    let sigma_w = truth.apply(&w_hat)?;
    let v_sq = w_hat.dot(&sigma_w);
    let d_hat = 2.0 - m_hat_sq * v_sq;

    // realized objective evaluated directly from the quadratic
    let sigma_x = truth.apply(&x_hat)?;
    let q_realized = problem.c0 + problem.c1 * x_hat.dot(&problem.zeta) - 0.5 * x_hat.dot(&sigma_x);

    let u_h = match &problem.model {
        CovarianceModel::LowRank { basis, .. } => residual_direction(basis, &problem.zeta)
            .ok()
            .map(|(resid, denom)| resid / denom),
        CovarianceModel::Dense { .. } => None,
    };

    Ok(OptimizationReport {
        x_hat,
        m_hat_sq,
        q_hat,
        q_realized,
        d_hat,
        v_sq,
        u_h,
    })
}

/// The smallest variance achievable under the true covariance subject to
/// `<w, zeta> = 1`, i.e. `1 / <zeta, Sigma^-1 zeta>`.
pub fn true_min_variance(truth: &CovarianceModel, zeta: &DVector<f64>) -> Result<f64> {
    if zeta.norm() == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let u = precision_apply(truth, zeta)?;
    let m_sq = zeta.dot(&u);
    if m_sq <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "target precision quadratic form {m_sq:.3e} is not positive"
        )));
    }
    Ok(1.0 / m_sq)
}

/// Leading-order discrepancy diagnostic for a basis estimate against known
/// population components:
/// `-|Lambda E|^2 / gamma_hat^2 + (2 - <u_H, Gamma u_H> / gamma_hat^2)`.
///
/// Used as an oracle for the asymptotics of the evaluated discrepancy; the
/// omitted remainder is of order `|E| + |E|^2 + 1/p`.
pub fn discrepancy_forecast(
    lambda: &DVector<f64>,
    gamma: &NoiseModel,
    pop: &SpikeBasis,
    h: &DMatrix<f64>,
    zeta: &DVector<f64>,
    gamma_hat_sq: f64,
) -> Result<f64> {
    if gamma_hat_sq <= 0.0 {
        return Err(Error::NotPositiveDefinite(
            "gamma_hat_sq must be positive".into(),
        ));
    }
    let bias = opt_bias(pop, h, zeta)?;
    let scaled = lambda.component_mul(bias.values());
    let (resid, denom) = residual_direction(h, zeta)?;
    let u_h = resid / denom;
    let noise_quad = u_h.dot(&gamma.apply(&u_h));
    Ok(-scaled.norm_squared() / gamma_hat_sq + (2.0 - noise_quad / gamma_hat_sq))
}
