//! Calibrated population model and Gaussian panel simulation.
//!
//! The population is a seven-factor structure: one market factor with
//! exposures around one, two style factors with mean-zero exposures, and
//! four industry factors where every asset joins two industries with
//! uniform exposures. Asset-specific volatilities come from a shifted,
//! scaled Beta draw. All units are percent annualized. Randomness flows
//! through named, restartable streams so that calibration and every trial
//! are independently reproducible.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::bias::SpikeBasis;
use crate::correction::{CovarianceModel, NoiseModel};
use crate::error::{Error, Result};
use crate::spectra::DataMatrix;

/// Number of risk factors in the calibrated model.
pub const FACTOR_COUNT: usize = 7;

/// Stream identifiers for the per-purpose random number generators.
/// Calibration owns stream 0; trial `t` owns streams `2 + 2t` (factor
/// draws) and `3 + 2t` (noise draws).
#[derive(Debug, Clone, Copy)]
pub enum StreamId {
    Calibration,
    TrialFactors(u64),
    TrialNoise(u64),
}

impl StreamId {
    fn stream(self) -> u64 {
        match self {
            StreamId::Calibration => 0,
            StreamId::TrialFactors(t) => 2 + 2 * t,
            StreamId::TrialNoise(t) => 3 + 2 * t,
        }
    }
}

/// A seeded generator on the given named stream.
pub fn stream_rng(seed: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.stream());
    rng
}

/// Fixed factor covariance (percent^2 annualized): market, two styles and
/// four industries.
pub fn factor_covariance() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        FACTOR_COUNT,
        FACTOR_COUNT,
        &[
            250.0, 0.0, 0.0, 55.0, 44.0, 68.0, -22.0, //
            0.0, 64.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 16.0, 0.0, 0.0, 0.0, 0.0, //
            55.0, 0.0, 0.0, 481.0, 192.0, -108.0, 0.0, //
            44.0, 0.0, 0.0, 192.0, 260.0, -8.0, 22.0, //
            68.0, 0.0, 0.0, -108.0, -8.0, 160.0, -44.0, //
            -22.0, 0.0, 0.0, 0.0, 22.0, -44.0, 121.0,
        ],
    )
}

/// Calibrated population: exposures, factor loading, expected returns and
/// specific variances for up to `p_max` assets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationModel {
    pub p_max: usize,
    pub q: usize,
    /// Expected returns, percent annualized.
    pub alpha: DVector<f64>,
    /// `p_max x 7` factor exposures.
    pub xi: DMatrix<f64>,
    /// `7 x 7` factor covariance, percent^2 annualized.
    pub var_f: DMatrix<f64>,
    /// Lower-triangular loading with `A A^T = var_f`.
    pub a: DMatrix<f64>,
    /// Specific variances (percent^2 annualized), one per asset.
    pub gamma_diag: DVector<f64>,
}

/// Draws the population model for `p_max` assets from the calibration
/// stream of `seed`.
pub fn calibrate(p_max: usize, seed: u64) -> PopulationModel {
    let mut rng = stream_rng(seed, StreamId::Calibration);
    let var_f = factor_covariance();
    let a = var_f
        .clone()
        .cholesky()
        .expect("factor covariance is positive definite")
        .l();
    let sigma_f = DVector::from_fn(FACTOR_COUNT, |i, _| var_f[(i, i)].sqrt());

    let mut xi = DMatrix::zeros(p_max, FACTOR_COUNT);
    let gamma_a = Gamma::new(4.0, 1.0).unwrap();
    let gamma_b = Gamma::new(16.0, 1.0).unwrap();
    let mut gamma_diag = DVector::zeros(p_max);
    for i in 0..p_max {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        xi[(i, 0)] = 1.0 + 0.25 * z0;
        xi[(i, 1)] = 0.5 * z1;
        xi[(i, 2)] = 1.0 * z2;

        // two industry memberships; coinciding picks sum their exposures
        let first = rng.random_range(0..4usize);
        let second = rng.random_range(0..4usize);
        let u1: f64 = rng.random_range(0.0..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        xi[(i, 3 + first)] = u1;
        xi[(i, 3 + second)] += u2;

        // specific volatility 25 + 75 * Beta(4, 16), stored as variance
        let x = gamma_a.sample(&mut rng);
        let y = gamma_b.sample(&mut rng);
        let vol = 25.0 + 75.0 * x / (x + y);
        gamma_diag[i] = vol * vol;
    }
    let alpha = &xi * &sigma_f;

    PopulationModel {
        p_max,
        q: FACTOR_COUNT,
        alpha,
        xi,
        var_f,
        a,
        gamma_diag,
    }
}

impl PopulationModel {
    /// Writes the model to a JSON file for audit and replay.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// Reads a model previously written by [`PopulationModel::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Population ground truth restricted to the first `p` assets.
#[derive(Debug, Clone)]
pub struct TruthSlice {
    pub p: usize,
    /// `p x 7` loading matrix `B = Xi A`.
    pub b: DMatrix<f64>,
    /// Specific variances of the first `p` assets.
    pub gamma_diag: DVector<f64>,
    /// Orthonormal spike basis of `B B^T`.
    pub scrb: SpikeBasis,
    /// Singular values of `B`, descending.
    pub lambda: DVector<f64>,
}

/// Restricts the population to its first `p` assets and precomputes the
/// spike basis and scales of `B B^T`.
pub fn truth_slice(model: &PopulationModel, p: usize) -> Result<TruthSlice> {
    if p < 1 || p > model.p_max {
        return Err(Error::DimensionError(format!(
            "slice dimension {p} out of range 1..={}",
            model.p_max
        )));
    }
    let b = model.xi.rows(0, p) * &model.a;
    let (sigma, vectors) = crate::spectra::selected_left_singular(&b, model.q)?;
    let lambda = DVector::from_fn(model.q, |i, _| sigma[i]);
    Ok(TruthSlice {
        p,
        b,
        gamma_diag: model.gamma_diag.rows(0, p).into_owned(),
        scrb: SpikeBasis::from_orthonormal(vectors)?,
        lambda,
    })
}

impl TruthSlice {
    /// The true covariance `B B^T + Gamma` in factored form.
    pub fn covariance(&self) -> Result<CovarianceModel> {
        CovarianceModel::low_rank(
            self.scrb.vectors().clone(),
            self.lambda.map(|s| s * s),
            NoiseModel::Diagonal(self.gamma_diag.clone()),
        )
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel::Diagonal(self.gamma_diag.clone())
    }
}

/// Simulates an `n`-column panel `y = alpha + B x + eps` for the sliced
/// population, with `x` standard normal and `eps` mean-zero Gaussian noise
/// with the slice's specific variances. Deterministic given the streams.
pub fn simulate_panel(
    slice: &TruthSlice,
    alpha: &DVector<f64>,
    n: usize,
    factors: &mut ChaCha8Rng,
    noise: &mut ChaCha8Rng,
) -> Result<DataMatrix> {
    simulate_panel_with_factors(slice, alpha, n, factors, noise).map(|(panel, _)| panel)
}

/// Like [`simulate_panel`] but also returns the realized `n x q` factor
/// draws, which ground-truth diagnostics need.
pub fn simulate_panel_with_factors(
    slice: &TruthSlice,
    alpha: &DVector<f64>,
    n: usize,
    factors: &mut ChaCha8Rng,
    noise: &mut ChaCha8Rng,
) -> Result<(DataMatrix, DMatrix<f64>)> {
    if n < 2 {
        return Err(Error::DimensionError(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    if alpha.len() != slice.p {
        return Err(Error::DimensionError(format!(
            "alpha length {} does not match slice dimension {}",
            alpha.len(),
            slice.p
        )));
    }
    let q = slice.b.ncols();
    let x = DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(factors));
    let mut y = &slice.b * x.transpose();
    let vol = slice.gamma_diag.map(f64::sqrt);
    for t in 0..n {
        for i in 0..slice.p {
            let z: f64 = StandardNormal.sample(noise);
            y[(i, t)] += alpha[i] + vol[i] * z;
        }
    }
    Ok((DataMatrix::new(y)?, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::true_min_variance;

    #[test]
    fn factor_covariance_entries_and_vols() {
        let v = factor_covariance();
        assert_eq!(v[(0, 0)], 250.0);
        assert_eq!(v[(3, 3)], 481.0);
        assert_eq!(v[(0, 6)], -22.0);
        let sigma_f: Vec<f64> = (0..FACTOR_COUNT).map(|i| v[(i, i)].sqrt()).collect();
        let expect = [15.81, 8.0, 4.0, 21.93, 16.12, 12.65, 11.0];
        for (got, want) in sigma_f.iter().zip(expect) {
            assert!((got - want).abs() < 0.01, "sigma_f {got} vs {want}");
        }
        // symmetric and factorizable
        assert_eq!(v, v.transpose());
        assert!(v.cholesky().is_some());
    }

    #[test]
    fn loading_reproduces_factor_covariance() {
        let model = calibrate(10, 1);
        let aat = &model.a * model.a.transpose();
        assert!((aat - model.var_f).amax() < 1e-10);
    }

    #[test]
    fn exposure_moments_at_scale() {
        let model = calibrate(128_000, 3);
        let col0 = model.xi.column(0);
        let mean0 = col0.sum() / col0.len() as f64;
        assert!((mean0 - 1.0).abs() < 0.01, "market exposure mean {mean0}");

        // industry block: one or two memberships per row (one when both
        // picks coincide), values in (0, 2)
        let mut single = 0usize;
        let rows_checked = 2000usize;
        for i in 0..rows_checked {
            let row = model.xi.row(i);
            let nonzero: Vec<f64> = (3..7).map(|j| row[j]).filter(|v| *v != 0.0).collect();
            assert!(
                nonzero.len() == 1 || nonzero.len() == 2,
                "row {i}: {nonzero:?}"
            );
            assert!(nonzero.iter().all(|v| *v > 0.0 && *v < 2.0));
            if nonzero.len() == 1 {
                single += 1;
            }
        }
        // both picks land on the same industry a quarter of the time
        let frac = single as f64 / rows_checked as f64;
        assert!((frac - 0.25).abs() < 0.04, "coinciding fraction {frac}");

        // specific volatilities in (25, 100), stored squared
        assert!(model
            .gamma_diag
            .iter()
            .all(|&g| g > 25.0 * 25.0 && g < 100.0 * 100.0));

        // alpha = Xi sigma_f
        let sigma_f = DVector::from_fn(FACTOR_COUNT, |i, _| model.var_f[(i, i)].sqrt());
        assert!((&model.alpha - &model.xi * sigma_f).amax() < 1e-12);
    }

    #[test]
    fn calibration_is_deterministic() {
        let a = calibrate(500, 9);
        let b = calibrate(500, 9);
        assert_eq!(a.xi, b.xi);
        assert_eq!(a.gamma_diag, b.gamma_diag);
        let c = calibrate(500, 10);
        assert_ne!(a.xi, c.xi);
    }

    #[test]
    fn slices_nest() {
        let model = calibrate(300, 5);
        let full = truth_slice(&model, 300).unwrap();
        let part = truth_slice(&model, 120).unwrap();
        assert_eq!(part.b, full.b.rows(0, 120).into_owned());
        assert_eq!(part.gamma_diag, full.gamma_diag.rows(0, 120).into_owned());
        assert!(truth_slice(&model, 301).is_err());
    }

    #[test]
    fn sliced_covariance_matches_dense_assembly() {
        let model = calibrate(50, 7);
        let slice = truth_slice(&model, 50).unwrap();
        let cov = slice.covariance().unwrap();
        let dense = cov.to_dense();
        let oracle = &slice.b * slice.b.transpose() + DMatrix::from_diagonal(&slice.gamma_diag);
        assert!((&dense - &oracle).amax() < 1e-9 * oracle.amax());
        // the dense constructor re-checks symmetry and positive definiteness
        assert!(CovarianceModel::dense(oracle).is_ok());
    }

    #[test]
    fn panel_moments_match_population() {
        let model = calibrate(20, 11);
        let slice = truth_slice(&model, 20).unwrap();
        let alpha = model.alpha.rows(0, 20).into_owned();
        let n = 100_000usize;
        let mut f = stream_rng(11, StreamId::TrialFactors(0));
        let mut e = stream_rng(11, StreamId::TrialNoise(0));
        let (panel, _) = simulate_panel_with_factors(&slice, &alpha, n, &mut f, &mut e).unwrap();
        let y = panel.values();

        // column mean within 3 standard errors of alpha
        let sigma = slice.covariance().unwrap().to_dense();
        let mean = y.column_sum() / n as f64;
        for i in 0..20 {
            let se = (sigma[(i, i)] / n as f64).sqrt();
            assert!(
                (mean[i] - alpha[i]).abs() < 3.0 * se,
                "mean row {i}: {} vs {} (se {se})",
                mean[i],
                alpha[i]
            );
        }

        // sample covariance entrywise close to Sigma; 400 simultaneous
        // cells need a wider band than a single 3-sigma test
        let centered = y - &mean * DMatrix::from_element(1, n, 1.0);
        let sample = &centered * centered.transpose() / (n as f64 - 1.0);
        for i in 0..20 {
            for j in 0..20 {
                let var_hat =
                    (sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)] * sigma[(i, j)]) / n as f64;
                let se = var_hat.sqrt();
                assert!(
                    (sample[(i, j)] - sigma[(i, j)]).abs() < 4.5 * se,
                    "cov ({i},{j}): {} vs {}",
                    sample[(i, j)],
                    sigma[(i, j)]
                );
            }
        }
    }

    #[test]
    fn panels_are_stream_deterministic() {
        let model = calibrate(40, 13);
        let slice = truth_slice(&model, 40).unwrap();
        let alpha = model.alpha.rows(0, 40).into_owned();
        let run = |trial: u64| {
            let mut f = stream_rng(13, StreamId::TrialFactors(trial));
            let mut e = stream_rng(13, StreamId::TrialNoise(trial));
            simulate_panel(&slice, &alpha, 8, &mut f, &mut e).unwrap()
        };
        assert_eq!(run(4).values(), run(4).values());
        assert_ne!(run(4).values(), run(5).values());
    }

    #[test]
    fn degenerate_panel_is_constant() {
        // B = 0 and Gamma = 0 collapse every column to alpha exactly.
        let model = calibrate(10, 17);
        let mut slice = truth_slice(&model, 10).unwrap();
        slice.b.fill(0.0);
        slice.gamma_diag.fill(0.0);
        let alpha = model.alpha.rows(0, 10).into_owned();
        let mut f = stream_rng(17, StreamId::TrialFactors(0));
        let mut e = stream_rng(17, StreamId::TrialNoise(0));
        let (panel, _) = simulate_panel_with_factors(&slice, &alpha, 4, &mut f, &mut e).unwrap();
        for t in 0..4 {
            assert_eq!(panel.values().column(t), alpha.column(0));
        }
    }

    #[test]
    fn spike_eigenvalues_grow_linearly() {
        let model = calibrate(8000, 19);
        let mut per_p = Vec::new();
        for &p in &[500usize, 2000, 8000] {
            let slice = truth_slice(&model, p).unwrap();
            per_p.push((p as f64, slice.lambda.map(|s| s * s)));
        }
        // every spike eigenvalue scales like p; the ratio lambda_j^2 / p
        // stays within a factor of two across the sweep
        for j in 0..FACTOR_COUNT {
            let ratios: Vec<f64> = per_p.iter().map(|(p, l)| l[j] / p).collect();
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
            assert!(hi / lo < 2.0, "spike {j} ratios {ratios:?}");
        }
        // the bulk stays bounded: eigenvalue 8 of Sigma is at most the
        // largest specific variance, which is below 100^2
        assert!(model.gamma_diag.max() < 100.0 * 100.0);
    }

    #[test]
    fn population_roundtrips_through_json() {
        let dir = std::env::temp_dir().join("sharpcov_pop_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("population.json");
        let model = calibrate(30, 23);
        model.save(&path).unwrap();
        let back = PopulationModel::load(&path).unwrap();
        assert_eq!(model.xi, back.xi);
        assert_eq!(model.alpha, back.alpha);
        assert_eq!(model.gamma_diag, back.gamma_diag);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn true_minimum_volatility_near_reported_level() {
        // average over calibration seeds at p = 500
        let mut vols = Vec::new();
        for seed in 0..10u64 {
            let model = calibrate(500, seed);
            let slice = truth_slice(&model, 500).unwrap();
            let cov = slice.covariance().unwrap();
            let v = true_min_variance(&cov, &DVector::from_element(500, 1.0)).unwrap();
            vols.push(v.sqrt());
        }
        let mean = vols.iter().sum::<f64>() / vols.len() as f64;
        assert!((mean - 7.69).abs() < 0.5, "mean sigma_min {mean}");
    }
}
