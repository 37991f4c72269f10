//! Sample spectra of data panels.
//!
//! The top-`q` eigenpairs of the sample covariance `S = Y J Y^T / n` are
//! extracted through the small `n x n` Gram matrix `J Y^T Y J / n`, which
//! shares its nonzero eigenvalues with `S`. Eigenvectors are made
//! reproducible by a deterministic selection rule that fixes both the
//! ordering and the signs (and resolves repeated singular values), so that
//! identical inputs always produce identical output bits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance below which a projected basis vector counts as orthogonal to a
/// singular subspace during deterministic selection.
const ORTHO_TOL: f64 = 1e-9;

/// Observed `p x n` data panel. The only input the estimators may see.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps a `p x n` panel, requiring finite entries, `p >= 1` and `n >= 2`.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (p, n) = values.shape();
        if p < 1 || n < 2 {
            return Err(Error::DimensionError(format!(
                "data panel must be at least 1 x 2, got {p} x {n}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data panel".into()));
        }
        Ok(Self { values })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Sub-panel holding the first `p` rows (same observations, fewer variables).
    pub fn top_rows(&self, p: usize) -> Result<Self> {
        if p < 1 || p > self.p() {
            return Err(Error::DimensionError(format!(
                "cannot slice {p} rows out of {}",
                self.p()
            )));
        }
        Ok(Self {
            values: self.values.rows(0, p).into_owned(),
        })
    }
}

/// Projector `J = I - g g^T / |g|^2` applied to the observation dimension,
/// or the identity when centering is disabled.
#[derive(Debug, Clone)]
pub enum CenteringProjector {
    Identity { n: usize },
    Center { g: DVector<f64> },
}

/// Builds a centering projector for `n` observations. `g = None` selects the
/// default direction `1_n` (per-variable mean removal).
pub fn make_centering(n: usize, g: Option<DVector<f64>>) -> Result<CenteringProjector> {
    let g = g.unwrap_or_else(|| DVector::from_element(n, 1.0));
    if g.len() != n {
        return Err(Error::DimensionError(format!(
            "centering direction has length {}, expected {n}",
            g.len()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("centering direction".into()));
    }
    if g.norm_squared() <= f64::MIN_POSITIVE {
        return Err(Error::InvalidProjector("zero-length direction".into()));
    }
    Ok(CenteringProjector::Center { g })
}

impl CenteringProjector {
    pub fn identity(n: usize) -> Self {
        CenteringProjector::Identity { n }
    }

    pub fn dim(&self) -> usize {
        match self {
            CenteringProjector::Identity { n } => *n,
            CenteringProjector::Center { g } => g.len(),
        }
    }

    /// `J v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            CenteringProjector::Identity { .. } => v.clone(),
            CenteringProjector::Center { g } => v - g * (g.dot(v) / g.norm_squared()),
        }
    }

    /// `J M J` for a symmetric `n x n` matrix, re-symmetrized.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            CenteringProjector::Identity { .. } => m.clone(),
            CenteringProjector::Center { g } => {
                let gg = g.norm_squared();
                let a = m * g / gg; // M g / |g|^2
                let s = g.dot(&a) / gg; // g^T M g / |g|^4
                let mut out = m.clone();
                out -= g * a.transpose();
                out -= &a * g.transpose();
                out += g * g.transpose() * s;
                // rounding can break exact symmetry; restore it
                let t = out.transpose();
                (out + t) * 0.5
            }
        }
    }

    /// Dense `n x n` form, mostly for tests.
    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            CenteringProjector::Identity { n } => DMatrix::identity(*n, *n),
            CenteringProjector::Center { g } => {
                DMatrix::identity(g.len(), g.len()) - g * g.transpose() / g.norm_squared()
            }
        }
    }
}

/// How the bulk noise level `kappa^2` is estimated from the non-spike
/// eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaMode {
    /// Plain average of the nonzero bulk eigenvalues.
    Plain,
    /// Aspect-ratio adjustment appropriate when the bulk follows a
    /// Marchenko-Pastur law.
    Mp,
}

/// Top-`q` sample eigenpairs plus bulk summaries of a data panel.
#[derive(Debug, Clone)]
pub struct SampleSpectrum {
    p: usize,
    n: usize,
    q: usize,
    /// Spike eigenvalues of `S`, descending.
    eigvals: DVector<f64>,
    /// `p x q` orthonormal sample eigenvectors.
    eigvecs: DMatrix<f64>,
    /// Number of nonzero eigenvalues of `S`.
    n_plus: usize,
    /// Sum of the nonzero bulk eigenvalues.
    bulk_sum: f64,
    /// Bulk noise level.
    kappa_sq: f64,
    /// Signal-to-noise diagonal `Psi`, entries in (0, 1].
    psi: DVector<f64>,
    /// Average idiosyncratic variance estimate `n kappa^2 / p`.
    gamma_hat_sq: f64,
}

impl SampleSpectrum {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Spike eigenvalues of the sample covariance, descending.
    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    /// Orthonormal `p x q` matrix of sample spike eigenvectors.
    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn bulk_sum(&self) -> f64 {
        self.bulk_sum
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }

    /// Diagonal entries of `Psi`.
    pub fn psi(&self) -> &DVector<f64> {
        &self.psi
    }

    /// Diagonal entries of `Psi^2 = I - kappa^2 S^-2`.
    pub fn psi_sq(&self) -> DVector<f64> {
        self.psi.map(|v| v * v)
    }

    /// Diagonal entries of `Pi = Psi^-1 - Psi`.
    pub fn pi(&self) -> DVector<f64> {
        self.psi.map(|v| 1.0 / v - v)
    }

    /// Spike scales, i.e. square roots of the spike eigenvalues.
    pub fn spike_scale(&self) -> DVector<f64> {
        self.eigvals.map(f64::sqrt)
    }

    pub fn gamma_hat_sq(&self) -> f64 {
        self.gamma_hat_sq
    }
}

/// Extracts the top-`q` sample spectrum of `Y` under the centering projector
/// `J`, together with the bulk noise summaries.
///
/// The eigenproblem is posed on the `n x n` matrix `J Y^T Y J / n`; the
/// `p x p` sample covariance is never formed. An eigenvalue counts as
/// nonzero when it exceeds `max(n, p) * eps * lambda_max`.
pub fn sample_spectrum(
    y: &DataMatrix,
    j: &CenteringProjector,
    q: usize,
    kappa_mode: KappaMode,
) -> Result<SampleSpectrum> {
    let (p, n) = (y.p(), y.n());
    if j.dim() != n {
        return Err(Error::DimensionError(format!(
            "projector dimension {} does not match n = {n}",
            j.dim()
        )));
    }
    if q < 1 || q > n.min(p) {
        return Err(Error::DimensionError(format!(
            "q = {q} out of range for a {p} x {n} panel"
        )));
    }

    let gram = y.values().tr_mul(y.values());
    let c = j.conjugate(&gram) / n as f64;
    let eig = selected_symmetric_eigen(&c, q)?;

    let lambda_max = eig.values[0].max(0.0);
    let rank_tol = n.max(p) as f64 * f64::EPSILON * lambda_max;
    let n_plus = eig.values.iter().filter(|&&v| v > rank_tol).count();
    if n_plus <= q {
        return Err(Error::RankDeficient(format!(
            "{n_plus} nonzero sample eigenvalues, need more than q = {q}"
        )));
    }

    let eigvals = DVector::from_fn(q, |i, _| eig.values[i]);
    let bulk_sum: f64 = (q..n_plus).map(|i| eig.values[i]).sum();
    let aspect = n as f64 / p as f64;
    let kappa_sq = match kappa_mode {
        KappaMode::Plain => bulk_sum / (n_plus - q) as f64,
        KappaMode::Mp => bulk_sum * (1.0 + aspect) / ((n_plus - q) as f64 + aspect),
    };
    // require a separation beyond eigenvalue rounding noise
    let floor_margin = 1.0 + n.max(p) as f64 * f64::EPSILON;
    if eigvals[q - 1] <= kappa_sq * floor_margin {
        return Err(Error::SpikeBelowNoiseFloor(format!(
            "spike {q} eigenvalue {:.6e} does not exceed kappa^2 = {kappa_sq:.6e}",
            eigvals[q - 1]
        )));
    }
    let psi = eigvals.map(|s2| (1.0 - kappa_sq / s2).sqrt());

    // h_j = Y u_j / (sqrt(n) s_j)
    let mut eigvecs = y.values() * eig.vectors;
    for (jcol, mut col) in eigvecs.column_iter_mut().enumerate() {
        col /= (n as f64 * eigvals[jcol]).sqrt();
    }

    Ok(SampleSpectrum {
        p,
        n,
        q,
        eigvals,
        eigvecs,
        n_plus,
        bulk_sum,
        kappa_sq,
        psi,
        gamma_hat_sq: n as f64 * kappa_sq / p as f64,
    })
}

/// Output of [`selected_symmetric_eigen`]: every eigenvalue (descending,
/// negatives clamped to zero) and the first `q` deterministically selected
/// eigenvectors.
pub(crate) struct SelectedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Full eigendecomposition of a symmetric positive semidefinite matrix with
/// deterministic eigenvector selection.
///
/// Eigenvalues within `dim * eps * lambda_max` of each other are treated as
/// one repeated value, and within each such subspace the representative
/// vectors are chosen by projecting standard basis vectors onto the not yet
/// selected part of the subspace, in index order. For simple eigenvalues
/// this reduces to flipping signs so the first entry of meaningful size is
/// positive.
pub(crate) fn selected_symmetric_eigen(m: &DMatrix<f64>, q: usize) -> Result<SelectedEigen> {
    let dim = m.nrows();
    if m.ncols() != dim {
        return Err(Error::DimensionError("matrix must be square".into()));
    }
    if q > dim {
        return Err(Error::DimensionError(format!(
            "q = {q} exceeds matrix dimension {dim}"
        )));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let basis: Vec<DVector<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    let sigma: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let groups = group_by_gap(&sigma, dim);
    let selected = select_from_groups(&groups, &basis, dim, q);
    Ok(SelectedEigen {
        values,
        vectors: columns_to_matrix(dim, &selected),
    })
}

/// Left singular vectors of `a` for the `q` largest singular values, using
/// the deterministic selection rule. Also returns all singular values in
/// descending order.
pub(crate) fn selected_left_singular(
    a: &DMatrix<f64>,
    q: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (m, l) = a.shape();
    if q > m.min(l) {
        return Err(Error::DimensionError(format!(
            "q = {q} exceeds min({m}, {l})"
        )));
    }
    if m <= l {
        // Small left dimension: work with A A^T directly.
        let aat = a * a.transpose();
        let sym = (&aat + aat.transpose()) * 0.5;
        let eig = selected_symmetric_eigen(&sym, q)?;
        let sigma = eig.values.iter().map(|v| v.sqrt()).collect();
        return Ok((sigma, eig.vectors));
    }

    // Tall matrix: eigendecompose the small Gram A^T A and map the right
    // singular vectors through A. Zero singular values (q beyond the rank)
    // fall back to a deterministic completion of the orthonormal set.
    let ata = a.tr_mul(a);
    let sym = (&ata + ata.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap()
            .then(x.cmp(&y))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let sigma: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
    // numerical rank on the eigenvalue scale: Gram-route noise sits near
    // eps * lambda_max, far above eps * sigma_max on the sigma scale
    let lambda_max = values.first().copied().unwrap_or(0.0);
    let rank_tol = m.max(l) as f64 * f64::EPSILON * lambda_max;
    let rank = values.iter().filter(|&&v| v > rank_tol).count();

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(rank);
    for k in 0..rank {
        let v = eig.eigenvectors.column(order[k]);
        basis.push(a * v / sigma[k]);
    }
    let groups = group_by_gap(&sigma[..rank], m.max(l));
    let mut selected = select_from_groups(&groups, &basis, m, q.min(rank));

    // Deterministic completion into the left null space if q exceeds the rank.
    while selected.len() < q {
        // range-space picks are combinations of `basis`, so subtracting the
        // basis and the previous completions projects onto what remains
        let proj = |s: usize| -> DVector<f64> {
            let mut w = DVector::zeros(m);
            w[s] = 1.0;
            for b in basis.iter().chain(selected.iter().skip(rank)) {
                w -= b * b[s];
            }
            w
        };
        let v = first_nonorthogonal(proj, m)
            .expect("left null space completion must find a basis vector");
        selected.push(v);
    }
    Ok((sigma, columns_to_matrix(m, &selected)))
}

/// Deterministic left-singular-vector selection: returns the `m x q` matrix
/// of left singular vectors of `a` for its `q` largest singular values, with
/// ordering, signs and repeated-value subspaces resolved reproducibly.
pub fn select_singvecs(a: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    selected_left_singular(a, q).map(|(_, v)| v)
}

/// Groups indices of a descending `sigma` list into runs of (numerically)
/// equal singular values.
fn group_by_gap(sigma: &[f64], scale_dim: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let gap_tol = scale_dim as f64 * f64::EPSILON * sigma_max.max(1.0);
    for (i, &s) in sigma.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if sigma[*g.last().unwrap()] - s <= gap_tol => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Applies the selection rule group by group until `q` vectors are chosen.
/// `basis` must hold orthonormal vectors spanning each group's subspace.
fn select_from_groups(
    groups: &[Vec<usize>],
    basis: &[DVector<f64>],
    m: usize,
    q: usize,
) -> Vec<DVector<f64>> {
    let mut selected: Vec<DVector<f64>> = Vec::with_capacity(q);
    for group in groups {
        if selected.len() == q {
            break;
        }
        let take = group.len().min(q - selected.len());
        let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(take);
        for _ in 0..take {
            let proj = |s: usize| -> DVector<f64> {
                let mut w = DVector::zeros(m);
                for idx in group {
                    let b = &basis[*idx];
                    w += b * b[s];
                }
                for c in &chosen {
                    w -= c * c[s];
                }
                w
            };
            let v = first_nonorthogonal(proj, m)
                .expect("repeated-value subspace must contain a non-orthogonal basis vector");
            chosen.push(v);
        }
        selected.extend(chosen);
    }
    selected
}

/// Scans standard basis vectors in index order and returns the normalized
/// projection of the first one that is not orthogonal to the subspace
/// described by `proj`.
fn first_nonorthogonal(proj: impl Fn(usize) -> DVector<f64>, m: usize) -> Option<DVector<f64>> {
    for s in 0..m {
        let w = proj(s);
        let norm = w.norm();
        if norm > ORTHO_TOL {
            return Some(w / norm);
        }
    }
    None
}

fn columns_to_matrix(m: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}
