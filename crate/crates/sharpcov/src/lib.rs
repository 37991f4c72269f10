//! Spiked covariance estimation from few observations, with sample
//! eigenvector corrections that remove the quadratic optimization bias, and
//! a Monte-Carlo harness that measures the resulting plug-in optimization
//! discrepancy against population ground truth.
//!
//! The pipeline: [`spectra`] extracts the top-`q` sample eigenpairs of a
//! `p x n` panel through the small Gram matrix; [`bias`] evaluates the
//! optimization bias of a basis estimate and its data-only length estimate
//! `phi`; [`correction`] builds corrected spike bases and assembles
//! low-rank covariance models; [`optimize`] applies precisions through the
//! low-rank update identity and reports realized objectives and
//! discrepancies; [`simmodel`] calibrates the synthetic population and
//! simulates Gaussian panels; [`harness`] sweeps dimensions over parallel
//! Monte-Carlo trials and writes tables and figures.
//!
//! From a panel to bias-corrected minimum-variance weights:
//!
//! ```
//! use nalgebra::{DMatrix, DVector};
//! use sharpcov::correction::{assemble_model, correct_sharp};
//! use sharpcov::optimize::min_variance;
//! use sharpcov::spectra::{make_centering, sample_spectrum, DataMatrix, KappaMode};
//!
//! // a 200 x 12 panel with one strong factor and idiosyncratic noise
//! let (p, n) = (200, 12);
//! let y = DMatrix::from_fn(p, n, |i, t| {
//!     let factor = (0.7 * t as f64).sin() * 3.0;
//!     let loading = 1.0 + (i as f64 * 0.37).sin() * 0.5;
//!     loading * factor + (0.5 * ((i * n + t) as f64)).sin() * 0.8
//! });
//!
//! let panel = DataMatrix::new(y)?;
//! let centering = make_centering(panel.n(), None)?;
//! let spectrum = sample_spectrum(&panel, &centering, 1, KappaMode::Mp)?;
//! let target = DVector::from_element(panel.p(), 1.0);
//! let basis = correct_sharp(&spectrum, &target)?;
//! let model = assemble_model(&basis, &spectrum)?;
//! let weights = min_variance(&model, &target)?;
//! assert!((weights.dot(&target) - 1.0).abs() < 1e-12);
//! # Ok::<(), sharpcov::Error>(())
//! ```

pub mod bias;
pub mod correction;
pub mod error;
pub mod harness;
pub mod optimize;
pub mod simmodel;
pub mod spectra;

pub use error::{Error, Result};
