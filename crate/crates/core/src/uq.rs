//! Conditional Gaussian uncertainty quantification.
//!
//! At a fixed hyperparameter vector the posterior over the signal is
//! Gaussian with precision `P = alpha F^T F + Phi^T D_theta Phi` and mean
//! `mu = P^{-1} alpha F^T y`. Credible bands come from the analytic
//! componentwise quantiles; sampling through the Cholesky factor of `P` is
//! provided for validation and joint draws.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::forward::Measurement;
use crate::transforms::PriorOp;
use crate::{Error, Result};

/// Largest dimension for which the dense posterior is materialized. Covers
/// 1D problems and images up to 64 pixels per axis.
pub const DENSE_POSTERIOR_LIMIT: usize = 4096;

/// Gaussian posterior of the signal conditional on fixed hyperparameters.
#[derive(Debug)]
pub struct ConditionalPosterior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    theta: DVector<f64>,
    covariance: OnceLock<DMatrix<f64>>,
}

/// Componentwise credible interval around the posterior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibleBand {
    level: f64,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl CredibleBand {
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }
}

/// Builds the conditional posterior for one measurement. Fails when the
/// precision is not positive definite, which signals that the forward model
/// and prior transform share a kernel direction.
pub fn conditional_posterior<P: PriorOp + ?Sized>(
    m: &Measurement,
    prior: &P,
    theta: &DVector<f64>,
) -> Result<ConditionalPosterior> {
    let n = m.model().cols();
    if n > DENSE_POSTERIOR_LIMIT {
        return Err(Error::PosteriorTooLarge(n, DENSE_POSTERIOR_LIMIT));
    }
    if prior.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: prior.cols() });
    }
    if theta.len() != prior.rows() {
        return Err(Error::DimensionMismatch { expected: prior.rows(), actual: theta.len() });
    }
    if let Some(&t) = theta.iter().find(|t| **t <= 0.0 || !t.is_finite()) {
        return Err(Error::NonPositiveTheta(t));
    }
    let alpha = m.alpha_eff();
    let f = m.model().dense_stacked();
    let mut weighted = prior.dense();
    for (r, &t) in theta.iter().enumerate() {
        weighted.row_mut(r).scale_mut(t.sqrt());
    }
    let precision = f.tr_mul(&f) * alpha + weighted.tr_mul(&weighted);
    let chol = Cholesky::new(precision.clone()).ok_or(Error::KernelConditionViolated)?;
    let rhs = m.model().apply_adjoint(&m.stacked_data())? * alpha;
    let mean = chol.solve(&rhs);
    Ok(ConditionalPosterior { mean, precision, chol, theta: theta.clone(), covariance: OnceLock::new() })
}

impl ConditionalPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Dense covariance `P^{-1}`, materialized on first use.
    pub fn covariance(&self) -> &DMatrix<f64> {
        self.covariance.get_or_init(|| self.chol.inverse())
    }

    /// Componentwise posterior variances, the diagonal of the covariance.
    pub fn variance(&self) -> DVector<f64> {
        self.covariance().diagonal()
    }

    /// Draws `count` joint samples `mu + C^{-T} z` with `C` the lower
    /// Cholesky factor of the precision; one sample per column.
    pub fn sample(&self, count: usize, seed: u64) -> DMatrix<f64> {
        let n = self.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = DMatrix::zeros(n, count);
        let l = self.chol.l();
        for mut col in out.column_iter_mut() {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let shifted = l
                .tr_solve_lower_triangular(&z)
                .expect("Cholesky factor has positive diagonal");
            col.copy_from(&(&self.mean + shifted));
        }
        out
    }

    /// Analytic componentwise credible band
    /// `mu_j +- z_{(1+level)/2} sqrt(Sigma_jj)`.
    pub fn credible_band(&self, level: f64) -> Result<CredibleBand> {
        if !(0.0..1.0).contains(&level) || level <= 0.0 {
            return Err(Error::InvalidLevel(level));
        }
        let z = Normal::standard().inverse_cdf(0.5 * (1.0 + level));
        let sd = self.variance().map(f64::sqrt);
        Ok(CredibleBand {
            level,
            lower: &self.mean - &sd * z,
            upper: &self.mean + &sd * z,
        })
    }
}
