//! Truncated multivariate Gaussian model for the uncertain design parameters.
//!
//! The distribution is `N(mean, scale * covariance)` restricted to the box
//! `[lower, upper]`. Sampling is done by drawing from the untruncated Gaussian
//! and rejecting points outside the box, which is exact and efficient when the
//! box holds most of the mass.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;

/// Rejection sampling aborts once the acceptance rate is observed below this.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-6;

/// Attempts made before the acceptance rate is judged.
const ACCEPTANCE_PROBE: u64 = 1_000_000;

/// Sample size for the Monte Carlo normalizer of correlated, >2-D boxes.
const NORMALIZER_MC_POINTS: usize = 1_000_000;
const NORMALIZER_MC_SEED: u64 = 0x6e6f_726d;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("invalid bounds in component {index}: {reason}")]
    InvalidBounds { index: usize, reason: String },
    #[error("scale {0} outside [0, 1]")]
    InvalidScale(f64),
    #[error("density undefined for the degenerate distribution (scale = 0)")]
    Degenerate,
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error(
        "rejection sampling acceptance rate {rate:.3e} after {attempts} attempts is below {MIN_ACCEPTANCE_RATE:e}; \
         the truncation box excludes essentially all probability mass"
    )]
    LowAcceptance { rate: f64, attempts: u64 },
}

/// Serializable description of a truncated Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct TruncatedGaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    scale: f64,
    /// Lower Cholesky factor of the unscaled covariance.
    factor: DMatrix<f64>,
    normalizer: OnceLock<f64>,
}

impl TruncatedGaussian {
    pub fn new(
        mean: Vec<f64>,
        covariance: DMatrix<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, DistributionError> {
        let dim = mean.len();
        for got in [
            covariance.nrows(),
            covariance.ncols(),
            lower.len(),
            upper.len(),
        ] {
            if got != dim {
                return Err(DistributionError::DimensionMismatch { expected: dim, got });
            }
        }
        if dim == 0 {
            return Err(DistributionError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let sym_tol = 1e-12 * covariance.amax().max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > sym_tol {
                    return Err(DistributionError::NotPositiveDefinite);
                }
            }
        }
        let factor = covariance
            .clone()
            .cholesky()
            .ok_or(DistributionError::NotPositiveDefinite)?
            .unpack();
        for i in 0..dim {
            let (lo, hi, m) = (lower[i], upper[i], mean[i]);
            if !(lo.is_finite() && hi.is_finite() && m.is_finite()) {
                return Err(DistributionError::InvalidBounds {
                    index: i,
                    reason: "non-finite value".into(),
                });
            }
            if lo >= hi {
                return Err(DistributionError::InvalidBounds {
                    index: i,
                    reason: format!("lower {lo} is not below upper {hi}"),
                });
            }
            if m < lo || m > hi {
                return Err(DistributionError::InvalidBounds {
                    index: i,
                    reason: format!("mean {m} outside [{lo}, {hi}]"),
                });
            }
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance,
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
            scale: 1.0,
            factor,
            normalizer: OnceLock::new(),
        })
    }

    /// Independent components with the given standard deviations.
    pub fn diagonal(
        mean: Vec<f64>,
        std_dev: &[f64],
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, DistributionError> {
        let variances: Vec<f64> = std_dev.iter().map(|s| s * s).collect();
        let covariance = DMatrix::from_diagonal(&DVector::from_vec(variances));
        Self::new(mean, covariance, lower, upper)
    }

    pub fn from_spec(spec: &TruncatedGaussianSpec) -> Result<Self, DistributionError> {
        let dim = spec.mean.len();
        if spec.covariance.len() != dim {
            return Err(DistributionError::DimensionMismatch {
                expected: dim,
                got: spec.covariance.len(),
            });
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for (i, row) in spec.covariance.iter().enumerate() {
            if row.len() != dim {
                return Err(DistributionError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                cov[(i, j)] = *v;
            }
        }
        Self::new(
            spec.mean.clone(),
            cov,
            spec.lower.clone(),
            spec.upper.clone(),
        )?
        .scaled(spec.scale)
    }

    pub fn to_spec(&self) -> TruncatedGaussianSpec {
        TruncatedGaussianSpec {
            mean: self.mean.iter().copied().collect(),
            covariance: self
                .covariance
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            lower: self.lower.iter().copied().collect(),
            upper: self.upper.iter().copied().collect(),
            scale: self.scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn lower(&self) -> &[f64] {
        self.lower.as_slice()
    }

    pub fn upper(&self) -> &[f64] {
        self.upper.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Covariance actually used for sampling: `scale * covariance`.
    pub fn effective_covariance(&self) -> DMatrix<f64> {
        &self.covariance * self.scale
    }

    /// Copy of this distribution with the covariance scaled by `upsilon`.
    pub fn scaled(&self, upsilon: f64) -> Result<Self, DistributionError> {
        if !(0.0..=1.0).contains(&upsilon) {
            return Err(DistributionError::InvalidScale(upsilon));
        }
        let mut out = self.clone();
        out.scale = upsilon;
        out.normalizer = OnceLock::new();
        Ok(out)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    fn check_dim(&self, p: &[f64]) -> Result<(), DistributionError> {
        if p.len() != self.dim() {
            return Err(DistributionError::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// `exp(-q/2)` with `q` the Mahalanobis distance under the scaled covariance.
    fn kernel(&self, p: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(p) - &self.mean;
        let z = self
            .factor
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a nonzero diagonal");
        (-0.5 * z.norm_squared() / self.scale).exp()
    }

    fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.covariance[(i, j)] == 0.0))
    }

    /// Integral of the unnormalized Gaussian kernel over the truncation box.
    fn normalizer(&self) -> f64 {
        *self.normalizer.get_or_init(|| self.compute_normalizer())
    }

    fn compute_normalizer(&self) -> f64 {
        let d = self.dim();
        if self.is_diagonal() {
            return (0..d)
                .map(|i| {
                    let sd = (self.scale * self.covariance[(i, i)]).sqrt();
                    let a = (self.lower[i] - self.mean[i]) / sd;
                    let b = (self.upper[i] - self.mean[i]) / sd;
                    (2.0 * PI).sqrt() * sd * (std_normal_cdf(b) - std_normal_cdf(a))
                })
                .product();
        }
        match d {
            1 => unreachable!("1-D covariance is always diagonal"),
            2 => {
                let f = |x: f64, y: f64| self.kernel(&[x, y]);
                quadrature::integrate_2d(
                    &f,
                    (self.lower[0], self.upper[0]),
                    (self.lower[1], self.upper[1]),
                    1e-12,
                )
            }
            _ => {
                // Z = (2 pi)^(d/2) |scale * cov|^(1/2) * P(X in box), X ~ N(mean, scale * cov).
                let log_det: f64 = (0..d).map(|i| self.factor[(i, i)].ln()).sum::<f64>() * 2.0
                    + d as f64 * self.scale.ln();
                let gauss_mass = (0.5 * d as f64 * (2.0 * PI).ln() + 0.5 * log_det).exp();
                let mut rng = ChaCha8Rng::seed_from_u64(NORMALIZER_MC_SEED);
                let inside = (0..NORMALIZER_MC_POINTS)
                    .filter(|_| {
                        let p = self.draw_untruncated(&mut rng);
                        self.contains(p.as_slice())
                    })
                    .count();
                gauss_mass * inside as f64 / NORMALIZER_MC_POINTS as f64
            }
        }
    }

    /// Probability density of the truncated distribution at `p`.
    pub fn density(&self, p: &[f64]) -> Result<f64, DistributionError> {
        self.check_dim(p)?;
        if self.scale == 0.0 {
            return Err(DistributionError::Degenerate);
        }
        if !self.contains(p) {
            return Ok(0.0);
        }
        Ok(self.kernel(p) / self.normalizer())
    }

    fn draw_untruncated(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| StandardNormal.sample(rng)),
        );
        &self.mean + (&self.factor * z) * self.scale.sqrt()
    }

    /// Draws `n` points from the truncated distribution. The sequence is fully
    /// determined by `seed`; with `scale = 0` every point is the mean.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, DistributionError> {
        if n == 0 {
            return Err(DistributionError::EmptySample);
        }
        if self.scale == 0.0 {
            return Ok(vec![self.mean.iter().copied().collect(); n]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut attempts: u64 = 0;
        while out.len() < n {
            let p = self.draw_untruncated(&mut rng);
            attempts += 1;
            if self.contains(p.as_slice()) {
                out.push(p.iter().copied().collect());
            } else if attempts >= ACCEPTANCE_PROBE {
                let rate = out.len() as f64 / attempts as f64;
                if rate < MIN_ACCEPTANCE_RATE {
                    return Err(DistributionError::LowAcceptance { rate, attempts });
                }
            }
        }
        Ok(out)
    }
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
