//! Gaussian process regression with a squared-exponential kernel.
//!
//! One [`GprModel`] models one scalar channel (for instance the real part of
//! an S-parameter at one frequency). The model keeps the Cholesky factor of
//! `K + noise * I` and supports appending training points in O(n²) without
//! refactorizing.

mod cholesky;
mod optimize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use cholesky::PackedCholesky;
pub use optimize::{nelder_mead, OptimizeReport};

/// Computed variances below this are treated as a conditioning failure
/// rather than round-off.
pub const NEGATIVE_VARIANCE_LIMIT: f64 = -1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GprError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("at least {needed} training points required, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
    #[error("input {index} duplicates an existing training point and the noise term is zero")]
    DuplicateInput { index: usize },
    #[error(
        "covariance factorization failed at row {index} of {size} (pivot {pivot:.3e}); \
         closest pair of inputs is {min_distance:.3e} apart, noise = {noise:e}"
    )]
    Factorization {
        size: usize,
        index: usize,
        pivot: f64,
        min_distance: f64,
        noise: f64,
    },
    #[error("predicted variance {variance:.3e} is negative beyond round-off; covariance is ill-conditioned")]
    Conditioning { variance: f64 },
}

/// Hyperparameters of the kernel `signal * exp(-|p - q|² / (2 length_scale²))`
/// plus the noise term added to the diagonal of the training covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub signal: f64,
    pub length_scale: f64,
    pub noise: f64,
    pub signal_bounds: (f64, f64),
    pub length_bounds: (f64, f64),
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            signal: 0.1,
            length_scale: 1.0,
            noise: 1e-5,
            signal_bounds: (1e-5, 1e-1),
            length_bounds: (1e-5, 1e5),
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), GprError> {
        let bad = |m: &str| Err(GprError::InvalidKernel(m.to_string()));
        let (sl, sh) = self.signal_bounds;
        let (ll, lh) = self.length_bounds;
        if !(sl > 0.0 && sl <= sh && sh.is_finite()) {
            return bad("signal bounds must satisfy 0 < low <= high < inf");
        }
        if !(ll > 0.0 && ll <= lh && lh.is_finite()) {
            return bad("length-scale bounds must satisfy 0 < low <= high < inf");
        }
        if !(self.signal >= sl && self.signal <= sh) {
            return bad("signal outside its bounds");
        }
        if !(self.length_scale >= ll && self.length_scale <= lh) {
            return bad("length scale outside its bounds");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and nonnegative");
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, p: &[f64], q: &[f64]) -> f64 {
        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        self.signal * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

pub fn kernel_eval(k: &KernelParams, p: &[f64], q: &[f64]) -> Result<f64, GprError> {
    if p.len() != q.len() {
        return Err(GprError::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(k.eval(p, q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// Plain data needed to rebuild a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprDump {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub kernel: KernelParams,
}

#[derive(Debug, Clone)]
pub struct GprModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    kernel: KernelParams,
    prior_mean: f64,
    factor: PackedCholesky,
    weights: Vec<f64>,
    duplicates: usize,
}

fn min_pairwise_distance(inputs: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..inputs.len() {
        for j in 0..i {
            let d: f64 = inputs[i]
                .iter()
                .zip(&inputs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d.sqrt());
        }
    }
    best
}

impl GprModel {
    /// Fits the posterior on the given training set. The constant prior mean
    /// is the arithmetic mean of the targets.
    pub fn fit(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        kernel: KernelParams,
    ) -> Result<Self, GprError> {
        kernel.validate()?;
        if inputs.len() != targets.len() {
            return Err(GprError::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(GprError::TooFewPoints { needed: 1, got: 0 });
        }
        let dim = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|p| p.len() != dim) {
            return Err(GprError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if targets.iter().any(|t| !t.is_finite()) || inputs.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(GprError::NonFinite);
        }
        let mut duplicates = 0;
        for i in 0..inputs.len() {
            if inputs[..i].contains(&inputs[i]) {
                if kernel.noise == 0.0 {
                    return Err(GprError::DuplicateInput { index: i });
                }
                duplicates += 1;
            }
        }
        let factor = PackedCholesky::factorize(inputs.len(), |i, j| {
            let k = kernel.eval(&inputs[i], &inputs[j]);
            if i == j {
                k + kernel.noise
            } else {
                k
            }
        })
        .map_err(|e| GprError::Factorization {
            size: inputs.len(),
            index: e.index,
            pivot: e.pivot,
            min_distance: min_pairwise_distance(&inputs),
            noise: kernel.noise,
        })?;
        let mut model = Self {
            inputs,
            targets,
            kernel,
            prior_mean: 0.0,
            factor,
            weights: Vec::new(),
            duplicates,
        };
        model.refresh_weights();
        Ok(model)
    }

    pub fn from_dump(dump: GprDump) -> Result<Self, GprError> {
        Self::fit(dump.inputs, dump.targets, dump.kernel)
    }

    pub fn dump(&self) -> GprDump {
        GprDump {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            kernel: self.kernel,
        }
    }

    fn refresh_weights(&mut self) {
        self.prior_mean = self.targets.iter().sum::<f64>() / self.targets.len() as f64;
        let centered: Vec<f64> = self.targets.iter().map(|t| t - self.prior_mean).collect();
        self.weights = self.factor.solve(&centered);
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn dual_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of training inputs that repeat an earlier one (only possible
    /// with a positive noise term).
    pub fn duplicate_inputs(&self) -> usize {
        self.duplicates
    }

    pub fn contains_input(&self, p: &[f64]) -> bool {
        self.inputs.iter().any(|q| q.as_slice() == p)
    }

    /// Largest relative deviation between `L Lᵀ` and `K + noise * I`.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let mut k = self.kernel.eval(&self.inputs[i], &self.inputs[j]);
                if i == j {
                    k += self.kernel.noise;
                }
                let r = (self.factor.product_entry(i, j) - k).abs()
                    / (self.kernel.signal + self.kernel.noise);
                worst = worst.max(r);
            }
        }
        worst
    }

    fn cross_covariance(&self, p: &[f64]) -> Vec<f64> {
        self.inputs.iter().map(|q| self.kernel.eval(p, q)).collect()
    }

    pub fn predict(&self, p: &[f64]) -> Result<Prediction, GprError> {
        if p.len() != self.dim() {
            return Err(GprError::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        let k = self.cross_covariance(p);
        let mean = self.prior_mean + k.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        let v = self.factor.solve_lower(&k);
        let var = self.kernel.signal - v.iter().map(|x| x * x).sum::<f64>();
        if var < NEGATIVE_VARIANCE_LIMIT {
            return Err(GprError::Conditioning { variance: var });
        }
        Ok(Prediction {
            mean,
            std: var.max(0.0).sqrt(),
        })
    }

    /// Appends one training point, extending the factor by one row.
    pub fn update(&mut self, p_add: &[f64], s_add: f64) -> Result<(), GprError> {
        if p_add.len() != self.dim() {
            return Err(GprError::DimensionMismatch {
                expected: self.dim(),
                got: p_add.len(),
            });
        }
        if !s_add.is_finite() || p_add.iter().any(|v| !v.is_finite()) {
            return Err(GprError::NonFinite);
        }
        let duplicate = self.contains_input(p_add);
        if duplicate && self.kernel.noise == 0.0 {
            return Err(GprError::DuplicateInput { index: self.len() });
        }
        let col = self.cross_covariance(p_add);
        let diag = self.kernel.signal + self.kernel.noise;
        if let Err(e) = self.factor.push_row(&col, diag) {
            let mut all = self.inputs.clone();
            all.push(p_add.to_vec());
            return Err(GprError::Factorization {
                size: all.len(),
                index: e.index,
                pivot: e.pivot,
                min_distance: min_pairwise_distance(&all),
                noise: self.kernel.noise,
            });
        }
        self.inputs.push(p_add.to_vec());
        self.targets.push(s_add);
        if duplicate {
            self.duplicates += 1;
        }
        self.refresh_weights();
        Ok(())
    }

    /// Log evidence of the training targets under the current hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let fit: f64 = self
            .targets
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| (t - self.prior_mean) * w)
            .sum();
        -0.5 * fit - 0.5 * self.factor.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Refit on the same training set with other hyperparameters.
    pub fn with_kernel(&self, kernel: KernelParams) -> Result<Self, GprError> {
        Self::fit(self.inputs.clone(), self.targets.clone(), kernel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k(signal: f64, length: f64, noise: f64) -> KernelParams {
        KernelParams {
            signal,
            length_scale: length,
            noise,
            ..Default::default()
        }
    }

    #[test]
    fn kernel_values() {
        let kp = k(0.1, 1.0, 0.0);
        assert_eq!(kernel_eval(&kp, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.1);
        let unit = KernelParams {
            signal: 1.0,
            signal_bounds: (1e-5, 1.0),
            ..kp
        };
        assert_relative_eq!(
            kernel_eval(&unit, &[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            (-1.0f64).exp()
        );
        assert!(kernel_eval(&kp, &[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn single_point_fit() {
        let m = GprModel::fit(vec![vec![0.3, 0.1]], vec![2.5], k(0.1, 1.0, 1e-5)).unwrap();
        assert_eq!(m.prior_mean(), 2.5);
        assert_eq!(m.dual_weights(), &[0.0]);
    }

    #[test]
    fn two_point_weights_match_closed_form() {
        let kp = k(0.1, 0.7, 1e-3);
        let p = vec![vec![0.0], vec![0.5]];
        let s = vec![1.0, 3.0];
        let m = GprModel::fit(p, s, kp).unwrap();
        // [[a, b], [b, a]]^-1 [-1, 1]
        let a = 0.1 + 1e-3;
        let b = 0.1 * (-0.25f64 / (2.0 * 0.49)).exp();
        let det = a * a - b * b;
        let w0 = (-a - b) / det;
        let w1 = (-b * -1.0 + a * 1.0) / det;
        assert_relative_eq!(m.dual_weights()[0], w0, max_relative = 1e-12);
        assert_relative_eq!(m.dual_weights()[1], w1, max_relative = 1e-12);
    }

    #[test]
    fn exact_interpolation_without_noise() {
        let p = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.4, 2.0]];
        let s = vec![0.2, -0.1, 0.05];
        let m = GprModel::fit(p.clone(), s.clone(), k(0.1, 1.0, 0.0)).unwrap();
        for (pi, si) in p.iter().zip(&s) {
            let pr = m.predict(pi).unwrap();
            assert!((pr.mean - si).abs() < 1e-8);
            assert!(pr.std < 1e-6);
        }
    }

    #[test]
    fn far_field_tends_to_prior() {
        let m = GprModel::fit(
            vec![vec![0.0], vec![1.0]],
            vec![1.0, 2.0],
            k(0.04, 0.5, 1e-5),
        )
        .unwrap();
        let pr = m.predict(&[100.0]).unwrap();
        assert!((pr.mean - 1.5).abs() < 1e-12);
        assert!((pr.std - 0.2).abs() < 1e-12);
    }

    #[test]
    fn duplicates() {
        let p = vec![vec![1.0], vec![1.0]];
        assert_eq!(
            GprModel::fit(p.clone(), vec![1.0, 1.0], k(0.1, 1.0, 0.0)).unwrap_err(),
            GprError::DuplicateInput { index: 1 }
        );
        let m = GprModel::fit(p, vec![1.0, 1.1], k(0.1, 1.0, 1e-5)).unwrap();
        assert_eq!(m.duplicate_inputs(), 1);
        let mut m = GprModel::fit(vec![vec![0.0]], vec![1.0], k(0.1, 1.0, 0.0)).unwrap();
        assert!(matches!(
            m.update(&[0.0], 1.0),
            Err(GprError::DuplicateInput { .. })
        ));
    }

    #[test]
    fn near_duplicate_reports_diagnostic() {
        let p = vec![vec![0.0], vec![1e-9]];
        match GprModel::fit(p, vec![1.0, 2.0], k(0.1, 1.0, 0.0)) {
            Err(GprError::Factorization { min_distance, .. }) => assert!(min_distance < 1e-8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn factor_reproduces_covariance() {
        let p: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![i as f64 * 0.3, (i as f64).sin()])
            .collect();
        let s: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let mut m = GprModel::fit(p, s, k(0.1, 0.8, 1e-5)).unwrap();
        m.update(&[0.7, -0.2], 0.4).unwrap();
        assert!(m.factorization_residual() < 1e-10);
    }

    #[test]
    fn no_information_update() {
        let p: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 * 0.1]).collect();
        let s: Vec<f64> = p.iter().map(|x| x[0].sin()).collect();
        let mut m = GprModel::fit(p, s, k(0.1, 1.0, 1e-10)).unwrap();
        let probe = [1.05];
        let at = m.predict(&probe).unwrap();
        assert!(at.std < 1e-4);
        let held_out = [0.33, 0.97, 1.71];
        let before: Vec<f64> = held_out
            .iter()
            .map(|x| m.predict(&[*x]).unwrap().mean)
            .collect();
        m.update(&probe, at.mean).unwrap();
        for (x, b) in held_out.iter().zip(before) {
            assert!((m.predict(&[*x]).unwrap().mean - b).abs() < 1e-6);
        }
    }

    #[test]
    fn dump_round_trip() {
        let m = GprModel::fit(
            vec![vec![0.0], vec![1.0]],
            vec![1.0, 2.0],
            KernelParams::default(),
        )
        .unwrap();
        let json = serde_json::to_string(&m.dump()).unwrap();
        let back = GprModel::from_dump(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.predict(&[0.4]).unwrap(), m.predict(&[0.4]).unwrap());
    }
}
