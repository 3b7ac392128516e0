use num_complex::Complex64;

use crate::gpr::{GprError, GprModel, KernelParams, OptimizeReport, Prediction};
use crate::oracle::SParamSample;

/// Predictions of the real and imaginary channel at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPrediction {
    pub real: Prediction,
    pub imag: Prediction,
}

impl ChannelPrediction {
    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.real.mean, self.imag.mean)
    }
}

/// Anything that predicts the S-parameter channels per frequency with an
/// uncertainty estimate.
pub trait Surrogate: Sync {
    fn frequencies(&self) -> usize;
    fn predict(&self, p: &[f64], frequency: usize) -> Result<ChannelPrediction, GprError>;
}

/// Independent models for the real and imaginary part at one frequency.
#[derive(Debug, Clone)]
pub struct ChannelPair {
    pub real: GprModel,
    pub imag: GprModel,
}

/// One [`ChannelPair`] per grid frequency.
#[derive(Debug, Clone)]
pub struct SurrogateBank {
    pairs: Vec<ChannelPair>,
}

impl SurrogateBank {
    /// Fits every channel on the same training inputs.
    pub fn fit(
        inputs: &[Vec<f64>],
        values: &[SParamSample],
        kernel: KernelParams,
    ) -> Result<Self, GprError> {
        let n_freq = values.first().map_or(0, |v| v.0.len());
        let pairs = (0..n_freq)
            .map(|j| {
                let re = values.iter().map(|v| v.0[j].re).collect();
                let im = values.iter().map(|v| v.0[j].im).collect();
                Ok(ChannelPair {
                    real: GprModel::fit(inputs.to_vec(), re, kernel)?,
                    imag: GprModel::fit(inputs.to_vec(), im, kernel)?,
                })
            })
            .collect::<Result<Vec<_>, GprError>>()?;
        Ok(Self { pairs })
    }

    pub fn from_pairs(pairs: Vec<ChannelPair>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[ChannelPair] {
        &self.pairs
    }

    pub fn pairs_mut(&mut self) -> &mut [ChannelPair] {
        &mut self.pairs
    }

    /// Tunes the hyperparameters of every channel model independently.
    pub fn optimize(&mut self, restarts: usize) -> Result<Vec<OptimizeReport>, GprError> {
        use rayon::prelude::*;
        self.pairs
            .par_iter_mut()
            .flat_map_iter(|pair| [&mut pair.real, &mut pair.imag])
            .map(|m| m.optimize_hyperparameters(restarts))
            .collect()
    }

    pub fn update(
        &mut self,
        frequency: usize,
        p: &[f64],
        value: Complex64,
    ) -> Result<(), GprError> {
        self.pairs[frequency].update(p, value)
    }

    pub fn contains_input(&self, frequency: usize, p: &[f64]) -> bool {
        self.pairs[frequency].real.contains_input(p)
    }

    pub fn training_sizes(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.real.len()).collect()
    }
}

impl ChannelPair {
    pub fn predict(&self, p: &[f64]) -> Result<ChannelPrediction, GprError> {
        Ok(ChannelPrediction {
            real: self.real.predict(p)?,
            imag: self.imag.predict(p)?,
        })
    }

    pub fn update(&mut self, p: &[f64], value: Complex64) -> Result<(), GprError> {
        self.real.update(p, value.re)?;
        self.imag.update(p, value.im)
    }

    pub fn optimize(&mut self, restarts: usize) -> Result<(), GprError> {
        self.real.optimize_hyperparameters(restarts)?;
        self.imag.optimize_hyperparameters(restarts)?;
        Ok(())
    }
}

impl Surrogate for SurrogateBank {
    fn frequencies(&self) -> usize {
        self.pairs.len()
    }

    fn predict(&self, p: &[f64], frequency: usize) -> Result<ChannelPrediction, GprError> {
        self.pairs[frequency].predict(p)
    }
}
