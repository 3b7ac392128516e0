//! High-fidelity providers of the quantity of interest: complex S-parameters
//! on a discrete frequency grid.

pub mod blackbox;
mod counters;
pub mod waveguide;

use std::time::Duration;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blackbox::{BlackboxEndpoint, BlackboxOracle};
pub use counters::{CostUnit, EvalCounters};
pub use waveguide::{waveguide_eval, WaveguideConfig, WaveguideGeometry, WaveguideOracle};

/// Smallest magnitude fed to the dB conversion.
pub const MIN_MAGNITUDE: f64 = 1e-30;

/// `20 log10 |S|`.
pub fn to_db(magnitude: f64) -> f64 {
    20.0 * magnitude.max(MIN_MAGNITUDE).log10()
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("TE10 mode is evanescent at {omega:.6e} rad/s (cutoff {cutoff:.6e} rad/s)")]
    Evanescent { omega: f64, cutoff: f64 },
    #[error("non-physical geometry: {0}")]
    Geometry(String),
    #[error("expected {expected} parameters, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("frequency index {index} outside grid of {len} points")]
    FrequencyIndex { index: usize, len: usize },
    #[error("failed to start solver process `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("solver process failure: {0}")]
    Process(String),
    #[error("solver protocol error: {0}")]
    Protocol(String),
    #[error("solver did not answer within {0:?}")]
    Timeout(Duration),
    #[error("non-finite S-parameter returned at frequency index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("frequency grid needs at least one point")]
    Empty,
    #[error("frequency band [{0}, {1}] is not a valid interval")]
    Band(f64, f64),
    #[error("frequency points must be strictly increasing and inside the band")]
    Points,
}

/// Discrete angular frequencies (rad/s) inside a band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    band: (f64, f64),
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>, band: (f64, f64)) -> Result<Self, GridError> {
        if points.is_empty() {
            return Err(GridError::Empty);
        }
        if !(band.0.is_finite() && band.1.is_finite() && band.0 <= band.1) {
            return Err(GridError::Band(band.0, band.1));
        }
        let increasing = points.windows(2).all(|w| w[0] < w[1]);
        let inside = points.iter().all(|w| *w >= band.0 && *w <= band.1);
        if !(increasing && inside) {
            return Err(GridError::Points);
        }
        Ok(Self { points, band })
    }

    /// `count` equidistant points spanning `[lo, hi]` (endpoints included).
    pub fn equidistant(lo: f64, hi: f64, count: usize) -> Result<Self, GridError> {
        if count == 0 {
            return Err(GridError::Empty);
        }
        if count == 1 {
            return Self::new(vec![0.5 * (lo + hi)], (lo, hi));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut pts: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
        pts[count - 1] = hi;
        Self::new(pts, (lo, hi))
    }

    /// Equidistant grid over a band given in GHz, stored in rad/s.
    pub fn from_ghz(lo_ghz: f64, hi_ghz: f64, count: usize) -> Result<Self, GridError> {
        let w = 2.0 * std::f64::consts::PI * 1e9;
        Self::equidistant(w * lo_ghz, w * hi_ghz, count)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Complex S-parameter values, one per grid frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SParamSample(pub Vec<Complex64>);

impl SParamSample {
    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn db(&self) -> Vec<f64> {
        self.0.iter().map(|s| to_db(s.norm())).collect()
    }
}

/// A high-fidelity model of the S-parameter. Implementations must be safe
/// to call concurrently.
pub trait Oracle: Send + Sync {
    fn grid(&self) -> &FrequencyGrid;

    /// How one unit of high-fidelity cost is counted.
    fn cost_unit(&self) -> CostUnit;

    /// Number of design parameters expected, if known.
    fn dimension(&self) -> Option<usize> {
        None
    }

    /// S-parameter at grid frequency `index`.
    fn eval_at(&self, p: &[f64], index: usize) -> Result<Complex64, OracleError>;

    /// S-parameters at every grid frequency.
    fn eval_all(&self, p: &[f64]) -> Result<SParamSample, OracleError> {
        (0..self.grid().len())
            .map(|j| self.eval_at(p, j))
            .collect::<Result<Vec<_>, _>>()
            .map(SParamSample)
    }

    /// Number of successful invocations so far (each `eval_at` or `eval_all`
    /// call counts once).
    fn invocations(&self) -> u64;
}
