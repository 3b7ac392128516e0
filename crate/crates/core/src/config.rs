//! Run configuration: one TOML document describing the problem, the
//! estimator and the outputs.

use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::TruncatedGaussian;
use crate::estimator::{mc_sample_size, EstimatorSettings, Sorting};
use crate::gpr::KernelParams;
use crate::hybrid::{Clause, Direction, HybridSettings, PerformanceSpec};
use crate::linearization::DEFAULT_STEPS;
use crate::oracle::{
    BlackboxEndpoint, BlackboxOracle, FrequencyGrid, Oracle, WaveguideGeometry, WaveguideOracle,
};

/// Which estimator a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RunMethod {
    Mc,
    GprHybrid,
    GprHybridSorted,
    Linearized,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub mean: Vec<f64>,
    /// Standard deviations of independent parameters. Exclusive with
    /// `covariance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Waveguide {
        #[serde(default = "default_width")]
        width_mm: f64,
        #[serde(default = "default_length")]
        length_mm: f64,
    },
    Blackbox {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        working_dir: Option<PathBuf>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_pool_size")]
        pool_size: usize,
    },
}

fn default_width() -> f64 {
    WaveguideGeometry::default().width_mm
}

fn default_length() -> f64 {
    WaveguideGeometry::default().length_mm
}

fn default_timeout_ms() -> u64 {
    600_000
}

fn default_pool_size() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    /// `[lo, hi]` in GHz; points are stored in rad/s.
    pub band_ghz: [f64; 2],
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClauseConfig {
    pub threshold_db: f64,
    pub direction: Direction,
    /// Grid indices the clause applies to; all when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: RunMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_mc: Option<usize>,
    /// Target standard deviation of the estimator; sets `n_mc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_y: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub sorting: Sorting,
    #[serde(default)]
    pub reevaluate_noncritical: bool,
    #[serde(default = "default_training")]
    pub initial_training: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub safety_factor: f64,
    #[serde(default = "yes")]
    pub short_circuit: bool,
    #[serde(default = "default_restarts")]
    pub optimizer_restarts: usize,
    #[serde(default = "yes")]
    pub retune_online: bool,
    /// Worker threads; defaults to the batch size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub audit_fraction: f64,
    #[serde(default)]
    pub kernel: KernelParams,
}

fn default_batch() -> usize {
    EstimatorSettings::default().batch_size
}

fn default_training() -> usize {
    EstimatorSettings::default().initial_training
}

fn default_gamma() -> f64 {
    HybridSettings::default().safety_factor
}

fn default_restarts() -> usize {
    EstimatorSettings::default().optimizer_restarts
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_upsilons")]
    pub upsilons: Vec<f64>,
    /// Linearization steps compared in the sweep.
    #[serde(default = "default_steps")]
    pub steps: Vec<f64>,
    /// Step of the `linearized` method.
    #[serde(default = "default_linear_step")]
    pub linear_step: f64,
}

fn default_upsilons() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_steps() -> Vec<f64> {
    DEFAULT_STEPS.to_vec()
}

fn default_linear_step() -> f64 {
    0.5
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            upsilons: default_upsilons(),
            steps: default_steps(),
            linear_step: default_linear_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub distribution: DistributionConfig,
    pub oracle: OracleConfig,
    pub frequency: FrequencyConfig,
    pub spec: Vec<ClauseConfig>,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One violated invariant, located by its config path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{} invalid setting(s):\n{}", .0.len(), .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

/// Problem objects built from a validated config.
pub struct Built {
    pub distribution: TruncatedGaussian,
    pub spec: PerformanceSpec,
    pub oracle: Box<dyn Oracle>,
    pub settings: EstimatorSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths inside the config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        if let OracleConfig::Blackbox {
            working_dir: Some(dir),
            ..
        } = &mut cfg.oracle
        {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    /// Sample size after applying `sigma_y`.
    pub fn resolved_n_mc(&self) -> Option<usize> {
        match self.estimator.sigma_y {
            Some(t) => mc_sample_size(t).ok(),
            None => self.estimator.n_mc,
        }
    }

    /// Writes the resolved sample size back so that the config echoes what ran.
    pub fn resolve(&mut self) {
        if let Some(n) = self.resolved_n_mc() {
            self.estimator.n_mc = Some(n);
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut err = |path: &str, message: String| {
            out.push(Diagnostic {
                path: path.to_string(),
                message,
            })
        };
        self.validate_distribution(&mut err);
        self.validate_problem(&mut err);
        self.validate_estimator(&mut err);
        let sw = &self.sweep;
        if sw.upsilons.is_empty() || sw.upsilons.iter().any(|u| !(0.0..=1.0).contains(u)) {
            err(
                "sweep.upsilons",
                "must be a nonempty list of values in [0, 1]".into(),
            );
        }
        if sw.steps.is_empty() || sw.steps.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            err(
                "sweep.steps",
                "must be a nonempty list of positive steps".into(),
            );
        }
        if !(sw.linear_step > 0.0 && sw.linear_step.is_finite()) {
            err("sweep.linear_step", "must be positive".into());
        }
        if self.output.dir.as_os_str().is_empty() {
            err("output.dir", "must not be empty".into());
        }
        out
    }

    fn validate_distribution(&self, err: &mut impl FnMut(&str, String)) {
        let d = &self.distribution;
        let n = d.mean.len();
        if n == 0 {
            err("distribution.mean", "must not be empty".into());
            return;
        }
        if d.mean.iter().any(|v| !v.is_finite()) {
            err("distribution.mean", "must be finite".into());
        }
        if d.lower.len() != n || d.upper.len() != n {
            err(
                "distribution.bounds",
                format!("lower and upper need {n} entries each"),
            );
        } else {
            for k in 0..n {
                if d.lower[k].partial_cmp(&d.upper[k]) != Some(Ordering::Less) {
                    err(
                        "distribution.bounds",
                        format!(
                            "lower[{k}] = {} is not below upper[{k}] = {}",
                            d.lower[k], d.upper[k]
                        ),
                    );
                } else if !(d.lower[k] <= d.mean[k] && d.mean[k] <= d.upper[k]) {
                    err(
                        "distribution.mean",
                        format!("mean[{k}] = {} lies outside the bounds", d.mean[k]),
                    );
                }
            }
        }
        match (&d.std, &d.covariance) {
            (Some(_), Some(_)) => err(
                "distribution.covariance",
                "give either std or covariance, not both".into(),
            ),
            (None, None) => err("distribution.std", "give std or covariance".into()),
            (Some(s), None) => {
                if s.len() != n {
                    err("distribution.std", format!("needs {n} entries"));
                } else if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    err("distribution.std", "entries must be positive".into());
                }
            }
            (None, Some(c)) => {
                if c.len() != n || c.iter().any(|r| r.len() != n) {
                    err("distribution.covariance", format!("must be {n} x {n}"));
                } else {
                    let m = DMatrix::from_fn(n, n, |i, j| c[i][j]);
                    if m != m.transpose() || m.cholesky().is_none() {
                        err(
                            "distribution.covariance",
                            "must be symmetric positive definite".into(),
                        );
                    }
                }
            }
        }
        if !(d.scale >= 0.0 && d.scale.is_finite()) {
            err(
                "distribution.scale",
                "must be finite and nonnegative".into(),
            );
        }
    }

    fn validate_problem(&self, err: &mut impl FnMut(&str, String)) {
        let f = &self.frequency;
        let [lo, hi] = f.band_ghz;
        let band_ok = lo > 0.0 && lo <= hi && hi.is_finite() && (f.count == 1 || lo < hi);
        if !band_ok {
            err("frequency.band_ghz", "must satisfy 0 < lo < hi".into());
        }
        if f.count == 0 {
            err("frequency.count", "must be at least 1".into());
        }
        match &self.oracle {
            OracleConfig::Waveguide {
                width_mm,
                length_mm,
            } => {
                if !(*width_mm > 0.0 && width_mm.is_finite()) {
                    err("oracle.width_mm", "must be positive".into());
                } else if band_ok {
                    let g = WaveguideGeometry {
                        width_mm: *width_mm,
                        length_mm: *length_mm,
                    };
                    let cutoff_ghz = g.cutoff() / (2.0 * std::f64::consts::PI * 1e9);
                    if lo <= cutoff_ghz {
                        err(
                            "frequency.band_ghz",
                            format!(
                                "starts at or below the {cutoff_ghz:.3} GHz cutoff of the guide"
                            ),
                        );
                    }
                }
                if !(*length_mm > 0.0 && length_mm.is_finite()) {
                    err("oracle.length_mm", "must be positive".into());
                }
                if self.distribution.mean.len() != 4 {
                    err("distribution.mean", "the waveguide has 4 parameters".into());
                }
            }
            OracleConfig::Blackbox {
                command,
                working_dir,
                timeout_ms,
                pool_size,
                ..
            } => {
                if command.trim().is_empty() {
                    err("oracle.command", "must not be empty".into());
                }
                if let Some(dir) = working_dir {
                    if !dir.is_dir() {
                        err(
                            "oracle.working_dir",
                            format!("{} is not a directory", dir.display()),
                        );
                    }
                }
                if *timeout_ms == 0 {
                    err("oracle.timeout_ms", "must be positive".into());
                }
                if *pool_size == 0 {
                    err("oracle.pool_size", "must be at least 1".into());
                }
            }
        }
        if f.count > 0 {
            if let Err(e) = PerformanceSpec::from_clauses(&self.clauses(), f.count) {
                err("spec", e.to_string());
            }
        }
    }

    fn validate_estimator(&self, err: &mut impl FnMut(&str, String)) {
        let e = &self.estimator;
        match (e.n_mc, e.sigma_y) {
            (None, None) => err("estimator.n_mc", "give n_mc or sigma_y".into()),
            (Some(0), _) => err("estimator.n_mc", "must be at least 1".into()),
            (_, Some(t)) if !(t > 0.0 && t <= 0.5) => {
                err("estimator.sigma_y", "must lie in (0, 0.5]".into())
            }
            (Some(n), Some(t)) if mc_sample_size(t).ok() != Some(n) => {
                err("estimator.n_mc", format!("conflicts with sigma_y = {t}"))
            }
            _ => {}
        }
        if e.batch_size == 0 {
            err("estimator.batch_size", "must be at least 1".into());
        }
        if !(e.tolerance >= 0.0 && e.tolerance.is_finite()) {
            err(
                "estimator.tolerance",
                "must be finite and nonnegative".into(),
            );
        }
        if !(e.safety_factor > 0.0 && e.safety_factor.is_finite()) {
            err("estimator.safety_factor", "must be positive".into());
        }
        if e.initial_training == 0
            && matches!(
                e.method,
                RunMethod::GprHybrid | RunMethod::GprHybridSorted | RunMethod::Sweep
            )
        {
            err("estimator.initial_training", "must be at least 1".into());
        }
        if e.method == RunMethod::GprHybridSorted && e.sorting == Sorting::None {
            err(
                "estimator.sorting",
                "gpr-hybrid-sorted needs egl or hybrid".into(),
            );
        }
        if e.workers == Some(0) {
            err("estimator.workers", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&e.audit_fraction) {
            err("estimator.audit_fraction", "must lie in [0, 1]".into());
        }
        if let Err(x) = e.kernel.validate() {
            err("estimator.kernel", x.to_string());
        }
    }

    fn clauses(&self) -> Vec<Clause> {
        self.spec
            .iter()
            .map(|c| Clause {
                threshold_db: c.threshold_db,
                direction: c.direction,
                frequencies: c
                    .frequencies
                    .clone()
                    .unwrap_or_else(|| (0..self.frequency.count).collect()),
            })
            .collect()
    }

    pub fn settings(&self) -> EstimatorSettings {
        let e = &self.estimator;
        EstimatorSettings {
            n_mc: self.resolved_n_mc().unwrap_or(0),
            batch_size: e.batch_size,
            tolerance: e.tolerance,
            sorting: e.sorting,
            reevaluate_noncritical: e.reevaluate_noncritical,
            initial_training: e.initial_training,
            seed: e.seed,
            hybrid: HybridSettings {
                safety_factor: e.safety_factor,
                short_circuit: e.short_circuit,
            },
            kernel: e.kernel,
            optimizer_restarts: e.optimizer_restarts,
            retune_online: e.retune_online,
            online_updates: true,
            workers: e.workers.unwrap_or(e.batch_size),
            audit_fraction: e.audit_fraction,
        }
    }

    /// Validates and constructs the problem objects.
    pub fn build(&self) -> Result<Built, ConfigError> {
        let diagnostics = self.validate();
        if !diagnostics.is_empty() {
            return Err(ConfigError::Invalid(diagnostics));
        }
        let invalid = |path: &str, e: String| {
            ConfigError::Invalid(vec![Diagnostic {
                path: path.into(),
                message: e,
            }])
        };
        let d = &self.distribution;
        let mut distribution = match (&d.std, &d.covariance) {
            (Some(s), _) => {
                TruncatedGaussian::diagonal(d.mean.clone(), s, d.lower.clone(), d.upper.clone())
            }
            (_, Some(c)) => {
                let n = d.mean.len();
                TruncatedGaussian::new(
                    d.mean.clone(),
                    DMatrix::from_fn(n, n, |i, j| c[i][j]),
                    d.lower.clone(),
                    d.upper.clone(),
                )
            }
            _ => unreachable!("validated"),
        }
        .map_err(|e| invalid("distribution", e.to_string()))?;
        if d.scale != 1.0 {
            distribution = distribution
                .scaled(d.scale)
                .map_err(|e| invalid("distribution.scale", e.to_string()))?;
        }
        let [lo, hi] = self.frequency.band_ghz;
        let grid = FrequencyGrid::from_ghz(lo, hi, self.frequency.count)
            .map_err(|e| invalid("frequency", e.to_string()))?;
        let spec = PerformanceSpec::from_clauses(&self.clauses(), grid.len())
            .map_err(|e| invalid("spec", e.to_string()))?;
        let oracle: Box<dyn Oracle> = match &self.oracle {
            OracleConfig::Waveguide {
                width_mm,
                length_mm,
            } => Box::new(
                WaveguideOracle::new(
                    WaveguideGeometry {
                        width_mm: *width_mm,
                        length_mm: *length_mm,
                    },
                    grid,
                )
                .map_err(|e| invalid("oracle", e.to_string()))?,
            ),
            OracleConfig::Blackbox {
                command,
                args,
                working_dir,
                timeout_ms,
                pool_size,
            } => Box::new(BlackboxOracle::new(
                BlackboxEndpoint {
                    command: command.clone(),
                    args: args.clone(),
                    working_dir: working_dir.clone(),
                    timeout_ms: *timeout_ms,
                    pool_size: *pool_size,
                    dimension: Some(d.mean.len()),
                },
                grid,
            )),
        };
        Ok(Built {
            distribution,
            spec,
            oracle,
            settings: self.settings(),
        })
    }
}

/// The benchmark waveguide configuration shipped with the crate.
pub const WAVEGUIDE_TOML: &str = include_str!("../configs/waveguide.toml");
