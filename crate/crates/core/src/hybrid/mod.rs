//! Three-way classification of a sample point against the performance
//! specification using surrogate predictions with a `gamma * sigma` buffer,
//! escalating undecided (critical) frequencies to the high-fidelity oracle.

mod surrogate;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::oracle::{to_db, CostUnit, Oracle, MIN_MAGNITUDE};

pub use surrogate::{ChannelPair, ChannelPrediction, Surrogate, SurrogateBank};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("specification has no clauses")]
    Empty,
    #[error("clause {clause}: threshold must be finite")]
    Threshold { clause: usize },
    #[error("clause {clause}: frequency index {index} outside grid of {len} points")]
    Index {
        clause: usize,
        index: usize,
        len: usize,
    },
    #[error("frequency index {index} is claimed by more than one clause")]
    Overlap { index: usize },
    #[error("frequency index {index} is not covered by any clause")]
    Uncovered { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `|S| <= c` in dB.
    #[serde(rename = "le")]
    AtMost,
    /// `|S| >= c` in dB.
    #[serde(rename = "ge")]
    AtLeast,
}

/// Decision of a surrogate band against one limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandVerdict {
    Pass,
    Fail,
    Critical,
}

/// Threshold and inequality applying at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limit {
    pub threshold_db: f64,
    pub direction: Direction,
}

impl Limit {
    pub fn holds(&self, db: f64) -> bool {
        match self.direction {
            Direction::AtMost => db <= self.threshold_db,
            Direction::AtLeast => db >= self.threshold_db,
        }
    }

    pub fn judge(&self, band: &Band) -> BandVerdict {
        let c = self.threshold_db;
        match self.direction {
            Direction::AtMost if band.hi_db <= c => BandVerdict::Pass,
            Direction::AtMost if band.lo_db > c => BandVerdict::Fail,
            Direction::AtLeast if band.lo_db >= c => BandVerdict::Pass,
            Direction::AtLeast if band.hi_db < c => BandVerdict::Fail,
            _ => BandVerdict::Critical,
        }
    }
}

/// A threshold on a subset of the grid frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub threshold_db: f64,
    pub direction: Direction,
    pub frequencies: Vec<usize>,
}

/// The performance feature specification resolved to one limit per grid
/// frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSpec {
    limits: Vec<Limit>,
}

impl PerformanceSpec {
    /// One limit on every frequency of a grid with `frequencies` points.
    pub fn uniform(
        threshold_db: f64,
        direction: Direction,
        frequencies: usize,
    ) -> Result<Self, SpecError> {
        Self::from_clauses(
            &[Clause {
                threshold_db,
                direction,
                frequencies: (0..frequencies).collect(),
            }],
            frequencies,
        )
    }

    /// Clauses must cover every frequency exactly once.
    pub fn from_clauses(clauses: &[Clause], frequencies: usize) -> Result<Self, SpecError> {
        if clauses.is_empty() {
            return Err(SpecError::Empty);
        }
        let mut limits: Vec<Option<Limit>> = vec![None; frequencies];
        for (ci, clause) in clauses.iter().enumerate() {
            if !clause.threshold_db.is_finite() {
                return Err(SpecError::Threshold { clause: ci });
            }
            for &index in &clause.frequencies {
                let slot = limits.get_mut(index).ok_or(SpecError::Index {
                    clause: ci,
                    index,
                    len: frequencies,
                })?;
                if slot.is_some() {
                    return Err(SpecError::Overlap { index });
                }
                *slot = Some(Limit {
                    threshold_db: clause.threshold_db,
                    direction: clause.direction,
                });
            }
        }
        let limits = limits
            .into_iter()
            .enumerate()
            .map(|(index, l)| l.ok_or(SpecError::Uncovered { index }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { limits })
    }

    pub fn len(&self) -> usize {
        self.limits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.limits.is_empty()
    }

    pub fn limit(&self, frequency: usize) -> Limit {
        self.limits[frequency]
    }

    /// First frequency whose true value violates the specification.
    pub fn first_violation(&self, values: &[Complex64]) -> Option<usize> {
        values
            .iter()
            .zip(&self.limits)
            .position(|(v, l)| !l.holds(to_db(v.norm())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridSettings {
    /// Width of the buffer zone in predicted standard deviations.
    pub safety_factor: f64,
    /// Stop testing a point's remaining frequencies once it is rejected.
    pub short_circuit: bool,
}

impl Default for HybridSettings {
    fn default() -> Self {
        Self {
            safety_factor: 2.0,
            short_circuit: true,
        }
    }
}

/// Surrogate prediction converted to a dB interval.
///
/// The real and imaginary channels are combined as `m = |(m_re, m_im)|` and
/// `sigma = |(sigma_re, sigma_im)|` in linear magnitude; the band is
/// `[m - gamma sigma, m + gamma sigma]` (lower end floored at
/// [`MIN_MAGNITUDE`]) in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean_db: f64,
    pub lo_db: f64,
    pub hi_db: f64,
}

impl Band {
    pub fn from_prediction(pred: &ChannelPrediction, gamma: f64) -> Self {
        let m = pred.real.mean.hypot(pred.imag.mean);
        let s = pred.real.std.hypot(pred.imag.std);
        Self {
            mean_db: to_db(m),
            lo_db: to_db((m - gamma * s).max(MIN_MAGNITUDE)),
            hi_db: to_db(m + gamma * s),
        }
    }

    pub fn contains(&self, db: f64) -> bool {
        self.lo_db <= db && db <= self.hi_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

/// Result of classifying one sample point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub verdict: Verdict,
    /// Frequencies escalated to the oracle, in grid order.
    pub critical_frequencies: Vec<usize>,
    /// Oracle values, parallel to `critical_frequencies`.
    #[serde(with = "complex_list")]
    pub hf_values: Vec<Complex64>,
    /// Frequency at which the point was rejected.
    pub stop_frequency: Option<usize>,
    /// High-fidelity cost of this point in the oracle's unit.
    pub hf_cost: u64,
    /// Bands of the frequencies decided by the surrogate alone.
    pub surrogate_bands: Vec<(usize, Band)>,
}

impl ClassificationOutcome {
    pub fn is_critical(&self) -> bool {
        !self.critical_frequencies.is_empty()
    }
}

mod complex_list {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| (c.re, c.im))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<(f64, f64)>::deserialize(d)?
            .into_iter()
            .map(|(re, im)| Complex64::new(re, im))
            .collect())
    }
}

/// What a [`PointClassifier`] needs next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    NeedsOracle(usize),
    Done,
}

/// Resumable classification of one point. [`advance`](Self::advance) walks the
/// frequencies on the surrogate until an oracle value is needed; the caller
/// supplies it with [`resolve`](Self::resolve) and advances again.
#[derive(Debug, Clone)]
pub struct PointClassifier {
    next: usize,
    pending: Option<usize>,
    done: bool,
    cached: Option<Vec<Complex64>>,
    outcome: ClassificationOutcome,
}

impl Default for PointClassifier {
    fn default() -> Self {
        Self::new()
    }
}

impl PointClassifier {
    pub fn new() -> Self {
        Self {
            next: 0,
            pending: None,
            done: false,
            cached: None,
            outcome: ClassificationOutcome {
                verdict: Verdict::Accepted,
                critical_frequencies: Vec::new(),
                hf_values: Vec::new(),
                stop_frequency: None,
                hf_cost: 0,
                surrogate_bands: Vec::new(),
            },
        }
    }

    fn reject(&mut self, frequency: usize, settings: &HybridSettings) {
        self.outcome.verdict = Verdict::Rejected;
        if self.outcome.stop_frequency.is_none() {
            self.outcome.stop_frequency = Some(frequency);
        }
        if settings.short_circuit {
            self.done = true;
        }
    }

    fn apply_oracle_value(
        &mut self,
        frequency: usize,
        value: Complex64,
        spec: &PerformanceSpec,
        settings: &HybridSettings,
    ) {
        self.outcome.critical_frequencies.push(frequency);
        self.outcome.hf_values.push(value);
        if !spec.limit(frequency).holds(to_db(value.norm())) {
            self.reject(frequency, settings);
        }
        self.next = frequency + 1;
    }

    pub fn advance<S: Surrogate + ?Sized>(
        &mut self,
        p: &[f64],
        surrogate: &S,
        spec: &PerformanceSpec,
        settings: &HybridSettings,
    ) -> Result<Step> {
        if let Some(j) = self.pending {
            return Ok(Step::NeedsOracle(j));
        }
        while !self.done && self.next < spec.len() {
            let j = self.next;
            let band = Band::from_prediction(&surrogate.predict(p, j)?, settings.safety_factor);
            match spec.limit(j).judge(&band) {
                BandVerdict::Pass => {
                    self.outcome.surrogate_bands.push((j, band));
                    self.next += 1;
                }
                BandVerdict::Fail => {
                    self.outcome.surrogate_bands.push((j, band));
                    self.next += 1;
                    self.reject(j, settings);
                }
                BandVerdict::Critical => {
                    if let Some(v) = self.cached.as_ref().map(|c| c[j]) {
                        self.apply_oracle_value(j, v, spec, settings);
                    } else {
                        self.pending = Some(j);
                        return Ok(Step::NeedsOracle(j));
                    }
                }
            }
        }
        self.done = true;
        Ok(Step::Done)
    }

    /// Evaluates the pending frequency on the oracle. Oracles that return
    /// every frequency per call are invoked at most once per point; later
    /// critical frequencies reuse that answer.
    pub fn resolve<O: Oracle + ?Sized>(
        &mut self,
        p: &[f64],
        oracle: &O,
        spec: &PerformanceSpec,
        settings: &HybridSettings,
    ) -> Result<()> {
        let Some(j) = self.pending.take() else {
            return Ok(());
        };
        let value = match oracle.cost_unit() {
            CostUnit::FrequencyEvaluations => {
                let v = oracle.eval_at(p, j);
                let v = v.inspect_err(|_| self.pending = Some(j))?;
                self.outcome.hf_cost += 1;
                v
            }
            CostUnit::SolverCalls => {
                let all = oracle.eval_all(p).inspect_err(|_| self.pending = Some(j))?;
                self.outcome.hf_cost += 1;
                let v = all.0[j];
                self.cached = Some(all.0);
                v
            }
        };
        self.apply_oracle_value(j, value, spec, settings);
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn finish(self) -> ClassificationOutcome {
        debug_assert!(self.done);
        self.outcome
    }
}

/// Classifies one point, escalating critical frequencies to `oracle`.
pub fn classify<S: Surrogate + ?Sized, O: Oracle + ?Sized>(
    p: &[f64],
    surrogate: &S,
    spec: &PerformanceSpec,
    settings: &HybridSettings,
    oracle: &O,
) -> Result<ClassificationOutcome> {
    let mut c = PointClassifier::new();
    while let Step::NeedsOracle(_) = c.advance(p, surrogate, spec, settings)? {
        c.resolve(p, oracle, spec, settings)?;
    }
    Ok(c.finish())
}

/// `|mean - c| / sigma` with the conventions `0/0 = 0` and `x/0 = inf`.
pub fn egl_term(mean_db: f64, sigma_db: f64, threshold_db: f64) -> f64 {
    let dist = (mean_db - threshold_db).abs();
    if dist == 0.0 {
        0.0
    } else if sigma_db.abs() == 0.0 {
        f64::INFINITY
    } else {
        dist / sigma_db.abs()
    }
}

/// `(c - lo) (hi - c)`: positive exactly when `c` lies strictly inside the band.
pub fn hybrid_term(lo_db: f64, hi_db: f64, threshold_db: f64) -> f64 {
    (threshold_db - lo_db) * (hi_db - threshold_db)
}

/// EGL term of one frequency's prediction.
pub fn egl_score(pred: &ChannelPrediction, threshold_db: f64) -> f64 {
    let band = Band::from_prediction(pred, 1.0);
    egl_term(band.mean_db, 0.5 * (band.hi_db - band.lo_db), threshold_db)
}

/// Hybrid term of one frequency's prediction.
pub fn hybrid_score(pred: &ChannelPrediction, threshold_db: f64, gamma: f64) -> f64 {
    let band = Band::from_prediction(pred, gamma);
    hybrid_term(band.lo_db, band.hi_db, threshold_db)
}

/// Minimum over frequencies of the distance between predicted dB value and
/// threshold in units of the predicted dB standard deviation. The dB
/// standard deviation is the half-width of the one-sigma band in dB. Sort
/// ascending.
pub fn egl_criterion<S: Surrogate + ?Sized>(
    p: &[f64],
    surrogate: &S,
    spec: &PerformanceSpec,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for j in 0..spec.len() {
        best = best.min(egl_score(
            &surrogate.predict(p, j)?,
            spec.limit(j).threshold_db,
        ));
    }
    Ok(best)
}

/// Maximum over frequencies of `(c - lo)(hi - c)` on the classification
/// band; positive exactly for points critical at some frequency. Sort
/// descending.
pub fn hybrid_criterion<S: Surrogate + ?Sized>(
    p: &[f64],
    surrogate: &S,
    spec: &PerformanceSpec,
    settings: &HybridSettings,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for j in 0..spec.len() {
        best = best.max(hybrid_score(
            &surrogate.predict(p, j)?,
            spec.limit(j).threshold_db,
            settings.safety_factor,
        ));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{GprError, Prediction};
    use crate::oracle::{FrequencyGrid, OracleError, SParamSample};
    use std::sync::atomic::{AtomicU64, Ordering};

    /// Surrogate with prescribed dB bands (for gamma = `GAMMA`) per frequency.
    struct Bands(Vec<(f64, f64)>);
    const GAMMA: f64 = 2.0;

    impl Surrogate for Bands {
        fn frequencies(&self) -> usize {
            self.0.len()
        }
        fn predict(&self, _p: &[f64], j: usize) -> Result<ChannelPrediction, GprError> {
            let (lo, hi) = self.0[j];
            let (a, b) = (10f64.powf(lo / 20.0), 10f64.powf(hi / 20.0));
            Ok(ChannelPrediction {
                real: Prediction {
                    mean: 0.5 * (a + b),
                    std: 0.5 * (b - a) / GAMMA,
                },
                imag: Prediction {
                    mean: 0.0,
                    std: 0.0,
                },
            })
        }
    }

    struct Fixed {
        grid: FrequencyGrid,
        db: Vec<f64>,
        unit: CostUnit,
        calls: AtomicU64,
    }

    impl Fixed {
        fn new(db: Vec<f64>, unit: CostUnit) -> Self {
            let grid = FrequencyGrid::equidistant(1.0, 2.0, db.len()).unwrap();
            Self {
                grid,
                db,
                unit,
                calls: AtomicU64::new(0),
            }
        }
    }

    impl Oracle for Fixed {
        fn grid(&self) -> &FrequencyGrid {
            &self.grid
        }
        fn cost_unit(&self) -> CostUnit {
            self.unit
        }
        fn eval_at(&self, _p: &[f64], j: usize) -> Result<Complex64, OracleError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            Ok(Complex64::new(10f64.powf(self.db[j] / 20.0), 0.0))
        }
        fn eval_all(&self, _p: &[f64]) -> Result<SParamSample, OracleError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            Ok(SParamSample(
                self.db
                    .iter()
                    .map(|d| Complex64::new(10f64.powf(d / 20.0), 0.0))
                    .collect(),
            ))
        }
        fn invocations(&self) -> u64 {
            self.calls.load(Ordering::Relaxed)
        }
    }

    fn spec(n: usize) -> PerformanceSpec {
        PerformanceSpec::uniform(-24.0, Direction::AtMost, n).unwrap()
    }

    fn settings() -> HybridSettings {
        HybridSettings {
            safety_factor: GAMMA,
            short_circuit: true,
        }
    }

    #[test]
    fn band_inside_spec_is_accepted_without_oracle() {
        let o = Fixed::new(vec![0.0; 3], CostUnit::FrequencyEvaluations);
        let out = classify(
            &[0.0],
            &Bands(vec![(-32.0, -28.0); 3]),
            &spec(3),
            &settings(),
            &o,
        )
        .unwrap();
        assert_eq!(out.verdict, Verdict::Accepted);
        assert_eq!(out.hf_cost, 0);
        assert_eq!(o.invocations(), 0);
    }

    #[test]
    fn band_outside_spec_rejects_at_first_frequency() {
        let o = Fixed::new(vec![0.0; 3], CostUnit::FrequencyEvaluations);
        let out = classify(
            &[0.0],
            &Bands(vec![(-22.0, -18.0); 3]),
            &spec(3),
            &settings(),
            &o,
        )
        .unwrap();
        assert_eq!(out.verdict, Verdict::Rejected);
        assert_eq!(out.stop_frequency, Some(0));
        assert_eq!(out.hf_cost, 0);
        assert_eq!(out.surrogate_bands.len(), 1);
    }

    #[test]
    fn straddling_band_escalates() {
        let o = Fixed::new(vec![-24.5, -30.0], CostUnit::FrequencyEvaluations);
        let s = Bands(vec![(-26.5, -22.5), (-32.0, -28.0)]);
        let out = classify(&[0.0], &s, &spec(2), &settings(), &o).unwrap();
        assert_eq!(out.verdict, Verdict::Accepted);
        assert_eq!(out.critical_frequencies, vec![0]);
        assert_eq!(out.hf_cost, 1);
        assert!((to_db(out.hf_values[0].norm()) + 24.5).abs() < 1e-12);
        // the oracle says no
        let o = Fixed::new(vec![-23.0, -30.0], CostUnit::FrequencyEvaluations);
        let out = classify(&[0.0], &s, &spec(2), &settings(), &o).unwrap();
        assert_eq!(
            (out.verdict, out.stop_frequency),
            (Verdict::Rejected, Some(0))
        );
    }

    #[test]
    fn per_call_oracle_is_invoked_once_per_point() {
        let o = Fixed::new(vec![-25.0; 4], CostUnit::SolverCalls);
        let s = Bands(vec![(-26.5, -22.5); 4]);
        let out = classify(&[0.0], &s, &spec(4), &settings(), &o).unwrap();
        assert_eq!(out.critical_frequencies, vec![0, 1, 2, 3]);
        assert_eq!(out.hf_cost, 1);
        assert_eq!(o.invocations(), 1);
    }

    #[test]
    fn short_circuit_only_changes_work() {
        let s = Bands(vec![(-22.0, -18.0), (-26.5, -22.5), (-22.0, -18.0)]);
        let o = Fixed::new(vec![-20.0, -25.0, -20.0], CostUnit::FrequencyEvaluations);
        let on = classify(&[0.0], &s, &spec(3), &settings(), &o).unwrap();
        let off = classify(
            &[0.0],
            &s,
            &spec(3),
            &HybridSettings {
                short_circuit: false,
                ..settings()
            },
            &o,
        )
        .unwrap();
        assert_eq!(on.verdict, off.verdict);
        assert_eq!(on.stop_frequency, off.stop_frequency);
        assert_eq!((on.hf_cost, off.hf_cost), (0, 1));
    }

    #[test]
    fn at_least_clause_mirrors() {
        let spec = PerformanceSpec::uniform(-1.0, Direction::AtLeast, 1).unwrap();
        let o = Fixed::new(vec![-0.5], CostUnit::SolverCalls);
        let cases = [
            ((-0.8, -0.2), Verdict::Accepted, 0),
            ((-3.0, -2.0), Verdict::Rejected, 0),
            ((-1.5, -0.5), Verdict::Accepted, 1),
        ];
        for ((lo, hi), verdict, cost) in cases {
            let out = classify(&[0.0], &Bands(vec![(lo, hi)]), &spec, &settings(), &o).unwrap();
            assert_eq!((out.verdict, out.hf_cost), (verdict, cost));
        }
    }

    #[test]
    fn zero_sigma_never_escalates() {
        let band = Band::from_prediction(
            &ChannelPrediction {
                real: Prediction {
                    mean: 0.05,
                    std: 0.0,
                },
                imag: Prediction {
                    mean: 0.01,
                    std: 0.0,
                },
            },
            2.0,
        );
        assert_eq!(band.lo_db, band.hi_db);
        assert_ne!(spec(1).limit(0).judge(&band), BandVerdict::Critical);
    }

    #[test]
    fn criterion_terms() {
        assert_eq!(egl_term(-20.0, 2.0, -24.0), 2.0);
        assert_eq!(egl_term(-24.0, 1.0, -24.0), 0.0);
        assert_eq!(egl_term(-20.0, 0.0, -24.0), f64::INFINITY);
        assert!((hybrid_term(-26.5, -22.5, -24.0) - 3.75).abs() < 1e-12);
        assert_eq!(hybrid_term(-32.0, -28.0, -24.0), -32.0);
    }

    #[test]
    fn criteria_over_frequencies() {
        let s = Bands(vec![(-32.0, -28.0), (-26.5, -22.5)]);
        let h = hybrid_criterion(&[0.0], &s, &spec(2), &settings()).unwrap();
        assert!((h - 3.75).abs() < 1e-9);
        let s = Bands(vec![(-32.0, -28.0), (-40.0, -36.0)]);
        let h = hybrid_criterion(&[0.0], &s, &spec(2), &settings()).unwrap();
        assert!((h + 32.0).abs() < 1e-9);
        let egl = egl_criterion(&[0.0], &s, &spec(2)).unwrap();
        assert!(egl.is_finite() && egl > 0.0);
    }

    #[test]
    fn spec_coverage_rules() {
        let c = |t: f64, f: Vec<usize>| Clause {
            threshold_db: t,
            direction: Direction::AtMost,
            frequencies: f,
        };
        assert_eq!(
            PerformanceSpec::from_clauses(&[c(-1.0, vec![0, 1])], 3),
            Err(SpecError::Uncovered { index: 2 })
        );
        assert_eq!(
            PerformanceSpec::from_clauses(&[c(-1.0, vec![0, 1]), c(-2.0, vec![1, 2])], 3),
            Err(SpecError::Overlap { index: 1 })
        );
        assert!(matches!(
            PerformanceSpec::from_clauses(&[c(-1.0, vec![0, 4])], 3),
            Err(SpecError::Index { .. })
        ));
        assert_eq!(
            PerformanceSpec::from_clauses(&[c(f64::NAN, vec![0])], 1),
            Err(SpecError::Threshold { clause: 0 })
        );
        let two = PerformanceSpec::from_clauses(
            &[
                c(-20.0, vec![2, 3]),
                Clause {
                    threshold_db: -1.0,
                    direction: Direction::AtLeast,
                    frequencies: vec![0, 1],
                },
            ],
            4,
        )
        .unwrap();
        assert_eq!(two.limit(0).direction, Direction::AtLeast);
        assert_eq!(two.limit(3).threshold_db, -20.0);
    }
}
