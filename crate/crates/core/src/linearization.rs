//! Affine surrogate from `d + 1` axis nodes, Monte Carlo on it, and the
//! covariance-scale sweep comparing it with pure MC and the GPR-hybrid
//! estimator.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{
    estimate_gpr_hybrid, estimate_pure_mc, EstimatorSettings, Method, Problem, RunReport,
    SampleRecord,
};
use crate::hybrid::{Band, ClassificationOutcome, PerformanceSpec, Verdict};
use crate::oracle::{to_db, CostUnit, EvalCounters, Oracle};
use crate::{Error, Result};

/// `S(p) ~ a_0 + sum_k a_k p_k` for the real and imaginary part at every
/// frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    pub anchor: Vec<f64>,
    pub step: f64,
    /// Per frequency: coefficients of the real and of the imaginary part.
    pub coefficients: Vec<[Vec<f64>; 2]>,
}

impl LinearSurrogate {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn frequencies(&self) -> usize {
        self.coefficients.len()
    }

    /// Construction nodes: the anchor and one step along every axis.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        axis_nodes(&self.anchor, self.step)
    }

    pub fn eval(&self, p: &[f64], frequency: usize) -> Complex64 {
        let affine = |a: &[f64]| a[0] + a[1..].iter().zip(p).map(|(c, x)| c * x).sum::<f64>();
        let [re, im] = &self.coefficients[frequency];
        Complex64::new(affine(re), affine(im))
    }
}

fn axis_nodes(anchor: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut nodes = vec![anchor.to_vec()];
    for k in 0..anchor.len() {
        let mut p = anchor.to_vec();
        p[k] += step;
        nodes.push(p);
    }
    nodes
}

/// Evaluates the oracle at `anchor` and `anchor + step e_k` (one call per
/// node, `d + 1` in total) and interpolates every channel exactly.
pub fn build_linear(anchor: &[f64], step: f64, oracle: &dyn Oracle) -> Result<LinearSurrogate> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Settings(format!(
            "linearization step must be positive, got {step}"
        )));
    }
    if anchor.is_empty() || anchor.iter().any(|v| !v.is_finite()) {
        return Err(Error::Settings(
            "linearization anchor must be a nonempty finite vector".into(),
        ));
    }
    let nodes = axis_nodes(anchor, step);
    let values = nodes
        .par_iter()
        .map(|p| oracle.eval_all(p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let d = anchor.len();
    let system = DMatrix::from_fn(
        d + 1,
        d + 1,
        |r, c| if c == 0 { 1.0 } else { nodes[r][c - 1] },
    );
    let lu = system.lu();
    let solve = |rhs: Vec<f64>| -> Result<Vec<f64>> {
        lu.solve(&DVector::from_vec(rhs))
            .map(|a| a.as_slice().to_vec())
            .ok_or_else(|| Error::Settings("linearization nodes are singular".into()))
    };
    let coefficients = (0..oracle.grid().len())
        .map(|j| {
            let re = solve(values.iter().map(|v| v.0[j].re).collect())?;
            let im = solve(values.iter().map(|v| v.0[j].im).collect())?;
            Ok([re, im])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearSurrogate {
        anchor: anchor.to_vec(),
        step,
        coefficients,
    })
}

fn classify_linear(
    p: &[f64],
    model: &LinearSurrogate,
    spec: &PerformanceSpec,
    short_circuit: bool,
) -> ClassificationOutcome {
    let mut out = ClassificationOutcome {
        verdict: Verdict::Accepted,
        critical_frequencies: Vec::new(),
        hf_values: Vec::new(),
        stop_frequency: None,
        hf_cost: 0,
        surrogate_bands: Vec::new(),
    };
    for j in 0..spec.len() {
        let db = to_db(model.eval(p, j).norm());
        out.surrogate_bands.push((
            j,
            Band {
                mean_db: db,
                lo_db: db,
                hi_db: db,
            },
        ));
        if !spec.limit(j).holds(db) {
            out.verdict = Verdict::Rejected;
            out.stop_frequency.get_or_insert(j);
            if short_circuit {
                break;
            }
        }
    }
    out
}

/// Classifies the Monte Carlo sample on a linear model anchored at the
/// distribution mean. The HF cost is the `d + 1` construction calls.
pub fn estimate_linearized(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
    step: f64,
) -> Result<RunReport> {
    settings.validate()?;
    let model = build_linear(problem.distribution.mean(), step, problem.oracle)?;
    estimate_on_linear(problem, settings, &model)
}

/// Monte Carlo on an already built linear model.
pub fn estimate_on_linear(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
    model: &LinearSurrogate,
) -> Result<RunReport> {
    if model.dim() != problem.distribution.dim() || model.frequencies() != problem.spec.len() {
        return Err(Error::Settings(
            "linear model does not match the problem".into(),
        ));
    }
    let points = problem.distribution.sample(settings.n_mc, settings.seed)?;
    let records: Vec<SampleRecord> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| SampleRecord {
            index: i,
            position: i,
            outcome: classify_linear(p, model, problem.spec, settings.hybrid.short_circuit),
        })
        .collect();
    let mut counters = EvalCounters::new(CostUnit::SolverCalls, settings.batch_size as u64);
    counters.hf_offline = model.nodes().len() as u64;
    let n = records.len();
    let accepted = records
        .iter()
        .filter(|r| r.outcome.verdict == Verdict::Accepted)
        .count();
    let y = accepted as f64 / n as f64;
    Ok(RunReport {
        method: Method::Linearized,
        yield_estimate: y,
        accepted,
        n_mc: n,
        std_bound: 0.5 / (n as f64).sqrt(),
        std_estimate: (y * (1.0 - y) / n as f64).sqrt(),
        counters,
        training_sizes: Vec::new(),
        batches: Vec::new(),
        hf_growth: Vec::new(),
        audit: None,
        records,
    })
}

/// Default step sizes of the sweep, in parameter units.
pub const DEFAULT_STEPS: [f64; 3] = [0.1, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub upsilon: f64,
    pub yield_mc: f64,
    pub yield_gprh: f64,
    /// One entry per step, in the order given.
    pub yield_lin: Vec<f64>,
    /// Verdicts of the GPR-hybrid run that differ from pure MC.
    pub gprh_mismatches: usize,
}

impl SweepRow {
    /// Largest `|yield_lin - yield_mc|` over the steps.
    pub fn max_linear_deviation(&self) -> f64 {
        self.yield_lin
            .iter()
            .map(|y| (y - self.yield_mc).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub steps: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "upsilon".to_string(),
            "yield_mc".into(),
            "yield_gprh".into(),
        ];
        header.extend(self.steps.iter().map(|s| format!("yield_lin@{s}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.upsilon.to_string(),
                r.yield_mc.to_string(),
                r.yield_gprh.to_string(),
            ];
            rec.extend(r.yield_lin.iter().map(|y| y.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

/// For each covariance scale: pure MC, GPR-hybrid and linearized yields on
/// the same sample sequence. Linear models are built once; they do not
/// depend on the scale.
pub fn upsilon_sweep(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
    upsilons: &[f64],
    steps: &[f64],
) -> Result<SweepTable> {
    if let Some(u) = upsilons.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(Error::Settings(format!(
            "covariance scale {u} outside [0, 1]"
        )));
    }
    let models = steps
        .iter()
        .map(|&s| build_linear(problem.distribution.mean(), s, problem.oracle))
        .collect::<Result<Vec<_>>>()?;
    let rows = upsilons
        .iter()
        .map(|&u| {
            let dist = problem.distribution.scaled(u)?;
            let scaled = Problem {
                distribution: &dist,
                ..problem
            };
            let mc = estimate_pure_mc(scaled, settings)?;
            let gprh = estimate_gpr_hybrid(scaled, settings)?;
            let yield_lin = models
                .iter()
                .map(|m| estimate_on_linear(scaled, settings, m).map(|r| r.yield_estimate))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                upsilon: u,
                yield_mc: mc.yield_estimate,
                yield_gprh: gprh.yield_estimate,
                yield_lin,
                gprh_mismatches: mc
                    .verdicts()
                    .iter()
                    .zip(gprh.verdicts())
                    .filter(|(a, b)| **a != *b)
                    .count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        steps: steps.to_vec(),
        rows,
    })
}
