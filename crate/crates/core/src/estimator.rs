//! Monte Carlo yield estimation: pure MC on the oracle and the GPR-hybrid
//! estimator with batched greedy model updates and optional sorting.

use std::collections::VecDeque;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::TruncatedGaussian;
use crate::gpr::KernelParams;
use crate::hybrid::{
    egl_score, hybrid_score, ChannelPair, ClassificationOutcome, HybridSettings, PerformanceSpec,
    PointClassifier, Step, Surrogate, SurrogateBank, Verdict,
};
use crate::oracle::{to_db, CostUnit, EvalCounters, Oracle};
use crate::{Error, Result};

/// Order in which the Monte Carlo sample is worked through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sorting {
    #[default]
    None,
    /// Ascending distance to the threshold in predicted standard deviations.
    Egl,
    /// Descending `(c - lo)(hi - c)` over the classification band.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mc,
    GprHybrid,
    GprHybridSorted,
    Linearized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub n_mc: usize,
    pub batch_size: usize,
    pub tolerance: f64,
    pub sorting: Sorting,
    pub reevaluate_noncritical: bool,
    pub initial_training: usize,
    pub seed: u64,
    pub hybrid: HybridSettings,
    pub kernel: KernelParams,
    /// Random restarts of the hyperparameter search on top of the incoming values.
    pub optimizer_restarts: usize,
    /// Re-tune the hyperparameters of a model after online insertions. Off:
    /// the offline hyperparameters are kept and only the training set grows.
    pub retune_online: bool,
    /// Off freezes the offline models for the whole run.
    pub online_updates: bool,
    /// Worker threads for oracle calls and surrogate predictions.
    pub workers: usize,
    /// Fraction of surrogate-decided points re-checked on the oracle after the
    /// run. Not counted as HF work.
    pub audit_fraction: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            n_mc: 2500,
            batch_size: 50,
            tolerance: 0.0,
            sorting: Sorting::None,
            reevaluate_noncritical: false,
            initial_training: 10,
            seed: 0,
            hybrid: HybridSettings::default(),
            kernel: KernelParams::default(),
            optimizer_restarts: 10,
            retune_online: true,
            online_updates: true,
            workers: 1,
            audit_fraction: 0.0,
        }
    }
}

impl EstimatorSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Settings(m.to_string()));
        if self.n_mc == 0 {
            return bad("n_mc must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance must be finite and nonnegative");
        }
        if !(self.hybrid.safety_factor > 0.0 && self.hybrid.safety_factor.is_finite()) {
            return bad("safety_factor must be positive");
        }
        if !(0.0..=1.0).contains(&self.audit_fraction) {
            return bad("audit_fraction must lie in [0, 1]");
        }
        self.kernel.validate()?;
        Ok(())
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::Settings(format!("cannot start worker threads: {e}")))
    }
}

/// A yield problem: parameter distribution, specification and oracle.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub distribution: &'a TruncatedGaussian,
    pub spec: &'a PerformanceSpec,
    pub oracle: &'a dyn Oracle,
}

impl Problem<'_> {
    fn check(&self) -> Result<()> {
        let nf = self.oracle.grid().len();
        if self.spec.len() != nf {
            return Err(Error::Settings(format!(
                "specification covers {} frequencies, oracle grid has {nf}",
                self.spec.len()
            )));
        }
        if let Some(d) = self.oracle.dimension() {
            if d != self.distribution.dim() {
                return Err(Error::Settings(format!(
                    "distribution has {} parameters, oracle expects {d}",
                    self.distribution.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Smallest sample size whose worst-case standard deviation `0.5/sqrt(N)`
/// does not exceed `target_std`.
pub fn mc_sample_size(target_std: f64) -> Result<usize> {
    if !(target_std > 0.0 && target_std <= 0.5) {
        return Err(Error::Settings(format!(
            "target standard deviation {target_std} outside (0, 0.5]"
        )));
    }
    let ok = |n: f64| 0.5 / n.sqrt() <= target_std;
    let mut n = (0.5 / target_std).powi(2).ceil().max(1.0);
    while n > 1.0 && ok(n - 1.0) {
        n -= 1.0;
    }
    while !ok(n) {
        n += 1.0;
    }
    Ok(n as usize)
}

/// Greedy insertions performed for one frequency during one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyUpdate {
    pub frequency: usize,
    pub candidates: usize,
    pub added: usize,
    /// Maximum dB error over the not yet inserted candidates, before each
    /// insertion and once after the last.
    pub max_error_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    /// Online HF count that triggered the update.
    pub online_hf: u64,
    /// Samples considered so far.
    pub considered: usize,
    pub frequencies: Vec<FrequencyUpdate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    /// Position in the order the sample was worked through.
    pub position: usize,
    #[serde(flatten)]
    pub outcome: ClassificationOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub considered: usize,
    pub hf_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checked: usize,
    pub oracle_calls: usize,
    /// Surrogate bands that did not contain the true dB value.
    pub band_violations: usize,
    /// Audited points whose verdict differs from the oracle's.
    pub verdict_mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    #[serde(rename = "yield")]
    pub yield_estimate: f64,
    pub accepted: usize,
    pub n_mc: usize,
    /// Worst-case standard deviation `0.5/sqrt(N_MC)`.
    pub std_bound: f64,
    /// `sqrt(Y(1-Y)/N_MC)` at the estimate.
    pub std_estimate: f64,
    pub counters: EvalCounters,
    pub training_sizes: Vec<usize>,
    pub batches: Vec<BatchLog>,
    pub hf_growth: Vec<GrowthPoint>,
    pub audit: Option<AuditReport>,
    /// One record per sample, in sample order.
    pub records: Vec<SampleRecord>,
}

impl RunReport {
    fn assemble(
        method: Method,
        records: Vec<SampleRecord>,
        counters: EvalCounters,
        training_sizes: Vec<usize>,
        batches: Vec<BatchLog>,
        hf_growth: Vec<GrowthPoint>,
    ) -> Self {
        let n = records.len();
        let accepted = records
            .iter()
            .filter(|r| r.outcome.verdict == Verdict::Accepted)
            .count();
        let y = accepted as f64 / n as f64;
        Self {
            method,
            yield_estimate: y,
            accepted,
            n_mc: n,
            std_bound: 0.5 / (n as f64).sqrt(),
            std_estimate: (y * (1.0 - y) / n as f64).sqrt(),
            counters,
            training_sizes,
            batches,
            hf_growth,
            audit: None,
            records,
        }
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.records.iter().map(|r| r.outcome.verdict).collect()
    }

    /// `N_MC |T_d|` (or `N_MC` for per-call oracles) over the total HF count.
    pub fn reduction_factor(&self, frequencies: usize) -> f64 {
        let per_point = match self.counters.unit {
            CostUnit::FrequencyEvaluations => frequencies,
            CostUnit::SolverCalls => 1,
        };
        (self.n_mc * per_point) as f64 / self.counters.hf_total().max(1) as f64
    }

    /// Writes `considered,hf_total` rows; row 0 holds the offline cost.
    pub fn write_hf_growth<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["considered", "hf_total"])?;
        w.write_record(["0".to_string(), self.counters.hf_offline.to_string()])?;
        for g in &self.hf_growth {
            w.write_record([g.considered.to_string(), g.hf_total.to_string()])?;
        }
        w.flush()
    }
}

fn training_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Classifies a point on the oracle alone.
fn classify_on_oracle(
    p: &[f64],
    spec: &PerformanceSpec,
    oracle: &dyn Oracle,
    short_circuit: bool,
) -> Result<ClassificationOutcome> {
    let mut out = ClassificationOutcome {
        verdict: Verdict::Accepted,
        critical_frequencies: Vec::new(),
        hf_values: Vec::new(),
        stop_frequency: None,
        hf_cost: 0,
        surrogate_bands: Vec::new(),
    };
    let all = match oracle.cost_unit() {
        CostUnit::SolverCalls => {
            out.hf_cost = 1;
            Some(oracle.eval_all(p)?.0)
        }
        CostUnit::FrequencyEvaluations => None,
    };
    for j in 0..spec.len() {
        let v = match &all {
            Some(a) => a[j],
            None => {
                out.hf_cost += 1;
                oracle.eval_at(p, j)?
            }
        };
        out.critical_frequencies.push(j);
        out.hf_values.push(v);
        if !spec.limit(j).holds(to_db(v.norm())) {
            out.verdict = Verdict::Rejected;
            out.stop_frequency.get_or_insert(j);
            if short_circuit {
                break;
            }
        }
    }
    Ok(out)
}

/// Classifies every sample on the oracle.
pub fn estimate_pure_mc(problem: Problem<'_>, settings: &EstimatorSettings) -> Result<RunReport> {
    settings.validate()?;
    problem.check()?;
    let points = problem.distribution.sample(settings.n_mc, settings.seed)?;
    let outcomes = settings.thread_pool()?.install(|| {
        points
            .par_iter()
            .map(|p| {
                classify_on_oracle(
                    p,
                    problem.spec,
                    problem.oracle,
                    settings.hybrid.short_circuit,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut counters = EvalCounters::new(problem.oracle.cost_unit(), settings.batch_size as u64);
    let mut growth = Vec::with_capacity(outcomes.len());
    let records = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, outcome)| {
            counters.hf_online += outcome.hf_cost;
            growth.push(GrowthPoint {
                considered: i + 1,
                hf_total: counters.hf_total(),
            });
            SampleRecord {
                index: i,
                position: i,
                outcome,
            }
        })
        .collect();
    Ok(RunReport::assemble(
        Method::Mc,
        records,
        counters,
        Vec::new(),
        Vec::new(),
        growth,
    ))
}

/// GPR-hybrid estimation working through the sample in drawing order.
pub fn estimate_gpr_hybrid(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
) -> Result<RunReport> {
    run_hybrid(problem, settings, Sorting::None)
}

/// GPR-hybrid estimation working through the sample by the sorting
/// criterion in `settings.sorting`, re-sorting after every model update.
pub fn estimate_sorted(problem: Problem<'_>, settings: &EstimatorSettings) -> Result<RunReport> {
    if settings.sorting == Sorting::None {
        return Err(Error::Settings(
            "sorted estimation needs sorting = egl or hybrid".into(),
        ));
    }
    run_hybrid(problem, settings, settings.sorting)
}

/// Builds the offline surrogate: draws and evaluates the initial training set.
pub fn offline_training(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
) -> Result<(SurrogateBank, EvalCounters)> {
    settings.validate()?;
    problem.check()?;
    if settings.initial_training == 0 {
        return Err(Error::Settings(
            "initial_training must be at least 1".into(),
        ));
    }
    let inputs = problem
        .distribution
        .sample(settings.initial_training, training_seed(settings.seed))?;
    let pool = settings.thread_pool()?;
    let values = pool.install(|| {
        inputs
            .par_iter()
            .map(|p| problem.oracle.eval_all(p))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let mut counters = EvalCounters::new(problem.oracle.cost_unit(), settings.batch_size as u64);
    counters.hf_offline = match counters.unit {
        CostUnit::FrequencyEvaluations => (inputs.len() * problem.oracle.grid().len()) as u64,
        CostUnit::SolverCalls => inputs.len() as u64,
    };
    let mut bank = SurrogateBank::fit(&inputs, &values, settings.kernel)?;
    if inputs.len() >= 2 {
        pool.install(|| bank.optimize(settings.optimizer_restarts))?;
    }
    Ok((bank, counters))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    index: usize,
    value: Complex64,
}

struct Engine<'a> {
    problem: Problem<'a>,
    settings: &'a EstimatorSettings,
    sorting: Sorting,
    pool: rayon::ThreadPool,
    points: Vec<Vec<f64>>,
    bank: SurrogateBank,
    counters: EvalCounters,
    outcomes: Vec<Option<(usize, ClassificationOutcome)>>,
    queue: VecDeque<usize>,
    candidates: Vec<Vec<Candidate>>,
    batches_done: u64,
    sort_terms: Vec<Vec<f64>>,
    /// Frequencies whose model changed since the queue was last sorted.
    stale: Vec<bool>,
    considered: usize,
    log: Vec<BatchLog>,
    growth: Vec<GrowthPoint>,
}

/// Points scanned per parallel surrogate pass while forming a group.
const SCAN_CHUNK: usize = 256;

impl<'a> Engine<'a> {
    /// HF cost bound of one point.
    fn max_point_cost(&self) -> u64 {
        match self.counters.unit {
            CostUnit::FrequencyEvaluations => self.problem.spec.len() as u64,
            CostUnit::SolverCalls => 1,
        }
    }

    /// Orders the queue by the sorting criterion. Per-frequency terms are
    /// cached and recomputed only for frequencies whose model changed.
    fn sort_queue(&mut self) -> Result<()> {
        if self.sorting == Sorting::None || self.queue.is_empty() {
            return Ok(());
        }
        let stale: Vec<usize> = (0..self.stale.len()).filter(|&j| self.stale[j]).collect();
        let (bank, spec, gamma, points) = (
            &self.bank,
            self.problem.spec,
            self.settings.hybrid.safety_factor,
            &self.points,
        );
        let sorting = self.sorting;
        let ids: Vec<usize> = self.queue.iter().copied().collect();
        let fresh = self.pool.install(|| {
            ids.par_iter()
                .map(|&i| {
                    stale
                        .iter()
                        .map(|&j| {
                            let pred = bank.predict(&points[i], j)?;
                            let c = spec.limit(j).threshold_db;
                            Ok(match sorting {
                                Sorting::Egl => egl_score(&pred, c),
                                // Negated so that both criteria sort ascending.
                                _ => -hybrid_score(&pred, c, gamma),
                            })
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (&i, terms) in ids.iter().zip(fresh) {
            for (&j, t) in stale.iter().zip(terms) {
                self.sort_terms[i][j] = t;
            }
        }
        self.stale.iter_mut().for_each(|s| *s = false);
        let terms = &self.sort_terms;
        let mut order: Vec<(f64, usize)> = ids
            .into_iter()
            .map(|i| (terms[i].iter().copied().fold(f64::INFINITY, f64::min), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.queue = order.into_iter().map(|(_, i)| i).collect();
        Ok(())
    }

    /// Takes the next points off the queue such that every included point is
    /// certain to be committed before the next model update: any number of
    /// points the surrogate decides alone, and as many oracle-needing points
    /// as fit into the remainder of the current batch at worst-case cost.
    fn form_group(&self) -> Result<Vec<(usize, PointClassifier, Step)>> {
        let batch = self.settings.batch_size as u64;
        let remaining = if self.settings.online_updates {
            batch - self.counters.hf_online % batch
        } else {
            u64::MAX
        };
        let hf_slots = remaining.div_ceil(self.max_point_cost());
        let mut group = Vec::new();
        let mut hf_points = 0u64;
        let (bank, spec, hs, points) = (
            &self.bank,
            self.problem.spec,
            &self.settings.hybrid,
            &self.points,
        );
        let ids: Vec<usize> = self.queue.iter().copied().collect();
        // Scan in growing chunks: oracle-needing points can be dense, and
        // anything scanned past the group's end is discarded.
        let mut start = 0;
        let mut width = SCAN_CHUNK.min(self.settings.workers.max(1) * 4);
        while start < ids.len() {
            let chunk = &ids[start..(start + width).min(ids.len())];
            start += chunk.len();
            width = (width * 2).min(SCAN_CHUNK);
            let scanned = self.pool.install(|| {
                chunk
                    .par_iter()
                    .map(|&i| {
                        let mut c = PointClassifier::new();
                        let step = c.advance(&points[i], bank, spec, hs)?;
                        Ok((i, c, step))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            for (i, c, step) in scanned {
                if let Step::NeedsOracle(_) = step {
                    if hf_points == hf_slots {
                        return Ok(group);
                    }
                    hf_points += 1;
                }
                group.push((i, c, step));
            }
        }
        Ok(group)
    }

    fn resolve_group(&self, group: &mut [(usize, PointClassifier, Step)]) -> Result<()> {
        let (bank, spec, hs, points, oracle) = (
            &self.bank,
            self.problem.spec,
            &self.settings.hybrid,
            &self.points,
            self.problem.oracle,
        );
        self.pool.install(|| {
            group.par_iter_mut().try_for_each(|(i, c, step)| {
                while let Step::NeedsOracle(_) = *step {
                    c.resolve(&points[*i], oracle, spec, hs)?;
                    *step = c.advance(&points[*i], bank, spec, hs)?;
                }
                Ok(())
            })
        })
    }

    fn run(mut self, method: Method) -> Result<RunReport> {
        self.sort_queue()?;
        while !self.queue.is_empty() {
            let mut group = self.form_group()?;
            self.resolve_group(&mut group)?;
            for (i, c, _) in group {
                let front = self.queue.pop_front();
                debug_assert_eq!(front, Some(i));
                let outcome = c.finish();
                self.counters.hf_online += outcome.hf_cost;
                for (&j, &value) in outcome.critical_frequencies.iter().zip(&outcome.hf_values) {
                    self.candidates[j].push(Candidate { index: i, value });
                }
                self.outcomes[i] = Some((self.considered, outcome));
                self.considered += 1;
                self.growth.push(GrowthPoint {
                    considered: self.considered,
                    hf_total: self.counters.hf_total(),
                });
                let batch = self.settings.batch_size as u64;
                if self.settings.online_updates
                    && self.counters.hf_online / batch > self.batches_done
                {
                    self.batches_done = self.counters.hf_online / batch;
                    self.update_models()?;
                    if self.settings.reevaluate_noncritical {
                        self.requeue_noncritical();
                    }
                    self.sort_queue()?;
                    // Remaining group members were classified on the old models.
                    break;
                }
            }
        }
        let records = self
            .outcomes
            .into_iter()
            .enumerate()
            .map(|(index, o)| {
                let (position, outcome) = o.expect("every sample is classified");
                SampleRecord {
                    index,
                    position,
                    outcome,
                }
            })
            .collect();
        Ok(RunReport::assemble(
            method,
            records,
            self.counters,
            self.bank.training_sizes(),
            self.log,
            self.growth,
        ))
    }

    fn requeue_noncritical(&mut self) {
        let queued: std::collections::HashSet<usize> = self.queue.iter().copied().collect();
        for (i, o) in self.outcomes.iter().enumerate() {
            if let Some((_, outcome)) = o {
                if !outcome.is_critical() && !queued.contains(&i) {
                    self.queue.push_back(i);
                }
            }
        }
    }

    fn update_models(&mut self) -> Result<()> {
        let tolerance = self.settings.tolerance;
        let retune = self
            .settings
            .retune_online
            .then_some(self.settings.optimizer_restarts);
        let points = &self.points;
        let candidates = std::mem::replace(
            &mut self.candidates,
            vec![Vec::new(); self.problem.spec.len()],
        );
        let pairs = self.bank.pairs_mut();
        let frequencies = self.pool.install(|| {
            pairs
                .par_iter_mut()
                .zip(candidates.into_par_iter())
                .enumerate()
                .map(|(j, (pair, cands))| greedy_update(j, pair, &cands, points, tolerance, retune))
                .collect::<Result<Vec<_>>>()
        })?;
        for f in &frequencies {
            self.stale[f.frequency] |= f.added > 0;
        }
        self.log.push(BatchLog {
            batch: self.log.len() + 1,
            online_hf: self.counters.hf_online,
            considered: self.considered,
            frequencies,
        });
        Ok(())
    }
}

/// Inserts candidates into one frequency's models, largest dB error first,
/// until the largest remaining error is at most `tolerance` or every
/// candidate has been inserted.
fn greedy_update(
    frequency: usize,
    pair: &mut ChannelPair,
    candidates: &[Candidate],
    points: &[Vec<f64>],
    tolerance: f64,
    retune: Option<usize>,
) -> Result<FrequencyUpdate> {
    let mut rest: Vec<Candidate> = Vec::with_capacity(candidates.len());
    for c in candidates {
        let p = &points[c.index];
        if !pair.real.contains_input(p) && !rest.iter().any(|r| points[r.index] == *p) {
            rest.push(*c);
        }
    }
    let mut out = FrequencyUpdate {
        frequency,
        candidates: candidates.len(),
        added: 0,
        max_error_db: Vec::new(),
    };
    while !rest.is_empty() {
        let mut worst = (f64::NEG_INFINITY, 0);
        for (k, c) in rest.iter().enumerate() {
            let predicted = pair.predict(&points[c.index])?.mean();
            let err = (to_db(predicted.norm()) - to_db(c.value.norm())).abs();
            if err > worst.0 {
                worst = (err, k);
            }
        }
        out.max_error_db.push(worst.0);
        if worst.0 <= tolerance {
            break;
        }
        let c = rest.remove(worst.1);
        pair.update(&points[c.index], c.value)?;
        out.added += 1;
    }
    if let (Some(restarts), true) = (retune, out.added > 0) {
        pair.optimize(restarts)?;
    }
    Ok(out)
}

fn run_hybrid(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
    sorting: Sorting,
) -> Result<RunReport> {
    let (bank, counters) = offline_training(problem, settings)?;
    let method = if sorting == Sorting::None {
        Method::GprHybrid
    } else {
        Method::GprHybridSorted
    };
    let mut report = run_online(problem, settings, sorting, bank, counters, method)?;
    if settings.audit_fraction > 0.0 {
        report.audit = Some(audit(problem, settings, &report)?);
    }
    Ok(report)
}

/// Online phase on a given offline surrogate.
pub fn run_online(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
    sorting: Sorting,
    bank: SurrogateBank,
    counters: EvalCounters,
    method: Method,
) -> Result<RunReport> {
    settings.validate()?;
    problem.check()?;
    let points = problem.distribution.sample(settings.n_mc, settings.seed)?;
    let n = points.len();
    let engine = Engine {
        problem,
        settings,
        sorting,
        pool: settings.thread_pool()?,
        points,
        bank,
        counters,
        outcomes: vec![None; n],
        queue: (0..n).collect(),
        candidates: vec![Vec::new(); problem.spec.len()],
        batches_done: 0,
        sort_terms: if sorting == Sorting::None {
            Vec::new()
        } else {
            vec![vec![0.0; problem.spec.len()]; n]
        },
        stale: vec![true; problem.spec.len()],
        considered: 0,
        log: Vec::new(),
        growth: Vec::new(),
    };
    engine.run(method)
}

/// Re-evaluates every k-th point that had surrogate-decided frequencies and
/// checks its bands and verdict against the oracle.
pub fn audit(
    problem: Problem<'_>,
    settings: &EstimatorSettings,
    report: &RunReport,
) -> Result<AuditReport> {
    let points = problem.distribution.sample(settings.n_mc, settings.seed)?;
    let eligible: Vec<&SampleRecord> = report
        .records
        .iter()
        .filter(|r| !r.outcome.surrogate_bands.is_empty())
        .collect();
    let stride = (1.0 / settings.audit_fraction).round().max(1.0) as usize;
    let chosen: Vec<&SampleRecord> = eligible.into_iter().step_by(stride).collect();
    let checks = settings.thread_pool()?.install(|| {
        chosen
            .par_iter()
            .map(|r| {
                let truth = problem.oracle.eval_all(&points[r.index])?;
                let violations = r
                    .outcome
                    .surrogate_bands
                    .iter()
                    .filter(|(j, band)| !band.contains(to_db(truth.0[*j].norm())))
                    .count();
                let true_verdict = match problem.spec.first_violation(truth.values()) {
                    Some(_) => Verdict::Rejected,
                    None => Verdict::Accepted,
                };
                Ok((violations, true_verdict != r.outcome.verdict))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(AuditReport {
        checked: checks.len(),
        oracle_calls: checks.len(),
        band_violations: checks.iter().map(|c| c.0).sum(),
        verdict_mismatches: checks.iter().filter(|c| c.1).count(),
    })
}
