use std::sync::atomic::{AtomicU64, Ordering};

use gpr_yield::distributions::TruncatedGaussian;
use gpr_yield::estimator::{
    estimate_gpr_hybrid, estimate_pure_mc, estimate_sorted, EstimatorSettings, Problem, RunReport,
    Sorting,
};
use gpr_yield::hybrid::{Direction, PerformanceSpec, Verdict};
use gpr_yield::oracle::blackbox::{BlackboxEndpoint, BlackboxOracle};
use gpr_yield::oracle::{
    CostUnit, FrequencyGrid, Oracle, OracleError, WaveguideGeometry, WaveguideOracle,
};
use num_complex::Complex64;

/// `|S| = exp(-w p^2)` with `w` growing slightly with the frequency index.
struct Bump {
    grid: FrequencyGrid,
    calls: AtomicU64,
}

impl Bump {
    fn new(frequencies: usize) -> Self {
        Self {
            grid: FrequencyGrid::equidistant(1.0, 2.0, frequencies).unwrap(),
            calls: AtomicU64::new(0),
        }
    }
}

impl Oracle for Bump {
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }
    fn cost_unit(&self) -> CostUnit {
        CostUnit::FrequencyEvaluations
    }
    fn eval_at(&self, p: &[f64], index: usize) -> Result<Complex64, OracleError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let w = 1.0 + 0.05 * index as f64;
        Ok(Complex64::from_polar((-w * p[0] * p[0]).exp(), 0.3 * p[0]))
    }
    fn invocations(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    s * h / 3.0
}

fn waveguide_distribution() -> TruncatedGaussian {
    TruncatedGaussian::diagonal(
        vec![10.36, 4.76, 0.58, 0.64],
        &[0.7, 0.7, 0.3, 0.3],
        vec![7.36, 1.76, 0.28, 0.34],
        vec![13.36, 7.76, 0.88, 0.94],
    )
    .unwrap()
}

fn waveguide_grid() -> FrequencyGrid {
    FrequencyGrid::from_ghz(6.5, 7.5, 11).unwrap()
}

fn waveguide_spec() -> PerformanceSpec {
    PerformanceSpec::uniform(-24.0, Direction::AtMost, 11).unwrap()
}

fn check_counters(report: &RunReport) {
    let c = report.counters;
    assert_eq!(c.hf_total(), c.hf_offline + c.hf_online);
    let online: u64 = report.records.iter().map(|r| r.outcome.hf_cost).sum();
    assert_eq!(online, c.hf_online);
    assert_eq!(c.effective_total(), c.hf_total().div_ceil(c.batch_size));
    let last = report.hf_growth.last().unwrap();
    assert_eq!(last.hf_total, c.hf_total());
    assert!(report
        .hf_growth
        .windows(2)
        .all(|w| w[0].hf_total <= w[1].hf_total));
    let accepted = report
        .verdicts()
        .iter()
        .filter(|v| **v == Verdict::Accepted)
        .count();
    assert_eq!(accepted, report.accepted);
    assert_eq!(report.yield_estimate, accepted as f64 / report.n_mc as f64);
}

#[test]
fn interval_yield_matches_quadrature_mass() {
    // Accepted iff -20 p^2 log10(e) >= -4, i.e. |p| <= r.
    let sigma = 0.6;
    let dist = TruncatedGaussian::diagonal(vec![0.0], &[sigma], vec![-2.0], vec![2.0]).unwrap();
    let r = (4.0 / (20.0 * std::f64::consts::LOG10_E)).sqrt();
    let pdf = |x: f64| (-0.5 * (x / sigma).powi(2)).exp();
    let q = simpson(pdf, -r, r, 10_000) / simpson(pdf, -2.0, 2.0, 10_000);

    let oracle = Bump::new(1);
    let spec = PerformanceSpec::uniform(-4.0, Direction::AtLeast, 1).unwrap();
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let settings = EstimatorSettings {
        n_mc: 2500,
        batch_size: 10,
        seed: 11,
        ..Default::default()
    };
    let tol = 3.0 * (q * (1.0 - q) / settings.n_mc as f64).sqrt();
    let mc = estimate_pure_mc(problem, &settings).unwrap();
    let gprh = estimate_gpr_hybrid(problem, &settings).unwrap();
    assert!(
        (mc.yield_estimate - q).abs() < tol,
        "{} vs {q}",
        mc.yield_estimate
    );
    assert!(
        (gprh.yield_estimate - q).abs() < tol,
        "{} vs {q}",
        gprh.yield_estimate
    );
    check_counters(&mc);
    check_counters(&gprh);
}

#[test]
fn pure_mc_on_always_passing_spec() {
    let dist = TruncatedGaussian::diagonal(vec![0.0], &[1.0], vec![-1.0], vec![1.0]).unwrap();
    let oracle = Bump::new(1);
    let spec = PerformanceSpec::uniform(100.0, Direction::AtMost, 1).unwrap();
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let settings = EstimatorSettings {
        n_mc: 700,
        ..Default::default()
    };
    let mc = estimate_pure_mc(problem, &settings).unwrap();
    assert_eq!(mc.yield_estimate, 1.0);
    assert_eq!(mc.counters.hf_online, 700);
    assert_eq!(mc.counters.hf_offline, 0);
    assert_eq!(oracle.invocations(), 700);
    check_counters(&mc);
}

#[test]
fn waveguide_counters_are_consistent() {
    let dist = waveguide_distribution();
    let spec = waveguide_spec();
    let oracle = WaveguideOracle::new(WaveguideGeometry::default(), waveguide_grid()).unwrap();
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let settings = EstimatorSettings {
        n_mc: 500,
        seed: 3,
        ..Default::default()
    };
    let report = estimate_gpr_hybrid(problem, &settings).unwrap();
    check_counters(&report);
    assert_eq!(
        report.counters.hf_offline,
        11 * settings.initial_training as u64
    );
    // With zero tolerance every distinct critical point joins its model.
    for (j, size) in report.training_sizes.iter().enumerate() {
        let added: usize = report
            .batches
            .iter()
            .flat_map(|b| &b.frequencies)
            .filter(|f| f.frequency == j)
            .map(|f| f.added)
            .sum();
        assert_eq!(*size, settings.initial_training + added);
    }
    for b in &report.batches {
        for f in &b.frequencies {
            assert_eq!(f.added, f.candidates);
        }
    }
    let mut csv = Vec::new();
    report.write_hf_growth(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), settings.n_mc + 2);
    assert_eq!(rows[1], format!("0,{}", report.counters.hf_offline));
}

#[test]
fn runs_are_deterministic() {
    let dist = waveguide_distribution();
    let spec = waveguide_spec();
    let oracle = WaveguideOracle::new(WaveguideGeometry::default(), waveguide_grid()).unwrap();
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let base = EstimatorSettings {
        n_mc: 300,
        batch_size: 20,
        seed: 5,
        ..Default::default()
    };
    let a = estimate_gpr_hybrid(problem, &base).unwrap();
    let b = estimate_gpr_hybrid(problem, &base).unwrap();
    let c = estimate_gpr_hybrid(
        problem,
        &EstimatorSettings {
            workers: 4,
            ..base.clone()
        },
    )
    .unwrap();
    let json = |r: &RunReport| serde_json::to_string(r).unwrap();
    assert_eq!(json(&a), json(&b));
    assert_eq!(json(&a), json(&c));
}

#[test]
fn positive_tolerance_stops_inserting_early() {
    let dist = waveguide_distribution();
    let spec = waveguide_spec();
    let oracle = WaveguideOracle::new(WaveguideGeometry::default(), waveguide_grid()).unwrap();
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let base = EstimatorSettings {
        n_mc: 500,
        seed: 3,
        ..Default::default()
    };

    let loose = estimate_gpr_hybrid(
        problem,
        &EstimatorSettings {
            tolerance: 1e6,
            ..base.clone()
        },
    )
    .unwrap();
    assert!(!loose.batches.is_empty());
    assert!(loose
        .training_sizes
        .iter()
        .all(|&n| n == base.initial_training));

    let tol = 0.5;
    let partial = estimate_gpr_hybrid(
        problem,
        &EstimatorSettings {
            tolerance: tol,
            ..base
        },
    )
    .unwrap();
    let updates: Vec<_> = partial
        .batches
        .iter()
        .flat_map(|b| &b.frequencies)
        .collect();
    assert!(!updates.is_empty());
    for f in &updates {
        assert!(f.added <= f.candidates);
        if f.added < f.candidates {
            // Stopped because the remaining candidates are within tolerance.
            assert!(*f.max_error_db.last().unwrap() <= tol);
        }
        // Each step removes the worst remaining candidate.
        assert_eq!(
            f.max_error_db.len(),
            f.added + usize::from(f.added < f.candidates)
        );
    }
    assert!(updates.iter().any(|f| f.added < f.candidates));
}

#[test]
fn reevaluating_noncritical_points_keeps_every_sample() {
    let dist = waveguide_distribution();
    let spec = waveguide_spec();
    let oracle = WaveguideOracle::new(WaveguideGeometry::default(), waveguide_grid()).unwrap();
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let settings = EstimatorSettings {
        n_mc: 300,
        seed: 3,
        reevaluate_noncritical: true,
        ..Default::default()
    };
    let report = estimate_gpr_hybrid(problem, &settings).unwrap();
    assert_eq!(report.records.len(), 300);
    check_counters(&report);
    let mc = estimate_pure_mc(problem, &settings).unwrap();
    let differ = report
        .verdicts()
        .iter()
        .zip(mc.verdicts())
        .filter(|(a, b)| **a != *b)
        .count();
    assert!(differ <= 3, "{differ} verdicts differ from pure MC");
}

#[test]
fn per_call_oracle_counts_solver_calls() {
    let dist = waveguide_distribution();
    let spec = waveguide_spec();
    let endpoint = BlackboxEndpoint::new(
        env!("CARGO_BIN_EXE_gpr-yield"),
        vec!["serve-waveguide".into()],
    );
    let oracle = BlackboxOracle::new(endpoint, waveguide_grid());
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let settings = EstimatorSettings {
        n_mc: 300,
        seed: 3,
        batch_size: 10,
        ..Default::default()
    };
    let report = estimate_gpr_hybrid(problem, &settings).unwrap();
    check_counters(&report);
    assert_eq!(report.counters.unit, CostUnit::SolverCalls);
    assert_eq!(report.counters.hf_offline, settings.initial_training as u64);
    for r in &report.records {
        assert_eq!(r.outcome.hf_cost, u64::from(r.outcome.is_critical()));
    }
    assert_eq!(oracle.invocations(), report.counters.hf_total());

    let mc = estimate_pure_mc(problem, &settings).unwrap();
    assert_eq!(mc.counters.hf_online, 300);
    let local = WaveguideOracle::new(WaveguideGeometry::default(), waveguide_grid()).unwrap();
    let local_mc = estimate_pure_mc(
        Problem {
            oracle: &local,
            ..problem
        },
        &settings,
    )
    .unwrap();
    assert_eq!(mc.verdicts(), local_mc.verdicts());
}

/// Fraction of online HF work spent within the first fifth of the samples.
fn front_loading(report: &RunReport) -> f64 {
    let offline = report.counters.hf_offline;
    let cut = report.n_mc / 5;
    let early = report
        .hf_growth
        .iter()
        .find(|g| g.considered == cut)
        .map(|g| g.hf_total - offline)
        .unwrap();
    early as f64 / report.counters.hf_online as f64
}

#[test]
fn hybrid_sorting_front_loads_high_fidelity_work() {
    let dist = waveguide_distribution();
    let spec = waveguide_spec();
    let oracle = WaveguideOracle::new(WaveguideGeometry::default(), waveguide_grid()).unwrap();
    let problem = Problem {
        distribution: &dist,
        spec: &spec,
        oracle: &oracle,
    };
    let settings = EstimatorSettings {
        seed: 3,
        batch_size: 1,
        sorting: Sorting::Hybrid,
        workers: 4,
        ..Default::default()
    };
    let report = estimate_sorted(problem, &settings).unwrap();
    check_counters(&report);
    let share = front_loading(&report);
    assert!(
        share >= 0.9,
        "only {share:.3} of online HF in the first 20% of samples"
    );
}
