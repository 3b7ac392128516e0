//! Command-line front end.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, RunMethod};
use crate::estimator::{
    estimate_gpr_hybrid, estimate_pure_mc, estimate_sorted, Problem, RunReport,
};
use crate::linearization::{estimate_linearized, upsilon_sweep, SweepTable};
use crate::oracle::blackbox::serve;
use crate::oracle::waveguide::s11_at;
use crate::oracle::{CostUnit, WaveguideConfig, WaveguideGeometry};

#[derive(Debug, Parser)]
#[command(
    name = "gpr-yield",
    version,
    about = "Monte Carlo yield estimation with GPR-hybrid surrogates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Estimator to run.
    #[arg(long, value_enum)]
    pub method: Option<RunMethod>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Safety factor of the classification band.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Target standard deviation of the yield estimate; sets the sample size.
    #[arg(long)]
    pub sigma_y: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured estimator and write the reports.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// Answer oracle requests on stdin/stdout with the built-in waveguide.
    #[command(hide = true)]
    ServeWaveguide {
        #[arg(long, default_value_t = 30.0)]
        width_mm: f64,
        #[arg(long, default_value_t = 30.0)]
        length_mm: f64,
    },
    /// Answer oracle requests with one constant value at every frequency.
    #[command(hide = true)]
    ServeConstant {
        #[arg(long, allow_hyphen_values = true)]
        re: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        im: f64,
    },
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.estimator;
        if let Some(m) = self.method {
            e.method = m;
        }
        if let Some(s) = self.seed {
            e.seed = s;
        }
        if let Some(b) = self.batch_size {
            e.batch_size = b;
        }
        if let Some(g) = self.gamma {
            e.safety_factor = g;
        }
        if let Some(t) = self.sigma_y {
            e.sigma_y = Some(t);
            e.n_mc = None;
        }
        if let Some(w) = self.workers {
            e.workers = Some(w);
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub method: RunMethod,
    #[serde(rename = "yield")]
    pub yield_estimate: Option<f64>,
    pub std_bound: f64,
    pub n_mc: usize,
    pub cost_unit: Option<CostUnit>,
    pub hf_offline: Option<u64>,
    pub hf_online: Option<u64>,
    pub hf_total: Option<u64>,
    pub effective_total: Option<u64>,
    pub reduction_factor: Option<f64>,
}

/// What a run produced.
pub enum Outcome {
    Report(Box<RunReport>),
    Sweep(SweepTable),
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a RunConfig,
    summary: &'a Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<&'a SweepTable>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Estimation(#[from] crate::Error),
    #[error("writing outputs: {0}")]
    Output(#[from] io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Loads a config and applies the command-line overrides.
pub fn prepare(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(path)?;
    overrides.apply(&mut cfg);
    let diagnostics = cfg.validate();
    if !diagnostics.is_empty() {
        return Err(ConfigError::Invalid(diagnostics));
    }
    cfg.resolve();
    Ok(cfg)
}

pub fn execute(cfg: &RunConfig) -> Result<(Outcome, Summary), RunError> {
    let built = cfg.build()?;
    let problem = Problem {
        distribution: &built.distribution,
        spec: &built.spec,
        oracle: built.oracle.as_ref(),
    };
    let s = &built.settings;
    let outcome = match cfg.estimator.method {
        RunMethod::Mc => Outcome::Report(Box::new(estimate_pure_mc(problem, s)?)),
        RunMethod::GprHybrid => Outcome::Report(Box::new(estimate_gpr_hybrid(problem, s)?)),
        RunMethod::GprHybridSorted => Outcome::Report(Box::new(estimate_sorted(problem, s)?)),
        RunMethod::Linearized => Outcome::Report(Box::new(estimate_linearized(
            problem,
            s,
            cfg.sweep.linear_step,
        )?)),
        RunMethod::Sweep => Outcome::Sweep(upsilon_sweep(
            problem,
            s,
            &cfg.sweep.upsilons,
            &cfg.sweep.steps,
        )?),
    };
    let std_bound = 0.5 / (s.n_mc as f64).sqrt();
    let summary = match &outcome {
        Outcome::Report(r) => Summary {
            method: cfg.estimator.method,
            yield_estimate: Some(r.yield_estimate),
            std_bound,
            n_mc: r.n_mc,
            cost_unit: Some(r.counters.unit),
            hf_offline: Some(r.counters.hf_offline),
            hf_online: Some(r.counters.hf_online),
            hf_total: Some(r.counters.hf_total()),
            effective_total: Some(r.counters.effective_total()),
            reduction_factor: Some(r.reduction_factor(built.spec.len())),
        },
        Outcome::Sweep(_) => Summary {
            method: cfg.estimator.method,
            yield_estimate: None,
            std_bound,
            n_mc: s.n_mc,
            cost_unit: None,
            hf_offline: None,
            hf_online: None,
            hf_total: None,
            effective_total: None,
            reduction_factor: None,
        },
    };
    Ok((outcome, summary))
}

/// Writes `report.json` and `hf_growth.csv` or `sweep.csv` into the output
/// directory.
pub fn write_artifacts(
    cfg: &RunConfig,
    outcome: &Outcome,
    summary: &Summary,
) -> io::Result<Vec<PathBuf>> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let (report, sweep) = match outcome {
        Outcome::Report(r) => (Some(r.as_ref()), None),
        Outcome::Sweep(t) => (None, Some(t)),
    };
    let json = dir.join("report.json");
    let mut w = BufWriter::new(File::create(&json)?);
    serde_json::to_writer_pretty(
        &mut w,
        &ReportFile {
            config: cfg,
            summary,
            report,
            sweep,
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    let csv = match outcome {
        Outcome::Report(r) => {
            let path = dir.join("hf_growth.csv");
            r.write_hf_growth(BufWriter::new(File::create(&path)?))?;
            path
        }
        Outcome::Sweep(t) => {
            let path = dir.join("sweep.csv");
            t.write_csv(BufWriter::new(File::create(&path)?))?;
            path
        }
    };
    Ok(vec![json, csv])
}

fn print_summary(s: &Summary, outcome: &Outcome, files: &[PathBuf]) {
    println!("method            {:?}", s.method);
    println!("samples           {}", s.n_mc);
    match outcome {
        Outcome::Report(_) => {
            println!(
                "yield             {:.4}",
                s.yield_estimate.unwrap_or(f64::NAN)
            );
            println!("std bound         {:.4}", s.std_bound);
            println!(
                "HF evaluations    {} offline + {} online = {} ({:?})",
                s.hf_offline.unwrap_or(0),
                s.hf_online.unwrap_or(0),
                s.hf_total.unwrap_or(0),
                s.cost_unit.unwrap_or(CostUnit::FrequencyEvaluations)
            );
            println!("effective evals   {}", s.effective_total.unwrap_or(0));
            println!(
                "reduction factor  {:.1}",
                s.reduction_factor.unwrap_or(f64::NAN)
            );
        }
        Outcome::Sweep(t) => {
            let steps: Vec<String> = t.steps.iter().map(|d| format!("lin@{d}")).collect();
            println!("upsilon  mc      gprh    {}", steps.join("  "));
            for r in &t.rows {
                let lin: Vec<String> = r.yield_lin.iter().map(|y| format!("{y:.4}")).collect();
                println!(
                    "{:<8} {:.4}  {:.4}  {}",
                    r.upsilon,
                    r.yield_mc,
                    r.yield_gprh,
                    lin.join("  ")
                );
            }
        }
    }
    for f in files {
        println!("wrote             {}", f.display());
    }
}

fn run(path: &Path, overrides: &Overrides) -> Result<(), RunError> {
    let cfg = prepare(path, overrides)?;
    let (outcome, summary) = execute(&cfg)?;
    let files = write_artifacts(&cfg, &outcome, &summary)?;
    print_summary(&summary, &outcome, &files);
    Ok(())
}

fn validate(path: &Path) -> ExitCode {
    match RunConfig::load(path) {
        Ok(cfg) => {
            let diagnostics = cfg.validate();
            if diagnostics.is_empty() {
                println!("{}: ok", path.display());
                ExitCode::SUCCESS
            } else {
                for d in &diagnostics {
                    eprintln!("{d}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn serve_stdio(mut eval: impl FnMut(&[f64], &[f64]) -> Result<Vec<Complex64>, String>) -> ExitCode {
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    match serve(stdin, stdout, &mut eval) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => match run(&config, &overrides) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code())
            }
        },
        Command::Validate { config } => validate(&config),
        Command::ServeWaveguide {
            width_mm,
            length_mm,
        } => {
            let geometry = WaveguideGeometry {
                width_mm,
                length_mm,
            };
            serve_stdio(|p, w| {
                let cfg = WaveguideConfig::from_params(geometry, p).map_err(|e| e.to_string())?;
                w.iter()
                    .map(|&omega| s11_at(&cfg, omega).map_err(|e| e.to_string()))
                    .collect()
            })
        }
        Command::ServeConstant { re, im } => {
            serve_stdio(|_, w| Ok(vec![Complex64::new(re, im); w.len()]))
        }
    }
}
