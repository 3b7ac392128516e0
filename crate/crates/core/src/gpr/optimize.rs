use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GprError, GprModel, KernelParams};

const RESTART_SEED: u64 = 0x6c6d_6c00;
const MAX_ITERATIONS: usize = 400;

/// Outcome of a hyperparameter search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeReport {
    pub initial_lml: f64,
    pub final_lml: f64,
    /// False when no start improved on the incoming hyperparameters; the
    /// model is then left unchanged.
    pub improved: bool,
    pub starts: usize,
    pub evaluations: usize,
}

/// Minimizes `f` with the Nelder–Mead simplex method, keeping every vertex
/// inside the box `[lower, upper]` by projection. Returns the best vertex, its
/// value, and the number of function evaluations.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iter: usize,
    ftol: f64,
) -> (Vec<f64>, f64, usize) {
    let n = start.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    clamp(&mut x0);
    let f0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += step[i];
        if x[i] > upper[i] {
            x[i] = x0[i] - step[i];
        }
        clamp(&mut x);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = (worst - best).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (spread <= ftol * (1.0 + best.abs()) && size < 1e-6) || size < 1e-10 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..n)
                .map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i]))
                .collect();
            clamp(&mut x);
            x
        };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best_x = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for i in 0..n {
                x[i] = best_x[i] + 0.5 * (x[i] - best_x[i]);
            }
            *v = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (x, v, evals)
}

impl GprModel {
    /// Maximizes the log marginal likelihood over `(signal, length_scale)`
    /// inside their bounds, searching in log space from `restarts` starting
    /// points (the first is the current setting). The noise term is fixed.
    pub fn optimize_hyperparameters(
        &mut self,
        restarts: usize,
    ) -> Result<OptimizeReport, GprError> {
        if self.len() < 2 {
            return Err(GprError::TooFewPoints {
                needed: 2,
                got: self.len(),
            });
        }
        let base = self.kernel;
        let lower = [base.signal_bounds.0.ln(), base.length_bounds.0.ln()];
        let upper = [base.signal_bounds.1.ln(), base.length_bounds.1.ln()];
        let step: Vec<f64> = (0..2)
            .map(|i| (0.1 * (upper[i] - lower[i])).clamp(1e-3, 1.0))
            .collect();
        let kernel_at = |x: &[f64]| KernelParams {
            signal: x[0].exp().clamp(base.signal_bounds.0, base.signal_bounds.1),
            length_scale: x[1].exp().clamp(base.length_bounds.0, base.length_bounds.1),
            ..base
        };
        let objective = |x: &[f64]| match self.with_kernel(kernel_at(x)) {
            Ok(m) => -m.log_marginal_likelihood(),
            Err(_) => f64::INFINITY,
        };

        let initial_lml = self.log_marginal_likelihood();
        let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
        let starts = restarts.max(1);
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut evaluations = 0;
        for s in 0..starts {
            let x0 = if s == 0 {
                vec![base.signal.ln(), base.length_scale.ln()]
            } else {
                (0..2).map(|i| rng.gen_range(lower[i]..=upper[i])).collect()
            };
            let (x, v, e) =
                nelder_mead(objective, &x0, &step, &lower, &upper, MAX_ITERATIONS, 1e-12);
            evaluations += e;
            if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                best = Some((x, v));
            }
        }
        let (x, v) = best.expect("at least one start");
        let candidate = -v;
        if candidate.is_finite() && candidate > initial_lml {
            *self = self.with_kernel(kernel_at(&x))?;
            Ok(OptimizeReport {
                initial_lml,
                final_lml: self.log_marginal_likelihood(),
                improved: true,
                starts,
                evaluations,
            })
        } else {
            Ok(OptimizeReport {
                initial_lml,
                final_lml: initial_lml,
                improved: false,
                starts,
                evaluations,
            })
        }
    }
}
