//! Multi-branch series-RLC equivalent-circuit fitting.
//!
//! Two starting points are refined by Levenberg-Marquardt on `log10` values,
//! which keeps R, L and C strictly positive, and the better result is kept:
//!
//! - branch values read off a rational fit of the admittance, one pole pair
//!   per branch;
//! - branches added one at a time, the first seeded from the data
//!   (capacitance at the lowest frequency, inductance at the highest, ESR at
//!   the impedance minimum) and each new one a decade above the previous
//!   resonance.

use std::f64::consts::{LN_10, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::{BranchSet, RlcBranch, MAX_BRANCHES};
use crate::error::{Error, Result};
use crate::spectra::{capacitance_at, FrequencyResponse, ParamKind};
use crate::vector_fit::{vector_fit, PoleTerm, VectorFitOptions};

/// `log10` bounds for (R, L, C).
const LOG_BOUNDS: [(f64, f64); 3] = [(-9.0, 6.0), (-18.0, 0.0), (-18.0, 1.0)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitFitOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step improves the misfit by less than this
    /// fraction.
    pub tolerance: f64,
    /// Fit `ln(Yfit/Ytarget)` (log-magnitude and phase) instead of the
    /// relative complex error.
    pub log_magnitude: bool,
}

impl Default for CircuitFitOptions {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: 1e-10, log_magnitude: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CircuitFitReport {
    /// Mean squared relative error over the grid.
    pub misfit: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Parameters pinned at a bound, as `(branch, "r" | "l" | "c")`.
    pub active_bounds: Vec<(usize, &'static str)>,
}

impl CircuitFitReport {
    pub fn bound_active(&self) -> bool {
        !self.active_bounds.is_empty()
    }
}

struct Problem<'a> {
    omega: Vec<f64>,
    target: &'a [Complex64],
    log_magnitude: bool,
}

impl Problem<'_> {
    fn branch(theta: &[f64]) -> (f64, f64, f64) {
        (10f64.powf(theta[0]), 10f64.powf(theta[1]), 10f64.powf(theta[2]))
    }

    fn model(&self, theta: &[f64], k: usize) -> Complex64 {
        let w = self.omega[k];
        theta
            .chunks_exact(3)
            .map(|p| {
                let (r, l, c) = Self::branch(p);
                Complex64::new(r, w * l - 1.0 / (w * c)).inv()
            })
            .sum()
    }

    fn residual_of(&self, y: Complex64, k: usize) -> Complex64 {
        let t = self.target[k];
        if self.log_magnitude {
            (y / t).ln()
        } else {
            (y - t) / t.norm()
        }
    }

    fn residuals(&self, theta: &[f64]) -> DVector<f64> {
        let n = self.target.len();
        let mut r = DVector::zeros(2 * n);
        for k in 0..n {
            let e = self.residual_of(self.model(theta, k), k);
            r[2 * k] = e.re;
            r[2 * k + 1] = e.im;
        }
        r
    }

    fn cost(&self, theta: &[f64]) -> f64 {
        let r = self.residuals(theta);
        r.norm_squared() / self.target.len() as f64
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.target.len();
        let mut jac = DMatrix::zeros(2 * n, theta.len());
        for k in 0..n {
            let w = self.omega[k];
            let scale = if self.log_magnitude {
                self.model(theta, k).inv()
            } else {
                Complex64::new(1.0 / self.target[k].norm(), 0.0)
            };
            for (b, p) in theta.chunks_exact(3).enumerate() {
                let (r, l, c) = Self::branch(p);
                let y = Complex64::new(r, w * l - 1.0 / (w * c)).inv();
                let dy_dz = -y * y;
                let dz = [
                    Complex64::new(r * LN_10, 0.0),
                    Complex64::new(0.0, w * l * LN_10),
                    Complex64::new(0.0, LN_10 / (w * c)),
                ];
                for (i, dzi) in dz.iter().enumerate() {
                    let d = dy_dz * dzi * scale;
                    jac[(2 * k, 3 * b + i)] = d.re;
                    jac[(2 * k + 1, 3 * b + i)] = d.im;
                }
            }
        }
        jac
    }
}

fn clamp_theta(theta: &mut [f64]) {
    for (i, t) in theta.iter_mut().enumerate() {
        let (lo, hi) = LOG_BOUNDS[i % 3];
        *t = t.clamp(lo, hi);
    }
}

struct LmOutcome {
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(prob: &Problem, theta: &mut Vec<f64>, opts: &CircuitFitOptions, budget: usize) -> LmOutcome {
    let mut lambda = 1e-3;
    let mut cost = prob.cost(theta);
    let mut iterations = 0;
    while iterations < budget {
        iterations += 1;
        let jac = prob.jacobian(theta);
        let res = prob.residuals(theta);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &res;
        let mut accepted = None;
        for _ in 0..40 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            clamp_theta(&mut trial);
            let trial_cost = prob.cost(&trial);
            if trial_cost.is_finite() && trial_cost < cost {
                accepted = Some((trial, trial_cost));
                lambda = (lambda / 3.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        match accepted {
            Some((trial, trial_cost)) => {
                let gain = (cost - trial_cost) / cost;
                *theta = trial;
                cost = trial_cost;
                if gain < opts.tolerance || cost < 1e-30 {
                    return LmOutcome { iterations, converged: true };
                }
            }
            // No descent direction left: a (possibly bound-constrained) minimum.
            None => return LmOutcome { iterations, converged: true },
        }
    }
    LmOutcome { iterations, converged: false }
}

fn initial_branch(resp: &FrequencyResponse, target: &[Complex64]) -> Result<[f64; 3]> {
    let freqs = resp.freqs();
    let (f_lo, f_hi) = (freqs[0], freqs[freqs.len() - 1]);
    let z: Vec<Complex64> = target.iter().map(|y| y.inv()).collect();

    let kmin = (0..z.len())
        .min_by(|&a, &b| z[a].norm().partial_cmp(&z[b].norm()).unwrap())
        .unwrap();
    let r = z[kmin].re.max(1e-9);

    let w_lo = 2.0 * PI * f_lo;
    let mut c = capacitance_at(resp, f_lo)?;
    if !(c > 0.0) || 1.0 / (w_lo * c) < 1e-3 * z[0].norm() {
        // No visible capacitive reactance: start with one that is negligible.
        c = 1e3 / (w_lo * z[0].norm());
    }

    let w_hi = 2.0 * PI * f_hi;
    let x_hi = z[z.len() - 1].im + 1.0 / (w_hi * c);
    let l = if x_hi > 1e-3 * z[z.len() - 1].norm() {
        x_hi / w_hi
    } else {
        1e-3 * z[z.len() - 1].norm() / w_hi
    };

    let mut theta = [r.log10(), l.log10(), c.log10()];
    clamp_theta(&mut theta);
    Ok(theta)
}

/// Starting point from a rational fit: each leg `s / (L s^2 + R s + 1/C)` is
/// a pole pair with no constant term, so `R/L = -(p1 + p2)`,
/// `1/(LC) = p1 p2` and `1/L` is the sum of the pair's residues. Overdamped
/// legs show up as two real poles, which are paired in sorted order.
fn rational_start(target: &FrequencyResponse, n_branches: usize) -> Option<Vec<f64>> {
    let opts = VectorFitOptions { n_poles: 2 * n_branches, n_iter: 20, ..Default::default() };
    let model = vector_fit(target, &opts).ok()?;
    // (R/L, 1/(LC), 1/L) per leg.
    let mut legs = Vec::new();
    let mut reals = Vec::new();
    for term in model.terms() {
        match term {
            PoleTerm::Pair { pole, residue } => legs.push((-2.0 * pole.re, pole.norm_sqr(), 2.0 * residue[(0, 0)].re)),
            PoleTerm::Real { pole, residue } => reals.push((*pole, residue[(0, 0)])),
        }
    }
    if reals.len() % 2 != 0 {
        return None;
    }
    reals.sort_by(|a, b| a.0.total_cmp(&b.0));
    for pair in reals.chunks_exact(2) {
        let ((p1, r1), (p2, r2)) = (pair[0], pair[1]);
        legs.push((-(p1 + p2), p1 * p2, r1 + r2));
    }
    let mut theta = Vec::with_capacity(3 * n_branches);
    for (r_over_l, inv_lc, inv_l) in legs {
        if !(inv_l > 0.0 && inv_lc > 0.0 && r_over_l >= 0.0) {
            return None;
        }
        let l = 1.0 / inv_l;
        theta.extend_from_slice(&[(r_over_l * l).log10(), l.log10(), (1.0 / (inv_lc * l)).log10()]);
    }
    if theta.iter().any(|t| t.is_nan()) {
        return None;
    }
    clamp_theta(&mut theta);
    Some(theta)
}

/// Adds legs one at a time, each a decade above the last in resonance.
fn progressive(
    prob: &Problem,
    target: &FrequencyResponse,
    values: &[Complex64],
    n_branches: usize,
    opts: &CircuitFitOptions,
) -> Result<(Vec<f64>, LmOutcome)> {
    let mut theta: Vec<f64> = initial_branch(target, values)?.to_vec();
    let mut outcome = levenberg_marquardt(prob, &mut theta, opts, opts.max_iterations);
    let mut used = outcome.iterations;
    for _ in 1..n_branches {
        let prev = &theta[theta.len() - 3..];
        // A tenth of the capacitance and inductance puts f0 a decade higher.
        let mut next = [prev[0], prev[1] - 1.0, prev[2] - 1.0];
        clamp_theta(&mut next);
        theta.extend_from_slice(&next);
        let budget = opts.max_iterations.saturating_sub(used).max(1);
        outcome = levenberg_marquardt(prob, &mut theta, opts, budget);
        used += outcome.iterations;
    }
    outcome.iterations = used;
    Ok((theta, outcome))
}

fn report_bounds(theta: &[f64]) -> Vec<(usize, &'static str)> {
    const NAMES: [&str; 3] = ["r", "l", "c"];
    theta
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            let (lo, hi) = LOG_BOUNDS[i % 3];
            (**t - lo).abs() < 1e-9 || (**t - hi).abs() < 1e-9
        })
        .map(|(i, _)| (i / 3, NAMES[i % 3]))
        .collect()
}

/// Fits `n_branches` parallel series-RLC legs to a 1-port admittance.
///
/// Non-convergence within `max_iterations` is not an error: the best
/// parameters found are returned with `converged = false`.
pub fn fit_equivalent_circuit(
    target: &FrequencyResponse,
    n_branches: usize,
    opts: &CircuitFitOptions,
) -> Result<(BranchSet, CircuitFitReport)> {
    if target.kind() != ParamKind::Y || target.n_ports() != 1 {
        return Err(Error::invalid("equivalent-circuit fitting needs a 1-port Y response"));
    }
    if !(1..=MAX_BRANCHES).contains(&n_branches) {
        return Err(Error::invalid(format!("n_branches must be in 1..={MAX_BRANCHES}, got {n_branches}")));
    }
    if target.fmin() <= 0.0 || target.fmax() / target.fmin() < 100.0 {
        return Err(Error::invalid("equivalent-circuit fitting needs at least two decades of positive frequencies"));
    }
    let values = target.entry(0, 0);
    if values.iter().any(|y| y.norm() == 0.0) {
        return Err(Error::invalid("target admittance has a zero sample"));
    }
    let prob = Problem {
        omega: target.freqs().iter().map(|f| 2.0 * PI * f).collect(),
        target: &values,
        log_magnitude: opts.log_magnitude,
    };

    let mut best = progressive(&prob, target, &values, n_branches, opts)?;
    if let Some(mut theta) = rational_start(target, n_branches) {
        let outcome = levenberg_marquardt(&prob, &mut theta, opts, opts.max_iterations);
        if prob.cost(&theta) < prob.cost(&best.0) {
            best = (theta, LmOutcome { iterations: best.1.iterations + outcome.iterations, ..outcome });
        } else {
            best.1.iterations += outcome.iterations;
        }
    }
    let (theta, outcome) = best;

    let branches = theta
        .chunks_exact(3)
        .map(|p| {
            let (r, l, c) = Problem::branch(p);
            RlcBranch::rlc(r, l, c)
        })
        .collect();
    let report = CircuitFitReport {
        misfit: prob.cost(&theta),
        iterations: outcome.iterations,
        converged: outcome.converged,
        active_bounds: report_bounds(&theta),
    };
    if !report.converged {
        log::warn!("equivalent-circuit fit stopped after {} iterations without converging", report.iterations);
    }
    Ok((BranchSet::new(branches)?, report))
}
