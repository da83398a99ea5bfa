//! Passivity assessment and enforcement for admittance models.
//!
//! A Y-parameter model is passive when the symmetric part of `Re Y(jw)` is
//! positive semidefinite at every frequency. Enforcement perturbs `d` and the
//! residues (keeping poles fixed and every perturbation symmetric) so that
//! the smallest eigenvalue is lifted to a small margin at each violating
//! sweep point, while the change of the in-band response is minimised.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use super::{PoleTerm, RationalModel};
use crate::error::Result;
use crate::spectra::{log_grid_per_decade, CMatrix, FrequencyResponse, ParamKind};

/// Eigenvalues below `-VIOLATION_TOL` count as violations.
pub const VIOLATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub f_worst_hz: f64,
    pub min_eig: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PassivityReport {
    pub is_passive: bool,
    pub violations: Vec<Violation>,
    /// Smallest eigenvalue over the whole sweep.
    pub min_eig: f64,
    #[serde(skip)]
    pub sweep_hz: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnforcementReport {
    pub is_passive: bool,
    pub rounds: usize,
    /// Relative RMS change of the in-band response.
    pub band_change: f64,
    pub final_check: PassivityReport,
}

/// DC plus 20 points/decade over `[fmin/10, fmax*10]` of the fit band.
pub fn auto_sweep(model: &RationalModel) -> Vec<f64> {
    let (lo, hi) = model.band();
    let lo = if lo > 0.0 { lo } else { hi.max(1.0) * 1e-6 };
    let mut sweep = vec![0.0];
    sweep.extend(log_grid_per_decade(lo / 10.0, hi.max(lo) * 10.0, 20));
    sweep
}

fn min_eig_of(g: &CMatrix) -> (f64, DMatrix<f64>) {
    let re = g.map(|z| z.re);
    let sym = (&re + re.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    (eig.eigenvalues.min(), sym)
}

fn report_from(sweep: Vec<f64>, mins: Vec<f64>) -> PassivityReport {
    let mut violations = Vec::new();
    let mut current: Option<Violation> = None;
    for (&f, &m) in sweep.iter().zip(&mins) {
        if m < -VIOLATION_TOL {
            let v = current.get_or_insert(Violation { f_start_hz: f, f_end_hz: f, f_worst_hz: f, min_eig: m });
            v.f_end_hz = f;
            if m < v.min_eig {
                v.min_eig = m;
                v.f_worst_hz = f;
            }
        } else if let Some(v) = current.take() {
            violations.push(v);
        }
    }
    violations.extend(current);
    let min_eig = mins.iter().copied().fold(f64::INFINITY, f64::min);
    PassivityReport { is_passive: violations.is_empty(), violations, min_eig, sweep_hz: sweep }
}

/// Checks `Re Y` of a model on `sweep` (or the automatic sweep).
pub fn passivity_check(model: &RationalModel, sweep: Option<&[f64]>) -> PassivityReport {
    let mut sweep = sweep.map(<[f64]>::to_vec).unwrap_or_else(|| auto_sweep(model));
    sweep.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mins = sweep.iter().map(|&f| min_eig_of(&model.eval_freq(f)).0).collect();
    report_from(sweep, mins)
}

/// Checks a tabulated Y response at its own samples.
pub fn check_response(resp: &FrequencyResponse) -> Result<PassivityReport> {
    if resp.kind() != ParamKind::Y {
        return Err(crate::error::Error::WrongKind { expected: "Y".into(), found: resp.kind().to_string() });
    }
    let mins = resp.data().iter().map(|g| min_eig_of(g).0).collect();
    Ok(report_from(resp.freqs().to_vec(), mins))
}

/// Enumerates the symmetric perturbation parameters: `d` entries, then for
/// each term its residue entries (real and imaginary parts for pairs).
struct Params {
    n: usize,
    /// Upper-triangle index pairs.
    pairs: Vec<(usize, usize)>,
    /// `(term index or None for d, imaginary part?)` per block.
    blocks: Vec<(Option<usize>, bool)>,
}

impl Params {
    fn new(model: &RationalModel) -> Self {
        let n = model.n_ports();
        let pairs = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let mut blocks = vec![(None, false)];
        for (k, t) in model.terms().iter().enumerate() {
            blocks.push((Some(k), false));
            if matches!(t, PoleTerm::Pair { .. }) {
                blocks.push((Some(k), true));
            }
        }
        Self { n, pairs, blocks }
    }

    fn len(&self) -> usize {
        self.pairs.len() * self.blocks.len()
    }

    /// Scalar frequency factor of each block at `s`.
    fn factors(&self, model: &RationalModel, s: Complex64) -> Vec<Complex64> {
        self.blocks
            .iter()
            .map(|(term, imag)| match term {
                None => Complex64::new(1.0, 0.0),
                Some(k) => match &model.terms()[*k] {
                    PoleTerm::Real { pole, .. } => (s - pole).inv(),
                    PoleTerm::Pair { pole, .. } => {
                        let k1 = (s - pole).inv();
                        let k2 = (s - pole.conj()).inv();
                        if *imag {
                            Complex64::i() * (k1 - k2)
                        } else {
                            k1 + k2
                        }
                    }
                },
            })
            .collect()
    }

    fn apply(&self, model: &RationalModel, x: &DVector<f64>) -> RationalModel {
        let n = self.n;
        let np = self.pairs.len();
        let sym = |b: usize| {
            let mut m = DMatrix::zeros(n, n);
            for (p, &(i, j)) in self.pairs.iter().enumerate() {
                m[(i, j)] = x[b * np + p];
                m[(j, i)] = x[b * np + p];
            }
            m
        };
        let d = model.d() + sym(0);
        let mut terms = model.terms().to_vec();
        for (b, (term, imag)) in self.blocks.iter().enumerate().skip(1) {
            let k = term.expect("residue block");
            let delta = sym(b);
            match &mut terms[k] {
                PoleTerm::Real { residue, .. } => *residue += delta,
                PoleTerm::Pair { residue, .. } => {
                    let unit = if *imag { Complex64::i() } else { Complex64::new(1.0, 0.0) };
                    *residue += delta.map(|v| unit * v);
                }
            }
        }
        model.with_parts(terms, d)
    }
}

fn band_change(a: &RationalModel, b: &RationalModel, grid: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &f in grid {
        let ha = a.eval_freq(f);
        num += (b.eval_freq(f) - &ha).norm_squared();
        den += ha.norm_squared();
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn band_grid(model: &RationalModel) -> Vec<f64> {
    let (lo, hi) = model.band();
    if lo > 0.0 && hi > lo {
        log_grid_per_decade(lo, hi, 20)
    } else {
        vec![lo, hi]
    }
}

/// Lifts the smallest eigenvalue of `Re Y` to a small positive margin at
/// each violating sweep point. An already-passive model is returned
/// unchanged. After `max_rounds` the best model so far is returned with
/// `is_passive = false`.
pub fn passivity_enforce(model: &RationalModel, max_rounds: usize) -> (RationalModel, EnforcementReport) {
    let sweep = auto_sweep(model);
    let initial = passivity_check(model, Some(&sweep));
    if initial.is_passive {
        let report = EnforcementReport { is_passive: true, rounds: 0, band_change: 0.0, final_check: initial };
        return (model.clone(), report);
    }

    let params = Params::new(model);
    let grid = band_grid(model);
    let np = params.len();

    // Objective: sum over the band of |dH|^2, as x^T P x.
    let mut p = DMatrix::<f64>::zeros(np, np);
    for &f in &grid {
        let s = Complex64::new(0.0, 2.0 * PI * f);
        let fac = params.factors(model, s);
        for (p_idx, &(i, j)) in params.pairs.iter().enumerate() {
            let mult = if i == j { 1.0 } else { 2.0 };
            for (b1, f1) in fac.iter().enumerate() {
                for (b2, f2) in fac.iter().enumerate() {
                    let v = mult * (f1 * f2.conj()).re;
                    p[(b1 * params.pairs.len() + p_idx, b2 * params.pairs.len() + p_idx)] += v;
                }
            }
        }
    }
    let ridge = 1e-12 * p.trace().max(f64::MIN_POSITIVE) / np as f64;
    for i in 0..np {
        p[(i, i)] += ridge;
    }
    let chol = match p.clone().cholesky() {
        Some(c) => c,
        None => {
            log::warn!("passivity enforcement: objective is not positive definite");
            let report = EnforcementReport { is_passive: false, rounds: 0, band_change: 0.0, final_check: initial };
            return (model.clone(), report);
        }
    };

    let scale = sweep
        .iter()
        .map(|&f| model.eval_freq(f).map(|z| z.re).abs().max())
        .fold(0.0, f64::max)
        .max(initial.min_eig.abs());
    let margin = 1e-9 * scale;

    let mut current = model.clone();
    let mut check = initial;
    let mut held: Vec<usize> = Vec::new();
    let mut rounds = 0;
    while rounds < max_rounds && !check.is_passive {
        rounds += 1;
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for (idx, &f) in sweep.iter().enumerate() {
            let g = current.eval_freq(f);
            let (_, sym) = min_eig_of(&g);
            let eig = SymmetricEigen::new(sym);
            let violating = eig.eigenvalues.iter().any(|&l| l < margin);
            if !violating && !held.contains(&idx) {
                continue;
            }
            if !held.contains(&idx) {
                held.push(idx);
            }
            let s = Complex64::new(0.0, 2.0 * PI * f);
            let fac = params.factors(&current, s);
            for (e_idx, &lambda) in eig.eigenvalues.iter().enumerate() {
                let q = eig.eigenvectors.column(e_idx);
                let mut row = DVector::zeros(np);
                for (b, fb) in fac.iter().enumerate() {
                    for (p_idx, &(i, j)) in params.pairs.iter().enumerate() {
                        let qq = if i == j { q[i] * q[i] } else { 2.0 * q[i] * q[j] };
                        row[b * params.pairs.len() + p_idx] = fb.re * qq;
                    }
                }
                rows.push(row);
                rhs.push(margin - lambda);
            }
        }
        if rows.is_empty() {
            break;
        }
        // min x^T P x subject to C x >= t, solved in the dual.
        let c = DMatrix::from_fn(rows.len(), np, |r, k| rows[r][k]);
        let t = DVector::from_vec(rhs);
        let pinv_ct = chol.solve(&c.transpose());
        let gram = &c * &pinv_ct;
        let mu = dual_ascent(&gram, &t, 1e-3 * margin);
        let x = pinv_ct * mu;
        current = params.apply(&current, &x);
        check = passivity_check(&current, Some(&sweep));
    }

    let change = band_change(model, &current, &grid);
    if !check.is_passive {
        log::warn!(
            "passivity enforcement stopped after {rounds} rounds; min eigenvalue {:.3e}",
            check.min_eig
        );
    }
    let report = EnforcementReport { is_passive: check.is_passive, rounds, band_change: change, final_check: check };
    (current, report)
}

/// Hildreth coordinate ascent for `max t.mu - mu^T G mu / 2` over `mu >= 0`.
fn dual_ascent(gram: &DMatrix<f64>, t: &DVector<f64>, tol: f64) -> DVector<f64> {
    let m = t.len();
    let mut mu = DVector::<f64>::zeros(m);
    let mut g_mu = DVector::<f64>::zeros(m);
    for _ in 0..2000 {
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let gii = gram[(i, i)];
            if gii <= 0.0 {
                continue;
            }
            let slack = t[i] - g_mu[i];
            let next = (mu[i] + slack / gii).max(0.0);
            let delta = next - mu[i];
            if delta != 0.0 {
                mu[i] = next;
                g_mu.axpy(delta, &gram.column(i), 1.0);
            }
            worst = worst.max(slack);
        }
        if worst <= tol {
            break;
        }
    }
    mu
}
