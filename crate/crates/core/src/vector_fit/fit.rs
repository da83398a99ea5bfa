//! Classic vector fitting with a shared pole set.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{relative_rms_error, PoleTerm, RationalModel};
use crate::error::{Error, Result};
use crate::spectra::{log_grid, FrequencyResponse, ParamKind};

/// Per-sample weighting of the least-squares problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    /// `1 / max(|H|, 1e-12)`, giving every entry and frequency equal relative
    /// importance.
    #[default]
    InverseMagnitude,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VectorFitOptions {
    pub n_poles: usize,
    pub n_iter: usize,
    pub weighting: Weighting,
    /// Also fit the proportional term `s E`.
    pub fit_proportional: bool,
}

impl Default for VectorFitOptions {
    fn default() -> Self {
        Self { n_poles: 10, n_iter: 10, weighting: Weighting::default(), fit_proportional: false }
    }
}

const MAG_FLOOR: f64 = 1e-12;
/// Singular values below this (relative to unit-norm columns) are dropped in
/// the pole-relocation solve.
const RELOCATION_RCOND: f64 = 1e-12;
/// Residue solves whose normalised condition exceeds `1 / RESIDUE_RCOND` are
/// rank deficient.
const RESIDUE_RCOND: f64 = 1e-14;

/// Starting poles `-beta/100 ± j beta` with `beta = 2 pi f`, `f` spaced
/// logarithmically over `[fmin, fmax]`. Returns the full list, conjugates
/// adjacent.
pub fn initial_poles(fmin: f64, fmax: f64, n_pairs: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(2 * n_pairs);
    if n_pairs == 0 {
        return out;
    }
    for f in log_grid(fmin, fmax, n_pairs) {
        let beta = 2.0 * PI * f;
        out.push(Complex64::new(-beta / 100.0, beta));
        out.push(Complex64::new(-beta / 100.0, -beta));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Pole {
    Real(f64),
    Pair(Complex64),
}

impl Pole {
    fn order(self) -> usize {
        match self {
            Pole::Real(_) => 1,
            Pole::Pair(_) => 2,
        }
    }
}

fn starting_poles(fmin: f64, fmax: f64, n_poles: usize) -> Vec<Pole> {
    let mut poles: Vec<Pole> = initial_poles(fmin, fmax, n_poles / 2)
        .into_iter()
        .filter(|p| p.im > 0.0)
        .map(Pole::Pair)
        .collect();
    if n_poles % 2 == 1 {
        poles.insert(0, Pole::Real(-2.0 * PI * (fmin * fmax).sqrt()));
    }
    poles
}

/// Real basis functions of the pole set at `s`; a pair contributes
/// `1/(s-p) + 1/(s-p*)` and `j/(s-p) - j/(s-p*)`.
fn basis(poles: &[Pole], s: Complex64, out: &mut Vec<Complex64>) {
    out.clear();
    for p in poles {
        match *p {
            Pole::Real(a) => out.push((s - a).inv()),
            Pole::Pair(a) => {
                let k1 = (s - a).inv();
                let k2 = (s - a.conj()).inv();
                out.push(k1 + k2);
                out.push(Complex64::i() * (k1 - k2));
            }
        }
    }
}

struct Data {
    s: Vec<Complex64>,
    /// `values[m][k]` for entry `m = i * n + j`.
    values: Vec<Vec<Complex64>>,
    weights: Vec<Vec<f64>>,
    n: usize,
}

impl Data {
    fn new(resp: &FrequencyResponse, weighting: Weighting) -> Self {
        let n = resp.n_ports();
        let s = resp.freqs().iter().map(|f| Complex64::new(0.0, 2.0 * PI * f)).collect();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(resp.entry(i, j));
            }
        }
        let weights = values
            .iter()
            .map(|col| {
                col.iter()
                    .map(|h| match weighting {
                        Weighting::Uniform => 1.0,
                        Weighting::InverseMagnitude => 1.0 / h.norm().max(MAG_FLOOR),
                    })
                    .collect()
            })
            .collect();
        Self { s, values, weights, n }
    }
}

fn push_complex_row(a: &mut DMatrix<f64>, row: usize, coeffs: &[Complex64]) {
    for (c, v) in coeffs.iter().enumerate() {
        a[(row, c)] = v.re;
        a[(row + 1, c)] = v.im;
    }
}

/// Solves `a x = b` in the least-squares sense after scaling columns to unit
/// norm. Singular values below `rcond` are discarded; `Err` carries the
/// normalised singular-value ratio when `strict` and the matrix is rank
/// deficient.
fn scaled_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, scale: &[f64], rcond: f64, strict: bool) -> Result<DVector<f64>> {
    let mut m = a.clone();
    for (j, s) in scale.iter().enumerate() {
        let inv = if *s > 0.0 { 1.0 / s } else { 0.0 };
        m.column_mut(j).scale_mut(inv);
    }
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if strict && !(smin > RESIDUE_RCOND * smax) {
        return Err(Error::RankDeficient(format!(
            "residue least-squares system has singular-value ratio {:.3e}",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let utb = u.transpose() * b;
    let mut y = DVector::zeros(vt.nrows());
    for (i, sv) in svd.singular_values.iter().enumerate() {
        if *sv > rcond {
            y[i] = utb[i] / sv;
        }
    }
    let mut x = vt.transpose() * y;
    for (j, s) in scale.iter().enumerate() {
        x[j] = if *s > 0.0 { x[j] / s } else { 0.0 };
    }
    Ok(x)
}

fn column_norms(a: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter().map(|c| c.norm()).collect()
}

/// One pole-relocation step. Returns the zeros of the weighting function.
fn relocate(data: &Data, poles: &[Pole], with_e: bool) -> Vec<Pole> {
    let n_basis: usize = poles.iter().map(|p| p.order()).sum();
    let n_direct = n_basis + 1 + usize::from(with_e);
    let n_cols = n_direct + n_basis;
    let n_rows = 2 * data.s.len();
    let mut phi = Vec::with_capacity(n_basis);

    let mut r22_rows: Vec<DMatrix<f64>> = Vec::with_capacity(data.values.len());
    let mut rhs_rows: Vec<DVector<f64>> = Vec::with_capacity(data.values.len());
    let mut sigma_norm2 = vec![0.0; n_basis];
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n_cols];

    for (values, weights) in data.values.iter().zip(&data.weights) {
        let mut a = DMatrix::zeros(n_rows, n_cols);
        let mut b = DVector::zeros(n_rows);
        for (k, s) in data.s.iter().enumerate() {
            basis(poles, *s, &mut phi);
            let w = weights[k];
            let h = values[k];
            for (c, p) in phi.iter().enumerate() {
                coeffs[c] = p * w;
                coeffs[n_direct + c] = -h * p * w;
            }
            coeffs[n_basis] = Complex64::new(w, 0.0);
            if with_e {
                coeffs[n_basis + 1] = s * w;
            }
            push_complex_row(&mut a, 2 * k, &coeffs);
            let hw = h * w;
            b[2 * k] = hw.re;
            b[2 * k + 1] = hw.im;
        }
        for (c, norm2) in sigma_norm2.iter_mut().enumerate() {
            *norm2 += a.column(n_direct + c).norm_squared();
        }
        // Column scaling of the direct block keeps the QR well behaved when
        // poles span many decades; it does not change the sigma block.
        let direct_scale = column_norms(&a.columns(0, n_direct).into_owned());
        for (j, s) in direct_scale.iter().enumerate() {
            if *s > 0.0 {
                a.column_mut(j).scale_mut(1.0 / s);
            }
        }
        let qr = a.qr();
        let q = qr.q();
        let r = qr.r();
        let qtb = q.transpose() * &b;
        r22_rows.push(r.view((n_direct, n_direct), (n_basis, n_basis)).into_owned());
        rhs_rows.push(qtb.rows(n_direct, n_basis).into_owned());
    }

    let m = r22_rows.len();
    let mut big = DMatrix::zeros(m * n_basis, n_basis);
    let mut rhs = DVector::zeros(m * n_basis);
    for (i, (r, q)) in r22_rows.iter().zip(&rhs_rows).enumerate() {
        big.view_mut((i * n_basis, 0), (n_basis, n_basis)).copy_from(r);
        rhs.rows_mut(i * n_basis, n_basis).copy_from(q);
    }
    let scale: Vec<f64> = sigma_norm2.iter().map(|v| v.sqrt()).collect();
    let c_tilde =
        scaled_lstsq(&big, &rhs, &scale, RELOCATION_RCOND, false).expect("non-strict solve cannot fail");

    // Zeros of sigma(s) = 1 + sum c~_i phi_i(s) are eig(A - b c~^T).
    let mut h = DMatrix::zeros(n_basis, n_basis);
    let mut bvec = DVector::zeros(n_basis);
    let mut i = 0;
    for p in poles {
        match *p {
            Pole::Real(a) => {
                h[(i, i)] = a;
                bvec[i] = 1.0;
                i += 1;
            }
            Pole::Pair(a) => {
                h[(i, i)] = a.re;
                h[(i, i + 1)] = a.im;
                h[(i + 1, i)] = -a.im;
                h[(i + 1, i + 1)] = a.re;
                bvec[i] = 2.0;
                i += 2;
            }
        }
    }
    let zmat = h - bvec * c_tilde.transpose();
    classify(zmat.complex_eigenvalues().iter().copied())
}

/// Splits eigenvalues into real poles and upper-half-plane pair members,
/// flipping any unstable ones into the left half plane.
fn classify(eigs: impl Iterator<Item = Complex64>) -> Vec<Pole> {
    let mut out = Vec::new();
    for z in eigs {
        let mut re = -z.re.abs();
        if re == 0.0 {
            re = -1e-6 * z.im.abs().max(1.0);
        }
        if z.im.abs() <= 1e-12 * z.norm() {
            out.push(Pole::Real(re));
        } else if z.im > 0.0 {
            out.push(Pole::Pair(Complex64::new(re, z.im)));
        }
    }
    out.sort_by(|a, b| {
        let key = |p: &Pole| match p {
            Pole::Real(a) => a.abs(),
            Pole::Pair(a) => a.norm(),
        };
        key(a).partial_cmp(&key(b)).unwrap()
    });
    out
}

/// Residues, `d` and (optionally) `e` for frozen poles.
fn solve_residues(data: &Data, poles: &[Pole], with_e: bool) -> Result<(Vec<PoleTerm>, DMatrix<f64>, DMatrix<f64>)> {
    let n = data.n;
    let n_basis: usize = poles.iter().map(|p| p.order()).sum();
    let n_cols = n_basis + 1 + usize::from(with_e);
    let n_rows = 2 * data.s.len();
    let mut phi = Vec::with_capacity(n_basis);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n_cols];

    let mut solutions = Vec::with_capacity(n * n);
    for (values, weights) in data.values.iter().zip(&data.weights) {
        let mut a = DMatrix::zeros(n_rows, n_cols);
        let mut b = DVector::zeros(n_rows);
        for (k, s) in data.s.iter().enumerate() {
            basis(poles, *s, &mut phi);
            let w = weights[k];
            for (c, p) in phi.iter().enumerate() {
                coeffs[c] = p * w;
            }
            coeffs[n_basis] = Complex64::new(w, 0.0);
            if with_e {
                coeffs[n_basis + 1] = s * w;
            }
            push_complex_row(&mut a, 2 * k, &coeffs);
            let hw = values[k] * w;
            b[2 * k] = hw.re;
            b[2 * k + 1] = hw.im;
        }
        let scale = column_norms(&a);
        solutions.push(scaled_lstsq(&a, &b, &scale, 0.0, true)?);
    }

    let entry = |m: usize, c: usize| solutions[m][c];
    let mut terms = Vec::with_capacity(poles.len());
    let mut col = 0;
    for p in poles {
        match *p {
            Pole::Real(a) => {
                let residue = DMatrix::from_fn(n, n, |i, j| entry(i * n + j, col));
                terms.push(PoleTerm::Real { pole: a, residue });
                col += 1;
            }
            Pole::Pair(a) => {
                let residue =
                    DMatrix::from_fn(n, n, |i, j| Complex64::new(entry(i * n + j, col), entry(i * n + j, col + 1)));
                terms.push(PoleTerm::Pair { pole: a, residue });
                col += 2;
            }
        }
    }
    let d = DMatrix::from_fn(n, n, |i, j| entry(i * n + j, n_basis));
    let e = if with_e {
        DMatrix::from_fn(n, n, |i, j| entry(i * n + j, n_basis + 1))
    } else {
        DMatrix::zeros(n, n)
    };
    Ok((terms, d, e))
}

/// Fits a common-pole rational model to a tabulated Y (or Z) response.
///
/// All `n^2` entries share the poles. The response must have strictly
/// positive frequencies and at least `2 n_poles + 2` samples.
pub fn vector_fit(resp: &FrequencyResponse, opts: &VectorFitOptions) -> Result<RationalModel> {
    if resp.kind() == ParamKind::S {
        return Err(Error::WrongKind { expected: "Y or Z".into(), found: "S".into() });
    }
    if opts.n_poles == 0 {
        return Err(Error::invalid("n_poles must be at least 1"));
    }
    if resp.len() < 2 * opts.n_poles + 2 {
        return Err(Error::invalid(format!(
            "{} poles need at least {} frequency samples, got {}",
            opts.n_poles,
            2 * opts.n_poles + 2,
            resp.len()
        )));
    }
    if resp.fmin() <= 0.0 {
        return Err(Error::invalid("vector fitting needs strictly positive frequencies"));
    }
    let data = Data::new(resp, opts.weighting);
    let mut poles = starting_poles(resp.fmin(), resp.fmax(), opts.n_poles);
    for _ in 0..opts.n_iter {
        poles = relocate(&data, &poles, opts.fit_proportional);
    }
    let (terms, d, e) = solve_residues(&data, &poles, opts.fit_proportional)?;
    let mut model = RationalModel::new(terms, d, e, (resp.fmin(), resp.fmax()), 0.0)?;
    let err = relative_rms_error(&model, resp);
    model.set_fit_error(err);
    log::debug!("vector fit: {} poles, relative RMS error {:.3e}", model.order(), err);
    Ok(model)
}

/// Fit error for each requested order, to help pick `n_poles` by hand.
/// Orders the data cannot support are skipped.
pub fn order_sweep(resp: &FrequencyResponse, orders: &[usize], opts: &VectorFitOptions) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for &n in orders {
        if n == 0 || resp.len() < 2 * n + 2 {
            continue;
        }
        let model = vector_fit(resp, &VectorFitOptions { n_poles: n, ..*opts })?;
        out.push((n, model.fit_error()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{log_grid_per_decade, CMatrix, DEFAULT_Z0};

    fn tabulate(freqs: &[f64], n: usize, f: impl Fn(Complex64) -> CMatrix) -> FrequencyResponse {
        let data = freqs.iter().map(|fr| f(Complex64::new(0.0, 2.0 * PI * fr))).collect();
        let _ = n;
        FrequencyResponse::new(ParamKind::Y, DEFAULT_Z0, freqs.to_vec(), data).unwrap()
    }

    fn scalar(v: Complex64) -> CMatrix {
        CMatrix::from_element(1, 1, v)
    }

    #[test]
    fn initial_poles_single_pair() {
        let p = initial_poles(1e3, 1e3, 1);
        let beta = 2.0 * PI * 1e3;
        assert_eq!(p, vec![Complex64::new(-beta / 100.0, beta), Complex64::new(-beta / 100.0, -beta)]);
        assert!((p[0].re + 62.83185307179586).abs() < 1e-9);
    }

    #[test]
    fn one_real_pole_is_recovered() {
        let a = 2.0 * PI * 1e4;
        let freqs = log_grid_per_decade(1e2, 1e6, 20);
        let resp = tabulate(&freqs, 1, |s| scalar((s + a).inv()));
        let opts = VectorFitOptions { n_poles: 1, ..Default::default() };
        let m = vector_fit(&resp, &opts).unwrap();
        assert!(m.fit_error() < 1e-8, "{}", m.fit_error());
        match &m.terms()[0] {
            PoleTerm::Real { pole, residue } => {
                assert!((pole + a).abs() / a < 1e-8);
                assert!((residue[(0, 0)] - 1.0).abs() < 1e-8);
            }
            t => panic!("expected a real pole, got {t:?}"),
        }
    }

    #[test]
    fn pair_with_constant_term() {
        let p = Complex64::new(-2e3, 3e5);
        let r = Complex64::new(4e3, -1e3);
        let truth = |s: Complex64| scalar(r / (s - p) + r.conj() / (s - p.conj()) + 0.1);
        let resp = tabulate(&log_grid_per_decade(1e2, 1e7, 20), 1, truth);
        let opts = VectorFitOptions { n_poles: 2, ..Default::default() };
        let m = vector_fit(&resp, &opts).unwrap();
        assert!(m.fit_error() < 1e-8, "{}", m.fit_error());
        assert!((m.d()[(0, 0)] - 0.1).abs() < 1e-8);
        match &m.terms()[0] {
            PoleTerm::Pair { pole, residue } => {
                assert!((pole - p).norm() / p.norm() < 1e-8);
                assert!((residue[(0, 0)] - r).norm() / r.norm() < 1e-8);
            }
            t => panic!("expected a pair, got {t:?}"),
        }
    }

    #[test]
    fn order_sweep_drops_once_the_true_order_is_reached() {
        let p = Complex64::new(-2e3, 3e5);
        let truth = |s: Complex64| scalar(1e3 / (s - p) + 1e3 / (s - p.conj()) + 5e4 / (s + 1e6));
        let resp = tabulate(&log_grid_per_decade(1e2, 1e7, 10), 1, truth);
        let sweep = order_sweep(&resp, &[1, 2, 3, 40], &Default::default()).unwrap();
        assert_eq!(sweep.iter().map(|s| s.0).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(sweep[0].1 > 1e-3);
        assert!(sweep[2].1 < 1e-8, "{:?}", sweep);
    }

    #[test]
    fn constant_data_gives_zero_residues() {
        let resp = tabulate(&log_grid_per_decade(1e3, 1e6, 10), 1, |_| scalar(Complex64::new(0.02, 0.0)));
        let opts = VectorFitOptions { n_poles: 2, ..Default::default() };
        let m = vector_fit(&resp, &opts).unwrap();
        assert!((m.d()[(0, 0)] - 0.02).abs() < 1e-12);
        for t in m.terms() {
            let PoleTerm::Pair { residue, .. } = t else { panic!("pair expected") };
            assert!(residue[(0, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn symmetric_data_gives_symmetric_residues() {
        let p = Complex64::new(-1e4, 2e6);
        let rs = [Complex64::new(1e5, 2e4), Complex64::new(-3e4, 1e3), Complex64::new(2e5, -5e4)];
        let truth = |s: Complex64| {
            let k1 = (s - p).inv();
            let k2 = (s - p.conj()).inv();
            let v = |r: Complex64| r * k1 + r.conj() * k2;
            CMatrix::from_row_slice(2, 2, &[v(rs[0]) + 1.0, v(rs[1]) - 0.5, v(rs[1]) - 0.5, v(rs[2]) + 2.0])
        };
        let resp = tabulate(&log_grid_per_decade(1e3, 1e8, 20), 2, truth);
        let m = vector_fit(&resp, &VectorFitOptions { n_poles: 2, ..Default::default() }).unwrap();
        assert!(m.fit_error() < 1e-9);
        for t in m.terms() {
            let PoleTerm::Pair { residue, .. } = t else { panic!("pair expected") };
            assert_eq!(residue[(0, 1)], residue[(1, 0)]);
        }
        assert_eq!(m.d()[(0, 1)], m.d()[(1, 0)]);
    }

    #[test]
    fn proportional_term_is_fitted_when_requested() {
        let truth = |s: Complex64| scalar(s * 1e-9 + 0.3 + 1e5 / (s + 1e5));
        let resp = tabulate(&log_grid_per_decade(1e2, 1e8, 20), 1, truth);
        let m = vector_fit(&resp, &VectorFitOptions { n_poles: 1, fit_proportional: true, ..Default::default() })
            .unwrap();
        assert!(m.fit_error() < 1e-8);
        assert!((m.e()[(0, 0)] - 1e-9).abs() < 1e-15);
    }

    #[test]
    fn rejects_too_few_samples() {
        let resp = tabulate(&log_grid(1e3, 1e6, 5), 1, |s| scalar((s + 1e4).inv()));
        let err = vector_fit(&resp, &VectorFitOptions { n_poles: 4, ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("samples"), "{err}");
    }
}
