//! Real state-space realisation of rational models and their discrete-time
//! simulation.
//!
//! The realisation is block diagonal: a real pole gives a 1x1 block, a
//! conjugate pair `a ± jb` a 2x2 block `[[a, b], [-b, a]]`, repeated once per
//! input. Discretisation and simulation work block by block, so cost is
//! linear in the number of states.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::CMatrix;
use crate::vector_fit::{PoleTerm, RationalModel};
use crate::waveform::Waveform;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    #[default]
    Zoh,
    Trapezoidal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// `x0 = (I - ad)^-1 bd u0`: the record starts in equilibrium.
    #[default]
    SteadyState,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Block {
    start: usize,
    /// 1 or 2.
    size: usize,
    input: usize,
    /// The pole, with `im >= 0`.
    pole: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    blocks: Vec<Block>,
}

impl StateSpaceModel {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `c (sI - a)^-1 b + d`.
    pub fn transfer(&self, s: Complex64) -> CMatrix {
        let mut h = self.d.map(|v| Complex64::new(v, 0.0));
        for blk in &self.blocks {
            let k = blk.start;
            if blk.size == 1 {
                let g = self.b[(k, blk.input)] / (s - self.a[(k, k)]);
                for o in 0..self.n_outputs() {
                    h[(o, blk.input)] += self.c[(o, k)] * g;
                }
            } else {
                // (sI - A)^-1 b for A = [[al, be], [-be, al]].
                let (al, be) = (self.a[(k, k)], self.a[(k, k + 1)]);
                let (b0, b1) = (self.b[(k, blk.input)], self.b[(k + 1, blk.input)]);
                let sa = s - al;
                let det = sa * sa + be * be;
                let x0 = (sa * b0 + be * b1) / det;
                let x1 = (sa * b1 - be * b0) / det;
                for o in 0..self.n_outputs() {
                    h[(o, blk.input)] += x0 * self.c[(o, k)] + x1 * self.c[(o, k + 1)];
                }
            }
        }
        h
    }

    pub fn transfer_at(&self, f: f64) -> CMatrix {
        self.transfer(Complex64::new(0.0, 2.0 * PI * f))
    }

    /// One-input, one-output model of a single pole (`im > 0` gives a pair
    /// block) with unit residue.
    pub fn single_pole(pole: Complex64) -> Self {
        let size = if pole.im == 0.0 { 1 } else { 2 };
        let mut a = DMatrix::zeros(size, size);
        let mut b = DMatrix::zeros(size, 1);
        let mut c = DMatrix::zeros(1, size);
        a[(0, 0)] = pole.re;
        b[(0, 0)] = size as f64;
        c[(0, 0)] = 1.0;
        if size == 2 {
            a[(0, 1)] = pole.im;
            a[(1, 0)] = -pole.im;
            a[(1, 1)] = pole.re;
        }
        Self { a, b, c, d: DMatrix::zeros(1, 1), blocks: vec![Block { start: 0, size, input: 0, pole }] }
    }
}

/// Real Gilbert-style realisation, one block per pole term and input.
pub fn realize(model: &RationalModel) -> Result<StateSpaceModel> {
    if model.has_proportional_term() {
        return Err(Error::ProportionalTerm);
    }
    let n = model.n_ports();
    let n_states = model.order() * n;
    let mut a = DMatrix::zeros(n_states, n_states);
    let mut b = DMatrix::zeros(n_states, n);
    let mut c = DMatrix::zeros(n, n_states);
    let mut blocks = Vec::with_capacity(model.terms().len() * n);
    let mut k = 0;
    for input in 0..n {
        for term in model.terms() {
            match term {
                PoleTerm::Real { pole, residue } => {
                    a[(k, k)] = *pole;
                    b[(k, input)] = 1.0;
                    for o in 0..n {
                        c[(o, k)] = residue[(o, input)];
                    }
                    blocks.push(Block { start: k, size: 1, input, pole: Complex64::new(*pole, 0.0) });
                    k += 1;
                }
                PoleTerm::Pair { pole, residue } => {
                    a[(k, k)] = pole.re;
                    a[(k, k + 1)] = pole.im;
                    a[(k + 1, k)] = -pole.im;
                    a[(k + 1, k + 1)] = pole.re;
                    b[(k, input)] = 2.0;
                    for o in 0..n {
                        c[(o, k)] = residue[(o, input)].re;
                        c[(o, k + 1)] = residue[(o, input)].im;
                    }
                    blocks.push(Block { start: k, size: 2, input, pole: *pole });
                    k += 2;
                }
            }
        }
    }
    Ok(StateSpaceModel { a, b, c, d: model.d().clone(), blocks })
}

/// Per-block discrete data. For a 1x1 block only the `[0]` entries are used.
#[derive(Clone, Copy, Debug, PartialEq)]
struct DiscreteBlock {
    start: usize,
    size: usize,
    input: usize,
    ad: Matrix2<f64>,
    bd: Vector2<f64>,
    /// `-a^-1 b` restricted to the block: the equilibrium state per unit input.
    dc_state: Vector2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteModel {
    ad: DMatrix<f64>,
    bd: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    dt: f64,
    method: Discretization,
    blocks: Vec<DiscreteBlock>,
}

impl DiscreteModel {
    pub fn ad(&self) -> &DMatrix<f64> {
        &self.ad
    }

    pub fn bd(&self) -> &DMatrix<f64> {
        &self.bd
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn method(&self) -> Discretization {
        self.method
    }

    pub fn n_inputs(&self) -> usize {
        self.bd.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                if b.size == 1 {
                    b.ad[(0, 0)].abs()
                } else {
                    // Eigenvalues of a 2x2 real block: trace/2 ± sqrt(...).
                    let tr = b.ad.trace() / 2.0;
                    let det = b.ad.determinant();
                    let disc = tr * tr - det;
                    if disc >= 0.0 {
                        (tr.abs() + disc.sqrt()).max((tr.abs() - disc.sqrt()).abs())
                    } else {
                        det.sqrt()
                    }
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `(e^z - 1)` without cancellation for small `|z|`.
fn cexpm1(z: Complex64) -> Complex64 {
    let half = (z.im / 2.0).sin();
    Complex64::new(z.re.exp_m1() * z.im.cos() - 2.0 * half * half, z.re.exp() * z.im.sin())
}

/// 2x2 real matrix of multiplication by `w` on the pair `(x0, x1)`, where the
/// block dynamics `[[al, be], [-be, al]]` act as multiplication by
/// `al - j be` on `x0 + j x1`.
fn cmul_matrix(w: Complex64) -> Matrix2<f64> {
    Matrix2::new(w.re, -w.im, w.im, w.re)
}

/// Exact zero-order-hold step of a pair block in complex form.
fn zoh_pair(lam: Complex64, bvec: Complex64, dt: f64) -> (Matrix2<f64>, Vector2<f64>) {
    let e = cexpm1(lam * dt);
    let g = e / lam * bvec;
    (cmul_matrix(e + 1.0), Vector2::new(g.re, g.im))
}

pub fn discretize(ssm: &StateSpaceModel, dt: f64, method: Discretization) -> Result<DiscreteModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let ns = ssm.n_states();
    let mut ad = DMatrix::zeros(ns, ns);
    let mut bd = DMatrix::zeros(ns, ssm.n_inputs());
    let mut c = ssm.c.clone();
    let mut d = ssm.d.clone();
    let mut blocks = Vec::with_capacity(ssm.blocks.len());

    for blk in &ssm.blocks {
        let k = blk.start;
        let mut out = DiscreteBlock {
            start: k,
            size: blk.size,
            input: blk.input,
            ad: Matrix2::zeros(),
            bd: Vector2::zeros(),
            dc_state: Vector2::zeros(),
        };
        if blk.size == 1 {
            let a = ssm.a[(k, k)];
            let b = ssm.b[(k, blk.input)];
            out.dc_state[0] = -b / a;
            match method {
                Discretization::Zoh => {
                    out.ad[(0, 0)] = (a * dt).exp();
                    out.bd[0] = (a * dt).exp_m1() / a * b;
                }
                Discretization::Trapezoidal => {
                    let ima = 1.0 - a * dt / 2.0;
                    out.ad[(0, 0)] = (1.0 + a * dt / 2.0) / ima;
                    out.bd[0] = dt * b / ima;
                    let c_old = ssm.c.column(k).into_owned();
                    for o in 0..c.nrows() {
                        d[(o, blk.input)] += 0.5 * c_old[o] * out.bd[0];
                        c[(o, k)] = c_old[o] / ima;
                    }
                }
            }
        } else {
            let lam = Complex64::new(ssm.a[(k, k)], -ssm.a[(k, k + 1)]);
            let bvec = Complex64::new(ssm.b[(k, blk.input)], ssm.b[(k + 1, blk.input)]);
            let dc = -bvec / lam;
            out.dc_state = Vector2::new(dc.re, dc.im);
            match method {
                Discretization::Zoh => (out.ad, out.bd) = zoh_pair(lam, bvec, dt),
                Discretization::Trapezoidal => {
                    let ima_inv = (1.0 - lam * dt / 2.0).inv();
                    out.ad = cmul_matrix((1.0 + lam * dt / 2.0) * ima_inv);
                    let g = ima_inv * dt * bvec;
                    out.bd = Vector2::new(g.re, g.im);
                    let m = cmul_matrix(ima_inv);
                    for o in 0..c.nrows() {
                        let (c0, c1) = (ssm.c[(o, k)], ssm.c[(o, k + 1)]);
                        d[(o, blk.input)] += 0.5 * (c0 * out.bd[0] + c1 * out.bd[1]);
                        c[(o, k)] = c0 * m[(0, 0)] + c1 * m[(1, 0)];
                        c[(o, k + 1)] = c0 * m[(0, 1)] + c1 * m[(1, 1)];
                    }
                }
            }
        }
        for i in 0..blk.size {
            for j in 0..blk.size {
                ad[(k + i, k + j)] = out.ad[(i, j)];
            }
            bd[(k + i, blk.input)] = out.bd[i];
        }
        blocks.push(out);
    }

    let dm = DiscreteModel { ad, bd, c, d, dt, method, blocks };
    let rho = dm.spectral_radius();
    if !(rho < 1.0) {
        return Err(Error::invalid(format!(
            "discretised model is not strictly stable (spectral radius {rho}); the step {dt} s is too small for the slowest pole"
        )));
    }
    Ok(dm)
}

/// Runs `x[k+1] = ad x[k] + bd u[k]`, `y[k] = c x[k] + d u[k]`.
pub fn simulate(dm: &DiscreteModel, inputs: &[&Waveform], init: InitialState) -> Result<Vec<Waveform>> {
    let m = dm.n_inputs();
    if inputs.len() != m {
        return Err(Error::invalid(format!("model has {m} inputs, got {} waveforms", inputs.len())));
    }
    let first = inputs[0];
    for (i, w) in inputs.iter().enumerate().skip(1) {
        first.check_aligned(w, &format!("input 0 vs input {i}"))?;
    }
    if (first.dt() - dm.dt).abs() > crate::waveform::ALIGN_TOL * dm.dt {
        return Err(Error::Misaligned(format!("input dt {} s differs from model dt {} s", first.dt(), dm.dt)));
    }

    let len = first.len();
    let p = dm.n_outputs();
    let ns = dm.ad.nrows();
    let mut x = vec![0.0; ns];
    if init == InitialState::SteadyState {
        for blk in &dm.blocks {
            let u0 = inputs[blk.input].samples()[0];
            for i in 0..blk.size {
                x[blk.start + i] = blk.dc_state[i] * u0;
            }
        }
    }
    // Row-major copies for the inner loop.
    let c: Vec<f64> = (0..p).flat_map(|o| (0..ns).map(move |s| (o, s))).map(|(o, s)| dm.c[(o, s)]).collect();
    let d: Vec<f64> = (0..p).flat_map(|o| (0..m).map(move |i| (o, i))).map(|(o, i)| dm.d[(o, i)]).collect();
    let us: Vec<&[f64]> = inputs.iter().map(|w| w.samples()).collect();

    let mut outputs = vec![vec![0.0; len]; p];
    let mut u = vec![0.0; m];
    for k in 0..len {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = us[i][k];
        }
        for o in 0..p {
            let mut y = 0.0;
            for s in 0..ns {
                y += c[o * ns + s] * x[s];
            }
            for i in 0..m {
                y += d[o * m + i] * u[i];
            }
            outputs[o][k] = y;
        }
        for blk in &dm.blocks {
            let ub = u[blk.input];
            let j = blk.start;
            if blk.size == 1 {
                x[j] = blk.ad[(0, 0)] * x[j] + blk.bd[0] * ub;
            } else {
                let (x0, x1) = (x[j], x[j + 1]);
                x[j] = blk.ad[(0, 0)] * x0 + blk.ad[(0, 1)] * x1 + blk.bd[0] * ub;
                x[j + 1] = blk.ad[(1, 0)] * x0 + blk.ad[(1, 1)] * x1 + blk.bd[1] * ub;
            }
        }
    }
    let unit = first.unit().through_admittance();
    outputs.into_iter().map(|y| Waveform::new(first.t0(), first.dt(), y, unit)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::log_grid;
    use crate::waveform::Unit;

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn first_order() -> RationalModel {
        RationalModel::new(vec![PoleTerm::Real { pole: -1.0, residue: one(1.0) }], one(0.0), one(0.0), (0.01, 10.0), 0.0)
            .unwrap()
    }

    #[test]
    fn canonical_first_order() {
        let ss = realize(&first_order()).unwrap();
        assert_eq!(ss.a(), &one(-1.0));
        assert_eq!(ss.b(), &one(1.0));
        assert_eq!(ss.c(), &one(1.0));
        assert_eq!(ss.d(), &one(0.0));
        assert_eq!(ss.transfer(Complex64::new(0.0, 0.0))[(0, 0)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn feedthrough_only() {
        let m = RationalModel::constant(one(0.02), (1.0, 10.0)).unwrap();
        let ss = realize(&m).unwrap();
        assert_eq!(ss.n_states(), 0);
        let dm = discretize(&ss, 1e-3, Discretization::Zoh).unwrap();
        let u = Waveform::new(0.0, 1e-3, vec![1.0, -2.0, 3.0], Unit::Volt).unwrap();
        let y = simulate(&dm, &[&u], InitialState::SteadyState).unwrap();
        assert_eq!(y[0].samples(), &[0.02, -0.04, 0.06]);
        assert_eq!(y[0].unit(), Unit::Ampere);
    }

    #[test]
    fn pair_transfer_matches_model() {
        let m = RationalModel::new(
            vec![PoleTerm::Pair {
                pole: Complex64::new(-1e3, 1e5),
                residue: CMatrix::from_element(1, 1, Complex64::new(5.0, 2.0)),
            }],
            one(0.0),
            one(0.0),
            (1.0, 1e6),
            0.0,
        )
        .unwrap();
        let ss = realize(&m).unwrap();
        for f in [10.0, 1e3, 15915.494309189535, 1e5, 1e6] {
            let h = m.eval_freq(f)[(0, 0)];
            let g = ss.transfer_at(f)[(0, 0)];
            assert!((h - g).norm() <= 1e-10 * h.norm(), "{f}: {h} vs {g}");
        }
    }

    #[test]
    fn two_port_transfer_and_dense_matches_blocks() {
        let r = CMatrix::from_row_slice(2, 2, &[
            Complex64::new(1e5, 3e3),
            Complex64::new(-2e4, 1e2),
            Complex64::new(-2e4, 1e2),
            Complex64::new(5e4, -7e3),
        ]);
        let m = RationalModel::new(
            vec![
                PoleTerm::Real { pole: -2e6, residue: DMatrix::from_row_slice(2, 2, &[2e8, -2e8, -2e8, 2e8]) },
                PoleTerm::Pair { pole: Complex64::new(-5e4, 3e6), residue: r },
            ],
            DMatrix::from_row_slice(2, 2, &[1e-3, 0.0, 0.0, 2e-3]),
            DMatrix::zeros(2, 2),
            (1e3, 1e8),
            0.0,
        )
        .unwrap();
        let ss = realize(&m).unwrap();
        assert_eq!(ss.n_states(), 6);
        for f in log_grid(1e3, 1e8, 20) {
            let s = Complex64::new(0.0, 2.0 * PI * f);
            let h = m.eval_s(s);
            let g = ss.transfer(s);
            assert!((&h - &g).norm() <= 1e-10 * h.norm());
            // Dense evaluation as an independent check of the block formula.
            let n = ss.n_states();
            let si_a = DMatrix::from_fn(n, n, |i, j| {
                let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
                diag - ss.a()[(i, j)]
            });
            let x = si_a.lu().solve(&ss.b().map(|v| Complex64::new(v, 0.0))).unwrap();
            let dense = ss.c().map(|v| Complex64::new(v, 0.0)) * x + ss.d().map(|v| Complex64::new(v, 0.0));
            assert!((&dense - &g).norm() <= 1e-10 * h.norm());
        }
    }

    #[test]
    fn proportional_term_is_rejected() {
        let m = RationalModel::new(Vec::new(), one(0.0), one(1e-9), (1.0, 2.0), 0.0).unwrap();
        assert!(matches!(realize(&m), Err(Error::ProportionalTerm)));
    }

    #[test]
    fn zoh_scalar_exponential() {
        let dm = discretize(&realize(&first_order()).unwrap(), 1.0, Discretization::Zoh).unwrap();
        assert!((dm.ad()[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((dm.ad()[(0, 0)] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn zoh_pure_rotation() {
        // alpha = 0, beta = 2 pi: a quarter period per step.
        let (ad, _) = zoh_pair(Complex64::new(0.0, -2.0 * PI), Complex64::new(2.0, 0.0), 0.25);
        assert!(ad[(0, 0)].abs() < 1e-15 && ad[(1, 1)].abs() < 1e-15);
        assert!((ad[(0, 1)] - 1.0).abs() < 1e-15 && (ad[(1, 0)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_step_taylor_limit() {
        // A PDN-scale pair and real pole at dt = 1 ns.
        for pole in [Complex64::new(-2e6, 0.0), Complex64::new(-3e5, 2.0 * PI * 5e6)] {
            let ss = StateSpaceModel::single_pole(pole);
            let dt = 1e-9;
            let dm = discretize(&ss, dt, Discretization::Zoh).unwrap();
            let n = ss.n_states();
            let taylor = DMatrix::identity(n, n) + ss.a() * dt;
            let err = (dm.ad() - &taylor).abs().max();
            let scale = (ss.a() * dt).norm();
            assert!(err <= scale * scale, "{err} vs {}", scale * scale);
        }
    }

    #[test]
    fn zoh_step_response_is_exact() {
        let dm = discretize(&realize(&first_order()).unwrap(), 1e-3, Discretization::Zoh).unwrap();
        let u = Waveform::constant(0.0, 1e-3, 2001, 1.0, Unit::Volt).unwrap();
        let y = simulate(&dm, &[&u], InitialState::Zero).unwrap();
        for (k, v) in y[0].samples().iter().enumerate() {
            let t = k as f64 * 1e-3;
            assert!((v - (1.0 - (-t).exp())).abs() < 1e-12, "{k}");
        }
        assert!((y[0].samples()[1000] - 0.6321205588285577).abs() < 1e-6);
    }

    #[test]
    fn steady_state_start_is_flat() {
        for method in [Discretization::Zoh, Discretization::Trapezoidal] {
            let dm = discretize(&realize(&first_order()).unwrap(), 1e-2, method).unwrap();
            let u = Waveform::constant(0.0, 1e-2, 50, 2.0, Unit::Volt).unwrap();
            let y = simulate(&dm, &[&u], InitialState::SteadyState).unwrap();
            assert!(y[0].samples().iter().all(|v| (v - 2.0).abs() < 1e-12), "{method:?}");
        }
    }

    #[test]
    fn trapezoidal_matches_bilinear_formulas() {
        let ss = StateSpaceModel::single_pole(Complex64::new(-3.0, 7.0));
        let h = 0.05;
        let dm = discretize(&ss, h, Discretization::Trapezoidal).unwrap();
        let n = 2;
        let ima = DMatrix::identity(n, n) - ss.a() * (h / 2.0);
        let ima_inv = ima.try_inverse().unwrap();
        let ad = &ima_inv * (DMatrix::identity(n, n) + ss.a() * (h / 2.0));
        let bd = &ima_inv * ss.b() * h;
        let cd = ss.c() * &ima_inv;
        let dd = ss.d() + ss.c() * &bd * 0.5;
        assert!((dm.ad() - ad).abs().max() < 1e-14);
        assert!((dm.bd() - bd).abs().max() < 1e-14);
        assert!((dm.c() - cd).abs().max() < 1e-14);
        assert!((dm.d() - dd).abs().max() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ss = realize(&first_order()).unwrap();
        assert!(discretize(&ss, 0.0, Discretization::Zoh).is_err());
        let dm = discretize(&ss, 1e-3, Discretization::Zoh).unwrap();
        let wrong_dt = Waveform::constant(0.0, 2e-3, 5, 1.0, Unit::Volt).unwrap();
        assert!(simulate(&dm, &[&wrong_dt], InitialState::Zero).is_err());
        let u = Waveform::constant(0.0, 1e-3, 5, 1.0, Unit::Volt).unwrap();
        assert!(simulate(&dm, &[&u, &u], InitialState::Zero).is_err());
    }
}
