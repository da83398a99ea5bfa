//! Synthetic bench: transient simulation of a Pi-network PDN driven by a
//! programmable current sink, followed by an end-to-end estimation run that is
//! scored against the known load and source currents.
//!
//! The simulator is a two-node modified nodal analysis with trapezoidal
//! companion models. Node 1 is fed by an ideal source through
//! `source_resistance`; node 2 carries the load.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuits::{pi_y_params, BranchSet, PiNetwork, RlcBranch};
use crate::error::{Error, Result};
use crate::estimator::{
    compare, nice_freq_domain, nice_time_domain, AdmittanceSource, ComparisonReport, EstimationPath,
    FreqDomainOptions, TimeDomainOptions,
};
use crate::spectra::log_grid_per_decade;
use crate::vector_fit::{passivity_check, passivity_enforce, vector_fit, VectorFitOptions};
use crate::waveform::{Unit, Waveform};

/// Load current as a function of time. All currents are sink currents (>= 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LoadProfile {
    /// Trapezoidal pulse: `baseline`, then a linear rise to
    /// `baseline + amplitude` over `rise`, held for `width`, linear fall.
    Pulse { baseline: f64, amplitude: f64, delay: f64, rise: f64, width: f64, fall: f64 },
    /// Slow linear ramp up and down; same shape parameters as a pulse.
    Ramp { baseline: f64, amplitude: f64, delay: f64, rise: f64, width: f64, fall: f64 },
    /// `baseline + amplitude sin(2 pi (t - delay) / period)` after `delay`.
    Sine { baseline: f64, amplitude: f64, delay: f64, period: f64 },
    /// Repeating ramp from `baseline` to `baseline + amplitude` lasting
    /// `period - fall`, then a linear drop over `fall`.
    Sawtooth { baseline: f64, amplitude: f64, delay: f64, period: f64, fall: f64 },
    /// Exponential rise with `time_constant` after `delay`, exponential decay
    /// with the same constant after `delay + width`.
    Exponential { baseline: f64, amplitude: f64, delay: f64, width: f64, time_constant: f64 },
    /// Piecewise-linear `(t, i)` breakpoints, held constant outside.
    Pwl { points: Vec<(f64, f64)> },
}

fn trapezoid(t: f64, baseline: f64, amplitude: f64, delay: f64, rise: f64, width: f64, fall: f64) -> f64 {
    let x = t - delay;
    let shape = if x <= 0.0 {
        0.0
    } else if x < rise {
        x / rise
    } else if x <= rise + width {
        1.0
    } else if x < rise + width + fall {
        1.0 - (x - rise - width) / fall
    } else {
        0.0
    };
    baseline + amplitude * shape
}

impl LoadProfile {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("load {name} must be finite and >= 0, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("load {name} must be finite and > 0, got {v}")))
            }
        };
        match self {
            LoadProfile::Pulse { baseline, amplitude, delay, rise, width, fall }
            | LoadProfile::Ramp { baseline, amplitude, delay, rise, width, fall } => {
                nonneg("baseline", *baseline)?;
                nonneg("amplitude", *amplitude)?;
                nonneg("delay", *delay)?;
                positive("rise", *rise)?;
                nonneg("width", *width)?;
                positive("fall", *fall)
            }
            LoadProfile::Sine { baseline, amplitude, delay, period } => {
                nonneg("amplitude", *amplitude)?;
                nonneg("delay", *delay)?;
                positive("period", *period)?;
                if !(*baseline >= *amplitude) {
                    return Err(Error::invalid("sine load needs baseline >= amplitude to stay a sink"));
                }
                Ok(())
            }
            LoadProfile::Sawtooth { baseline, amplitude, delay, period, fall } => {
                nonneg("baseline", *baseline)?;
                nonneg("amplitude", *amplitude)?;
                nonneg("delay", *delay)?;
                positive("period", *period)?;
                positive("fall", *fall)?;
                if !(*fall < *period) {
                    return Err(Error::invalid("sawtooth fall must be shorter than its period"));
                }
                Ok(())
            }
            LoadProfile::Exponential { baseline, amplitude, delay, width, time_constant } => {
                nonneg("baseline", *baseline)?;
                nonneg("amplitude", *amplitude)?;
                nonneg("delay", *delay)?;
                nonneg("width", *width)?;
                positive("time_constant", *time_constant)
            }
            LoadProfile::Pwl { points } => {
                if points.is_empty() {
                    return Err(Error::invalid("pwl load needs at least one breakpoint"));
                }
                for (k, &(t, i)) in points.iter().enumerate() {
                    nonneg("breakpoint time", t)?;
                    nonneg("breakpoint current", i)?;
                    if k > 0 && !(t > points[k - 1].0) {
                        return Err(Error::invalid("pwl breakpoints must be strictly ascending in time"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Times in `[0, t_end]` where the profile's slope changes, ascending.
    pub fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        let mut out = match *self {
            LoadProfile::Pulse { delay, rise, width, fall, .. } | LoadProfile::Ramp { delay, rise, width, fall, .. } => {
                vec![delay, delay + rise, delay + rise + width, delay + rise + width + fall]
            }
            LoadProfile::Sine { delay, .. } => vec![delay],
            LoadProfile::Sawtooth { delay, period, fall, .. } => {
                let mut v = vec![delay];
                let mut start = delay;
                while start < t_end {
                    v.push(start + period - fall);
                    v.push(start + period);
                    start += period;
                }
                v
            }
            LoadProfile::Exponential { delay, width, .. } => vec![delay, delay + width],
            LoadProfile::Pwl { ref points } => points.iter().map(|p| p.0).collect(),
        };
        out.retain(|&t| t <= t_end);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Current drawn at time `t` (seconds).
    pub fn current(&self, t: f64) -> f64 {
        match *self {
            LoadProfile::Pulse { baseline, amplitude, delay, rise, width, fall }
            | LoadProfile::Ramp { baseline, amplitude, delay, rise, width, fall } => {
                trapezoid(t, baseline, amplitude, delay, rise, width, fall)
            }
            LoadProfile::Sine { baseline, amplitude, delay, period } => {
                if t <= delay {
                    baseline
                } else {
                    baseline + amplitude * (2.0 * PI * (t - delay) / period).sin()
                }
            }
            LoadProfile::Sawtooth { baseline, amplitude, delay, period, fall } => {
                if t <= delay {
                    return baseline;
                }
                let x = (t - delay) % period;
                let up = period - fall;
                let shape = if x < up { x / up } else { 1.0 - (x - up) / fall };
                baseline + amplitude * shape
            }
            LoadProfile::Exponential { baseline, amplitude, delay, width, time_constant } => {
                let x = t - delay;
                if x <= 0.0 {
                    return baseline;
                }
                let rise = |x: f64| -(-x / time_constant).exp_m1();
                if x <= width {
                    baseline + amplitude * rise(x)
                } else {
                    baseline + amplitude * rise(width) * (-(x - width) / time_constant).exp()
                }
            }
            LoadProfile::Pwl { ref points } => {
                let first = points[0];
                if t <= first.0 {
                    return first.1;
                }
                for w in points.windows(2) {
                    let ((t0, i0), (t1, i1)) = (w[0], w[1]);
                    if t <= t1 {
                        return i0 + (i1 - i0) * (t - t0) / (t1 - t0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }
}

fn default_oversample() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabScenario {
    pub version: u32,
    pub network: PiNetwork,
    pub source_voltage: f64,
    pub source_resistance: f64,
    pub load: LoadProfile,
    pub record_dt: f64,
    pub record_len: usize,
    #[serde(default = "default_oversample")]
    pub sim_oversample: usize,
    /// Standard deviation of additive Gaussian noise on v1 and v2 (volts).
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

impl LabScenario {
    pub const VERSION: u32 = 1;

    pub fn internal_step(&self) -> f64 {
        self.record_dt / self.sim_oversample as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != Self::VERSION {
            return Err(Error::invalid(format!("unsupported scenario version {}", self.version)));
        }
        for set in self.network.branch_sets() {
            for b in set.branches() {
                b.validate()?;
            }
        }
        if !self.source_voltage.is_finite() {
            return Err(Error::invalid("source_voltage must be finite"));
        }
        if !(self.source_resistance.is_finite() && self.source_resistance >= 0.0) {
            return Err(Error::invalid("source_resistance must be finite and >= 0"));
        }
        if !(self.record_dt > 0.0 && self.record_dt.is_finite()) {
            return Err(Error::invalid("record_dt must be positive"));
        }
        if self.record_len < 2 {
            return Err(Error::invalid("record_len must be at least 2"));
        }
        if self.sim_oversample < 2 {
            return Err(Error::invalid("sim_oversample must be at least 2"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        self.load.validate()?;
        if let Some(rate) = self.network.fastest_rate() {
            let tau = 1.0 / rate;
            let h = self.internal_step();
            if h > tau / 5.0 {
                return Err(Error::invalid(format!(
                    "internal step {h:e} s (record_dt / sim_oversample) exceeds 1/5 of the fastest branch time \
                     constant {tau:e} s; reduce record_dt or raise sim_oversample"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }
}

/// Recorded bench signals: port voltages, true load current and the current
/// delivered by the source into port 1.
#[derive(Clone, Debug, PartialEq)]
pub struct LabWaveforms {
    pub v1: Waveform,
    pub v2: Waveform,
    pub i_load: Waveform,
    pub i_src: Waveform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rule {
    Trapezoidal,
    /// Used for the step that starts at a load breakpoint, where the
    /// trapezoidal rule would ring at the Nyquist rate of the internal step.
    BackwardEuler,
}

/// Companion coefficients of a series R-L-C branch for one step:
/// `i[n+1] = g v[n+1] + g (kv v[n] + ki i[n] - kc vc[n])` and
/// `vc[n+1] = vc[n] + cn i[n+1] + co i[n]`.
#[derive(Clone, Copy, Debug)]
struct Companion {
    g: f64,
    kv: f64,
    ki: f64,
    kc: f64,
    cn: f64,
    co: f64,
}

impl Companion {
    fn new(b: &RlcBranch, h: f64, rule: Rule) -> Self {
        match rule {
            Rule::Trapezoidal => {
                let l2h = 2.0 * b.l / h;
                let alpha = b.c.map_or(0.0, |c| h / (2.0 * c));
                Self { g: 1.0 / (l2h + b.r + alpha), kv: 1.0, ki: l2h - b.r - alpha, kc: 2.0, cn: alpha, co: alpha }
            }
            Rule::BackwardEuler => {
                let lh = b.l / h;
                let beta = b.c.map_or(0.0, |c| h / c);
                Self { g: 1.0 / (lh + b.r + beta), kv: 0.0, ki: lh, kc: 1.0, cn: beta, co: 0.0 }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct BranchState {
    i: f64,
    vc: f64,
    hist: f64,
}

struct Leg {
    branches: Vec<RlcBranch>,
    state: Vec<BranchState>,
}

impl Leg {
    fn new(set: Option<&BranchSet>) -> Self {
        let branches = set.map(|s| s.branches().to_vec()).unwrap_or_default();
        let state = vec![BranchState::default(); branches.len()];
        Self { branches, state }
    }

    /// Stores each branch's history term for the coming step; returns their sum.
    fn prepare(&mut self, comps: &[Companion], v: f64) -> f64 {
        let mut total = 0.0;
        for (st, k) in self.state.iter_mut().zip(comps) {
            st.hist = k.g * (k.kv * v + k.ki * st.i - k.kc * st.vc);
            total += st.hist;
        }
        total
    }

    fn advance(&mut self, comps: &[Companion], v_new: f64) {
        for (st, k) in self.state.iter_mut().zip(comps) {
            let i_new = k.g * v_new + st.hist;
            st.vc += k.cn * i_new + k.co * st.i;
            st.i = i_new;
        }
    }

    fn current(&self) -> f64 {
        self.state.iter().map(|s| s.i).sum()
    }
}

/// Companions of all three legs for one step length and rule.
struct StepRule {
    comps: [Vec<Companion>; 3],
    g: [f64; 3],
}

impl StepRule {
    fn new(legs: &[Leg; 3], h: f64, rule: Rule) -> Self {
        let comps = legs.each_ref().map(|leg| leg.branches.iter().map(|b| Companion::new(b, h, rule)).collect::<Vec<_>>());
        let g = comps.each_ref().map(|c| c.iter().map(|k| k.g).sum());
        Self { comps, g }
    }
}

/// Two-node bench state: legs `[ya, yb, yc]` and the port voltages.
struct Bench {
    legs: [Leg; 3],
    v1: f64,
    v2: f64,
    vs: f64,
    /// Source conductance; `None` for an ideal source.
    gs: Option<f64>,
}

impl Bench {
    fn step(&mut self, rule: &StepRule, i_load: f64) -> Result<()> {
        let [ga, gb, gc] = rule.g;
        let ha = self.legs[0].prepare(&rule.comps[0], self.v1);
        let hb = self.legs[1].prepare(&rule.comps[1], self.v1 - self.v2);
        let hc = self.legs[2].prepare(&rule.comps[2], self.v2);
        let r2 = -i_load - hc + hb;
        let (v1, v2) = match self.gs {
            None => (self.vs, (r2 + gb * self.vs) / (gb + gc)),
            Some(gs) => {
                let g11 = ga + gb + gs;
                let g22 = gb + gc;
                let det = g11 * g22 - gb * gb;
                let r1 = gs * self.vs - ha - hb;
                ((r1 * g22 + gb * r2) / det, (g11 * r2 + gb * r1) / det)
            }
        };
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Singular { freq_hz: 0.0, what: "lab nodal matrix".into() });
        }
        self.v1 = v1;
        self.v2 = v2;
        let [a, b, c] = &mut self.legs;
        a.advance(&rule.comps[0], v1);
        b.advance(&rule.comps[1], v1 - v2);
        c.advance(&rule.comps[2], v2);
        Ok(())
    }

    fn source_current(&self) -> f64 {
        match self.gs {
            None => self.legs[0].current() + self.legs[1].current(),
            Some(gs) => gs * (self.vs - self.v1),
        }
    }
}

/// DC behaviour of a leg: finite conductance or a short.
enum DcLeg {
    Conductance(f64),
    Short,
}

fn dc_leg(set: Option<&BranchSet>) -> DcLeg {
    let mut g = 0.0;
    for b in set.map(BranchSet::branches).unwrap_or_default() {
        if b.c.is_some() {
            continue;
        }
        if b.r == 0.0 {
            return DcLeg::Short;
        }
        g += 1.0 / b.r;
    }
    DcLeg::Conductance(g)
}

/// DC operating point `(v1, v2, leg currents a, b, c)` by modified nodal
/// analysis, with shorts and a zero-resistance source as extra current
/// unknowns.
fn dc_operating_point(sc: &LabScenario, i_load: f64) -> Result<(f64, f64, [f64; 3])> {
    let net = &sc.network;
    let legs = [
        (dc_leg(net.ya.as_ref()), Some(0), None),
        (dc_leg(Some(&net.yb)), Some(0), Some(1)),
        (dc_leg(net.yc.as_ref()), Some(1), None),
    ];
    let shorts: Vec<usize> = (0..3).filter(|&k| matches!(legs[k].0, DcLeg::Short)).collect();
    let ideal_source = sc.source_resistance == 0.0;
    let n = 2 + shorts.len() + usize::from(ideal_source);
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);

    let stamp_g = |a: &mut DMatrix<f64>, p: Option<usize>, q: Option<usize>, g: f64| {
        if let Some(p) = p {
            a[(p, p)] += g;
        }
        if let Some(q) = q {
            a[(q, q)] += g;
        }
        if let (Some(p), Some(q)) = (p, q) {
            a[(p, q)] -= g;
            a[(q, p)] -= g;
        }
    };
    // Voltage-source row/column: v_p - v_q = e, current j flows p -> q.
    let stamp_v = |a: &mut DMatrix<f64>, rhs: &mut DVector<f64>, row: usize, p: Option<usize>, q: Option<usize>, e: f64| {
        if let Some(p) = p {
            a[(p, row)] += 1.0;
            a[(row, p)] += 1.0;
        }
        if let Some(q) = q {
            a[(q, row)] -= 1.0;
            a[(row, q)] -= 1.0;
        }
        rhs[row] = e;
    };

    let mut row = 2;
    let mut short_rows = [None; 3];
    for (k, (leg, p, q)) in legs.iter().enumerate() {
        match leg {
            DcLeg::Conductance(g) => stamp_g(&mut a, *p, *q, *g),
            DcLeg::Short => {
                stamp_v(&mut a, &mut rhs, row, *p, *q, 0.0);
                short_rows[k] = Some(row);
                row += 1;
            }
        }
    }
    if ideal_source {
        // Source from ground to node 1; its current unknown flows out of node 1
        // in the stamp convention, i.e. j = -i_src.
        stamp_v(&mut a, &mut rhs, row, Some(0), None, sc.source_voltage);
    } else {
        let gs = 1.0 / sc.source_resistance;
        a[(0, 0)] += gs;
        rhs[0] += gs * sc.source_voltage;
    }
    rhs[1] -= i_load;

    let x = a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular { freq_hz: 0.0, what: "lab DC operating point".into() })?;
    let (v1, v2) = (x[0], x[1]);
    let leg_v = [v1, v1 - v2, v2];
    let mut currents = [0.0; 3];
    for k in 0..3 {
        currents[k] = match (&legs[k].0, short_rows[k]) {
            (DcLeg::Short, Some(r)) => x[r],
            (DcLeg::Conductance(g), _) => g * leg_v[k],
            _ => unreachable!(),
        };
    }
    Ok((v1, v2, currents))
}

/// Places each branch of a leg at its DC state given the leg voltage and
/// total current.
fn init_leg(leg: &mut Leg, v: f64, total: f64) {
    let is_short = |b: &RlcBranch| b.c.is_none() && b.r == 0.0;
    // Parallel ideal inductors share a DC current in inverse proportion to L.
    let inv_l: f64 = leg.branches.iter().filter(|b| is_short(b)).map(|b| 1.0 / b.l).sum();
    for (b, st) in leg.branches.iter().zip(leg.state.iter_mut()) {
        if b.c.is_some() {
            st.i = 0.0;
            st.vc = v;
        } else if b.r > 0.0 {
            st.i = v / b.r;
        } else {
            st.i = total / b.l / inv_l;
        }
    }
}

/// Transient simulation from DC steady state at `t = 0`, decimated to the
/// record step. Integration is trapezoidal; a step that starts at a kink in
/// the load profile is taken with backward Euler instead, and a step that
/// contains a kink is split there.
pub fn simulate_pdn(sc: &LabScenario) -> Result<LabWaveforms> {
    sc.validate()?;
    let h = sc.internal_step();
    let os = sc.sim_oversample;
    let net = &sc.network;

    let i0 = sc.load.current(0.0);
    let (v1, v2, legs_i) = dc_operating_point(sc, i0)?;
    let mut legs = [Leg::new(net.ya.as_ref()), Leg::new(Some(&net.yb)), Leg::new(net.yc.as_ref())];
    for (leg, (v, i)) in legs.iter_mut().zip([(v1, legs_i[0]), (v1 - v2, legs_i[1]), (v2, legs_i[2])]) {
        init_leg(leg, v, i);
    }
    let trap = StepRule::new(&legs, h, Rule::Trapezoidal);
    let gs = (sc.source_resistance > 0.0).then(|| 1.0 / sc.source_resistance);
    let mut bench = Bench { legs, v1, v2, vs: sc.source_voltage, gs };

    let n = sc.record_len;
    let mut rec_v1 = Vec::with_capacity(n);
    let mut rec_v2 = Vec::with_capacity(n);
    let mut rec_load = Vec::with_capacity(n);
    let mut rec_src = Vec::with_capacity(n);
    rec_v1.push(v1);
    rec_v2.push(v2);
    rec_load.push(i0);
    rec_src.push(bench.source_current());

    let total_steps = (n - 1) * os;
    let kinks = sc.load.breakpoints(total_steps as f64 * h);
    let eps = 1e-6 * h;
    let mut next_kink = 0;
    for step in 1..=total_steps {
        let t_end = step as f64 * h;
        let mut t = t_end - h;
        let mut after_kink = false;
        while next_kink < kinks.len() && kinks[next_kink] < t_end - eps {
            let bp = kinks[next_kink];
            next_kink += 1;
            if bp > t + eps {
                let rule = if after_kink { Rule::BackwardEuler } else { Rule::Trapezoidal };
                bench.step(&StepRule::new(&bench.legs, bp - t, rule), sc.load.current(bp))?;
                t = bp;
            }
            after_kink = true;
        }
        let il = sc.load.current(t_end);
        if after_kink {
            bench.step(&StepRule::new(&bench.legs, t_end - t, Rule::BackwardEuler), il)?;
        } else {
            bench.step(&trap, il)?;
        }
        if step % os == 0 {
            rec_v1.push(bench.v1);
            rec_v2.push(bench.v2);
            rec_load.push(il);
            rec_src.push(bench.source_current());
        }
    }

    if sc.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.noise_seed);
        let normal = Normal::new(0.0, sc.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for v in rec_v1.iter_mut().chain(rec_v2.iter_mut()) {
            *v += normal.sample(&mut rng);
        }
    }

    let w = |s: Vec<f64>, u: Unit| Waveform::new(0.0, sc.record_dt, s, u);
    Ok(LabWaveforms {
        v1: w(rec_v1, Unit::Volt)?,
        v2: w(rec_v2, Unit::Volt)?,
        i_load: w(rec_load, Unit::Ampere)?,
        i_src: w(rec_src, Unit::Ampere)?,
    })
}

/// Fitting grid: 40 points/decade over `[1/(10 N dt), 1/(2 dt)]`.
pub fn lab_fit_grid(sc: &LabScenario) -> Vec<f64> {
    let span = sc.record_len as f64 * sc.record_dt;
    log_grid_per_decade(1.0 / (10.0 * span), 1.0 / (2.0 * sc.record_dt), 40)
}

/// Number of poles in the network's admittance: two per R-L-C leg with
/// inductance, one per R-C or R-L leg.
pub fn network_order(net: &PiNetwork) -> usize {
    net.branch_sets()
        .flat_map(BranchSet::branches)
        .map(|b| match (b.c.is_some(), b.l > 0.0, b.r > 0.0) {
            (true, true, _) => 2,
            (true, false, true) | (false, true, true) => 1,
            _ => 0,
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabOptions {
    /// `None` fits with as many poles as the network has.
    pub fit: Option<VectorFitOptions>,
    pub path: EstimationPath,
    pub time_domain: TimeDomainOptions,
    pub freq_domain: FreqDomainOptions,
    /// Enforce passivity when the fitted model fails the check.
    pub enforce_passivity: bool,
    /// Continue with a non-passive model.
    pub allow_nonpassive: bool,
}

impl Default for LabOptions {
    fn default() -> Self {
        Self {
            fit: None,
            path: EstimationPath::TimeDomain,
            time_domain: TimeDomainOptions::default(),
            freq_domain: FreqDomainOptions::default(),
            enforce_passivity: false,
            allow_nonpassive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_poles: usize,
    pub fit_error: f64,
    pub passive: bool,
    pub min_conductance_eig: f64,
    pub passivity_enforced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub simulate_s: f64,
    pub fit_s: f64,
    pub estimate_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabReport {
    /// `-I2` against the true load current.
    pub report2: ComparisonReport,
    /// `I1` against the current delivered by the source.
    pub report1: ComparisonReport,
    pub path: EstimationPath,
    pub fit: FitSummary,
    pub scenario: LabScenario,
}

/// Everything a lab run produces.
#[derive(Clone, Debug)]
pub struct LabRun {
    pub report: LabReport,
    /// Wall-clock timings; kept out of the report so it is reproducible.
    pub runtime: Runtime,
    pub bench: LabWaveforms,
    pub i1: Waveform,
    pub i2: Waveform,
    pub model: crate::vector_fit::RationalModel,
}

pub fn run_lab(sc: &LabScenario, opts: &LabOptions) -> Result<LabRun> {
    let start = Instant::now();
    let bench = simulate_pdn(sc)?;
    let t_sim = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let resp = pi_y_params(&sc.network, &lab_fit_grid(sc))?;
    let fit_opts =
        opts.fit.unwrap_or(VectorFitOptions { n_poles: network_order(&sc.network).max(1), ..Default::default() });
    let mut model = vector_fit(&resp, &fit_opts)?;
    let mut check = passivity_check(&model, None);
    let mut enforced = false;
    if !check.is_passive && opts.enforce_passivity {
        let (fixed, rep) = passivity_enforce(&model, 20);
        model = fixed;
        check = rep.final_check;
        enforced = true;
    }
    if !check.is_passive && !opts.allow_nonpassive {
        return Err(Error::NonPassive { min_eig: check.min_eig });
    }
    let t_fit = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let est = match opts.path {
        EstimationPath::TimeDomain => {
            let td = TimeDomainOptions { allow_nonpassive: opts.allow_nonpassive, ..opts.time_domain };
            nice_time_domain(&model, &bench.v1, &bench.v2, &td)?
        }
        EstimationPath::FreqDomain => {
            nice_freq_domain(AdmittanceSource::Model(&model), &bench.v1, &bench.v2, &opts.freq_domain)?
        }
    };
    let t_est = t.elapsed().as_secs_f64();

    let load_estimate = est.i2.map(|v| -v);
    let report2 = compare(&load_estimate, &bench.i_load)?;
    let report1 = compare(&est.i1, &bench.i_src)?;
    let report = LabReport {
        report2,
        report1,
        path: opts.path,
        fit: FitSummary {
            n_poles: model.order(),
            fit_error: model.fit_error(),
            passive: check.is_passive,
            min_conductance_eig: check.min_eig,
            passivity_enforced: enforced,
        },
        scenario: sc.clone(),
    };
    let runtime =
        Runtime { simulate_s: t_sim, fit_s: t_fit, estimate_s: t_est, total_s: start.elapsed().as_secs_f64() };
    Ok(LabRun { report, runtime, bench, i1: est.i1, i2: est.i2, model })
}

/// The five named load profiles, each on the default bench.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Pulse,
    Ramp,
    Sine,
    Sawtooth,
    Exponential,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Pulse, Preset::Ramp, Preset::Sine, Preset::Sawtooth, Preset::Exponential];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Pulse => "pulse",
            Preset::Ramp => "ramp",
            Preset::Sine => "sine",
            Preset::Sawtooth => "sawtooth",
            Preset::Exponential => "exponential",
        }
    }

    pub fn load(self) -> LoadProfile {
        match self {
            Preset::Pulse => LoadProfile::Pulse {
                baseline: 0.2,
                amplitude: 2.0,
                delay: 5e-6,
                rise: 10e-9,
                width: 20e-6,
                fall: 10e-9,
            },
            Preset::Ramp => LoadProfile::Ramp {
                baseline: 0.2,
                amplitude: 2.0,
                delay: 5e-6,
                rise: 20e-6,
                width: 10e-6,
                fall: 20e-6,
            },
            Preset::Sine => LoadProfile::Sine { baseline: 1.0, amplitude: 0.8, delay: 5e-6, period: 4e-6 },
            Preset::Sawtooth => {
                LoadProfile::Sawtooth { baseline: 0.2, amplitude: 1.5, delay: 5e-6, period: 10e-6, fall: 100e-9 }
            }
            Preset::Exponential => LoadProfile::Exponential {
                baseline: 0.2,
                amplitude: 2.0,
                delay: 5e-6,
                width: 30e-6,
                time_constant: 2e-6,
            },
        }
    }

    pub fn scenario(self) -> LabScenario {
        LabScenario { load: self.load(), ..default_scenario() }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown preset '{s}'")))
    }
}

/// Default bench network. Component values are representative of a small
/// board PDN (two bulk/ceramic capacitor banks with ESR/ESL, a series trace,
/// and 50 kOhm probe loading at both ports); they are not taken from any
/// particular board.
pub fn default_network() -> PiNetwork {
    let set = |v: Vec<RlcBranch>| BranchSet::new(v).expect("valid default branches");
    PiNetwork::new(
        Some(set(vec![
            RlcBranch::rlc(3e-3, 1.2e-9, 95e-6),
            RlcBranch::rlc(10e-3, 0.4e-9, 4e-6),
            RlcBranch::resistor(50e3),
        ])),
        set(vec![RlcBranch { r: 10e-3, l: 5e-9, c: None }]),
        Some(set(vec![
            RlcBranch::rlc(2e-3, 1e-9, 100e-6),
            RlcBranch::rlc(15e-3, 0.3e-9, 2.2e-6),
            RlcBranch::resistor(50e3),
        ])),
    )
}

/// Default bench: 1.2 V source behind 10 mOhm, 1 ns record step, 100k
/// samples, internal step 0.5 ns, constant 0.2 A load.
pub fn default_scenario() -> LabScenario {
    LabScenario {
        version: LabScenario::VERSION,
        network: default_network(),
        source_voltage: 1.2,
        source_resistance: 10e-3,
        load: LoadProfile::Pwl { points: vec![(0.0, 0.2)] },
        record_dt: 1e-9,
        record_len: 100_000,
        sim_oversample: 2,
        noise_sigma: 0.0,
        noise_seed: 0,
    }
}
