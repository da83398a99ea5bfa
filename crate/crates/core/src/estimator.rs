//! Port-current estimation from two measured port voltages.
//!
//! Given `V1(t)`, `V2(t)` and the network admittance, the port currents are
//! `I1 = Y11 V1 + Y12 V2` and `I2 = Y21 V1 + Y22 V2`, both positive into the
//! network. Two paths compute them: a discretised state-space model of a
//! rational fit ([`nice_time_domain`]) and a direct FFT product
//! ([`nice_freq_domain`]).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{sample_at, CMatrix, FrequencyResponse, InterpOptions, ParamKind};
use crate::state_space::{discretize, realize, simulate, DiscreteModel, Discretization, InitialState, StateSpaceModel};
use crate::vector_fit::{passivity_check, RationalModel};
use crate::waveform::Waveform;

pub use crate::waveform::{from_csv, read_csv, resample, to_csv, write_csv};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationPath {
    #[default]
    TimeDomain,
    FreqDomain,
}

/// Where the zero-frequency admittance came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcMode {
    /// Evaluated from the rational model.
    Model,
    /// A tabulated DC sample.
    Explicit,
    /// Real part of the lowest tabulated sample.
    Extrapolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub fit_error: Option<f64>,
    pub passive: Option<bool>,
    pub min_conductance_eig: Option<f64>,
    pub dc_mode: DcMode,
    pub discretization: Option<Discretization>,
    pub initial_state: Option<InitialState>,
    /// FFT bins above the model band, and their share of the input energy.
    pub out_of_band_bins: usize,
    pub out_of_band_energy_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub i1: Waveform,
    pub i2: Waveform,
    pub path: EstimationPath,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rel_rms_error: f64,
    pub max_abs_error: f64,
    pub reference_rms: f64,
    /// Set when the reference RMS is zero and `rel_rms_error` is infinite.
    pub degenerate: bool,
}

/// `RMS(estimate - reference) / RMS(reference)` and the peak difference.
pub fn compare(estimate: &Waveform, reference: &Waveform) -> Result<ComparisonReport> {
    estimate.check_aligned(reference, "estimate vs reference")?;
    let mut sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for (e, r) in estimate.samples().iter().zip(reference.samples()) {
        let d = e - r;
        sq += d * d;
        max_abs = max_abs.max(d.abs());
    }
    let diff_rms = (sq / estimate.len() as f64).sqrt();
    let reference_rms = reference.rms();
    let degenerate = reference_rms == 0.0;
    let rel_rms_error = if degenerate { f64::INFINITY } else { diff_rms / reference_rms };
    Ok(ComparisonReport { rel_rms_error, max_abs_error: max_abs, reference_rms, degenerate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeDomainOptions {
    pub method: Discretization,
    pub initial_state: InitialState,
    /// Run even when the passivity check fails.
    pub allow_nonpassive: bool,
}

impl Default for TimeDomainOptions {
    fn default() -> Self {
        Self { method: Discretization::Zoh, initial_state: InitialState::SteadyState, allow_nonpassive: false }
    }
}

/// A realised 2-port model with a per-step-size cache of discretisations.
/// Safe to share between threads.
pub struct TimeDomainEstimator {
    model: RationalModel,
    ssm: StateSpaceModel,
    passive: bool,
    min_eig: f64,
    cache: Mutex<HashMap<(u64, Discretization), Arc<DiscreteModel>>>,
}

impl TimeDomainEstimator {
    pub fn new(model: &RationalModel) -> Result<Self> {
        if model.n_ports() != 2 {
            return Err(Error::invalid(format!("estimation needs a 2-port model, got {} ports", model.n_ports())));
        }
        let ssm = realize(model)?;
        let check = passivity_check(model, None);
        Ok(Self {
            model: model.clone(),
            ssm,
            passive: check.is_passive,
            min_eig: check.min_eig,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn is_passive(&self) -> bool {
        self.passive
    }

    pub fn discrete(&self, dt: f64, method: Discretization) -> Result<Arc<DiscreteModel>> {
        let key = (dt.to_bits(), method);
        if let Some(dm) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(dm));
        }
        let dm = Arc::new(discretize(&self.ssm, dt, method)?);
        self.cache.lock().expect("cache lock").insert(key, Arc::clone(&dm));
        Ok(dm)
    }

    pub fn estimate(&self, v1: &Waveform, v2: &Waveform, opts: &TimeDomainOptions) -> Result<EstimationResult> {
        v1.check_aligned(v2, "v1 vs v2")?;
        if !self.passive && !opts.allow_nonpassive {
            return Err(Error::NonPassive { min_eig: self.min_eig });
        }
        let dm = self.discrete(v1.dt(), opts.method)?;
        let mut out = simulate(&dm, &[v1, v2], opts.initial_state)?.into_iter();
        let (i1, i2) = (out.next().expect("two outputs"), out.next().expect("two outputs"));
        Ok(EstimationResult {
            i1,
            i2,
            path: EstimationPath::TimeDomain,
            diagnostics: Diagnostics {
                fit_error: Some(self.model.fit_error()),
                passive: Some(self.passive),
                min_conductance_eig: Some(self.min_eig),
                dc_mode: DcMode::Model,
                discretization: Some(opts.method),
                initial_state: Some(opts.initial_state),
                out_of_band_bins: 0,
                out_of_band_energy_fraction: 0.0,
            },
        })
    }
}

/// Time-domain path: realise, discretise at the waveform step and simulate.
pub fn nice_time_domain(
    model: &RationalModel,
    v1: &Waveform,
    v2: &Waveform,
    opts: &TimeDomainOptions,
) -> Result<EstimationResult> {
    TimeDomainEstimator::new(model)?.estimate(v1, v2, opts)
}

/// Admittance source for the frequency-domain path.
#[derive(Clone, Copy, Debug)]
pub enum AdmittanceSource<'a> {
    Model(&'a RationalModel),
    /// Tabulated Y-parameters, interpolated onto the FFT bins.
    Response(&'a FrequencyResponse),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FreqDomainOptions {
    /// Allow a tabulated response without a DC sample (uses the real part of
    /// the lowest sample).
    pub dc_extrapolation: bool,
    /// Hold Y at its band edge for bins above the band instead of failing.
    pub allow_out_of_band: bool,
}

const BAND_TOL: f64 = 1e-9;

/// Frequency-domain path: FFT, per-bin `I = Y V`, inverse FFT.
///
/// The first sample of each voltage is removed before transforming and its
/// DC current `Y(0) v(0)` added back afterwards, so records should start and
/// end at the same steady state. Records are zero-padded to the next power
/// of two at least twice their length.
pub fn nice_freq_domain(
    source: AdmittanceSource<'_>,
    v1: &Waveform,
    v2: &Waveform,
    opts: &FreqDomainOptions,
) -> Result<EstimationResult> {
    v1.check_aligned(v2, "v1 vs v2")?;
    let (band_hi, n_ports, fit_error) = match source {
        AdmittanceSource::Model(m) => (m.band().1, m.n_ports(), Some(m.fit_error())),
        AdmittanceSource::Response(r) => {
            if r.kind() != ParamKind::Y {
                return Err(Error::WrongKind { expected: "Y".into(), found: r.kind().to_string() });
            }
            (r.fmax(), r.n_ports(), None)
        }
    };
    if n_ports != 2 {
        return Err(Error::invalid(format!("estimation needs a 2-port network, got {n_ports} ports")));
    }

    let n = v1.len();
    let m = (2 * n).next_power_of_two();
    let df = 1.0 / (m as f64 * v1.dt());
    let interp = InterpOptions { dc_extrapolation: opts.dc_extrapolation };

    let y_at = |f: f64| -> Result<CMatrix> {
        match source {
            AdmittanceSource::Model(model) => Ok(model.eval_freq(f.min(band_hi))),
            AdmittanceSource::Response(resp) => sample_at(resp, f.min(band_hi), interp),
        }
    };
    let dc_mode = match source {
        AdmittanceSource::Model(_) => DcMode::Model,
        AdmittanceSource::Response(r) if r.fmin() == 0.0 => DcMode::Explicit,
        AdmittanceSource::Response(r) => {
            if !opts.dc_extrapolation {
                return Err(Error::invalid(format!(
                    "tabulated admittance starts at {} Hz with no DC sample; enable DC extrapolation",
                    r.fmin()
                )));
            }
            DcMode::Extrapolated
        }
    };

    let b1 = v1.samples()[0];
    let b2 = v2.samples()[0];
    let mut x1: Vec<Complex64> = v1.samples().iter().map(|v| Complex64::new(v - b1, 0.0)).collect();
    let mut x2: Vec<Complex64> = v2.samples().iter().map(|v| Complex64::new(v - b2, 0.0)).collect();
    x1.resize(m, Complex64::new(0.0, 0.0));
    x2.resize(m, Complex64::new(0.0, 0.0));

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    fwd.process(&mut x1);
    fwd.process(&mut x2);

    let half = m / 2;
    let mut c1 = vec![Complex64::new(0.0, 0.0); m];
    let mut c2 = vec![Complex64::new(0.0, 0.0); m];
    let mut oob_bins = 0;
    let mut oob_energy = 0.0;
    let mut total_energy = 0.0;
    for k in 0..=half {
        let f = k as f64 * df;
        let energy = x1[k].norm_sqr() + x2[k].norm_sqr();
        total_energy += energy;
        if f > band_hi * (1.0 + BAND_TOL) {
            if !opts.allow_out_of_band {
                return Err(Error::OutOfRange { freq_hz: f, min_hz: 0.0, max_hz: band_hi });
            }
            oob_bins += 1;
            oob_energy += energy;
        }
        let y = y_at(f)?;
        let mut i1 = y[(0, 0)] * x1[k] + y[(0, 1)] * x2[k];
        let mut i2 = y[(1, 0)] * x1[k] + y[(1, 1)] * x2[k];
        if k == 0 || k == half {
            // Self-conjugate bins of a real signal.
            i1 = Complex64::new(i1.re, 0.0);
            i2 = Complex64::new(i2.re, 0.0);
        }
        c1[k] = i1;
        c2[k] = i2;
        if k != 0 && k != half {
            c1[m - k] = i1.conj();
            c2[m - k] = i2.conj();
        }
    }
    if oob_bins > 0 {
        log::warn!("{oob_bins} FFT bins lie above the {band_hi} Hz model band; Y held at the band edge");
    }

    let inv = planner.plan_fft_inverse(m);
    inv.process(&mut c1);
    inv.process(&mut c2);

    let y0 = y_at(0.0)?;
    let dc1 = y0[(0, 0)].re * b1 + y0[(0, 1)].re * b2;
    let dc2 = y0[(1, 0)].re * b1 + y0[(1, 1)].re * b2;
    let scale = 1.0 / m as f64;
    let i1: Vec<f64> = c1[..n].iter().map(|z| z.re * scale + dc1).collect();
    let i2: Vec<f64> = c2[..n].iter().map(|z| z.re * scale + dc2).collect();

    let unit = v1.unit().through_admittance();
    let (passive, min_eig) = match source {
        AdmittanceSource::Model(model) => {
            let chk = passivity_check(model, None);
            (Some(chk.is_passive), Some(chk.min_eig))
        }
        AdmittanceSource::Response(_) => (None, None),
    };
    Ok(EstimationResult {
        i1: v1.with_samples(i1, unit)?,
        i2: v1.with_samples(i2, unit)?,
        path: EstimationPath::FreqDomain,
        diagnostics: Diagnostics {
            fit_error,
            passive,
            min_conductance_eig: min_eig,
            dc_mode,
            discretization: None,
            initial_state: None,
            out_of_band_bins: oob_bins,
            out_of_band_energy_fraction: if total_energy > 0.0 { oob_energy / total_energy } else { 0.0 },
        },
    })
}

/// Negates a current for "load current" presentation (I2 flows into the
/// network, so the load draws `-I2`).
pub fn as_load_current(i2: &Waveform) -> Waveform {
    i2.map(|v| -v)
}
