//! Uniformly sampled waveforms and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for matching `t0`/`dt` and for uniform spacing.
pub const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Volt,
    Ampere,
}

impl Unit {
    /// Unit of `Y * x` for a quantity in this unit.
    pub fn through_admittance(self) -> Unit {
        match self {
            Unit::Volt => Unit::Ampere,
            Unit::Ampere => Unit::Volt,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    t0: f64,
    dt: f64,
    samples: Vec<f64>,
    unit: Unit,
}

impl Waveform {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>, unit: Unit) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::invalid("t0 must be finite"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
        }
        if samples.is_empty() {
            return Err(Error::invalid("a waveform needs at least one sample"));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {k} is not finite")));
        }
        Ok(Self { t0, dt, samples, unit })
    }

    pub fn constant(t0: f64, dt: f64, len: usize, value: f64, unit: Unit) -> Result<Self> {
        Self::new(t0, dt, vec![value; len], unit)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }

    /// Same grid, new samples.
    pub fn with_samples(&self, samples: Vec<f64>, unit: Unit) -> Result<Self> {
        if samples.len() != self.len() {
            return Err(Error::invalid("sample count changed"));
        }
        Self::new(self.t0, self.dt, samples, unit)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { samples: self.samples.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Same `t0`, `dt` (within [`ALIGN_TOL`]) and length.
    pub fn is_aligned_with(&self, other: &Waveform) -> bool {
        let scale = self.dt.max(other.dt);
        self.len() == other.len()
            && (self.dt - other.dt).abs() <= ALIGN_TOL * scale
            && (self.t0 - other.t0).abs() <= ALIGN_TOL * self.t0.abs().max(other.t0.abs()).max(scale)
    }

    pub fn check_aligned(&self, other: &Waveform, what: &str) -> Result<()> {
        if self.is_aligned_with(other) {
            return Ok(());
        }
        Err(Error::Misaligned(format!(
            "{what}: (t0 {}, dt {}, {} samples) vs (t0 {}, dt {}, {} samples)",
            self.t0,
            self.dt,
            self.len(),
            other.t0,
            other.dt,
            other.len()
        )))
    }

    /// Linear interpolation at time `t`, clamped to the record.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.samples[0];
        }
        let last = self.len() - 1;
        if x >= last as f64 {
            return self.samples[last];
        }
        let k = x.floor() as usize;
        let w = x - k as f64;
        if w == 0.0 {
            self.samples[k]
        } else {
            self.samples[k] + w * (self.samples[k + 1] - self.samples[k])
        }
    }
}

/// Linear interpolation onto a `new_dt` grid starting at `t0` and covering
/// `[t0, tend]`; the first sample is kept, and so is the last when the span is
/// a whole number of new steps.
pub fn resample(w: &Waveform, new_dt: f64) -> Result<Waveform> {
    if !(new_dt > 0.0 && new_dt.is_finite()) {
        return Err(Error::invalid(format!("new_dt must be positive, got {new_dt}")));
    }
    if (new_dt - w.dt).abs() <= ALIGN_TOL * w.dt {
        return Ok(w.clone());
    }
    let span = w.end_time() - w.t0;
    let steps = span / new_dt;
    let n = (steps * (1.0 + ALIGN_TOL)).floor() as usize + 1;
    let samples = (0..n)
        .map(|k| {
            if k + 1 == n && (steps - (n - 1) as f64).abs() <= ALIGN_TOL * steps.max(1.0) {
                w.samples[w.len() - 1]
            } else {
                w.value_at(w.t0 + k as f64 * new_dt)
            }
        })
        .collect();
    Waveform::new(w.t0, new_dt, samples, w.unit)
}

pub const CSV_HEADER: &str = "time_s,value";

/// Two-column CSV with a `time_s,value` header. Values are written in plain
/// decimal with enough digits to round-trip exactly.
pub fn to_csv(w: &Waveform) -> String {
    let mut out = String::with_capacity(32 * (w.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (t, v) in w.times().zip(&w.samples) {
        let _ = writeln!(out, "{t},{v}");
    }
    out
}

pub fn from_csv(text: &str, unit: Unit) -> Result<Waveform> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "").eq_ignore_ascii_case(CSV_HEADER) => {}
        Some((i, h)) => {
            return Err(Error::Csv { line: i + 1, msg: format!("expected header '{CSV_HEADER}', found '{h}'") })
        }
        None => return Err(Error::Csv { line: 1, msg: "empty file".into() }),
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let mut cols = line.split(',').map(str::trim);
        let parse = |c: Option<&str>| -> Result<f64> {
            let c = c.ok_or_else(|| Error::Csv { line: i + 1, msg: "expected two columns".into() })?;
            c.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv { line: i + 1, msg: format!("'{c}' is not a finite number") })
        };
        let t = parse(cols.next())?;
        let v = parse(cols.next())?;
        if cols.next().is_some() {
            return Err(Error::Csv { line: i + 1, msg: "expected two columns".into() });
        }
        times.push(t);
        values.push(v);
    }
    if times.len() < 2 {
        return Err(Error::Csv { line: 2, msg: "at least two samples are needed to establish dt".into() });
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Csv { line: 2, msg: "time must increase".into() });
    }
    for k in 1..n {
        let step = times[k] - times[k - 1];
        // Allow for the rounding of large absolute timestamps.
        let tol = (ALIGN_TOL * dt).max(4.0 * f64::EPSILON * times[k].abs());
        if (step - dt).abs() > tol {
            return Err(Error::Csv {
                line: k + 2,
                msg: format!(
                    "non-uniform sampling: step {step:e} s differs from the mean {dt:e} s; resample the record first"
                ),
            });
        }
    }
    Waveform::new(times[0], dt, values, unit)
}

pub fn read_csv(path: &Path, unit: Unit) -> Result<Waveform> {
    from_csv(&std::fs::read_to_string(path)?, unit)
}

pub fn write_csv(path: &Path, w: &Waveform) -> Result<()> {
    std::fs::write(path, to_csv(w))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn validation() {
        assert!(Waveform::new(0.0, 0.0, vec![1.0], Unit::Volt).is_err());
        assert!(Waveform::new(0.0, 1.0, vec![], Unit::Volt).is_err());
        assert!(Waveform::new(0.0, 1.0, vec![f64::NAN], Unit::Volt).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let w = Waveform::new(1e-6, 1e-9, (0..1000).map(|k| (k as f64 * 0.37).sin() * 1.2345).collect(), Unit::Volt)
            .unwrap();
        let back = from_csv(&to_csv(&w), Unit::Volt).unwrap();
        assert_eq!(back.samples(), w.samples());
        assert!((back.dt() - w.dt()).abs() <= 1e-9 * w.dt());
        assert_eq!(back.t0(), w.t0());
        assert!(to_csv(&w).starts_with("time_s,value\n"));
    }

    #[test]
    fn csv_rejects_nonuniform_and_bad_rows() {
        let err = from_csv("time_s,value\n0,1\n1,2\n2.5,3\n3,4\n", Unit::Volt).unwrap_err();
        assert!(err.to_string().contains("resample"), "{err}");
        assert!(matches!(from_csv("t,v\n0,1\n", Unit::Volt), Err(Error::Csv { line: 1, .. })));
        assert!(matches!(from_csv("time_s,value\n0,1\n1,x\n", Unit::Volt), Err(Error::Csv { line: 3, .. })));
    }

    #[test]
    fn resample_identity_and_ramp() {
        let ramp = Waveform::new(0.5, 0.1, (0..11).map(|k| 2.0 * k as f64 - 1.0).collect(), Unit::Ampere).unwrap();
        assert_eq!(resample(&ramp, 0.1).unwrap(), ramp);
        let fine = resample(&ramp, 0.025).unwrap();
        assert_eq!(fine.len(), 41);
        for (k, v) in fine.samples().iter().enumerate() {
            let expect = 2.0 * (k as f64 * 0.25) - 1.0;
            assert!((v - expect).abs() < 1e-12, "{k}: {v} vs {expect}");
        }
        assert_eq!(fine.samples()[40], ramp.samples()[10]);
    }

    #[test]
    fn resample_sine_documents_linear_error() {
        let f = 1.0;
        let coarse = Waveform::new(0.0, 0.1, (0..=30).map(|k| (2.0 * PI * f * k as f64 * 0.1).sin()).collect(), Unit::Volt)
            .unwrap();
        let fine = resample(&coarse, 0.01).unwrap();
        let max_dev = fine
            .times()
            .zip(fine.samples())
            .map(|(t, v)| (v - (2.0 * PI * f * t).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 0.05, "{max_dev}");
    }

    #[test]
    fn alignment() {
        let a = Waveform::constant(0.0, 1e-9, 10, 0.0, Unit::Volt).unwrap();
        let b = Waveform::constant(0.0, 1e-9 * (1.0 + 1e-12), 10, 0.0, Unit::Volt).unwrap();
        let c = Waveform::constant(0.0, 1.1e-9, 10, 0.0, Unit::Volt).unwrap();
        assert!(a.is_aligned_with(&b));
        assert!(a.check_aligned(&c, "v1/v2").is_err());
    }
}
