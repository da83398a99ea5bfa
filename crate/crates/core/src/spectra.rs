//! Tabulated network parameters and the algebra that operates on them.
//!
//! A [`FrequencyResponse`] holds one complex `n × n` matrix per frequency
//! point, tagged with its parameter kind (S, Y or Z) and a single real
//! reference impedance shared by every port.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex port matrix.
pub type CMatrix = DMatrix<Complex64>;

/// Default reference impedance in ohms.
pub const DEFAULT_Z0: f64 = 50.0;

/// Condition number above which a conversion logs a warning.
const COND_WARN: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    S,
    Y,
    Z,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamKind::S => "S",
            ParamKind::Y => "Y",
            ParamKind::Z => "Z",
        };
        f.write_str(s)
    }
}

/// Row view of a [`FrequencyResponse`].
#[derive(Clone, Copy, Debug)]
pub struct PortMatrixSample<'a> {
    pub freq: f64,
    pub matrix: &'a CMatrix,
}

/// Tabulated n-port parameters on a strictly ascending frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse {
    kind: ParamKind,
    z0: f64,
    freqs: Vec<f64>,
    data: Vec<CMatrix>,
}

impl FrequencyResponse {
    pub fn new(kind: ParamKind, z0: f64, freqs: Vec<f64>, data: Vec<CMatrix>) -> Result<Self> {
        if !(z0.is_finite() && z0 > 0.0) {
            return Err(Error::invalid(format!("reference impedance must be > 0, got {z0}")));
        }
        if freqs.is_empty() {
            return Err(Error::invalid("frequency response needs at least one frequency"));
        }
        if freqs.len() != data.len() {
            return Err(Error::invalid(format!(
                "{} frequencies but {} data matrices",
                freqs.len(),
                data.len()
            )));
        }
        let n = data[0].nrows();
        if n == 0 {
            return Err(Error::invalid("port count must be positive"));
        }
        for (i, f) in freqs.iter().enumerate() {
            if !f.is_finite() || *f < 0.0 {
                return Err(Error::invalid(format!("invalid frequency {f} at index {i}")));
            }
            if *f == 0.0 && kind == ParamKind::S {
                return Err(Error::invalid("S-parameters cannot include a DC point"));
            }
            if i > 0 && *f <= freqs[i - 1] {
                return Err(Error::invalid(format!(
                    "frequencies must be strictly ascending ({} after {})",
                    f,
                    freqs[i - 1]
                )));
            }
        }
        for (f, m) in freqs.iter().zip(&data) {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::invalid(format!(
                    "matrix at {f} Hz is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::invalid(format!("non-finite entry at {f} Hz")));
            }
        }
        Ok(Self { kind, z0, freqs, data })
    }

    /// Builds a 1-port response from scalar samples.
    pub fn one_port(kind: ParamKind, z0: f64, freqs: Vec<f64>, values: &[Complex64]) -> Result<Self> {
        let data = values.iter().map(|v| CMatrix::from_element(1, 1, *v)).collect();
        Self::new(kind, z0, freqs, data)
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn n_ports(&self) -> usize {
        self.data[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn data(&self) -> &[CMatrix] {
        &self.data
    }

    pub fn fmin(&self) -> f64 {
        self.freqs[0]
    }

    pub fn fmax(&self) -> f64 {
        self.freqs[self.freqs.len() - 1]
    }

    /// One entry of the matrix across the whole grid.
    pub fn entry(&self, row: usize, col: usize) -> Vec<Complex64> {
        self.data.iter().map(|m| m[(row, col)]).collect()
    }

    pub fn samples(&self) -> impl Iterator<Item = PortMatrixSample<'_>> {
        self.freqs
            .iter()
            .zip(&self.data)
            .map(|(&freq, matrix)| PortMatrixSample { freq, matrix })
    }

    fn expect_kind(&self, kind: ParamKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongKind {
                expected: kind.to_string(),
                found: self.kind.to_string(),
            });
        }
        Ok(())
    }

    fn map_matrices<F>(&self, kind: ParamKind, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, &CMatrix) -> Result<CMatrix>,
    {
        let data = self
            .freqs
            .iter()
            .zip(&self.data)
            .map(|(&freq, m)| f(freq, m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, self.z0, self.freqs.clone(), data)
    }
}

fn norm1(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverts `m` through an LU factorisation with partial pivoting.
///
/// A 1-norm condition estimate above 1e12 is logged; an exactly singular or
/// numerically meaningless factorisation is an error.
pub(crate) fn invert(m: &CMatrix, freq_hz: f64, what: &str) -> Result<CMatrix> {
    let singular = || Error::Singular { freq_hz, what: what.to_string() };
    let inv = m.clone().lu().try_inverse().ok_or_else(singular)?;
    if inv.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(singular());
    }
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() || cond * f64::EPSILON >= 1.0 {
        return Err(singular());
    }
    if cond > COND_WARN {
        log::warn!("{what} is ill-conditioned at {freq_hz} Hz (cond ~ {cond:.3e})");
    }
    Ok(inv)
}

/// Converts S-parameters to Y-parameters: `Y = (1/Z0)(I + S)^-1 (I - S)`.
pub fn s_to_y(resp: &FrequencyResponse) -> Result<FrequencyResponse> {
    resp.expect_kind(ParamKind::S)?;
    let n = resp.n_ports();
    let id = CMatrix::identity(n, n);
    let scale = Complex64::new(1.0 / resp.z0, 0.0);
    resp.map_matrices(ParamKind::Y, |f, s| {
        let inv = invert(&(&id + s), f, "I + S")?;
        Ok(inv * (&id - s) * scale)
    })
}

/// Converts Y-parameters to S-parameters: `S = (I - Z0 Y)(I + Z0 Y)^-1`.
pub fn y_to_s(resp: &FrequencyResponse) -> Result<FrequencyResponse> {
    resp.expect_kind(ParamKind::Y)?;
    let n = resp.n_ports();
    let id = CMatrix::identity(n, n);
    let z0 = Complex64::new(resp.z0, 0.0);
    resp.map_matrices(ParamKind::S, |f, y| {
        let zy = y * z0;
        let inv = invert(&(&id + &zy), f, "I + Z0*Y")?;
        Ok((&id - &zy) * inv)
    })
}

/// Converts S-parameters to Z-parameters: `Z = Z0 (I - S)^-1 (I + S)`.
pub fn s_to_z(resp: &FrequencyResponse) -> Result<FrequencyResponse> {
    resp.expect_kind(ParamKind::S)?;
    let n = resp.n_ports();
    let id = CMatrix::identity(n, n);
    let z0 = Complex64::new(resp.z0, 0.0);
    resp.map_matrices(ParamKind::Z, |f, s| {
        let inv = invert(&(&id - s), f, "I - S")?;
        Ok(inv * (&id + s) * z0)
    })
}

/// Converts Z-parameters to S-parameters: `S = (Z - Z0 I)(Z + Z0 I)^-1`.
pub fn z_to_s(resp: &FrequencyResponse) -> Result<FrequencyResponse> {
    resp.expect_kind(ParamKind::Z)?;
    let n = resp.n_ports();
    let z0i = CMatrix::identity(n, n) * Complex64::new(resp.z0, 0.0);
    resp.map_matrices(ParamKind::S, |f, z| {
        let inv = invert(&(z + &z0i), f, "Z + Z0*I")?;
        Ok((z - &z0i) * inv)
    })
}

/// Converts a response to any other kind. Y and Z convert by direct matrix
/// inversion so that a DC point survives the conversion.
pub fn convert(resp: &FrequencyResponse, to: ParamKind) -> Result<FrequencyResponse> {
    use ParamKind::*;
    match (resp.kind, to) {
        (a, b) if a == b => Ok(resp.clone()),
        (S, Y) => s_to_y(resp),
        (Y, S) => y_to_s(resp),
        (S, Z) => s_to_z(resp),
        (Z, S) => z_to_s(resp),
        (Y, Z) => resp.map_matrices(Z, |f, y| invert(y, f, "Y")),
        (Z, Y) => resp.map_matrices(Y, |f, z| invert(z, f, "Z")),
        _ => unreachable!(),
    }
}

/// Interpolation policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InterpOptions {
    /// Synthesise a DC sample (real part of the lowest-frequency sample) and
    /// allow targets between DC and the first tabulated frequency.
    pub dc_extrapolation: bool,
}

fn lerp(a: &CMatrix, b: &CMatrix, w: f64) -> CMatrix {
    a.zip_map(b, |x, y| {
        Complex64::new(x.re + w * (y.re - x.re), x.im + w * (y.im - x.im))
    })
}

/// Samples the response at a single frequency.
///
/// Knots are returned unchanged. Between two positive knots the real and
/// imaginary parts are linear in `log10(f)`; on an interval touching DC they
/// are linear in `f`.
pub fn sample_at(resp: &FrequencyResponse, f: f64, opts: InterpOptions) -> Result<CMatrix> {
    let freqs = &resp.freqs;
    let out_of_range = || Error::OutOfRange { freq_hz: f, min_hz: resp.fmin(), max_hz: resp.fmax() };
    if !f.is_finite() || f < 0.0 {
        return Err(out_of_range());
    }
    match freqs.binary_search_by(|x| x.partial_cmp(&f).unwrap()) {
        Ok(i) => Ok(resp.data[i].clone()),
        Err(0) => {
            if !opts.dc_extrapolation {
                return Err(out_of_range());
            }
            let first = &resp.data[0];
            let dc = first.map(|z| Complex64::new(z.re, 0.0));
            if f == 0.0 {
                Ok(dc)
            } else {
                Ok(lerp(&dc, first, f / freqs[0]))
            }
        }
        Err(i) if i == freqs.len() => Err(out_of_range()),
        Err(i) => {
            let (f0, f1) = (freqs[i - 1], freqs[i]);
            let w = if f0 == 0.0 {
                f / f1
            } else {
                (f / f0).log10() / (f1 / f0).log10()
            };
            Ok(lerp(&resp.data[i - 1], &resp.data[i], w))
        }
    }
}

/// Resamples the response onto `targets` (strictly ascending).
pub fn interpolate(resp: &FrequencyResponse, targets: &[f64], opts: InterpOptions) -> Result<FrequencyResponse> {
    let data = targets
        .iter()
        .map(|&f| sample_at(resp, f, opts))
        .collect::<Result<Vec<_>>>()?;
    FrequencyResponse::new(resp.kind, resp.z0, targets.to_vec(), data)
}

/// Adds a 1-port shunt admittance across `port`: `Y'kk = Ykk + Yshunt`.
///
/// The shunt is interpolated onto the response grid.
pub fn embed_shunt(resp: &FrequencyResponse, port: usize, shunt: &FrequencyResponse) -> Result<FrequencyResponse> {
    resp.expect_kind(ParamKind::Y)?;
    shunt.expect_kind(ParamKind::Y)?;
    if shunt.n_ports() != 1 {
        return Err(Error::invalid(format!("shunt must be a 1-port, got {} ports", shunt.n_ports())));
    }
    if port >= resp.n_ports() {
        return Err(Error::invalid(format!(
            "port index {port} out of range for a {}-port",
            resp.n_ports()
        )));
    }
    resp.map_matrices(ParamKind::Y, |f, y| {
        let ys = sample_at(shunt, f, InterpOptions::default())?;
        let mut out = y.clone();
        out[(port, port)] += ys[(0, 0)];
        Ok(out)
    })
}

/// Effective capacitance `Im{Y11(f)} / (2 pi f)` of a 1-port admittance.
pub fn capacitance_at(resp: &FrequencyResponse, f: f64) -> Result<f64> {
    resp.expect_kind(ParamKind::Y)?;
    if resp.n_ports() != 1 {
        return Err(Error::invalid("capacitance extraction needs a 1-port admittance"));
    }
    if !(f > 0.0) {
        return Err(Error::invalid(format!("capacitance needs f > 0, got {f}")));
    }
    let y = sample_at(resp, f, InterpOptions::default())?;
    Ok(y[(0, 0)].im / (2.0 * PI * f))
}

/// Log-spaced grid of `n` points from `fmin` to `fmax` inclusive.
pub fn log_grid(fmin: f64, fmax: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![fmin];
    }
    let (a, b) = (fmin.log10(), fmax.log10());
    let mut out: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect();
    out[0] = fmin;
    out[n - 1] = fmax;
    out
}

/// Log-spaced grid with a given density per decade, endpoints included.
pub fn log_grid_per_decade(fmin: f64, fmax: f64, per_decade: usize) -> Vec<f64> {
    let decades = (fmax / fmin).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1) + 1;
    log_grid(fmin, fmax, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_port(freqs: Vec<f64>, kind: ParamKind, m: [[Complex64; 2]; 2]) -> FrequencyResponse {
        let n = freqs.len();
        let mat = CMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
        FrequencyResponse::new(kind, 50.0, freqs, vec![mat; n]).unwrap()
    }

    #[test]
    fn matched_load_is_one_over_z0() {
        let s = FrequencyResponse::one_port(ParamKind::S, 50.0, vec![1e6], &[c(0.0, 0.0)]).unwrap();
        let y = s_to_y(&s).unwrap();
        assert_relative_eq!(y.data()[0][(0, 0)].re, 0.02, max_relative = 1e-15);
        assert_eq!(y.data()[0][(0, 0)].im, 0.0);
    }

    #[test]
    fn open_circuit_admits_nothing() {
        let s = FrequencyResponse::one_port(ParamKind::S, 50.0, vec![1e6], &[c(1.0, 0.0)]).unwrap();
        let y = s_to_y(&s).unwrap();
        assert_eq!(y.data()[0][(0, 0)], c(0.0, 0.0));
        let back = y_to_s(&y).unwrap();
        assert_eq!(back.data()[0][(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn y_to_s_of_matched_admittance() {
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, vec![1e6], &[c(0.02, 0.0)]).unwrap();
        let s = y_to_s(&y).unwrap();
        assert!(s.data()[0][(0, 0)].norm() < 1e-16);
    }

    #[test]
    fn series_resistor_matches_pi_formula() {
        // S of a series R between two Z0 ports.
        let (r, z0) = (50.0, 50.0);
        let s11 = c(r / (r + 2.0 * z0), 0.0);
        let s21 = c(2.0 * z0 / (r + 2.0 * z0), 0.0);
        let s = two_port(vec![1e3, 1e6, 1e9], ParamKind::S, [[s11, s21], [s21, s11]]);
        let y = s_to_y(&s).unwrap();
        for m in y.data() {
            assert_relative_eq!(m[(0, 0)].re, 0.02, max_relative = 1e-14);
            assert_relative_eq!(m[(1, 1)].re, 0.02, max_relative = 1e-14);
            assert_relative_eq!(m[(0, 1)].re, -0.02, max_relative = 1e-14);
            assert_relative_eq!(m[(1, 0)].re, -0.02, max_relative = 1e-14);
            assert!(m.iter().all(|z| z.im.abs() < 1e-17));
        }
    }

    #[test]
    fn singular_conversion_names_frequency() {
        let s = FrequencyResponse::one_port(ParamKind::S, 50.0, vec![1e3, 2e3], &[c(0.5, 0.0), c(-1.0, 0.0)])
            .unwrap();
        match s_to_y(&s) {
            Err(Error::Singular { freq_hz, .. }) => assert_eq!(freq_hz, 2e3),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_kind_rejected() {
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, vec![1e3], &[c(0.02, 0.0)]).unwrap();
        assert!(matches!(s_to_y(&y), Err(Error::WrongKind { .. })));
    }

    #[test]
    fn constructor_rejects_bad_grids() {
        let one = |f: Vec<f64>| {
            let n = f.len();
            FrequencyResponse::one_port(ParamKind::Y, 50.0, f, &vec![c(1.0, 0.0); n])
        };
        assert!(one(vec![2.0, 1.0]).is_err());
        assert!(one(vec![1.0, 1.0]).is_err());
        assert!(one(vec![f64::NAN]).is_err());
        assert!(one(vec![0.0, 1.0]).is_ok());
        assert!(FrequencyResponse::one_port(ParamKind::S, 50.0, vec![0.0], &[c(0.0, 0.0)]).is_err());
        assert!(FrequencyResponse::one_port(ParamKind::Y, 0.0, vec![1.0], &[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn interpolate_exact_at_knots() {
        let freqs = vec![1e3, 3e3, 1e4, 5e4];
        let vals: Vec<_> = freqs.iter().map(|f: &f64| c(f.sqrt(), 1.0 / f)).collect();
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, freqs.clone(), &vals).unwrap();
        let out = interpolate(&y, &freqs, InterpOptions::default()).unwrap();
        assert_eq!(out, y);
        let first = interpolate(&y, &[1e3], InterpOptions::default()).unwrap();
        assert_eq!(first.data()[0], y.data()[0]);
    }

    #[test]
    fn interpolate_capacitor_on_a_decade_grid() {
        // 20 points per decade, the usual VNA sweep density.
        let cap = 1e-6;
        let freqs = log_grid_per_decade(1e4, 1e5, 20);
        let vals: Vec<_> = freqs.iter().map(|f| c(0.0, 2.0 * PI * f * cap)).collect();
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, freqs.clone(), &vals).unwrap();
        for w in freqs.windows(2) {
            let mid = (w[0] * w[1]).sqrt();
            let got = sample_at(&y, mid, InterpOptions::default()).unwrap()[(0, 0)];
            let want = 2.0 * PI * mid * cap;
            assert!((got.im - want).abs() / want < 0.005);
        }
    }

    #[test]
    fn interpolate_out_of_range_and_dc() {
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, vec![1e3, 1e4], &[c(2.0, 5.0), c(3.0, 7.0)])
            .unwrap();
        assert!(matches!(
            sample_at(&y, 2e4, InterpOptions::default()),
            Err(Error::OutOfRange { .. })
        ));
        assert!(sample_at(&y, 0.0, InterpOptions::default()).is_err());
        let dc = InterpOptions { dc_extrapolation: true };
        assert_eq!(sample_at(&y, 0.0, dc).unwrap()[(0, 0)], c(2.0, 0.0));
        let half = sample_at(&y, 500.0, dc).unwrap()[(0, 0)];
        assert_relative_eq!(half.im, 2.5, max_relative = 1e-15);
        assert!(sample_at(&y, 2e4, dc).is_err());
    }

    #[test]
    fn explicit_dc_point_interpolates_linearly() {
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, vec![0.0, 1e3], &[c(1.0, 0.0), c(3.0, 2.0)])
            .unwrap();
        let m = sample_at(&y, 250.0, InterpOptions::default()).unwrap()[(0, 0)];
        assert_relative_eq!(m.re, 1.5);
        assert_relative_eq!(m.im, 0.5);
    }

    #[test]
    fn interpolation_is_idempotent() {
        let freqs = log_grid(1e3, 1e6, 7);
        let vals: Vec<_> = freqs.iter().map(|f| c(f.ln(), f.sqrt())).collect();
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, freqs, &vals).unwrap();
        let grid = log_grid(2e3, 9e5, 13);
        let once = interpolate(&y, &grid, InterpOptions::default()).unwrap();
        let twice = interpolate(&once, &grid, InterpOptions::default()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn shunt_embedding() {
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, vec![1e3, 1e6], &[c(0.02, 0.0); 2]).unwrap();
        let shunt = FrequencyResponse::one_port(ParamKind::Y, 50.0, vec![1e3, 1e6], &[c(0.02, 0.0); 2]).unwrap();
        let zero = FrequencyResponse::one_port(ParamKind::Y, 50.0, vec![1e2, 1e7], &[c(0.0, 0.0); 2]).unwrap();
        let out = embed_shunt(&y, 0, &shunt).unwrap();
        assert!(out.data().iter().all(|m| m[(0, 0)] == c(0.04, 0.0)));
        assert_eq!(embed_shunt(&y, 0, &zero).unwrap(), y);
        assert!(embed_shunt(&y, 1, &shunt).is_err());
    }

    #[test]
    fn shunt_embedding_is_additive() {
        let freqs = vec![1e3, 1e4, 1e5];
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.1), c(-1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.2)]);
        let y = FrequencyResponse::new(ParamKind::Y, 50.0, freqs.clone(), vec![m; 3]).unwrap();
        let a = FrequencyResponse::one_port(ParamKind::Y, 50.0, freqs.clone(), &[c(1e-3, 1e-4), c(2e-3, 0.0), c(0.0, 3e-3)])
            .unwrap();
        let b = FrequencyResponse::one_port(ParamKind::Y, 50.0, freqs.clone(), &[c(5e-3, 0.0), c(0.0, 1e-3), c(4e-3, 4e-3)])
            .unwrap();
        let ab_vals: Vec<_> = (0..3).map(|i| a.data()[i][(0, 0)] + b.data()[i][(0, 0)]).collect();
        let ab = FrequencyResponse::one_port(ParamKind::Y, 50.0, freqs, &ab_vals).unwrap();
        let seq = embed_shunt(&embed_shunt(&y, 1, &a).unwrap(), 1, &b).unwrap();
        let once = embed_shunt(&y, 1, &ab).unwrap();
        for (p, q) in seq.data().iter().zip(once.data()) {
            assert!((p - q).norm() < 1e-15);
        }
    }

    #[test]
    fn ideal_capacitor_capacitance() {
        let cap = 100e-6;
        let freqs = vec![1e3, 1e4, 1e5];
        let vals: Vec<_> = freqs.iter().map(|f| c(0.0, 2.0 * PI * f * cap)).collect();
        let y = FrequencyResponse::one_port(ParamKind::Y, 50.0, freqs, &vals).unwrap();
        assert_relative_eq!(capacitance_at(&y, 1e4).unwrap(), cap, max_relative = 1e-15);
        assert!(capacitance_at(&y, 1e6).is_err());
    }

    #[test]
    fn z_and_y_are_inverses() {
        let freqs = vec![0.0, 1e3];
        let m = CMatrix::from_row_slice(2, 2, &[c(3.0, 0.5), c(-1.0, 0.1), c(-1.0, 0.1), c(2.0, -0.3)]);
        let y = FrequencyResponse::new(ParamKind::Y, 50.0, freqs, vec![m.clone(), m]).unwrap();
        let z = convert(&y, ParamKind::Z).unwrap();
        // S cannot carry a DC point.
        assert!(convert(&z, ParamKind::S).is_err());
        let y2 = convert(&z, ParamKind::Y).unwrap();
        for (p, q) in y.data().iter().zip(y2.data()) {
            assert!((p - q).norm() < 1e-14);
        }
    }
}
