//! 2x-THRU de-embedding by bisecting the THRU's transfer (ABCD) matrix.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectra::{invert, CMatrix, FrequencyResponse, ParamKind};

const SYMMETRY_TOL: f64 = 0.05;

fn c1() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// S-parameters of a 2-port to its ABCD matrix (real reference `z0`).
pub fn s_to_abcd(s: &CMatrix, z0: f64, freq_hz: f64) -> Result<CMatrix> {
    let (s11, s12, s21, s22) = (s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]);
    if s21.norm() == 0.0 {
        return Err(Error::Singular { freq_hz, what: "S21 = 0, no transfer matrix".into() });
    }
    let den = 2.0 * s21;
    let a = ((c1() + s11) * (c1() - s22) + s12 * s21) / den;
    let b = z0 * ((c1() + s11) * (c1() + s22) - s12 * s21) / den;
    let c = ((c1() - s11) * (c1() - s22) - s12 * s21) / (den * z0);
    let d = ((c1() - s11) * (c1() + s22) + s12 * s21) / den;
    Ok(CMatrix::from_row_slice(2, 2, &[a, b, c, d]))
}

/// ABCD matrix back to S-parameters.
pub fn abcd_to_s(t: &CMatrix, z0: f64, freq_hz: f64) -> Result<CMatrix> {
    let (a, b, c, d) = (t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]);
    let den = a + b / z0 + c * z0 + d;
    if den.norm() == 0.0 {
        return Err(Error::Singular { freq_hz, what: "ABCD to S denominator".into() });
    }
    let s11 = (a + b / z0 - c * z0 - d) / den;
    let s12 = 2.0 * (a * d - b * c) / den;
    let s21 = 2.0 / den;
    let s22 = (-a + b / z0 - c * z0 + d) / den;
    Ok(CMatrix::from_row_slice(2, 2, &[s11, s12, s21, s22]))
}

/// Principal square root of a 2x2 complex matrix.
///
/// With eigenvalues `l1`, `l2` and their principal roots `r1`, `r2`,
/// `sqrt(M) = (M + r1 r2 I) / (r1 + r2)`, which also covers repeated
/// eigenvalues of a diagonalisable matrix.
pub fn matrix_sqrt_2x2(m: &CMatrix, freq_hz: f64) -> Result<CMatrix> {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (tr * tr - 4.0 * det).sqrt();
    let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    let (r1, r2) = (l1.sqrt(), l2.sqrt());
    let t = r1 + r2;
    if t.norm() <= 1e-12 * (r1.norm() + r2.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::Singular { freq_hz, what: "THRU matrix has no principal square root".into() });
    }
    let s = r1 * r2;
    let mut out = m.clone();
    out[(0, 0)] += s;
    out[(1, 1)] += s;
    Ok(out / t)
}

/// Chains 2-port S-parameter blocks left to right through their ABCD matrices.
pub fn cascade(blocks: &[&FrequencyResponse]) -> Result<FrequencyResponse> {
    let first = blocks.first().ok_or_else(|| Error::invalid("cascade needs at least one block"))?;
    for b in blocks {
        check_two_port_s(b)?;
        check_same_grid(first, b)?;
    }
    let z0 = first.z0();
    let mut data = Vec::with_capacity(first.len());
    for (k, &f) in first.freqs().iter().enumerate() {
        let mut t = CMatrix::identity(2, 2);
        for b in blocks {
            t *= s_to_abcd(&b.data()[k], z0, f)?;
        }
        data.push(abcd_to_s(&t, z0, f)?);
    }
    FrequencyResponse::new(ParamKind::S, z0, first.freqs().to_vec(), data)
}

/// Places a DUT between the two halves of `thru`: `H * DUT * H` with
/// `H = sqrt(THRU)`.
pub fn embed_2x_thru(thru: &FrequencyResponse, dut: &FrequencyResponse) -> Result<FrequencyResponse> {
    bisect(thru, dut, false)
}

/// Removes the two halves of a symmetric 2x-THRU fixture from a fixtured
/// measurement: `H^-1 * M * H^-1` with `H = sqrt(THRU)`.
pub fn deembed_2x_thru(thru: &FrequencyResponse, dut_fixtured: &FrequencyResponse) -> Result<FrequencyResponse> {
    bisect(thru, dut_fixtured, true)
}

fn bisect(thru: &FrequencyResponse, inner: &FrequencyResponse, remove: bool) -> Result<FrequencyResponse> {
    check_two_port_s(thru)?;
    check_two_port_s(inner)?;
    check_same_grid(thru, inner)?;
    warn_if_asymmetric(thru);
    let z0 = thru.z0();
    let mut data = Vec::with_capacity(thru.len());
    for (k, &f) in thru.freqs().iter().enumerate() {
        let t_thru = s_to_abcd(&thru.data()[k], z0, f)?;
        let half = matrix_sqrt_2x2(&t_thru, f)?;
        let side = if remove { invert(&half, f, "half-fixture ABCD")? } else { half };
        let t_inner = s_to_abcd(&inner.data()[k], z0, f)?;
        data.push(abcd_to_s(&(&side * t_inner * &side), z0, f)?);
    }
    FrequencyResponse::new(ParamKind::S, z0, thru.freqs().to_vec(), data)
}

fn check_two_port_s(r: &FrequencyResponse) -> Result<()> {
    if r.kind() != ParamKind::S {
        return Err(Error::WrongKind { expected: "S".into(), found: r.kind().to_string() });
    }
    if r.n_ports() != 2 {
        return Err(Error::invalid(format!("expected a 2-port, got {} ports", r.n_ports())));
    }
    Ok(())
}

fn check_same_grid(a: &FrequencyResponse, b: &FrequencyResponse) -> Result<()> {
    let same = a.len() == b.len()
        && a.freqs().iter().zip(b.freqs()).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
    if !same {
        return Err(Error::invalid("responses must share a frequency grid; interpolate first"));
    }
    if (a.z0() - b.z0()).abs() > 1e-12 * a.z0() {
        return Err(Error::invalid("responses must share a reference impedance"));
    }
    Ok(())
}

fn warn_if_asymmetric(thru: &FrequencyResponse) {
    let rel = |x: Complex64, y: Complex64| (x - y).norm() / x.norm().max(y.norm()).max(1e-12);
    let worst = thru.samples().fold(0.0f64, |acc, s| {
        let m = s.matrix;
        acc.max(rel(m[(0, 0)], m[(1, 1)])).max(rel(m[(0, 1)], m[(1, 0)]))
    });
    if worst > SYMMETRY_TOL {
        log::warn!("THRU is not symmetric/reciprocal (worst relative mismatch {worst:.3}); bisection assumes mirror halves");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn from_abcd(freqs: &[f64], z0: f64, f: impl Fn(f64) -> CMatrix) -> FrequencyResponse {
        let data = freqs.iter().map(|&fr| abcd_to_s(&f(fr), z0, fr).unwrap()).collect();
        FrequencyResponse::new(ParamKind::S, z0, freqs.to_vec(), data).unwrap()
    }

    fn series(z: Complex64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), z, c(0.0, 0.0), c(1.0, 0.0)])
    }

    fn shunt(y: Complex64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), y, c(1.0, 0.0)])
    }

    /// Matched 50-ohm tee attenuator (~3 dB): R1 = 8.55, R2 = 141.9.
    fn attenuator() -> CMatrix {
        let (r1, r2) = (8.549_253_6, 141.930_927_3);
        series(c(r1, 0.0)) * shunt(c(1.0 / r2, 0.0)) * series(c(r1, 0.0))
    }

    fn line(theta: f64, zc: f64) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[c(theta.cos(), 0.0), c(0.0, zc * theta.sin()), c(0.0, theta.sin() / zc), c(theta.cos(), 0.0)],
        )
    }

    #[test]
    fn abcd_round_trip() {
        let s = CMatrix::from_row_slice(2, 2, &[c(0.1, 0.2), c(0.7, -0.1), c(0.7, -0.1), c(-0.2, 0.05)]);
        let t = s_to_abcd(&s, 50.0, 1.0).unwrap();
        let back = abcd_to_s(&t, 50.0, 1.0).unwrap();
        assert!((back - s).norm() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = attenuator() * line(0.4, 40.0);
        let h = matrix_sqrt_2x2(&m, 1.0).unwrap();
        assert!((&h * &h - &m).norm() < 1e-12 * m.norm());
        let id = CMatrix::identity(2, 2);
        assert!((matrix_sqrt_2x2(&id, 1.0).unwrap() - &id).norm() < 1e-15);
    }

    #[test]
    fn thru_removes_itself() {
        let freqs = [1e6, 1e7, 1e8];
        let thru = from_abcd(&freqs, 50.0, |_| attenuator() * attenuator());
        let out = deembed_2x_thru(&thru, &thru).unwrap();
        for m in out.data() {
            assert!((m[(1, 0)] - c(1.0, 0.0)).norm() < 1e-9);
            assert!(m[(0, 0)].norm() < 1e-9);
            assert!(m[(1, 1)].norm() < 1e-9);
        }
    }

    #[test]
    fn recovers_series_resistor_between_attenuators() {
        let freqs = [1e6, 1e8];
        let thru = from_abcd(&freqs, 50.0, |_| attenuator() * attenuator());
        let dut = from_abcd(&freqs, 50.0, |_| series(c(12.0, 0.0)));
        let fixtured = from_abcd(&freqs, 50.0, |_| attenuator() * series(c(12.0, 0.0)) * attenuator());
        let out = deembed_2x_thru(&thru, &fixtured).unwrap();
        for (a, b) in out.data().iter().zip(dut.data()) {
            assert!((a - b).norm() < 1e-9);
        }
        let re = embed_2x_thru(&thru, &out).unwrap();
        for (a, b) in re.data().iter().zip(fixtured.data()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn shunt_capacitor_behind_line_halves() {
        // Lossless 45-ohm line, 3 cm each side, v = 1.5e8 m/s; full thru stays
        // below half a wavelength up to 2.5 GHz.
        let cap = 2e-12;
        let freqs: Vec<f64> = crate::spectra::log_grid(1e7, 2e9, 25);
        let half = |f: f64| line(2.0 * PI * f * 0.03 / 1.5e8, 45.0);
        let thru = from_abcd(&freqs, 50.0, |f| half(f) * half(f));
        let fixtured = from_abcd(&freqs, 50.0, |f| half(f) * shunt(c(0.0, 2.0 * PI * f * cap)) * half(f));
        let out = deembed_2x_thru(&thru, &fixtured).unwrap();
        for (m, &f) in out.data().iter().zip(&freqs) {
            let t = s_to_abcd(m, 50.0, f).unwrap();
            let want = 2.0 * PI * f * cap;
            assert!((t[(1, 0)].im - want).abs() / want < 5e-3);
            assert!(t[(1, 0)].re.abs() < 5e-3 * want);
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = from_abcd(&[1e6, 1e7], 50.0, |_| attenuator());
        let b = from_abcd(&[1e6, 2e7], 50.0, |_| attenuator());
        assert!(deembed_2x_thru(&a, &b).is_err());
    }
}
