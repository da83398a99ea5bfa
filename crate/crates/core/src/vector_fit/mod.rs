//! Common-pole rational models of matrix frequency responses.
//!
//! A [`RationalModel`] represents
//!
//! ```text
//! H(s) = D + s E + sum_k R_k / (s - p_k)
//! ```
//!
//! with every complex pole accompanied by its conjugate (and the conjugate
//! residue). Complex pairs are stored once, as the member with positive
//! imaginary part.

mod fit;
mod passivity;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{CMatrix, FrequencyResponse, ParamKind, DEFAULT_Z0};

pub use fit::{initial_poles, order_sweep, vector_fit, VectorFitOptions, Weighting};
pub use passivity::{
    auto_sweep, check_response, passivity_check, passivity_enforce, EnforcementReport, PassivityReport, Violation,
    VIOLATION_TOL,
};

/// One pole (or conjugate pair) with its residue matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum PoleTerm {
    Real { pole: f64, residue: DMatrix<f64> },
    /// `pole.im > 0`; the conjugate pole carries `residue.conj()`.
    Pair { pole: Complex64, residue: CMatrix },
}

impl PoleTerm {
    pub fn order(&self) -> usize {
        match self {
            PoleTerm::Real { .. } => 1,
            PoleTerm::Pair { .. } => 2,
        }
    }

    /// Contribution of the term at complex frequency `s`.
    pub fn eval(&self, s: Complex64) -> CMatrix {
        match self {
            PoleTerm::Real { pole, residue } => {
                let k = (s - pole).inv();
                residue.map(|r| k * r)
            }
            PoleTerm::Pair { pole, residue } => {
                let k1 = (s - pole).inv();
                let k2 = (s - pole.conj()).inv();
                residue.map(|r| r * k1 + r.conj() * k2)
            }
        }
    }

    fn pole_value(&self) -> Complex64 {
        match self {
            PoleTerm::Real { pole, .. } => Complex64::new(*pole, 0.0),
            PoleTerm::Pair { pole, .. } => *pole,
        }
    }
}

/// Pole-residue model with constant (`d`) and proportional (`e`) terms.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalModel {
    terms: Vec<PoleTerm>,
    d: DMatrix<f64>,
    e: DMatrix<f64>,
    band: (f64, f64),
    fit_error: f64,
}

impl RationalModel {
    pub fn new(
        terms: Vec<PoleTerm>,
        d: DMatrix<f64>,
        e: DMatrix<f64>,
        band: (f64, f64),
        fit_error: f64,
    ) -> Result<Self> {
        let n = d.nrows();
        if n == 0 || d.ncols() != n || e.nrows() != n || e.ncols() != n {
            return Err(Error::invalid("d and e must be square matrices of the same size"));
        }
        if d.iter().chain(e.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("d and e must be finite"));
        }
        if !(band.0.is_finite() && band.1.is_finite() && band.0 >= 0.0 && band.0 <= band.1) {
            return Err(Error::invalid(format!("invalid fit band [{}, {}]", band.0, band.1)));
        }
        for t in &terms {
            let p = t.pole_value();
            if !(p.re.is_finite() && p.im.is_finite()) || p.re >= 0.0 {
                return Err(Error::invalid(format!("pole {p} is not strictly stable")));
            }
            let ok = match t {
                PoleTerm::Real { residue, .. } => {
                    residue.nrows() == n && residue.ncols() == n && residue.iter().all(|v| v.is_finite())
                }
                PoleTerm::Pair { pole, residue } => {
                    pole.im > 0.0
                        && residue.nrows() == n
                        && residue.ncols() == n
                        && residue.iter().all(|v| v.re.is_finite() && v.im.is_finite())
                }
            };
            if !ok {
                return Err(Error::invalid(format!("malformed residue or pole ordering for pole {p}")));
            }
        }
        Ok(Self { terms, d, e, band, fit_error })
    }

    /// A model with no poles: `H = d`.
    pub fn constant(d: DMatrix<f64>, band: (f64, f64)) -> Result<Self> {
        let n = d.nrows();
        Self::new(Vec::new(), d, DMatrix::zeros(n, n), band, 0.0)
    }

    pub fn n_ports(&self) -> usize {
        self.d.nrows()
    }

    pub fn terms(&self) -> &[PoleTerm] {
        &self.terms
    }

    /// Total number of poles, counting both members of each pair.
    pub fn order(&self) -> usize {
        self.terms.iter().map(PoleTerm::order).sum()
    }

    /// Full pole list, each complex pole followed by its conjugate.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.order());
        for t in &self.terms {
            let p = t.pole_value();
            out.push(p);
            if p.im != 0.0 {
                out.push(p.conj());
            }
        }
        out
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn fit_error(&self) -> f64 {
        self.fit_error
    }

    pub fn has_proportional_term(&self) -> bool {
        self.e.iter().any(|v| *v != 0.0)
    }

    pub(crate) fn with_parts(&self, terms: Vec<PoleTerm>, d: DMatrix<f64>) -> Self {
        Self { terms, d, e: self.e.clone(), band: self.band, fit_error: self.fit_error }
    }

    pub(crate) fn set_fit_error(&mut self, err: f64) {
        self.fit_error = err;
    }

    /// `H(s)` at a complex frequency.
    pub fn eval_s(&self, s: Complex64) -> CMatrix {
        let mut h = self.d.map(|v| Complex64::new(v, 0.0)) + self.e.map(|v| s * v);
        for t in &self.terms {
            h += t.eval(s);
        }
        h
    }

    /// `H(j 2 pi f)`.
    pub fn eval_freq(&self, f: f64) -> CMatrix {
        self.eval_s(Complex64::new(0.0, 2.0 * PI * f))
    }

    /// Scales every residue, `d` and `e` by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                PoleTerm::Real { pole, residue } => PoleTerm::Real { pole: *pole, residue: residue * k },
                PoleTerm::Pair { pole, residue } => {
                    PoleTerm::Pair { pole: *pole, residue: residue.map(|r| r * k) }
                }
            })
            .collect();
        Self { terms, d: &self.d * k, e: &self.e * k, band: self.band, fit_error: self.fit_error }
    }
}

/// Tabulates the model as Y-parameters.
pub fn evaluate(model: &RationalModel, freqs: &[f64]) -> Result<FrequencyResponse> {
    let data = freqs.iter().map(|&f| model.eval_freq(f)).collect();
    FrequencyResponse::new(ParamKind::Y, DEFAULT_Z0, freqs.to_vec(), data)
}

/// Relative RMS difference `sqrt(sum |H - R|^2 / sum |R|^2)` over all entries
/// and frequencies.
pub fn relative_rms_error(model: &RationalModel, reference: &FrequencyResponse) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in reference.samples() {
        let h = model.eval_freq(s.freq);
        num += (h - s.matrix).norm_squared();
        den += s.matrix.norm_squared();
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct JsonComplex {
    re: f64,
    im: f64,
}

impl From<Complex64> for JsonComplex {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<JsonComplex> for Complex64 {
    fn from(z: JsonComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    n_ports: usize,
    band_hz: [f64; 2],
    poles: Vec<JsonComplex>,
    residues: Vec<Vec<JsonComplex>>,
    d: Vec<f64>,
    e: Vec<f64>,
    fit_error: f64,
}

fn row_major<T: Copy>(m: &DMatrix<T>) -> Vec<T> {
    let n = m.nrows();
    (0..n).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
}

impl RationalModel {
    pub const FILE_VERSION: u32 = 1;

    /// Rational-fit file contents (versioned JSON).
    pub fn to_json(&self) -> String {
        let n = self.n_ports();
        let mut poles = Vec::new();
        let mut residues = Vec::new();
        for t in &self.terms {
            match t {
                PoleTerm::Real { pole, residue } => {
                    poles.push(Complex64::new(*pole, 0.0).into());
                    residues.push(row_major(residue).into_iter().map(|v| Complex64::new(v, 0.0).into()).collect());
                }
                PoleTerm::Pair { pole, residue } => {
                    poles.push((*pole).into());
                    poles.push(pole.conj().into());
                    residues.push(row_major(residue).into_iter().map(JsonComplex::from).collect());
                    residues.push(row_major(residue).into_iter().map(|r| r.conj().into()).collect());
                }
            }
        }
        let file = ModelFile {
            version: Self::FILE_VERSION,
            n_ports: n,
            band_hz: [self.band.0, self.band.1],
            poles,
            residues,
            d: row_major(&self.d),
            e: row_major(&self.e),
            fit_error: self.fit_error,
        };
        serde_json::to_string_pretty(&file).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != Self::FILE_VERSION {
            return Err(Error::invalid(format!("unsupported rational-fit file version {}", file.version)));
        }
        let n = file.n_ports;
        let nn = n * n;
        if n == 0 || file.d.len() != nn || file.e.len() != nn {
            return Err(Error::invalid("d and e must hold n_ports^2 values"));
        }
        if file.poles.len() != file.residues.len() || file.residues.iter().any(|r| r.len() != nn) {
            return Err(Error::invalid("each pole needs an n_ports^2 residue matrix"));
        }
        let cmat = |v: &[JsonComplex]| CMatrix::from_row_iterator(n, n, v.iter().map(|z| Complex64::from(*z)));
        let mut terms = Vec::new();
        let mut k = 0;
        while k < file.poles.len() {
            let p: Complex64 = file.poles[k].into();
            let r = cmat(&file.residues[k]);
            if p.im == 0.0 {
                if r.iter().any(|z| z.im != 0.0) {
                    return Err(Error::invalid(format!("real pole {} has a complex residue", p.re)));
                }
                terms.push(PoleTerm::Real { pole: p.re, residue: r.map(|z| z.re) });
                k += 1;
                continue;
            }
            let (q, rq) = match (file.poles.get(k + 1), file.residues.get(k + 1)) {
                (Some(q), Some(rq)) => (Complex64::from(*q), cmat(rq)),
                _ => return Err(Error::invalid(format!("complex pole {p} has no conjugate partner"))),
            };
            if q != p.conj() || rq != r.map(|z| z.conj()) {
                return Err(Error::invalid(format!("pole {p} is not followed by its conjugate")));
            }
            let (pole, residue) = if p.im > 0.0 { (p, r) } else { (q, rq) };
            terms.push(PoleTerm::Pair { pole, residue });
            k += 2;
        }
        let d = DMatrix::from_row_slice(n, n, &file.d);
        let e = DMatrix::from_row_slice(n, n, &file.e);
        Self::new(terms, d, e, (file.band_hz[0], file.band_hz[1]), file.fit_error)
    }
}
