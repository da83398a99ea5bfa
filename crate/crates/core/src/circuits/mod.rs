//! Lumped-element models: series-RLC branches, parallel branch sets and the
//! Pi network whose Y-parameters can be read off by inspection.

mod deembed;
mod fit;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{CMatrix, FrequencyResponse, ParamKind, DEFAULT_Z0};

pub use deembed::{abcd_to_s, cascade, deembed_2x_thru, embed_2x_thru, matrix_sqrt_2x2, s_to_abcd};
pub use fit::{fit_equivalent_circuit, CircuitFitOptions, CircuitFitReport};

/// Largest number of parallel branches in a [`BranchSet`].
pub const MAX_BRANCHES: usize = 8;

/// One series R-L-C leg. A missing capacitance means an R-L leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlcBranch {
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl RlcBranch {
    pub fn new(r: f64, l: f64, c: Option<f64>) -> Result<Self> {
        let b = Self { r, l, c };
        b.validate()?;
        Ok(b)
    }

    pub fn rlc(r: f64, l: f64, c: f64) -> Self {
        Self { r, l, c: Some(c) }
    }

    pub fn resistor(r: f64) -> Self {
        Self { r, l: 0.0, c: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.r.is_finite() && self.r >= 0.0) {
            return bad(format!("branch resistance must be finite and >= 0, got {}", self.r));
        }
        if !(self.l.is_finite() && self.l >= 0.0) {
            return bad(format!("branch inductance must be finite and >= 0, got {}", self.l));
        }
        match self.c {
            Some(c) if !(c.is_finite() && c > 0.0) => {
                bad(format!("branch capacitance must be finite and > 0, got {c}"))
            }
            None if self.r == 0.0 && self.l == 0.0 => bad("branch has no R, L or C".into()),
            _ => Ok(()),
        }
    }

    pub fn impedance(&self, f: f64) -> Result<Complex64> {
        let w = 2.0 * PI * f;
        let mut z = Complex64::new(self.r, w * self.l);
        if let Some(c) = self.c {
            if f == 0.0 {
                return Err(Error::invalid("branch with a capacitor is open at DC"));
            }
            z += Complex64::new(0.0, -1.0 / (w * c));
        }
        Ok(z)
    }

    /// `1 / (r + j w l + 1/(j w c))`.
    pub fn admittance(&self, f: f64) -> Result<Complex64> {
        let z = self.impedance(f)?;
        if z == Complex64::new(0.0, 0.0) {
            return Err(Error::invalid(format!("branch is a short circuit at {f} Hz")));
        }
        Ok(z.inv())
    }

    /// Magnitude of the fastest natural frequency (rad/s) of the branch,
    /// i.e. the largest |root| of `l s^2 + r s + 1/c`. `None` for a pure
    /// resistor or a lossless inductor, which have no decaying mode.
    pub fn fastest_rate(&self) -> Option<f64> {
        let (r, l) = (self.r, self.l);
        match self.c {
            Some(c) if l > 0.0 => {
                let disc = r * r - 4.0 * l / c;
                if disc < 0.0 {
                    Some(1.0 / (l * c).sqrt())
                } else {
                    Some((r + disc.sqrt()) / (2.0 * l))
                }
            }
            Some(c) if r > 0.0 => Some(1.0 / (r * c)),
            Some(_) => None,
            None if l > 0.0 && r > 0.0 => Some(r / l),
            None => None,
        }
    }
}

/// Parallel combination of 1..=8 series-RLC legs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RlcBranch>", into = "Vec<RlcBranch>")]
pub struct BranchSet {
    branches: Vec<RlcBranch>,
}

impl TryFrom<Vec<RlcBranch>> for BranchSet {
    type Error = Error;

    fn try_from(branches: Vec<RlcBranch>) -> Result<Self> {
        BranchSet::new(branches)
    }
}

impl From<BranchSet> for Vec<RlcBranch> {
    fn from(set: BranchSet) -> Self {
        set.branches
    }
}

impl BranchSet {
    pub fn new(branches: Vec<RlcBranch>) -> Result<Self> {
        if branches.is_empty() || branches.len() > MAX_BRANCHES {
            return Err(Error::invalid(format!(
                "a branch set holds 1..={MAX_BRANCHES} branches, got {}",
                branches.len()
            )));
        }
        for b in &branches {
            b.validate()?;
        }
        Ok(Self { branches })
    }

    pub fn single(b: RlcBranch) -> Result<Self> {
        Self::new(vec![b])
    }

    pub fn branches(&self) -> &[RlcBranch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn admittance(&self, f: f64) -> Result<Complex64> {
        self.branches.iter().map(|b| b.admittance(f)).sum()
    }

    /// Tabulated 1-port Y of the set.
    pub fn response(&self, freqs: &[f64]) -> Result<FrequencyResponse> {
        let vals = freqs.iter().map(|&f| self.admittance(f)).collect::<Result<Vec<_>>>()?;
        FrequencyResponse::one_port(ParamKind::Y, DEFAULT_Z0, freqs.to_vec(), &vals)
    }

    pub fn fastest_rate(&self) -> Option<f64> {
        self.branches.iter().filter_map(RlcBranch::fastest_rate).reduce(f64::max)
    }
}

/// Shunt `ya` at port 1, series `yb` between the ports, shunt `yc` at port 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiNetworkRepr", into = "PiNetworkRepr")]
pub struct PiNetwork {
    pub ya: Option<BranchSet>,
    pub yb: BranchSet,
    pub yc: Option<BranchSet>,
}

#[derive(Serialize, Deserialize)]
struct PiNetworkRepr {
    #[serde(default)]
    ya: Vec<RlcBranch>,
    yb: Vec<RlcBranch>,
    #[serde(default)]
    yc: Vec<RlcBranch>,
}

impl TryFrom<PiNetworkRepr> for PiNetwork {
    type Error = Error;

    fn try_from(r: PiNetworkRepr) -> Result<Self> {
        let opt = |v: Vec<RlcBranch>| if v.is_empty() { Ok(None) } else { BranchSet::new(v).map(Some) };
        if r.yb.is_empty() {
            return Err(Error::invalid("Pi network needs a series (yb) path"));
        }
        Ok(PiNetwork { ya: opt(r.ya)?, yb: BranchSet::new(r.yb)?, yc: opt(r.yc)? })
    }
}

impl From<PiNetwork> for PiNetworkRepr {
    fn from(p: PiNetwork) -> Self {
        let v = |s: Option<BranchSet>| s.map(Vec::from).unwrap_or_default();
        PiNetworkRepr { ya: v(p.ya), yb: p.yb.into(), yc: v(p.yc) }
    }
}

impl PiNetwork {
    pub fn new(ya: Option<BranchSet>, yb: BranchSet, yc: Option<BranchSet>) -> Self {
        Self { ya, yb, yc }
    }

    /// Leg admittances `(Ya, Yb, Yc)` at `f`.
    pub fn legs(&self, f: f64) -> Result<(Complex64, Complex64, Complex64)> {
        let leg = |s: &Option<BranchSet>| s.as_ref().map_or(Ok(Complex64::new(0.0, 0.0)), |s| s.admittance(f));
        Ok((leg(&self.ya)?, self.yb.admittance(f)?, leg(&self.yc)?))
    }

    pub fn y_matrix(&self, f: f64) -> Result<CMatrix> {
        let (ya, yb, yc) = self.legs(f)?;
        Ok(CMatrix::from_row_slice(2, 2, &[ya + yb, -yb, -yb, yb + yc]))
    }

    /// Fastest natural rate (rad/s) over every branch in the network.
    pub fn fastest_rate(&self) -> Option<f64> {
        [self.ya.as_ref(), Some(&self.yb), self.yc.as_ref()]
            .into_iter()
            .flatten()
            .filter_map(BranchSet::fastest_rate)
            .reduce(f64::max)
    }

    pub fn branch_sets(&self) -> impl Iterator<Item = &BranchSet> {
        [self.ya.as_ref(), Some(&self.yb), self.yc.as_ref()].into_iter().flatten()
    }
}

/// Y-parameters of a Pi network: `Y11 = Ya + Yb`, `Y22 = Yb + Yc`,
/// `Y12 = Y21 = -Yb`.
pub fn pi_y_params(net: &PiNetwork, freqs: &[f64]) -> Result<FrequencyResponse> {
    let data = freqs.iter().map(|&f| net.y_matrix(f)).collect::<Result<Vec<_>>>()?;
    FrequencyResponse::new(ParamKind::Y, DEFAULT_Z0, freqs.to_vec(), data)
}

/// Versioned JSON wrapper for a circuit description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitDocument {
    pub version: u32,
    pub pi: PiNetwork,
}

impl CircuitDocument {
    pub const VERSION: u32 = 1;

    pub fn new(pi: PiNetwork) -> Self {
        Self { version: Self::VERSION, pi }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.version != Self::VERSION {
            return Err(Error::invalid(format!("unsupported circuit document version {}", doc.version)));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit document serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn resistor_branch() {
        let b = RlcBranch::resistor(1.0);
        for f in [0.0, 1.0, 1e9] {
            assert_eq!(b.admittance(f).unwrap(), c(1.0, 0.0));
        }
    }

    #[test]
    fn series_resonance_is_real() {
        let b = RlcBranch::rlc(2e-3, 1e-9, 100e-6);
        let f0 = 1.0 / (2.0 * PI * (1e-9f64 * 100e-6).sqrt());
        assert_relative_eq!(f0, 503_292.12, max_relative = 1e-7);
        let y = b.admittance(f0).unwrap();
        assert_relative_eq!(y.re, 500.0, max_relative = 1e-9);
        assert!(y.im.abs() < 1e-6);
    }

    #[test]
    fn branch_at_ten_kilohertz() {
        // Reference from a 30-digit evaluation of the closed form:
        // Z = 0.002 - j0.159092111238823539904, Y = 1/Z.
        let y = RlcBranch::rlc(2e-3, 1e-9, 100e-6).admittance(1e4).unwrap();
        assert_relative_eq!(y.re, 0.079_006_727_864_696_33, max_relative = 1e-12);
        assert_relative_eq!(y.im, 6.284_673_569_032_864, max_relative = 1e-12);
    }

    #[test]
    fn dc_errors() {
        assert!(RlcBranch::rlc(1.0, 0.0, 1e-6).admittance(0.0).is_err());
        assert!(RlcBranch::new(0.0, 1e-9, None).unwrap().admittance(0.0).is_err());
        assert!(RlcBranch::new(0.0, 0.0, None).is_err());
        assert!(RlcBranch::new(-1.0, 0.0, None).is_err());
        assert!(RlcBranch::new(1.0, 0.0, Some(0.0)).is_err());
    }

    #[test]
    fn branch_set_bounds() {
        assert!(BranchSet::new(vec![]).is_err());
        assert!(BranchSet::new(vec![RlcBranch::resistor(1.0); 9]).is_err());
        assert!(BranchSet::new(vec![RlcBranch::resistor(1.0); 8]).is_ok());
    }

    #[test]
    fn series_only_pi() {
        let net = PiNetwork::new(None, BranchSet::single(RlcBranch::resistor(1.0)).unwrap(), None);
        let y = pi_y_params(&net, &[1.0, 1e6]).unwrap();
        for m in y.data() {
            assert_eq!(m[(0, 0)], c(1.0, 0.0));
            assert_eq!(m[(0, 1)], c(-1.0, 0.0));
            assert_eq!(m[(1, 0)], c(-1.0, 0.0));
            assert_eq!(m[(1, 1)], c(1.0, 0.0));
        }
    }

    #[test]
    fn resistive_pi() {
        let r50 = || Some(BranchSet::single(RlcBranch::resistor(50.0)).unwrap());
        let net = PiNetwork::new(r50(), r50().unwrap(), r50());
        let resp = pi_y_params(&net, &[1e3]).unwrap();
        let m = &resp.data()[0];
        assert_relative_eq!(m[(0, 0)].re, 0.04);
        assert_relative_eq!(m[(1, 1)].re, 0.04);
        assert_relative_eq!(m[(0, 1)].re, -0.02);
    }

    #[test]
    fn pdn_like_pi_matches_nodal_solution() {
        let cap = |r, l| Some(BranchSet::single(RlcBranch::rlc(r, l, 100e-6)).unwrap());
        let net = PiNetwork::new(
            cap(2e-3, 1e-9),
            BranchSet::single(RlcBranch::new(10e-3, 5e-9, None).unwrap()).unwrap(),
            cap(3e-3, 1.2e-9),
        );
        let f = 250e3;
        let y = net.y_matrix(f).unwrap();
        // Independent route: drive node 1 with 1 V, short node 2, read the
        // currents from the element impedances directly.
        let w = 2.0 * PI * f;
        let za = c(2e-3, w * 1e-9 - 1.0 / (w * 100e-6));
        let zb = c(10e-3, w * 5e-9);
        let zc = c(3e-3, w * 1.2e-9 - 1.0 / (w * 100e-6));
        let i1 = c(1.0, 0.0) / za + c(1.0, 0.0) / zb;
        let i2 = -c(1.0, 0.0) / zb;
        assert!((y[(0, 0)] - i1).norm() / i1.norm() < 1e-14);
        assert!((y[(1, 0)] - i2).norm() / i2.norm() < 1e-14);
        let i2b = c(1.0, 0.0) / zc + c(1.0, 0.0) / zb;
        assert!((y[(1, 1)] - i2b).norm() / i2b.norm() < 1e-14);
    }

    #[test]
    fn legs_recoverable_from_matrix() {
        let net = PiNetwork::new(
            Some(BranchSet::new(vec![RlcBranch::rlc(1e-3, 1e-9, 1e-5), RlcBranch::resistor(5e4)]).unwrap()),
            BranchSet::single(RlcBranch::new(0.01, 2e-9, None).unwrap()).unwrap(),
            Some(BranchSet::single(RlcBranch::rlc(2e-3, 3e-10, 1e-6)).unwrap()),
        );
        for f in crate::spectra::log_grid(1e2, 1e9, 15) {
            let y = net.y_matrix(f).unwrap();
            let (ya, _, yc) = net.legs(f).unwrap();
            assert_eq!(y[(0, 1)], y[(1, 0)]);
            assert!((y[(0, 0)] + y[(0, 1)] - ya).norm() <= 1e-12 * y[(0, 0)].norm());
            assert!((y[(1, 1)] + y[(0, 1)] - yc).norm() <= 1e-12 * y[(1, 1)].norm());
        }
    }

    #[test]
    fn probe_shunt_raises_y22() {
        let base = PiNetwork::new(
            Some(BranchSet::single(RlcBranch::rlc(2e-3, 1e-9, 100e-6)).unwrap()),
            BranchSet::single(RlcBranch::new(10e-3, 5e-9, None).unwrap()).unwrap(),
            Some(BranchSet::single(RlcBranch::rlc(2e-3, 1e-9, 100e-6)).unwrap()),
        );
        let mut probed = base.clone();
        probed.yc = Some(
            BranchSet::new(vec![RlcBranch::rlc(2e-3, 1e-9, 100e-6), RlcBranch::resistor(50e3)]).unwrap(),
        );
        let freqs = crate::spectra::log_grid(1e3, 1e8, 11);
        let a = pi_y_params(&base, &freqs).unwrap();
        let b = pi_y_params(&probed, &freqs).unwrap();
        for (ma, mb) in a.data().iter().zip(b.data()) {
            let d = mb[(1, 1)] - ma[(1, 1)];
            assert!((d.re - 2e-5).abs() < 1e-12 && d.im.abs() < 1e-12);
            assert_eq!(ma[(0, 0)], mb[(0, 0)]);
        }
        let shunt = BranchSet::single(RlcBranch::resistor(50e3)).unwrap().response(&freqs).unwrap();
        let embedded = crate::spectra::embed_shunt(&a, 1, &shunt).unwrap();
        for (me, mb) in embedded.data().iter().zip(b.data()) {
            assert!((me - mb).norm() < 1e-12);
        }
    }

    #[test]
    fn document_round_trip() {
        let json = r#"{"version":1,"pi":{"ya":[{"r":0.002,"l":1e-9,"c":1e-4}],"yb":[{"r":0.01,"l":5e-9}],"yc":[]}}"#;
        let doc = CircuitDocument::from_json(json).unwrap();
        assert!(doc.pi.yc.is_none());
        assert_eq!(doc.pi.yb.branches()[0].c, None);
        let again = CircuitDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(doc, again);
        assert!(CircuitDocument::from_json(r#"{"version":2,"pi":{"yb":[{"r":1}]}}"#).is_err());
        assert!(CircuitDocument::from_json(r#"{"version":1,"pi":{"yb":[]}}"#).is_err());
    }

    #[test]
    fn fastest_rates() {
        assert_eq!(RlcBranch::resistor(1.0).fastest_rate(), None);
        assert_relative_eq!(RlcBranch::new(2.0, 1.0, None).unwrap().fastest_rate().unwrap(), 2.0);
        assert_relative_eq!(RlcBranch::rlc(1.0, 0.0, 0.5).fastest_rate().unwrap(), 2.0);
        // underdamped: |s| = 1/sqrt(LC)
        assert_relative_eq!(RlcBranch::rlc(0.0, 1e-9, 1e-6).fastest_rate().unwrap(), 1.0 / 1e-15f64.sqrt());
        // overdamped: roots of s^2 + 3 s + 2 are -1, -2
        assert_relative_eq!(RlcBranch::rlc(3.0, 1.0, 0.5).fastest_rate().unwrap(), 2.0, max_relative = 1e-12);
    }
}
