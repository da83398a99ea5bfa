//! Touchstone 1.0 reader and writer.
//!
//! Only version 1.0 files are accepted. Values are read and written in SI
//! units (siemens for Y, ohms for Z); the `R` option is carried through as the
//! reference impedance of the resulting [`FrequencyResponse`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectra::{CMatrix, FrequencyResponse, ParamKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FreqUnit {
    pub const ALL: [FreqUnit; 4] = [FreqUnit::Hz, FreqUnit::KHz, FreqUnit::MHz, FreqUnit::GHz];

    pub fn scale(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }

    fn token(self) -> &'static str {
        match self {
            FreqUnit::Hz => "HZ",
            FreqUnit::KHz => "KHZ",
            FreqUnit::MHz => "MHZ",
            FreqUnit::GHz => "GHZ",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueFormat {
    RI,
    MA,
    DB,
}

impl ValueFormat {
    pub const ALL: [ValueFormat; 3] = [ValueFormat::RI, ValueFormat::MA, ValueFormat::DB];

    fn token(self) -> &'static str {
        match self {
            ValueFormat::RI => "RI",
            ValueFormat::MA => "MA",
            ValueFormat::DB => "DB",
        }
    }

    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            ValueFormat::RI => Complex64::new(a, b),
            ValueFormat::MA => Complex64::from_polar(a, b * PI / 180.0),
            ValueFormat::DB => Complex64::from_polar(10f64.powf(a / 20.0), b * PI / 180.0),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            ValueFormat::RI => (z.re, z.im),
            ValueFormat::MA => (z.norm(), z.arg() * 180.0 / PI),
            ValueFormat::DB => (20.0 * z.norm().log10(), z.arg() * 180.0 / PI),
        }
    }
}

/// Contents of the `#` option line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TouchstoneOptions {
    pub freq_unit: FreqUnit,
    pub param_kind: ParamKind,
    pub value_format: ValueFormat,
    pub ref_resistance: f64,
}

impl Default for TouchstoneOptions {
    fn default() -> Self {
        Self {
            freq_unit: FreqUnit::GHz,
            param_kind: ParamKind::S,
            value_format: ValueFormat::MA,
            ref_resistance: 50.0,
        }
    }
}

impl TouchstoneOptions {
    fn option_line(&self) -> String {
        let kind = match self.param_kind {
            ParamKind::S => "S",
            ParamKind::Y => "Y",
            ParamKind::Z => "Z",
        };
        format!(
            "# {} {} {} R {}",
            self.freq_unit.token(),
            kind,
            self.value_format.token(),
            self.ref_resistance
        )
    }
}

fn parse_options(body: &str, line: usize) -> Result<TouchstoneOptions> {
    let err = |msg: String| Error::Touchstone { line, msg };
    let mut opts = TouchstoneOptions::default();
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opts.freq_unit = FreqUnit::Hz,
            "KHZ" => opts.freq_unit = FreqUnit::KHz,
            "MHZ" => opts.freq_unit = FreqUnit::MHz,
            "GHZ" => opts.freq_unit = FreqUnit::GHz,
            "S" => opts.param_kind = ParamKind::S,
            "Y" => opts.param_kind = ParamKind::Y,
            "Z" => opts.param_kind = ParamKind::Z,
            "G" | "H" => return Err(err(format!("malformed option line: {tok}-parameters are not supported"))),
            "RI" => opts.value_format = ValueFormat::RI,
            "MA" => opts.value_format = ValueFormat::MA,
            "DB" => opts.value_format = ValueFormat::DB,
            "R" => {
                let val = tokens
                    .next()
                    .ok_or_else(|| err("malformed option line: R needs a value".into()))?;
                let r: f64 = val
                    .parse()
                    .map_err(|_| err(format!("malformed option line: bad reference resistance '{val}'")))?;
                if !(r.is_finite() && r > 0.0) {
                    return Err(err(format!("malformed option line: reference resistance must be > 0, got {r}")));
                }
                opts.ref_resistance = r;
            }
            other => return Err(err(format!("malformed option line: unknown token '{other}'"))),
        }
    }
    Ok(opts)
}

/// Parses a Touchstone 1.0 document describing an `n_ports`-port network.
pub fn parse_touchstone(text: &str, n_ports: usize) -> Result<(FrequencyResponse, TouchstoneOptions)> {
    if n_ports == 0 {
        return Err(Error::invalid("port count must be positive"));
    }
    let per_record = 1 + 2 * n_ports * n_ports;
    let mut opts: Option<TouchstoneOptions> = None;
    let mut freqs: Vec<f64> = Vec::new();
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut current: Vec<f64> = Vec::with_capacity(per_record);
    let mut record_line = 0;
    let mut last_line = 0;

    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = full.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        last_line = line_no;
        if line.starts_with('[') {
            return Err(Error::Touchstone {
                line: line_no,
                msg: format!("Touchstone 2.0 keyword '{line}' found; only version 1.0 files are supported"),
            });
        }
        if let Some(body) = line.strip_prefix('#') {
            if opts.is_some() {
                return Err(Error::Touchstone { line: line_no, msg: "duplicate option line".into() });
            }
            opts = Some(parse_options(body, line_no)?);
            continue;
        }
        if opts.is_none() {
            return Err(Error::Touchstone { line: line_no, msg: "data before the option line".into() });
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Touchstone {
                    line: line_no,
                    msg: format!("non-numeric token '{tok}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        if current.is_empty() {
            record_line = line_no;
            let f = values[0];
            if let Some(&prev) = freqs.last() {
                if f <= prev {
                    if n_ports == 2 && values.len() == 5 {
                        log::warn!("line {line_no}: noise parameter section skipped");
                        break;
                    }
                    return Err(Error::Touchstone {
                        line: line_no,
                        msg: format!("frequency {f} is not above the previous frequency {prev}"),
                    });
                }
            }
        }
        current.extend_from_slice(&values);
        if current.len() > per_record {
            return Err(Error::Touchstone {
                line: line_no,
                msg: format!(
                    "expected {per_record} values for the record starting on line {record_line}, found at least {}",
                    current.len()
                ),
            });
        }
        if current.len() == per_record {
            freqs.push(current[0]);
            raw.push(std::mem::take(&mut current));
        }
    }

    let opts = opts.ok_or(Error::Touchstone { line: last_line.max(1), msg: "missing option line".into() })?;
    if !current.is_empty() {
        return Err(Error::Touchstone {
            line: record_line,
            msg: format!("expected {per_record} values per frequency, found {}", current.len()),
        });
    }
    if raw.is_empty() {
        return Err(Error::Touchstone { line: last_line.max(1), msg: "no data records".into() });
    }

    let scale = opts.freq_unit.scale();
    let mut data = Vec::with_capacity(raw.len());
    for rec in &raw {
        let mut m = CMatrix::zeros(n_ports, n_ports);
        for (k, pair) in rec[1..].chunks_exact(2).enumerate() {
            let (row, col) = if n_ports == 2 {
                // N11 N21 N12 N22
                (k % 2, k / 2)
            } else {
                (k / n_ports, k % n_ports)
            };
            m[(row, col)] = opts.value_format.decode(pair[0], pair[1]);
        }
        data.push(m);
    }
    let freqs_hz: Vec<f64> = freqs.iter().map(|f| f * scale).collect();
    let resp = FrequencyResponse::new(opts.param_kind, opts.ref_resistance, freqs_hz, data).map_err(|e| {
        Error::Touchstone { line: record_line, msg: e.to_string() }
    })?;
    Ok((resp, opts))
}

/// Serialises `resp` with the layout and number format given by `opts`.
///
/// The parameter kind and reference resistance written to the option line
/// come from the response itself.
pub fn write_touchstone(resp: &FrequencyResponse, opts: &TouchstoneOptions) -> String {
    let opts = TouchstoneOptions {
        param_kind: resp.kind(),
        ref_resistance: resp.z0(),
        ..*opts
    };
    let n = resp.n_ports();
    let scale = opts.freq_unit.scale();
    let mut out = String::new();
    let _ = writeln!(out, "! {n}-port {} parameters", resp.kind());
    let _ = writeln!(out, "{}", opts.option_line());
    let push_pair = |out: &mut String, z: Complex64| {
        let (a, b) = opts.value_format.encode(z);
        let _ = write!(out, " {a:.16e} {b:.16e}");
    };
    for s in resp.samples() {
        let _ = write!(out, "{:.16e}", s.freq / scale);
        if n <= 2 {
            let order: &[(usize, usize)] = if n == 1 { &[(0, 0)] } else { &[(0, 0), (1, 0), (0, 1), (1, 1)] };
            for &(r, c) in order {
                push_pair(&mut out, s.matrix[(r, c)]);
            }
            out.push('\n');
        } else {
            for r in 0..n {
                for (k, c) in (0..n).enumerate() {
                    if k > 0 && k % 4 == 0 {
                        out.push('\n');
                    }
                    push_pair(&mut out, s.matrix[(r, c)]);
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Port count and nominal kind from a `.sNp` / `.yNp` / `.zNp` extension.
pub fn ports_from_extension(path: &Path) -> Option<(usize, ParamKind)> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    let kind = match ext.chars().next()? {
        's' => ParamKind::S,
        'y' => ParamKind::Y,
        'z' => ParamKind::Z,
        _ => return None,
    };
    let digits = ext.get(1..ext.len().checked_sub(1)?)?;
    if !ext.ends_with('p') || digits.is_empty() {
        return None;
    }
    let n: usize = digits.parse().ok()?;
    (n > 0).then_some((n, kind))
}

/// Reads a Touchstone file, taking the port count from its extension.
pub fn read_file(path: &Path) -> Result<(FrequencyResponse, TouchstoneOptions)> {
    let (n, _) = ports_from_extension(path).ok_or_else(|| {
        Error::invalid(format!(
            "cannot infer port count from '{}'; expected an extension like .s2p or .y2p",
            path.display()
        ))
    })?;
    let text = std::fs::read_to_string(path)?;
    parse_touchstone(&text, n)
}

pub fn write_file(path: &Path, resp: &FrequencyResponse, opts: &TouchstoneOptions) -> Result<()> {
    std::fs::write(path, write_touchstone(resp, opts))?;
    Ok(())
}
