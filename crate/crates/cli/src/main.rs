//! `nice`: command-line front end for load-current estimation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nice_core::circuits::{deembed_2x_thru, fit_equivalent_circuit, CircuitFitOptions, MAX_BRANCHES};
use nice_core::estimator::{
    nice_freq_domain, nice_time_domain, AdmittanceSource, EstimationPath, FreqDomainOptions, TimeDomainOptions,
};
use nice_core::pdn_lab::{run_lab, LabOptions, LabScenario, Preset};
use nice_core::spectra::{capacitance_at, convert, FrequencyResponse, ParamKind};
use nice_core::state_space::{Discretization, InitialState};
use nice_core::touchstone::{self, TouchstoneOptions, ValueFormat};
use nice_core::vector_fit::{
    order_sweep, passivity_check, passivity_enforce, vector_fit, RationalModel, VectorFitOptions, Weighting,
};
use nice_core::waveform::{self, Unit, Waveform};

#[derive(Parser)]
#[command(name = "nice", version, about = "Estimate PDN load currents from two port voltages")]
struct Cli {
    /// Log progress and numerical details to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    /// Directory that relative output paths are written into.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a Touchstone file between S, Y and Z parameters.
    Convert {
        input: PathBuf,
        #[arg(long, value_enum)]
        to: Kind,
        /// Value format of the output; defaults to the input's.
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a rational model to Y-parameters (S and Z inputs are converted).
    Vfit {
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        poles: u32,
        /// Also report the fit error for every order from 1 up to this one.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        sweep: Option<u32>,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        iters: u32,
        #[arg(long, value_enum, default_value_t = WeightingArg::Inverse)]
        weighting: WeightingArg,
        /// Also fit a term proportional to frequency.
        #[arg(long)]
        proportional: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate port currents from two voltage records.
    Estimate {
        /// Rational model JSON, or a Touchstone Y/S/Z table for `--path freq`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        v1: PathBuf,
        #[arg(long)]
        v2: PathBuf,
        #[arg(long, value_enum, default_value_t = PathArg::Time)]
        path: PathArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Zoh)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = InitArg::SteadyState)]
        initial_state: InitArg,
        /// Write the port-2 current as a load current (sign flipped).
        #[arg(long)]
        load_convention: bool,
        #[arg(long)]
        allow_nonpassive: bool,
        /// Hold Y at the band edge above a table's band.
        #[arg(long)]
        allow_out_of_band: bool,
        /// Use the real part of the lowest sample when a table has no DC point.
        #[arg(long)]
        dc_extrapolation: bool,
        /// Output prefix; a trailing `/` writes plain names into that directory.
        #[arg(long, default_value = "nice")]
        out: String,
    },
    /// Simulate a bench, estimate its load current and score the estimate.
    Lab {
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long, value_enum, default_value_t = PathArg::Time)]
        path: PathArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Zoh)]
        method: MethodArg,
        /// Pole count for the fit; defaults to the network's order.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        poles: Option<u32>,
        #[arg(long)]
        enforce_passivity: bool,
        #[arg(long)]
        allow_nonpassive: bool,
        #[arg(long, default_value = "lab")]
        out: String,
    },
    /// Effective capacitance of a 1-port at the given frequencies.
    Cap {
        input: PathBuf,
        /// Frequencies in Hz.
        #[arg(long = "freq", required = true, num_args = 1..)]
        freqs: Vec<f64>,
        /// Port of a multi-port file to treat as the 1-port (1-based).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        port: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit parallel series-RLC branches to a 1-port admittance.
    FitCircuit {
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=MAX_BRANCHES as i64))]
        branches: u32,
        /// Fit log-magnitude and phase instead of relative complex error.
        #[arg(long)]
        log_magnitude: bool,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Remove a symmetric 2x-THRU fixture from a fixtured measurement.
    Deembed {
        #[arg(long)]
        thru: PathBuf,
        #[arg(long)]
        dut: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a rational model for passivity and optionally enforce it.
    Passivity {
        model: PathBuf,
        #[arg(long)]
        enforce: bool,
        #[arg(long, default_value_t = 20)]
        max_rounds: usize,
        /// Where the enforced model is written.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    S,
    Y,
    Z,
}

impl From<Kind> for ParamKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::S => ParamKind::S,
            Kind::Y => ParamKind::Y,
            Kind::Z => ParamKind::Z,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ri,
    Ma,
    Db,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Uniform,
    Inverse,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Time,
    Freq,
}

impl From<PathArg> for EstimationPath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Time => EstimationPath::TimeDomain,
            PathArg::Freq => EstimationPath::FreqDomain,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Zoh,
    Trapezoidal,
}

impl From<MethodArg> for Discretization {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Zoh => Discretization::Zoh,
            MethodArg::Trapezoidal => Discretization::Trapezoidal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    SteadyState,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Pulse,
    Ramp,
    Sine,
    Sawtooth,
    Exponential,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Pulse => Preset::Pulse,
            PresetArg::Ramp => Preset::Ramp,
            PresetArg::Sine => Preset::Sine,
            PresetArg::Sawtooth => Preset::Sawtooth,
            PresetArg::Exponential => Preset::Exponential,
        }
    }
}

/// Marks a failure to read or validate an input document (exit code 2).
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn input<T>(r: nice_core::Result<T>, path: &Path) -> anyhow::Result<T> {
    r.map_err(|e| anyhow::Error::new(e).context(InputError(format!("reading {}", path.display()))))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::msg(InputError(msg.into()))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let parse = e.chain().any(|c| c.downcast_ref::<nice_core::Error>().is_some_and(|e| e.is_parse_error()));
    if parse || e.downcast_ref::<InputError>().is_some() {
        2
    } else {
        1
    }
}

struct Ctx {
    output: Option<PathBuf>,
    started: Instant,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.output {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// `prefix_name`, or `prefix/name` when the prefix ends in a separator.
    fn prefixed(&self, prefix: &str, name: &str) -> PathBuf {
        let p = if prefix.ends_with('/') || prefix.ends_with(std::path::MAIN_SEPARATOR) {
            PathBuf::from(prefix).join(name)
        } else {
            PathBuf::from(format!("{prefix}_{name}"))
        };
        self.resolve(&p)
    }

    fn write(&self, path: &Path, text: &str) -> anyhow::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, path: &Path, value: &Value) -> anyhow::Result<()> {
        self.write(path, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn write_csv(&self, path: &Path, w: &Waveform) -> anyhow::Result<()> {
        self.write(path, &waveform::to_csv(w))
    }

    fn metadata(&self, extra: Value) -> Value {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let mut m = json!({
            "tool": "nice",
            "version": env!("CARGO_PKG_VERSION"),
            "generated_unix_s": now,
            "elapsed_s": self.started.elapsed().as_secs_f64(),
        });
        if let (Value::Object(m), Value::Object(extra)) = (&mut m, extra) {
            m.extend(extra);
        }
        m
    }
}

fn default_out(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    PathBuf::from(format!("{stem}{suffix}"))
}

fn touchstone_ext(kind: ParamKind, n: usize) -> String {
    let k = match kind {
        ParamKind::S => 's',
        ParamKind::Y => 'y',
        ParamKind::Z => 'z',
    };
    format!(".{k}{n}p")
}

fn read_touchstone(path: &Path) -> anyhow::Result<(FrequencyResponse, TouchstoneOptions)> {
    input(touchstone::read_file(path), path)
}

fn read_model(path: &Path) -> anyhow::Result<RationalModel> {
    let text = input(std::fs::read_to_string(path).map_err(nice_core::Error::from), path)?;
    input(RationalModel::from_json(&text), path)
}

fn to_kind(resp: FrequencyResponse, kind: ParamKind, what: &str) -> anyhow::Result<FrequencyResponse> {
    if resp.kind() == kind {
        return Ok(resp);
    }
    eprintln!("note: converting {what} from {} to {kind} parameters", resp.kind());
    Ok(convert(&resp, kind)?)
}

fn cmd_convert(ctx: &Ctx, input: &Path, to: Kind, format: Option<Format>, out: Option<&Path>) -> anyhow::Result<()> {
    let (resp, opts) = read_touchstone(input)?;
    let kind = ParamKind::from(to);
    let converted = convert(&resp, kind)?;
    let value_format = match format {
        None => opts.value_format,
        Some(Format::Ri) => ValueFormat::RI,
        Some(Format::Ma) => ValueFormat::MA,
        Some(Format::Db) => ValueFormat::DB,
    };
    let out_opts = TouchstoneOptions { param_kind: kind, value_format, ..opts };
    let path = ctx.resolve(
        &out.map(Path::to_path_buf).unwrap_or_else(|| default_out(input, &touchstone_ext(kind, resp.n_ports()))),
    );
    ctx.write(&path, &touchstone::write_touchstone(&converted, &out_opts))?;
    eprintln!("{} -> {} ({} points, {kind} parameters)", input.display(), path.display(), converted.len());
    Ok(())
}

fn cmd_vfit(
    ctx: &Ctx,
    input: &Path,
    opts: VectorFitOptions,
    sweep: Option<usize>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let (resp, _) = read_touchstone(input)?;
    let y = to_kind(resp, ParamKind::Y, "input")?;
    if let Some(max) = sweep {
        let orders: Vec<usize> = (1..=max).collect();
        for (n, err) in order_sweep(&y, &orders, &opts)? {
            eprintln!("order {n:>3}: fit_error {err:e}");
        }
    }
    let model = vector_fit(&y, &opts)?;
    let check = passivity_check(&model, None);
    let path = ctx.resolve(&out.map(Path::to_path_buf).unwrap_or_else(|| default_out(input, ".json")));
    ctx.write(&path, &(model.to_json() + "\n"))?;
    eprintln!("poles: {}", model.order());
    eprintln!("fit_error: {:e}", model.fit_error());
    eprintln!("passive: {} (min conductance eigenvalue {:e})", check.is_passive, check.min_eig);
    for v in &check.violations {
        eprintln!(
            "  violation {:e}..{:e} Hz, worst {:e} at {:e} Hz",
            v.f_start_hz, v.f_end_hz, v.min_eig, v.f_worst_hz
        );
    }
    eprintln!("model: {}", path.display());
    Ok(())
}

struct EstimateArgs<'a> {
    model: &'a Path,
    v1: &'a Path,
    v2: &'a Path,
    path: EstimationPath,
    td: TimeDomainOptions,
    fd: FreqDomainOptions,
    load_convention: bool,
    out: &'a str,
}

fn is_touchstone(p: &Path) -> bool {
    touchstone::ports_from_extension(p).is_some()
}

fn cmd_estimate(ctx: &Ctx, a: &EstimateArgs) -> anyhow::Result<()> {
    let v1 = input(waveform::read_csv(a.v1, Unit::Volt), a.v1)?;
    let v2 = input(waveform::read_csv(a.v2, Unit::Volt), a.v2)?;
    let est = if is_touchstone(a.model) {
        if a.path != EstimationPath::FreqDomain {
            return Err(usage("a tabulated model needs --path freq; fit it with `nice vfit` for the time-domain path"));
        }
        let (resp, _) = read_touchstone(a.model)?;
        let y = to_kind(resp, ParamKind::Y, "model")?;
        nice_freq_domain(AdmittanceSource::Response(&y), &v1, &v2, &a.fd)?
    } else {
        let model = read_model(a.model)?;
        match a.path {
            EstimationPath::TimeDomain => nice_time_domain(&model, &v1, &v2, &a.td)?,
            EstimationPath::FreqDomain => nice_freq_domain(AdmittanceSource::Model(&model), &v1, &v2, &a.fd)?,
        }
    };
    let i2 = if a.load_convention { est.i2.map(|v| -v) } else { est.i2.clone() };
    ctx.write_csv(&ctx.prefixed(a.out, "i1.csv"), &est.i1)?;
    ctx.write_csv(&ctx.prefixed(a.out, "i2.csv"), &i2)?;
    let report = json!({
        "path": est.path,
        "load_convention": a.load_convention,
        "samples": est.i1.len(),
        "diagnostics": est.diagnostics,
        "metadata": ctx.metadata(json!({})),
    });
    ctx.write_json(&ctx.prefixed(a.out, "diagnostics.json"), &report)?;
    eprintln!("estimated {} samples ({:?})", est.i1.len(), est.path);
    eprintln!("i1 rms: {:.12e} A", est.i1.rms());
    eprintln!("i2 rms: {:.12e} A{}", i2.rms(), if a.load_convention { " (load convention)" } else { "" });
    if est.diagnostics.out_of_band_bins > 0 {
        eprintln!(
            "warning: {} bins above the model band ({:.3e} of input energy)",
            est.diagnostics.out_of_band_bins, est.diagnostics.out_of_band_energy_fraction
        );
    }
    Ok(())
}

fn cmd_lab(ctx: &Ctx, sc: LabScenario, opts: LabOptions, out: &str) -> anyhow::Result<ExitCode> {
    let run = run_lab(&sc, &opts)?;
    let r = &run.report;
    let w = |name: &str, wf: &Waveform| ctx.write_csv(&ctx.prefixed(out, name), wf);
    w("v1.csv", &run.bench.v1)?;
    w("v2.csv", &run.bench.v2)?;
    w("i_load.csv", &run.bench.i_load)?;
    w("i_src.csv", &run.bench.i_src)?;
    w("i1.csv", &run.i1)?;
    w("i2.csv", &run.i2)?;
    ctx.write(&ctx.prefixed(out, "model.json"), &(run.model.to_json() + "\n"))?;
    let mut report = serde_json::to_value(r)?;
    report["metadata"] = ctx.metadata(json!({ "runtime_s": run.runtime }));
    ctx.write_json(&ctx.prefixed(out, "report.json"), &report)?;

    eprintln!("fit: {} poles, fit_error {:e}, passive {}", r.fit.n_poles, r.fit.fit_error, r.fit.passive);
    eprintln!("rel_rms_error (-i2 vs load): {:.6e}", r.report2.rel_rms_error);
    eprintln!("rel_rms_error (i1 vs source): {:.6e}", r.report1.rel_rms_error);
    eprintln!("runtime: {:.3} s", run.runtime.total_s);
    let ok = r.report2.rel_rms_error < 0.05;
    if !ok {
        eprintln!("error above 5%");
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn one_port(resp: FrequencyResponse, port: usize) -> anyhow::Result<FrequencyResponse> {
    let n = resp.n_ports();
    if port == 0 || port > n {
        return Err(usage(format!("--port {port} is out of range for a {n}-port file")));
    }
    if n == 1 {
        return Ok(resp);
    }
    let y = to_kind(resp, ParamKind::Y, "input")?;
    let values = y.entry(port - 1, port - 1);
    Ok(FrequencyResponse::one_port(ParamKind::Y, y.z0(), y.freqs().to_vec(), &values)?)
}

fn cmd_cap(ctx: &Ctx, input: &Path, freqs: &[f64], port: usize, out: Option<&Path>) -> anyhow::Result<()> {
    let (resp, _) = read_touchstone(input)?;
    let y = to_kind(one_port(resp, port)?, ParamKind::Y, "input")?;
    let mut rows = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let c = capacitance_at(&y, f)?;
        eprintln!("{f:e} Hz: {c:.12e} F");
        rows.push(json!({ "freq_hz": f, "capacitance_f": c }));
    }
    let doc = json!({ "input": input.display().to_string(), "port": port, "capacitance": rows });
    emit(ctx, out, &doc)
}

/// Writes JSON to `out`, or to stdout when no path is given.
fn emit(ctx: &Ctx, out: Option<&Path>, doc: &Value) -> anyhow::Result<()> {
    match out {
        Some(p) => ctx.write_json(&ctx.resolve(p), doc),
        None => {
            println!("{}", serde_json::to_string_pretty(doc)?);
            Ok(())
        }
    }
}

fn cmd_fit_circuit(ctx: &Ctx, input: &Path, n: usize, opts: CircuitFitOptions, out: Option<&Path>) -> anyhow::Result<()> {
    let (resp, _) = read_touchstone(input)?;
    if resp.n_ports() != 1 {
        return Err(usage("fit-circuit needs a 1-port file"));
    }
    let y = to_kind(resp, ParamKind::Y, "input")?;
    let (set, report) = fit_equivalent_circuit(&y, n, &opts)?;
    for (k, b) in set.branches().iter().enumerate() {
        eprintln!("branch {}: R {:.6e} ohm, L {:.6e} H, C {:.6e} F", k + 1, b.r, b.l, b.c.unwrap_or(f64::INFINITY));
    }
    eprintln!("misfit {:e} after {} iterations (converged: {})", report.misfit, report.iterations, report.converged);
    if report.bound_active() {
        eprintln!("warning: parameters at a bound: {:?}", report.active_bounds);
    }
    let doc = json!({ "branches": set, "report": report });
    let path = ctx.resolve(&out.map(Path::to_path_buf).unwrap_or_else(|| default_out(input, "_rlc.json")));
    ctx.write_json(&path, &doc)
}

fn cmd_deembed(ctx: &Ctx, thru: &Path, dut: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let (thru_resp, _) = read_touchstone(thru)?;
    let (dut_resp, opts) = read_touchstone(dut)?;
    let thru_s = to_kind(thru_resp, ParamKind::S, "thru")?;
    let dut_s = to_kind(dut_resp, ParamKind::S, "dut")?;
    let result = deembed_2x_thru(&thru_s, &dut_s)?;
    let path = ctx.resolve(&out.map(Path::to_path_buf).unwrap_or_else(|| default_out(dut, "_deembedded.s2p")));
    let out_opts = TouchstoneOptions { param_kind: ParamKind::S, ..opts };
    ctx.write(&path, &touchstone::write_touchstone(&result, &out_opts))?;
    eprintln!("de-embedded {} points -> {}", result.len(), path.display());
    Ok(())
}

fn cmd_passivity(ctx: &Ctx, model_path: &Path, enforce: bool, max_rounds: usize, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    let model = read_model(model_path)?;
    let check = passivity_check(&model, None);
    eprintln!("passive: {} (min conductance eigenvalue {:e})", check.is_passive, check.min_eig);
    for v in &check.violations {
        eprintln!("  violation {:e}..{:e} Hz, worst {:e} at {:e} Hz", v.f_start_hz, v.f_end_hz, v.min_eig, v.f_worst_hz);
    }
    if !enforce {
        println!("{}", serde_json::to_string_pretty(&json!({ "check": check }))?);
        return Ok(if check.is_passive { ExitCode::SUCCESS } else { ExitCode::from(1) });
    }
    let (fixed, rep) = passivity_enforce(&model, max_rounds);
    let path = ctx.resolve(&out.map(Path::to_path_buf).unwrap_or_else(|| default_out(model_path, "_passive.json")));
    ctx.write(&path, &(fixed.to_json() + "\n"))?;
    eprintln!(
        "after enforcement: passive {} (min eigenvalue {:e}), {} rounds, band change {:e}",
        rep.is_passive, rep.final_check.min_eig, rep.rounds, rep.band_change
    );
    println!("{}", serde_json::to_string_pretty(&json!({ "check": check, "enforcement": rep }))?);
    Ok(if rep.is_passive { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let ctx = Ctx { output: cli.output, started: Instant::now() };
    match cli.command {
        Command::Convert { input, to, format, out } => cmd_convert(&ctx, &input, to, format, out.as_deref())?,
        Command::Vfit { input, poles, sweep, iters, weighting, proportional, out } => {
            let opts = VectorFitOptions {
                n_poles: poles as usize,
                n_iter: iters as usize,
                weighting: match weighting {
                    WeightingArg::Uniform => Weighting::Uniform,
                    WeightingArg::Inverse => Weighting::InverseMagnitude,
                },
                fit_proportional: proportional,
            };
            cmd_vfit(&ctx, &input, opts, sweep.map(|n| n as usize), out.as_deref())?
        }
        Command::Estimate {
            model,
            v1,
            v2,
            path,
            method,
            initial_state,
            load_convention,
            allow_nonpassive,
            allow_out_of_band,
            dc_extrapolation,
            out,
        } => {
            let td = TimeDomainOptions {
                method: method.into(),
                initial_state: match initial_state {
                    InitArg::SteadyState => InitialState::SteadyState,
                    InitArg::Zero => InitialState::Zero,
                },
                allow_nonpassive,
            };
            let fd = FreqDomainOptions { dc_extrapolation, allow_out_of_band };
            let args = EstimateArgs {
                model: &model,
                v1: &v1,
                v2: &v2,
                path: path.into(),
                td,
                fd,
                load_convention,
                out: &out,
            };
            cmd_estimate(&ctx, &args)?
        }
        Command::Lab { scenario, preset, path, method, poles, enforce_passivity, allow_nonpassive, out } => {
            let sc = match (scenario, preset) {
                (Some(p), _) => {
                    let text = input(std::fs::read_to_string(&p).map_err(nice_core::Error::from), &p)?;
                    input(LabScenario::from_json(&text), &p)?
                }
                (None, Some(preset)) => Preset::from(preset).scenario(),
                (None, None) => bail!(usage("one of --scenario or --preset is required")),
            };
            let mut opts = LabOptions { path: path.into(), enforce_passivity, allow_nonpassive, ..Default::default() };
            opts.time_domain.method = method.into();
            opts.fit = poles.map(|n| VectorFitOptions { n_poles: n as usize, ..Default::default() });
            return cmd_lab(&ctx, sc, opts, &out);
        }
        Command::Cap { input, freqs, port, out } => cmd_cap(&ctx, &input, &freqs, port as usize, out.as_deref())?,
        Command::FitCircuit { input, branches, log_magnitude, max_iterations, out } => {
            let opts = CircuitFitOptions { max_iterations, log_magnitude, ..Default::default() };
            cmd_fit_circuit(&ctx, &input, branches as usize, opts, out.as_deref())?
        }
        Command::Deembed { thru, dut, out } => cmd_deembed(&ctx, &thru, &dut, out.as_deref())?,
        Command::Passivity { model, enforce, max_rounds, out } => {
            return cmd_passivity(&ctx, &model, enforce, max_rounds, out.as_deref())
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
