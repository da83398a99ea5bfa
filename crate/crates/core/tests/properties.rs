use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use nice_core::circuits::{pi_y_params, BranchSet, PiNetwork, RlcBranch};
use nice_core::estimator::{nice_freq_domain, nice_time_domain, AdmittanceSource};
use nice_core::pdn_lab::LoadProfile;
use nice_core::spectra::{convert, CMatrix, FrequencyResponse, ParamKind};
use nice_core::touchstone::{parse_touchstone, write_touchstone, FreqUnit, TouchstoneOptions, ValueFormat};
use nice_core::vector_fit::{vector_fit, PoleTerm, RationalModel, VectorFitOptions};
use nice_core::waveform::{from_csv, to_csv, Unit, Waveform};

fn branch() -> impl Strategy<Value = RlcBranch> {
    (-3.0..0.0f64, -10.0..-7.0f64, -9.0..-4.0f64)
        .prop_map(|(r, l, c)| RlcBranch::rlc(10f64.powf(r), 10f64.powf(l), 10f64.powf(c)))
}

fn branch_set() -> impl Strategy<Value = BranchSet> {
    prop::collection::vec(branch(), 1..4).prop_map(|b| BranchSet::new(b).unwrap())
}

fn pi_network() -> impl Strategy<Value = PiNetwork> {
    (prop::option::of(branch_set()), branch_set(), prop::option::of(branch_set()))
        .prop_map(|(a, b, c)| PiNetwork::new(a, b, c))
}

fn contraction(n: usize) -> impl Strategy<Value = CMatrix> {
    (prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n), 1.01..4.0f64).prop_filter_map(
        "non-zero matrix",
        move |(v, margin)| {
            let a = CMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| Complex64::new(re, im)));
            let norm = a.clone().svd(false, false).singular_values[0];
            (norm > 1e-3).then(|| a.unscale(norm * margin))
        },
    )
}

/// Two-port model with one resonance and a conductive floor, passive by
/// construction.
fn series_model(r: f64, l: f64) -> RationalModel {
    // Y of a series R-L between the ports: (1/L)/(s + R/L) [[1, -1], [-1, 1]].
    let k = 1.0 / l;
    let residue = DMatrix::from_row_slice(2, 2, &[k, -k, -k, k]);
    RationalModel::new(
        vec![PoleTerm::Real { pole: -r / l, residue }],
        DMatrix::zeros(2, 2),
        DMatrix::zeros(2, 2),
        (1e3, 5e8),
        0.0,
    )
    .unwrap()
}

fn record(len: usize, seed: &[f64]) -> Waveform {
    // Smooth band-limited record built from a few low-frequency tones.
    let samples = (0..len)
        .map(|k| {
            let t = k as f64 * 1e-9;
            1.0 + seed
                .iter()
                .enumerate()
                .map(|(j, a)| a * (2.0 * std::f64::consts::PI * (j as f64 + 1.0) * 1e6 * t).sin())
                .sum::<f64>()
        })
        .collect();
    Waveform::new(0.0, 1e-9, samples, Unit::Volt).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s_y_round_trip(s in contraction(2), f in 1e3..1e10f64, z0 in 1.0..100.0f64) {
        let resp = FrequencyResponse::new(ParamKind::S, z0, vec![f], vec![s.clone()]).unwrap();
        let back = convert(&convert(&resp, ParamKind::Y).unwrap(), ParamKind::S).unwrap();
        prop_assert!((&back.data()[0] - &s).norm() <= 1e-12 * s.norm());
    }

    #[test]
    fn touchstone_round_trip(
        data in prop::collection::vec(contraction(2), 2..12),
        fmt in prop::sample::select(ValueFormat::ALL.to_vec()),
        unit in prop::sample::select(FreqUnit::ALL.to_vec()),
        kind in prop::sample::select(vec![ParamKind::S, ParamKind::Y, ParamKind::Z]),
        f0 in 1.0..1e9f64,
    ) {
        let freqs: Vec<f64> = (0..data.len()).map(|k| f0 * 1.37f64.powi(k as i32)).collect();
        let resp = FrequencyResponse::new(kind, 50.0, freqs, data).unwrap();
        let opts = TouchstoneOptions { freq_unit: unit, param_kind: kind, value_format: fmt, ref_resistance: 50.0 };
        let (back, back_opts) = parse_touchstone(&write_touchstone(&resp, &opts), 2).unwrap();
        prop_assert_eq!(back_opts, opts);
        for (a, b) in resp.data().iter().zip(back.data()) {
            prop_assert!((a - b).norm() <= 1e-12 * a.norm());
        }
        for (a, b) in resp.freqs().iter().zip(back.freqs()) {
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn pi_networks_are_passive_and_reciprocal(net in pi_network(), f in 1.0..1e10f64) {
        let y = net.y_matrix(f).unwrap();
        prop_assert_eq!(y[(0, 1)], y[(1, 0)]);
        let re = y.map(|v| v.re);
        let sym = (&re + re.transpose()) * 0.5;
        let min = sym.symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-12 * re.norm(), "min eig {min}");
    }

    #[test]
    fn pi_y_params_match_the_leg_formulas(net in pi_network(), f in 1.0..1e10f64) {
        let resp = pi_y_params(&net, &[f]).unwrap();
        let (ya, yb, yc) = net.legs(f).unwrap();
        let m = &resp.data()[0];
        prop_assert_eq!(m[(0, 0)], ya + yb);
        prop_assert_eq!(m[(1, 1)], yb + yc);
        prop_assert_eq!(m[(0, 1)], -yb);
    }

    #[test]
    fn csv_round_trip(values in prop::collection::vec(-1e3..1e3f64, 2..200), t0 in -1.0..1.0f64, dt in 1e-12..1e-3f64) {
        let w = Waveform::new(t0, dt, values, Unit::Ampere).unwrap();
        let back = from_csv(&to_csv(&w), Unit::Ampere).unwrap();
        prop_assert_eq!(back.samples(), w.samples());
        prop_assert!(back.is_aligned_with(&w));
    }

    #[test]
    fn load_profiles_never_source_current(
        baseline in 0.0..3.0f64,
        amplitude in 0.0..3.0f64,
        delay in 0.0..1e-5f64,
        rise in 1e-9..1e-5f64,
        width in 0.0..1e-5f64,
        t in 0.0..1e-4f64,
    ) {
        let profiles = [
            LoadProfile::Pulse { baseline, amplitude, delay, rise, width, fall: rise },
            LoadProfile::Sawtooth { baseline, amplitude, delay, period: 2.0 * rise, fall: rise / 2.0 },
            LoadProfile::Exponential { baseline, amplitude, delay, width, time_constant: rise },
            LoadProfile::Sine { baseline: baseline + amplitude, amplitude, delay, period: rise },
        ];
        for p in profiles {
            p.validate().unwrap();
            prop_assert!(p.current(t) >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn time_domain_estimate_is_linear(
        a in prop::collection::vec(-0.1..0.1f64, 3),
        b in prop::collection::vec(-0.1..0.1f64, 3),
        k in -3.0..3.0f64,
    ) {
        let model = series_model(0.02, 3e-9);
        let (va, vb) = (record(2000, &a), record(2000, &b));
        let combo = va.with_samples(va.samples().iter().zip(vb.samples()).map(|(x, y)| x + k * y).collect(), Unit::Volt).unwrap();
        let zero = va.map(|_| 0.0);
        let opts = Default::default();
        let ia = nice_time_domain(&model, &va, &zero, &opts).unwrap().i1;
        let ib = nice_time_domain(&model, &vb, &zero, &opts).unwrap().i1;
        let ic = nice_time_domain(&model, &combo, &zero, &opts).unwrap().i1;
        let scale = ia.rms() + k.abs() * ib.rms();
        for ((x, y), z) in ia.samples().iter().zip(ib.samples()).zip(ic.samples()) {
            prop_assert!((x + k * y - z).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn series_network_conserves_current(
        a in prop::collection::vec(-0.1..0.1f64, 3),
        b in prop::collection::vec(-0.1..0.1f64, 3),
        r in 1e-3..1.0f64,
        l in 1e-10..1e-8f64,
    ) {
        let model = series_model(r, l);
        let (v1, v2) = (record(1500, &a), record(1500, &b));
        let td = nice_time_domain(&model, &v1, &v2, &Default::default()).unwrap();
        let fd = nice_freq_domain(AdmittanceSource::Model(&model), &v1, &v2, &Default::default()).unwrap();
        for est in [td, fd] {
            let scale = est.i1.rms().max(f64::MIN_POSITIVE);
            for (x, y) in est.i1.samples().iter().zip(est.i2.samples()) {
                prop_assert!((x + y).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn vector_fit_reproduces_rlc_networks(net in pi_network()) {
        let freqs = nice_core::spectra::log_grid_per_decade(1e3, 1e9, 30);
        let resp = pi_y_params(&net, &freqs).unwrap();
        let n_poles = nice_core::pdn_lab::network_order(&net);
        let model = vector_fit(&resp, &VectorFitOptions { n_poles, ..Default::default() }).unwrap();
        prop_assert!(model.fit_error() < 1e-6, "fit error {}", model.fit_error());
    }
}
