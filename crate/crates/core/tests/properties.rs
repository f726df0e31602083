//! Property tests of the model, frame, generator and observables.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use polaron_tcl::bath::QuadratureSettings;
use polaron_tcl::cli::RunConfig;
use polaron_tcl::dynamics::{
    assemble_r, flatten, pauli_matrix, unflatten, PropagationConfig, PropagatorKind, Simulator,
    Trajectory,
};
use polaron_tcl::model::presets::{fmo4_fast_bath, fmo4_network};
use polaron_tcl::model::units::{cm_to_mev, mev_to_cm, KAPPA};
use polaron_tcl::model::{ContinuumTerm, LorentzianMode, SiteNetwork, SpectralDensity};
use polaron_tcl::numerics::expm;
use polaron_tcl::observables::{
    lab_coherence, population_spectrum, trace_distance, SpectrumConfig,
};
use polaron_tcl::polaron::{CouplingTreatment, InitialState, PolaronFrame};
use polaron_tcl::rates::ChannelTensors;

struct Fixture {
    sim: Simulator,
    markov: ChannelTensors,
    secular: ChannelTensors,
}

/// Fast-bath FMO model with its secular Markov tensors, built once.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let config = PropagationConfig {
            t_max_fs: 100.0,
            ..Default::default()
        };
        let sim = Simulator::new(
            fmo4_network(),
            fmo4_fast_bath(),
            CouplingTreatment::Renormalized,
            config,
            QuadratureSettings::default(),
            None,
        )
        .unwrap();
        let markov = sim.limit_tensors(PropagatorKind::Markov).unwrap();
        let secular = sim.limit_tensors(PropagatorKind::Secular).unwrap();
        Fixture {
            sim,
            markov,
            secular,
        }
    })
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_filter("nonzero", |v| {
            v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3)
        })
        .prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
}

/// Random density matrix `A A† / tr(A A†)`.
fn density(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
        let a = DMatrix::from_fn(n, n, |i, j| c(v[i * n + j].0, v[i * n + j].1));
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho / tr
    })
}

fn symmetric_network() -> impl Strategy<Value = SiteNetwork> {
    (
        prop::collection::vec(-500.0f64..500.0, 4),
        prop::collection::vec(-120.0f64..120.0, 6),
    )
        .prop_map(|(eps, v)| {
            let mut m = DMatrix::zeros(4, 4);
            let mut k = 0;
            for i in 0..4 {
                for j in i + 1..4 {
                    m[(i, j)] = v[k];
                    m[(j, i)] = v[k];
                    k += 1;
                }
            }
            SiteNetwork::new(eps, m, None).unwrap()
        })
}

fn uniform_beta(n: usize, b: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_density_is_nonnegative(
        scale in 0.0f64..2.0,
        terms in prop::collection::vec((0.0f64..2.0, 0.1f64..50.0), 1..4),
        mode in prop::option::of((0.0f64..1.0, 20.0f64..400.0, 1.0f64..100.0)),
        omega in 0.0f64..5000.0,
    ) {
        let continuum = terms.into_iter().map(|(weight, cutoff_cm)| ContinuumTerm { weight, cutoff_cm }).collect();
        let mode = mode.map(|(weight, frequency_cm, broadening_cm)| LorentzianMode { weight, frequency_cm, broadening_cm });
        if let Ok(sd) = SpectralDensity::new(scale, continuum, mode) {
            prop_assert!(sd.value(omega) >= 0.0);
        }
    }

    #[test]
    fn energy_unit_round_trip(x in -1e4f64..1e4) {
        let back = cm_to_mev(mev_to_cm(x));
        prop_assert!((back - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0));
    }

    #[test]
    fn frame_diagonalises_and_is_relabelling_invariant(
        net in symmetric_network(),
        b in 0.05f64..1.0,
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let frame = PolaronFrame::from_parts(&net, uniform_beta(4, b), 35.0, CouplingTreatment::Renormalized).unwrap();
        let u = frame.eigenvectors();
        let orth = (u.transpose() * u - DMatrix::identity(4, 4)).abs().max();
        prop_assert!(orth < 1e-12);
        let d = u.transpose() * frame.hamiltonian() * u;
        for a in 0..4 {
            for k in 0..4 {
                let expect = if a == k { frame.energies()[a] } else { 0.0 };
                prop_assert!((d[(a, k)] - expect).abs() < 1e-10);
            }
        }

        let eps: Vec<f64> = perm.iter().map(|&p| net.site_energies()[p]).collect();
        let v = DMatrix::from_fn(4, 4, |i, j| net.coupling(perm[i], perm[j]));
        let relabelled = SiteNetwork::new(eps, v, None).unwrap();
        let frame2 = PolaronFrame::from_parts(&relabelled, uniform_beta(4, b), 35.0, CouplingTreatment::Renormalized).unwrap();
        for (x, y) in frame.energies().iter().zip(frame2.energies()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_beta_leaves_the_state_unchanged(net in symmetric_network(), amps in amplitudes(4)) {
        let frame = PolaronFrame::from_parts(&net, uniform_beta(4, 1.0), 0.0, CouplingTreatment::Renormalized).unwrap();
        let s = InitialState::superposition(&amps, &frame).unwrap();
        prop_assert!((s.lab() - s.polaron()).norm() < 1e-15);
    }

    #[test]
    fn polaron_state_keeps_the_lab_diagonal(amps in amplitudes(4)) {
        let frame = fixture().sim.frame();
        let s = InitialState::superposition(&amps, frame).unwrap();
        for m in 0..4 {
            prop_assert_eq!(s.lab()[(m, m)], s.polaron()[(m, m)]);
        }
    }

    #[test]
    fn generator_preserves_trace_and_hermiticity(rho in density(4), t in 0.0f64..1000.0) {
        let f = fixture();
        let omega: Vec<f64> = f.sim.frame().energies().iter().map(|e| KAPPA * e).collect();
        let r = assemble_r(&omega, &f.markov, t);
        let d = unflatten(&(&r * flatten(&rho)));
        let scale = r.norm().max(1.0);
        prop_assert!(d.trace().norm() < 1e-10 * scale);
        prop_assert!((&d - d.adjoint()).norm() < 1e-10 * scale);
    }

    #[test]
    fn trace_distance_is_bounded(a in density(4), b in density(4)) {
        let d = trace_distance(&a, &b);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d));
        prop_assert!(trace_distance(&a, &a) < 1e-12);
    }

    #[test]
    fn pauli_dynamics_contracts_trace_distance(
        p in prop::collection::vec(0.0f64..1.0, 4),
        q in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        prop_assume!(p.iter().sum::<f64>() > 1e-3 && q.iter().sum::<f64>() > 1e-3);
        let w = pauli_matrix(&fixture().secular, 4);
        let step = expm(&w.map(|x| c(x * 5.0, 0.0)));
        let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); DVector::from_iterator(4, v.into_iter().map(|x| c(x / s, 0.0))) };
        let (mut x, mut y) = (norm(p), norm(q));
        let mut last = 0.5 * (&x - &y).iter().map(|z| z.norm()).sum::<f64>();
        for _ in 0..200 {
            x = &step * x;
            y = &step * y;
            let d = 0.5 * (&x - &y).iter().map(|z| z.norm()).sum::<f64>();
            prop_assert!(d - last <= 1e-9 * 5.0, "D grew from {last} to {d}");
            last = d;
        }
    }

    #[test]
    fn lab_coherence_starts_at_the_lab_value(amps in amplitudes(4), m in 0usize..4, k in 0usize..4) {
        prop_assume!(m != k);
        let frame = fixture().sim.frame();
        let s = InitialState::superposition(&amps, frame).unwrap();
        let traj = Trajectory {
            kind: PropagatorKind::Full,
            times: vec![0.0],
            states: vec![s.polaron_eigenbasis(frame)],
        };
        let rho = lab_coherence(&traj, &s, frame, (m, k)).unwrap();
        prop_assert!((rho[0] - s.lab()[(m, k)]).norm() < 1e-14);
    }

    #[test]
    fn spectrum_peak_survives_padding_change(
        freq in 120.0f64..400.0,
        tau in 300.0f64..3000.0,
        amp in 0.02f64..0.2,
        trend in 0.0f64..0.5,
    ) {
        let dt = 0.5;
        let times: Vec<f64> = (0..=2000).map(|i| i as f64 * dt).collect();
        let y: Vec<f64> = times
            .iter()
            .map(|&t| 0.5 + trend * (-t / 400.0).exp() + amp * (-t / tau).exp() * (KAPPA * freq * t).cos())
            .collect();
        let peak = |pad| {
            let cfg = SpectrumConfig { pad_factor: pad, ..Default::default() };
            population_spectrum(&times, &y, &cfg).unwrap().dominant().unwrap().frequency_cm
        };
        let bin = 2.0 * std::f64::consts::PI / (KAPPA * times.len() as f64 * dt);
        prop_assert!((peak(2) - peak(4)).abs() <= bin);
        prop_assert!((peak(4) - freq).abs() <= bin);
    }

    #[test]
    fn site_index_validation(site in 0usize..12) {
        let text = format!("[model]\npreset = \"fmo4\"\n[bath]\npreset = \"fmo4\"\n[initial]\nsite = {site}\n");
        let resolved = RunConfig::from_toml(&text).unwrap().resolve();
        prop_assert_eq!(resolved.is_ok(), (1..=4).contains(&site));
    }

    #[test]
    fn amplitude_norm_tolerance(delta in -0.5f64..0.5) {
        let a = (1.0 + delta) / 2.0;
        let text = format!(
            "[model]\npreset = \"fmo4\"\n[bath]\npreset = \"fmo4\"\n[initial]\namplitudes = [[{a:e}, 0.0], [{a:e}, 0.0], [{a:e}, 0.0], [{a:e}, 0.0]]\n"
        );
        let resolved = RunConfig::from_toml(&text).unwrap().resolve();
        prop_assert_eq!(resolved.is_ok(), delta.abs() <= 1e-6);
    }

    #[test]
    fn small_norm_defects_are_accepted(delta in -9e-7f64..9e-7) {
        let a = (1.0 + delta) / 2.0;
        let text = format!(
            "[model]\npreset = \"fmo4\"\n[bath]\npreset = \"fmo4\"\n[initial]\namplitudes = [[{a:e}, 0.0], [{a:e}, 0.0], [{a:e}, 0.0], [{a:e}, 0.0]]\n"
        );
        prop_assert!(RunConfig::from_toml(&text).unwrap().resolve().is_ok());
    }
}
