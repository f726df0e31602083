//! Physical behaviour of the FMO model across propagators.

use nalgebra::DVector;
use num_complex::Complex64;

use polaron_tcl::bath::{KernelTables, QuadratureSettings};
use polaron_tcl::dynamics::{PropagationConfig, PropagatorKind, Simulator};
use polaron_tcl::model::presets::*;
use polaron_tcl::model::BathSpec;
use polaron_tcl::observables::{lab_density, site_populations};
use polaron_tcl::polaron::{CouplingTreatment, InitialState, PolaronFrame};
use polaron_tcl::rates::{redfield_rates, InhomSeries, XiPhase};

fn simulator(bath: BathSpec, dt: f64, t_max: f64) -> Simulator {
    let config = PropagationConfig {
        dt_fs: dt,
        t_max_fs: t_max,
        ..Default::default()
    };
    Simulator::new(
        fmo4_network(),
        bath,
        CouplingTreatment::Renormalized,
        config,
        QuadratureSettings::default(),
        None,
    )
    .unwrap()
}

fn xi_series(spacing: f64, t_max: f64) -> (InhomSeries, PolaronFrame) {
    let settings = QuadratureSettings::default();
    let (net, bath) = (fmo4_network(), fmo4_bath());
    let kernels = KernelTables::build(&net, &bath, spacing, t_max, &settings).unwrap();
    let frame = PolaronFrame::build(
        &net,
        &bath,
        &kernels,
        CouplingTreatment::Renormalized,
        &settings,
    )
    .unwrap();
    let initial = InitialState::localized(0, &frame).unwrap();
    let xi = InhomSeries::compute(&kernels, &frame, &initial, XiPhase::Integration, true).unwrap();
    (xi, frame)
}

#[test]
fn inhomogeneous_term_converges_under_grid_halving() {
    let (coarse, _) = xi_series(0.25, 520.0);
    let (fine, _) = xi_series(0.125, 520.0);
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for t in [50.0, 100.0, 200.0, 300.0, 400.0, 500.0] {
        let a: &DVector<Complex64> = coarse.at((t / 0.25) as usize);
        let b = fine.at((t / 0.125) as usize);
        worst = worst.max((a - b).camax());
        peak = peak.max(b.camax());
    }
    assert!(
        worst < 1e-4 * peak,
        "grid halving changed the inhomogeneous term by {worst:e} (scale {peak:e})"
    );
}

#[test]
fn mode_speeds_transfer_to_low_energy_sites() {
    let low = |bath: BathSpec| {
        let sim = simulator(bath, 0.5, 1000.0);
        let traj = sim
            .run(PropagatorKind::Full, &sim.localized(0).unwrap())
            .unwrap();
        let p = site_populations(&traj, sim.frame());
        let last = traj.len() - 1;
        p.column(2)[last] + p.column(3)[last]
    };
    let with_mode = low(fmo4_bath());
    let without = low(fmo4_bath().with_spectral_density(fmo4_spectral_density().without_mode()));
    assert!(
        with_mode > without,
        "sites 3+4 at 1 ps: {with_mode} with the mode, {without} without"
    );
}

#[test]
fn observables_sum_to_one_and_stay_hermitian() {
    let sim = simulator(fmo4_bath(), 0.5, 300.0);
    let amps = [0.5f64.sqrt(), 0.5f64.sqrt(), 0.0, 0.0].map(|a| Complex64::new(a, 0.0));
    let initial = InitialState::superposition(&amps, sim.frame()).unwrap();
    for kind in [
        PropagatorKind::Full,
        PropagatorKind::HomOnly,
        PropagatorKind::Secular,
    ] {
        let traj = sim.run(kind, &initial).unwrap();
        let p = site_populations(&traj, sim.frame());
        for i in 0..traj.len() {
            let total: f64 = p.columns.iter().map(|c| c[i]).sum();
            assert!(
                (total - 1.0).abs() < 1e-8,
                "{kind}: populations sum to {total}"
            );
        }
        for rho in lab_density(&traj, &initial, sim.frame()) {
            assert!((&rho - rho.adjoint()).norm() < 1e-12);
        }
    }
}

#[test]
fn redfield_rates_scale_linearly_at_weak_coupling() {
    let tensors = |factor: f64| {
        let sim = simulator(fmo4_weak_bath(factor), 0.5, 200.0);
        redfield_rates(sim.bath(), sim.kernels(), sim.frame(), sim.settings()).unwrap()
    };
    // The polaron-frame rates carry `β²` and renormalised Bohr frequencies,
    // so linearity holds up to a correction of first order in the scale.
    let nonlinearity = |s: f64| {
        let (a, b) = (tensors(s), tensors(2.0 * s));
        (0..4)
            .map(|c| (&b[c] - &a[c] * Complex64::new(2.0, 0.0)).norm() / b[c].norm())
            .fold(0.0, f64::max)
    };
    let (d4, d5) = (nonlinearity(1e-4), nonlinearity(1e-5));
    assert!(d4 < 1e-2, "relative nonlinearity {d4:e} at scale 1e-4");
    assert!(
        (d4 / d5 - 10.0).abs() < 1.0,
        "nonlinearity not first order: {d4:e} vs {d5:e}"
    );
}
