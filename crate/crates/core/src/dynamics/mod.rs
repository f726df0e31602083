//! Propagation of the polaron-frame density matrix.
//!
//! The state is `ρ̃` in the renormalised exciton basis, flattened row-major,
//! and evolved in the interaction picture of `H̃0` by classical RK4:
//! `dρ/dt = R(t) ρ + I(t)`. The kernel grid has half the time step, so the
//! stage times `t`, `t + dt/2`, `t + dt` are all grid points and the running
//! rate integrals are advanced exactly to them. Trajectories are stored in
//! the Schrödinger picture.

pub mod generator;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use generator::{assemble_r, flatten, pauli_matrix, unflatten};

use crate::bath::cache::KernelCache;
use crate::bath::{KernelTables, QuadratureSettings};
use crate::error::{Error, Result};
use crate::model::units::KAPPA;
use crate::model::{BathSpec, SiteNetwork};
use crate::numerics::{expm, hermitian_eigenvalues};
use crate::polaron::{CouplingTreatment, InitialState, PolaronFrame};
use crate::rates::{
    foerster_generator, markov_rates_extending, redfield_rates, secular_mask, ChannelTensors,
    HomRates, InhomSeries, MarkovRates, XiPhase,
};

/// Which generator drives the propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorKind {
    /// Time-dependent rates plus the inhomogeneous source.
    Full,
    /// Time-dependent rates only.
    HomOnly,
    /// Constant Markov rates with their oscillating phases.
    Markov,
    /// Markov rates restricted to secular terms.
    Secular,
    /// Secular weak-coupling rates.
    Redfield,
    /// Incoherent site hopping.
    Foerster,
}

impl PropagatorKind {
    pub const ALL: [PropagatorKind; 6] = [
        PropagatorKind::Full,
        PropagatorKind::HomOnly,
        PropagatorKind::Markov,
        PropagatorKind::Secular,
        PropagatorKind::Redfield,
        PropagatorKind::Foerster,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PropagatorKind::Full => "full",
            PropagatorKind::HomOnly => "hom-only",
            PropagatorKind::Markov => "markov",
            PropagatorKind::Secular => "secular",
            PropagatorKind::Redfield => "redfield",
            PropagatorKind::Foerster => "foerster",
        }
    }
}

impl fmt::Display for PropagatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PropagatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == s).ok_or_else(|| {
            let tags: Vec<_> = Self::ALL.iter().map(|k| k.tag()).collect();
            Error::Usage(format!(
                "unknown propagator '{s}' (expected one of {})",
                tags.join(", ")
            ))
        })
    }
}

/// Time grid and generator options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub dt_fs: f64,
    pub t_max_fs: f64,
    pub include_inhomogeneous: bool,
    pub xi_phase: XiPhase,
    pub secular_tol_cm: f64,
    /// Longest kernel table tried while waiting for correlators to relax.
    pub markov_t_cap_fs: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            dt_fs: 0.5,
            t_max_fs: 1000.0,
            include_inhomogeneous: true,
            xi_phase: XiPhase::Integration,
            secular_tol_cm: 0.01,
            markov_t_cap_fs: 16000.0,
        }
    }
}

impl PropagationConfig {
    pub fn steps(&self) -> usize {
        (self.t_max_fs / self.dt_fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt_fs > 0.0 && self.dt_fs.is_finite()) {
            return bad(format!("dt_fs must be > 0, got {}", self.dt_fs));
        }
        if !(self.t_max_fs > 0.0 && self.t_max_fs.is_finite()) {
            return bad(format!("t_max_fs must be > 0, got {}", self.t_max_fs));
        }
        let steps = self.t_max_fs / self.dt_fs;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad(format!(
                "t_max_fs = {} is not a whole number of dt_fs = {} steps",
                self.t_max_fs, self.dt_fs
            ));
        }
        if !(self.secular_tol_cm > 0.0) {
            return bad(format!(
                "secular_tol_cm must be > 0, got {}",
                self.secular_tol_cm
            ));
        }
        if !(self.markov_t_cap_fs > 0.0) {
            return bad(format!(
                "markov_t_cap_fs must be > 0, got {}",
                self.markov_t_cap_fs
            ));
        }
        Ok(())
    }
}

/// Schrödinger-picture `ρ̃(t)` in the renormalised eigenbasis on a uniform grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: PropagatorKind,
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<Complex64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// Index of the grid point closest to `t_fs`.
    pub fn index_at(&self, t_fs: f64) -> usize {
        let dt = self.dt();
        if dt == 0.0 {
            return 0;
        }
        ((t_fs - self.times[0]) / dt)
            .round()
            .clamp(0.0, (self.len() - 1) as f64) as usize
    }

    pub fn final_state(&self) -> &DMatrix<Complex64> {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }
}

/// Largest tolerated trace drift before aborting.
pub const TRACE_ABORT: f64 = 1e-6;
/// Most negative tolerated eigenvalue before aborting.
pub const POSITIVITY_ABORT: f64 = -1e-2;

fn check_state(rho: &DMatrix<Complex64>, step: usize, t: f64) -> Result<()> {
    let tr = rho.trace();
    if !(tr.re.is_finite() && tr.im.is_finite()) {
        return Err(Error::Invariant {
            step,
            t_fs: t,
            detail: "state is not finite".into(),
        });
    }
    let drift = (tr - Complex64::new(1.0, 0.0)).norm();
    if drift > TRACE_ABORT {
        return Err(Error::Invariant {
            step,
            t_fs: t,
            detail: format!("trace drift {drift:.3e}"),
        });
    }
    let herm = (rho - rho.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if herm > TRACE_ABORT {
        return Err(Error::Invariant {
            step,
            t_fs: t,
            detail: format!("hermiticity defect {herm:.3e}"),
        });
    }
    let min_ev = hermitian_eigenvalues(rho)[0];
    if min_ev < POSITIVITY_ABORT {
        return Err(Error::Invariant {
            step,
            t_fs: t,
            detail: format!("eigenvalue {min_ev:.3e} below {POSITIVITY_ABORT}"),
        });
    }
    if min_ev < -1e-6 {
        log::debug!("step {step}, t = {t} fs: transient eigenvalue {min_ev:.3e}");
    }
    Ok(())
}

/// Interaction picture to Schrödinger picture, `ρ_αβ e^{−iω_αβ t}`.
fn to_schroedinger(rho_i: &DMatrix<Complex64>, omega: &[f64], t: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(rho_i.nrows(), rho_i.ncols(), |a, b| {
        rho_i[(a, b)] * Complex64::from_polar(1.0, -(omega[a] - omega[b]) * t)
    })
}

/// Generator snapshots required by one RK4 step.
trait Generator {
    /// `R` at the start, middle and end of the next step.
    fn step_generators(&mut self, t: f64, dt: f64) -> Result<[DMatrix<Complex64>; 3]>;
}

struct RunningRates<'a> {
    hom: HomRates,
    omega: &'a [f64],
    start: DMatrix<Complex64>,
}

impl Generator for RunningRates<'_> {
    fn step_generators(&mut self, t: f64, dt: f64) -> Result<[DMatrix<Complex64>; 3]> {
        self.hom.advance()?;
        let mid = assemble_r(self.omega, self.hom.midpoint(), t + 0.5 * dt);
        let end = assemble_r(self.omega, self.hom.current(), t + dt);
        let start = std::mem::replace(&mut self.start, end.clone());
        Ok([start, mid, end])
    }
}

struct ConstantRates<'a> {
    tensors: ChannelTensors,
    omega: &'a [f64],
}

impl Generator for ConstantRates<'_> {
    fn step_generators(&mut self, t: f64, dt: f64) -> Result<[DMatrix<Complex64>; 3]> {
        Ok([0.0, 0.5, 1.0].map(|f| assemble_r(self.omega, &self.tensors, t + f * dt)))
    }
}

fn rk4(
    generator: &mut dyn Generator,
    source: Option<&InhomSeries>,
    initial: DVector<Complex64>,
    omega: &[f64],
    config: &PropagationConfig,
    kind: PropagatorKind,
) -> Result<Trajectory> {
    let dt = config.dt_fs;
    let steps = config.steps();
    let mut y = initial;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(to_schroedinger(&unflatten(&y), omega, 0.0));
    let zero = DVector::zeros(y.len());
    let src = |i: usize| source.map(|s| s.at(i)).unwrap_or(&zero);
    for step in 0..steps {
        let t = step as f64 * dt;
        let [r0, rm, r1] = generator.step_generators(t, dt)?;
        let k1 = &r0 * &y + src(2 * step);
        let k2 = &rm * (&y + &k1 * Complex64::new(0.5 * dt, 0.0)) + src(2 * step + 1);
        let k3 = &rm * (&y + &k2 * Complex64::new(0.5 * dt, 0.0)) + src(2 * step + 1);
        let k4 = &r1 * (&y + &k3 * Complex64::new(dt, 0.0)) + src(2 * step + 2);
        y += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(dt / 6.0, 0.0);
        let t1 = (step + 1) as f64 * dt;
        let rho = to_schroedinger(&unflatten(&y), omega, t1);
        check_state(&rho, step + 1, t1)?;
        times.push(t1);
        states.push(rho);
    }
    Ok(Trajectory {
        kind,
        times,
        states,
    })
}

/// A model with its kernel tables and polaron frame, ready to propagate.
#[derive(Debug, Clone)]
pub struct Simulator {
    network: SiteNetwork,
    bath: BathSpec,
    settings: QuadratureSettings,
    config: PropagationConfig,
    kernels: KernelTables,
    frame: PolaronFrame,
}

impl Simulator {
    pub fn new(
        network: SiteNetwork,
        bath: BathSpec,
        treatment: CouplingTreatment,
        config: PropagationConfig,
        settings: QuadratureSettings,
        cache: Option<&KernelCache>,
    ) -> Result<Self> {
        config.validate()?;
        bath.validate()?;
        let spacing = 0.5 * config.dt_fs;
        let t_table = config.steps() as f64 * config.dt_fs;
        let kernels = match cache {
            Some(c) => c.load_or_build(&network, &bath, spacing, t_table, &settings)?,
            None => KernelTables::build(&network, &bath, spacing, t_table, &settings)?,
        };
        let frame = PolaronFrame::build(&network, &bath, &kernels, treatment, &settings)?;
        Ok(Self {
            network,
            bath,
            settings,
            config,
            kernels,
            frame,
        })
    }

    pub fn network(&self) -> &SiteNetwork {
        &self.network
    }

    pub fn bath(&self) -> &BathSpec {
        &self.bath
    }

    pub fn settings(&self) -> &QuadratureSettings {
        &self.settings
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.config
    }

    pub fn kernels(&self) -> &KernelTables {
        &self.kernels
    }

    pub fn frame(&self) -> &PolaronFrame {
        &self.frame
    }

    pub fn localized(&self, site: usize) -> Result<InitialState> {
        InitialState::localized(site, &self.frame)
    }

    fn omega(&self) -> Vec<f64> {
        self.frame.energies().iter().map(|e| KAPPA * e).collect()
    }

    /// Markov tensors, extending the kernel range if the correlators have
    /// not relaxed within the propagation tables.
    pub fn markov_rates(&self) -> Result<MarkovRates> {
        markov_rates_extending(
            &self.network,
            &self.bath,
            &self.frame,
            self.kernels.spacing(),
            self.kernels.t_max().max(500.0),
            self.config.markov_t_cap_fs,
            &self.settings,
        )
    }

    /// Generator tensors of the constant-rate propagators.
    pub fn limit_tensors(&self, kind: PropagatorKind) -> Result<ChannelTensors> {
        match kind {
            PropagatorKind::Markov => Ok(self.markov_rates()?.tensors),
            PropagatorKind::Secular => {
                let mut t = self.markov_rates()?.tensors;
                secular_mask(&self.frame, self.config.secular_tol_cm)?.apply(&mut t);
                Ok(t)
            }
            PropagatorKind::Redfield => {
                let mut t = redfield_rates(&self.bath, &self.kernels, &self.frame, &self.settings)?;
                secular_mask(&self.frame, self.config.secular_tol_cm)?.apply(&mut t);
                Ok(t)
            }
            other => Err(Error::Usage(format!(
                "propagator '{other}' has no constant rate tensors"
            ))),
        }
    }

    pub fn run(&self, kind: PropagatorKind, initial: &InitialState) -> Result<Trajectory> {
        let omega = self.omega();
        let rho0 = flatten(&initial.polaron_eigenbasis(&self.frame));
        match kind {
            PropagatorKind::Full | PropagatorKind::HomOnly => {
                let hom = HomRates::new(&self.kernels, &self.frame);
                let start = assemble_r(&omega, hom.current(), 0.0);
                let mut g = RunningRates {
                    hom,
                    omega: &omega,
                    start,
                };
                let source = if kind == PropagatorKind::Full && self.config.include_inhomogeneous {
                    Some(InhomSeries::compute(
                        &self.kernels,
                        &self.frame,
                        initial,
                        self.config.xi_phase,
                        true,
                    )?)
                } else {
                    None
                };
                rk4(&mut g, source.as_ref(), rho0, &omega, &self.config, kind)
            }
            PropagatorKind::Markov | PropagatorKind::Secular | PropagatorKind::Redfield => {
                let mut g = ConstantRates {
                    tensors: self.limit_tensors(kind)?,
                    omega: &omega,
                };
                rk4(&mut g, None, rho0, &omega, &self.config, kind)
            }
            PropagatorKind::Foerster => self.run_foerster(initial),
        }
    }

    /// Site-population hopping; coherences are not evolved.
    fn run_foerster(&self, initial: &InitialState) -> Result<Trajectory> {
        let n = self.frame.size();
        let w = foerster_generator(&self.kernels, &self.frame)?;
        let dt = self.config.dt_fs;
        let step = expm(&w.map(|x| Complex64::new(x * dt, 0.0))).map(|z| z.re);
        let mut p = DVector::from_fn(n, |m, _| initial.lab()[(m, m)].re);
        let u = self.frame.eigenvectors();
        let to_eig = |p: &DVector<f64>| {
            let site = DMatrix::from_fn(n, n, |a, b| {
                Complex64::new(if a == b { p[a] } else { 0.0 }, 0.0)
            });
            let uc = u.map(|x| Complex64::new(x, 0.0));
            uc.transpose() * site * uc
        };
        let steps = self.config.steps();
        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        times.push(0.0);
        states.push(to_eig(&p));
        for s in 0..steps {
            p = &step * p;
            times.push((s + 1) as f64 * dt);
            states.push(to_eig(&p));
        }
        Ok(Trajectory {
            kind: PropagatorKind::Foerster,
            times,
            states,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;
    use crate::model::CorrelationModel;

    fn sim(bath: BathSpec, treatment: CouplingTreatment, t_max: f64, dt: f64) -> Simulator {
        let config = PropagationConfig {
            dt_fs: dt,
            t_max_fs: t_max,
            ..Default::default()
        };
        Simulator::new(
            fmo4_network(),
            bath,
            treatment,
            config,
            QuadratureSettings::default(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn propagator_tags_round_trip() {
        for k in PropagatorKind::ALL {
            assert_eq!(k.tag().parse::<PropagatorKind>().unwrap(), k);
        }
        assert!("bogus".parse::<PropagatorKind>().is_err());
    }

    #[test]
    fn config_rejects_fractional_steps() {
        let c = PropagationConfig {
            dt_fs: 0.3,
            t_max_fs: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn fully_correlated_is_unitary() {
        let bath = fmo4_bath().with_correlation(CorrelationModel::FullyCorrelated);
        let s = sim(bath, CouplingTreatment::Renormalized, 200.0, 0.5);
        let init = s.localized(0).unwrap();
        let traj = s.run(PropagatorKind::Full, &init).unwrap();
        let h = s
            .frame()
            .hamiltonian()
            .map(|x| Complex64::new(0.0, -KAPPA * x * 200.0));
        let prop = expm(&h);
        let rho_t = &prop * init.lab() * prop.adjoint();
        let site = s.frame().to_site_basis(traj.final_state());
        assert!((site - rho_t).iter().all(|z| z.norm() < 1e-6));
    }

    #[test]
    fn secular_population_block_matches_pauli() {
        let s = sim(
            fmo4_fast_bath(),
            CouplingTreatment::Renormalized,
            300.0,
            0.5,
        );
        let init = s.localized(0).unwrap();
        let traj = s.run(PropagatorKind::Secular, &init).unwrap();
        let w = pauli_matrix(&s.limit_tensors(PropagatorKind::Secular).unwrap(), 4);
        let p0 = init.polaron_eigenbasis(s.frame());
        for t in [50.0, 300.0] {
            let e = expm(&w.map(|x| Complex64::new(x * t, 0.0)));
            let p: DVector<Complex64> = &e * DVector::from_fn(4, |a, _| p0[(a, a)]);
            let st = &traj.states[traj.index_at(t)];
            for a in 0..4 {
                assert!(
                    (st[(a, a)] - p[a]).norm() < 1e-8,
                    "t {t}: {} vs {}",
                    st[(a, a)],
                    p[a]
                );
            }
        }
    }
}
