//! Polaron-frame system Hamiltonian and initial states.
//!
//! The polaron transformation shifts each site by the reorganisation energy
//! and dresses every coupling with the thermal average of the bath
//! displacement, `Ṽ_mn = β_mn V_mn`. The resulting `H̃0` is diagonalised
//! once; its eigenbasis carries the master equation. Eigenvalues are sorted
//! in descending order and each eigenvector is signed so that its
//! largest-magnitude site component is positive.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::quadrature::{reorganization_energy, QuadratureSettings};
use crate::bath::KernelTables;
use crate::error::{Error, Result};
use crate::model::{BathSpec, SiteNetwork, SpectralDensity};
use crate::numerics::hermitian_eigenvalues;

/// How the renormalised couplings enter `H̃0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingTreatment {
    /// `Ṽ = β V`.
    #[default]
    Renormalized,
    /// `Ṽ = 0`: the frame of incoherent hopping. Bath correlators keep the true `β`.
    Dropped,
}

#[derive(Debug, Clone)]
pub struct PolaronFrame {
    reorganization_cm: f64,
    site_energies: Vec<f64>,
    h0: DMatrix<f64>,
    energies: Vec<f64>,
    u: DMatrix<f64>,
    beta: DMatrix<f64>,
    coupling: DMatrix<f64>,
    treatment: CouplingTreatment,
}

const DEGENERACY_TOL: f64 = 1e-8;

impl PolaronFrame {
    pub fn build(
        network: &SiteNetwork,
        bath: &BathSpec,
        kernels: &KernelTables,
        treatment: CouplingTreatment,
        settings: &QuadratureSettings,
    ) -> Result<Self> {
        let lambda = reorganization_energy(&bath.spectral_density, settings);
        Self::from_parts(network, kernels.beta_matrix().clone(), lambda, treatment)
    }

    /// Frame from explicit renormalisation factors and reorganisation energy.
    pub fn from_parts(
        network: &SiteNetwork,
        beta: DMatrix<f64>,
        reorganization_cm: f64,
        treatment: CouplingTreatment,
    ) -> Result<Self> {
        let n = network.size();
        if beta.nrows() != n || beta.ncols() != n {
            return Err(Error::InvalidModel(
                "renormalisation matrix has wrong shape".into(),
            ));
        }
        let site_energies: Vec<f64> = network
            .site_energies()
            .iter()
            .map(|e| e - reorganization_cm)
            .collect();
        let mut h0 = DMatrix::zeros(n, n);
        for m in 0..n {
            h0[(m, m)] = site_energies[m];
            if treatment == CouplingTreatment::Renormalized {
                for k in 0..n {
                    if k != m {
                        h0[(m, k)] = beta[(m, k)] * network.coupling(m, k);
                    }
                }
            }
        }
        let (energies, u) = canonical_eigen(&h0);
        Ok(Self {
            reorganization_cm,
            site_energies,
            h0,
            energies,
            u,
            beta,
            coupling: network.coupling_matrix().clone(),
            treatment,
        })
    }

    pub fn size(&self) -> usize {
        self.energies.len()
    }

    pub fn reorganization_energy(&self) -> f64 {
        self.reorganization_cm
    }

    /// Shifted site energies `ε̃_m`.
    pub fn site_energies(&self) -> &[f64] {
        &self.site_energies
    }

    pub fn hamiltonian(&self) -> &DMatrix<f64> {
        &self.h0
    }

    /// Eigenvalues of `H̃0`, descending.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `u[(m, α)] = ⟨m|α⟩`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn beta(&self, m: usize, n: usize) -> f64 {
        self.beta[(m, n)]
    }

    pub fn beta_matrix(&self) -> &DMatrix<f64> {
        &self.beta
    }

    /// Bare coupling `V_mn`.
    pub fn coupling(&self, m: usize, n: usize) -> f64 {
        self.coupling[(m, n)]
    }

    pub fn treatment(&self) -> CouplingTreatment {
        self.treatment
    }

    /// Coupled site pairs `m < n`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.size();
        (0..n)
            .flat_map(|m| (m + 1..n).map(move |k| (m, k)))
            .filter(|&(m, k)| self.coupling[(m, k)] != 0.0)
            .collect()
    }

    /// Site-basis matrix to eigenbasis: `uᵀ A u`.
    pub fn to_eigenbasis(&self, site: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let u = self.u.map(|x| Complex64::new(x, 0.0));
        u.transpose() * site * &u
    }

    /// Eigenbasis matrix to site basis: `u A uᵀ`.
    pub fn to_site_basis(&self, eig: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let u = self.u.map(|x| Complex64::new(x, 0.0));
        &u * eig * u.transpose()
    }

    /// `|Ṽ_mn| = β_mn |V_mn|` as entered into `H̃0`.
    pub fn renormalized_coupling(&self, m: usize, n: usize) -> f64 {
        self.h0[(m, n)]
    }
}

fn canonical_eigen(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        u.set_column(col, &eig.eigenvectors.column(i));
    }

    // Degenerate clusters: replace the arbitrary basis by the Gram-Schmidt
    // orthonormalisation of the projected site vectors, in site order.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (energies[start] - energies[end]).abs() < DEGENERACY_TOL {
            end += 1;
        }
        if end - start > 1 {
            let block = u.columns(start, end - start).into_owned();
            let projector = &block * block.transpose();
            let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
            for site in 0..n {
                if basis.len() == end - start {
                    break;
                }
                let mut v = projector.column(site).into_owned();
                for b in &basis {
                    let c = b.dot(&v);
                    v -= b * c;
                }
                let norm = v.norm();
                if norm > 1e-6 {
                    basis.push(v / norm);
                }
            }
            for (k, b) in basis.iter().enumerate() {
                u.set_column(start + k, b);
            }
        }
        start = end;
    }

    for col in 0..n {
        let mut best = 0;
        for row in 1..n {
            if u[(row, col)].abs() > u[(best, col)].abs() + 1e-12 {
                best = row;
            }
        }
        if u[(best, col)] < 0.0 {
            for row in 0..n {
                u[(row, col)] = -u[(row, col)];
            }
        }
    }
    (energies, u)
}

/// Initial lab-frame state and its polaron-frame image `ρ̃_ij(0) = β_ij ρ_ij(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    lab: DMatrix<Complex64>,
    polaron: DMatrix<Complex64>,
}

impl InitialState {
    pub fn new(rho_lab: DMatrix<Complex64>, frame: &PolaronFrame) -> Result<Self> {
        let n = frame.size();
        if rho_lab.nrows() != n || rho_lab.ncols() != n {
            return Err(Error::InvalidState(format!(
                "density matrix is {}x{}, expected {n}x{n}",
                rho_lab.nrows(),
                rho_lab.ncols()
            )));
        }
        let herm = (&rho_lab - rho_lab.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!(
                "density matrix not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = rho_lab.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_ev = hermitian_eigenvalues(&rho_lab)[0];
        if min_ev < -1e-10 {
            return Err(Error::InvalidState(format!(
                "density matrix not positive (eigenvalue {min_ev:e})"
            )));
        }
        let polaron = DMatrix::from_fn(n, n, |i, j| rho_lab[(i, j)] * frame.beta(i, j));
        Ok(Self {
            lab: rho_lab,
            polaron,
        })
    }

    /// Excitation on one site (zero-based index).
    pub fn localized(site: usize, frame: &PolaronFrame) -> Result<Self> {
        let n = frame.size();
        if site >= n {
            return Err(Error::InvalidState(format!(
                "site {} outside a {n}-site network",
                site + 1
            )));
        }
        let mut rho = DMatrix::zeros(n, n);
        rho[(site, site)] = Complex64::new(1.0, 0.0);
        Self::new(rho, frame)
    }

    /// Pure state with the given site amplitudes, normalised.
    pub fn superposition(amplitudes: &[Complex64], frame: &PolaronFrame) -> Result<Self> {
        let n = frame.size();
        if amplitudes.len() != n {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for {n} sites",
                amplitudes.len()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let rho = DMatrix::from_fn(n, n, |i, j| {
            amplitudes[i] * amplitudes[j].conj() / (norm * norm)
        });
        Self::new(rho, frame)
    }

    pub fn lab(&self) -> &DMatrix<Complex64> {
        &self.lab
    }

    /// `ρ̃(0)` in the site basis.
    pub fn polaron(&self) -> &DMatrix<Complex64> {
        &self.polaron
    }

    /// `ρ̃(0)` in the eigenbasis of `H̃0`.
    pub fn polaron_eigenbasis(&self, frame: &PolaronFrame) -> DMatrix<Complex64> {
        frame.to_eigenbasis(&self.polaron)
    }

    /// Site index pairs `(i, j)` with non-zero `ρ̃_ij(0)`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let n = self.polaron.nrows();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.polaron[(i, j)].norm() > 0.0)
            .collect()
    }
}

/// Per-pair applicability of the polaron treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct PairValidity {
    pub pair: (usize, usize),
    pub gamma_cm: f64,
    pub coupling_cm: f64,
    pub gap_cm: f64,
    pub gamma_below_bath_frequency: bool,
    pub gap_exceeds_coupling: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub characteristic_frequency_cm: Option<f64>,
    pub pairs: Vec<PairValidity>,
}

impl ValidityReport {
    pub fn all_satisfied(&self) -> bool {
        self.pairs
            .iter()
            .all(|p| p.gamma_below_bath_frequency && p.gap_exceeds_coupling)
    }
}

/// Compares `γ_mn = |V_mn| sqrt(1 − β_mn²)` with the bath cutoff frequency and
/// the site energy gap with the coupling.
pub fn validity_report(
    frame: &PolaronFrame,
    network: &SiteNetwork,
    sd: &SpectralDensity,
) -> ValidityReport {
    let wc = sd.continuum_peak_cm();
    let pairs = frame
        .pairs()
        .into_iter()
        .map(|(m, n)| {
            let v = network.coupling(m, n).abs();
            let b = frame.beta(m, n);
            let gamma = v * (1.0 - b * b).max(0.0).sqrt();
            let gap = (network.site_energies()[m] - network.site_energies()[n]).abs();
            PairValidity {
                pair: (m, n),
                gamma_cm: gamma,
                coupling_cm: v,
                gap_cm: gap,
                gamma_below_bath_frequency: wc.map(|w| gamma < w).unwrap_or(true),
                gap_exceeds_coupling: gap > v,
            }
        })
        .collect();
    ValidityReport {
        characteristic_frequency_cm: wc,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;

    fn frame() -> PolaronFrame {
        let net = fmo4_network();
        let bath = fmo4_bath();
        let s = QuadratureSettings::default();
        let k = KernelTables::build(&net, &bath, 0.5, 1.0, &s).unwrap();
        PolaronFrame::build(&net, &bath, &k, CouplingTreatment::Renormalized, &s).unwrap()
    }

    #[test]
    fn eigenvectors_orthonormal_and_sorted() {
        let f = frame();
        let u = f.eigenvectors();
        let id = u.transpose() * u;
        assert!((id - DMatrix::identity(4, 4)).abs().max() < 1e-12);
        for w in f.energies().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let recon = u
            * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(f.energies().to_vec()))
            * u.transpose();
        assert!((recon - f.hamiltonian()).abs().max() < 1e-10);
    }

    #[test]
    fn beta_is_pair_independent_for_independent_baths() {
        let f = frame();
        let b = f.beta(0, 1);
        for (m, n) in fmo4_network().pairs() {
            assert!((f.beta(m, n) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropped_coupling_gives_permutation() {
        let net = fmo4_network();
        let f = PolaronFrame::from_parts(
            &net,
            DMatrix::from_element(4, 4, 0.5),
            10.0,
            CouplingTreatment::Dropped,
        )
        .unwrap();
        let u = f.eigenvectors();
        assert_eq!(f.energies(), &[410.0, 270.0, 165.0, -10.0]);
        assert_eq!(u[(1, 0)], 1.0);
        assert_eq!(u[(0, 1)], 1.0);
        assert_eq!(u[(3, 2)], 1.0);
        assert_eq!(u[(2, 3)], 1.0);
    }

    #[test]
    fn degenerate_block_is_canonical() {
        let net = SiteNetwork::new(vec![0.0, 0.0, 5.0], DMatrix::zeros(3, 3), None).unwrap();
        let f = PolaronFrame::from_parts(
            &net,
            DMatrix::from_element(3, 3, 1.0),
            0.0,
            CouplingTreatment::Renormalized,
        )
        .unwrap();
        let u = f.eigenvectors();
        assert_eq!(f.energies()[0], 5.0);
        assert!((u[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((u[(1, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_scaling() {
        let f = frame();
        let amp = [
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let s = InitialState::superposition(&amp, &f).unwrap();
        assert!((s.lab()[(0, 1)].re - 0.5).abs() < 1e-15);
        assert!((s.polaron()[(0, 1)].re - 0.5 * f.beta(0, 1)).abs() < 1e-15);
        assert!((s.polaron()[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_initial_states() {
        let f = frame();
        let mut rho = DMatrix::zeros(4, 4);
        rho[(0, 0)] = Complex64::new(0.5, 0.0);
        assert!(matches!(
            InitialState::new(rho.clone(), &f),
            Err(Error::InvalidState(_))
        ));
        rho[(1, 1)] = Complex64::new(0.5, 0.0);
        rho[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(InitialState::new(rho.clone(), &f).is_err());
        rho[(1, 0)] = Complex64::new(0.1, 0.0);
        assert!(InitialState::new(rho, &f).is_ok());
        assert!(InitialState::localized(9, &f).is_err());
    }

    #[test]
    fn fmo_validity() {
        let f = frame();
        let r = validity_report(&f, &fmo4_network(), &fmo4_spectral_density());
        let wc = r.characteristic_frequency_cm.unwrap();
        assert!(wc > 150.0 && wc < 210.0, "{wc}");
        assert!(r.all_satisfied());
    }
}
