//! Site Hamiltonian, bath description and the FMO presets.

pub mod spectral;
pub mod units;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use spectral::{ContinuumTerm, LorentzianMode, SpectralDensity};

/// Chromophore network: site energies, symmetric couplings and optional
/// inter-site distances (nm), all energies in cm⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteNetwork {
    epsilon: Vec<f64>,
    coupling: DMatrix<f64>,
    distances: Option<DMatrix<f64>>,
}

impl SiteNetwork {
    pub fn new(
        epsilon: Vec<f64>,
        coupling: DMatrix<f64>,
        distances: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = epsilon.len();
        if n == 0 {
            return Err(Error::InvalidModel(
                "network needs at least one site".into(),
            ));
        }
        if coupling.nrows() != n || coupling.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "coupling matrix is {}x{}, expected {n}x{n}",
                coupling.nrows(),
                coupling.ncols()
            )));
        }
        if epsilon.iter().any(|e| !e.is_finite()) || coupling.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite Hamiltonian entry".into()));
        }
        for m in 0..n {
            for k in 0..m {
                if (coupling[(m, k)] - coupling[(k, m)]).abs()
                    > 1e-12 * (1.0 + coupling[(m, k)].abs())
                {
                    return Err(Error::InvalidModel(format!(
                        "coupling matrix not symmetric at ({}, {})",
                        k + 1,
                        m + 1
                    )));
                }
            }
        }
        let mut coupling = coupling;
        for m in 0..n {
            coupling[(m, m)] = 0.0;
        }
        if let Some(d) = &distances {
            if d.nrows() != n || d.ncols() != n {
                return Err(Error::InvalidModel(
                    "distance matrix has wrong shape".into(),
                ));
            }
            for m in 0..n {
                for k in 0..n {
                    let x = d[(m, k)];
                    if !x.is_finite() || x < 0.0 || (x - d[(k, m)]).abs() > 1e-12 {
                        return Err(Error::InvalidModel(
                            "distances must be finite, non-negative and symmetric".into(),
                        ));
                    }
                }
                if d[(m, m)] != 0.0 {
                    return Err(Error::InvalidModel(
                        "site self-distance must be zero".into(),
                    ));
                }
            }
        }
        Ok(Self {
            epsilon,
            coupling,
            distances,
        })
    }

    /// Builds from a full site Hamiltonian; diagonal entries become site energies.
    pub fn from_hamiltonian(h: &DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        let eps = (0..n).map(|m| h[(m, m)]).collect();
        Self::new(eps, h.clone(), None)
    }

    pub fn with_distances(mut self, distances: DMatrix<f64>) -> Result<Self> {
        let rebuilt = Self::new(self.epsilon.clone(), self.coupling.clone(), Some(distances))?;
        self.distances = rebuilt.distances;
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.epsilon.len()
    }

    pub fn site_energies(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn coupling(&self, m: usize, n: usize) -> f64 {
        self.coupling[(m, n)]
    }

    pub fn coupling_matrix(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn distances(&self) -> Option<&DMatrix<f64>> {
        self.distances.as_ref()
    }

    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let mut h = self.coupling.clone();
        for m in 0..self.size() {
            h[(m, m)] = self.epsilon[m];
        }
        h
    }

    /// All unordered pairs `(m, n)`, `m < n`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.size();
        (0..n)
            .flat_map(|m| (m + 1..n).map(move |k| (m, k)))
            .collect()
    }

    /// Pairs with non-zero coupling.
    pub fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs()
            .into_iter()
            .filter(|&(m, n)| self.coupling[(m, n)] != 0.0)
            .collect()
    }
}

/// Spatial correlation of the site baths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorrelationModel {
    Independent,
    FullyCorrelated,
    PropagatingModes { phonon_speed_nm_per_fs: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub kt_cm: f64,
    pub correlation: CorrelationModel,
    pub spectral_density: SpectralDensity,
}

impl BathSpec {
    pub fn new(
        kt_cm: f64,
        correlation: CorrelationModel,
        spectral_density: SpectralDensity,
    ) -> Result<Self> {
        let b = Self {
            kt_cm,
            correlation,
            spectral_density,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kt_cm.is_finite() && self.kt_cm > 0.0) {
            return Err(Error::InvalidModel(format!(
                "kT must be > 0, got {}",
                self.kt_cm
            )));
        }
        if let CorrelationModel::PropagatingModes {
            phonon_speed_nm_per_fs,
        } = self.correlation
        {
            if !(phonon_speed_nm_per_fs.is_finite() && phonon_speed_nm_per_fs > 0.0) {
                return Err(Error::InvalidModel("phonon speed must be > 0".into()));
            }
        }
        self.spectral_density.validate()
    }

    pub fn with_spectral_density(&self, sd: SpectralDensity) -> Self {
        Self {
            spectral_density: sd,
            ..self.clone()
        }
    }

    pub fn with_correlation(&self, correlation: CorrelationModel) -> Self {
        Self {
            correlation,
            ..self.clone()
        }
    }
}

/// FMO presets (four-site subset, energies relative to site 3).
pub mod presets {
    use super::*;
    use crate::model::units::mev_to_cm;

    pub const FMO_KT_CM: f64 = 200.0;
    pub const FMO_CUTOFF_1_MEV: f64 = 0.069;
    pub const FMO_CUTOFF_2_MEV: f64 = 0.24;

    pub fn fmo4_hamiltonian() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                280.0, -106.0, 8.0, -5.0, //
                -106.0, 420.0, 28.0, 6.0, //
                8.0, 28.0, 0.0, -62.0, //
                -5.0, 6.0, -62.0, 175.0,
            ],
        )
    }

    pub fn fmo4_network() -> SiteNetwork {
        SiteNetwork::from_hamiltonian(&fmo4_hamiltonian()).expect("preset is valid")
    }

    /// Continuum with cutoffs given in meV, mode at 180 cm⁻¹.
    pub fn fmo4_spectral_density_with_cutoffs(
        cutoff1_mev: f64,
        cutoff2_mev: f64,
    ) -> SpectralDensity {
        SpectralDensity::new(
            0.5,
            vec![
                ContinuumTerm {
                    weight: 0.8,
                    cutoff_cm: mev_to_cm(cutoff1_mev),
                },
                ContinuumTerm {
                    weight: 0.5,
                    cutoff_cm: mev_to_cm(cutoff2_mev),
                },
            ],
            Some(LorentzianMode {
                weight: 0.22,
                frequency_cm: 180.0,
                broadening_cm: 50.0,
            }),
        )
        .expect("preset is valid")
    }

    pub fn fmo4_spectral_density() -> SpectralDensity {
        fmo4_spectral_density_with_cutoffs(FMO_CUTOFF_1_MEV, FMO_CUTOFF_2_MEV)
    }

    pub fn fmo4_bath() -> BathSpec {
        BathSpec::new(
            FMO_KT_CM,
            CorrelationModel::Independent,
            fmo4_spectral_density(),
        )
        .expect("preset is valid")
    }

    /// Continuum only, cutoffs ten times higher with weights reduced tenfold.
    pub fn fmo4_fast_bath() -> BathSpec {
        let sd = fmo4_spectral_density()
            .without_mode()
            .rescaled_continuum(10.0);
        BathSpec::new(FMO_KT_CM, CorrelationModel::Independent, sd).expect("preset is valid")
    }

    /// FMO bath with the overall coupling strength reduced by `factor`.
    pub fn fmo4_weak_bath(factor: f64) -> BathSpec {
        let sd = fmo4_spectral_density().scaled(factor);
        BathSpec::new(FMO_KT_CM, CorrelationModel::Independent, sd).expect("preset is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    #[test]
    fn preset_network_shape() {
        let net = fmo4_network();
        assert_eq!(net.size(), 4);
        assert_eq!(net.pairs().len(), 6);
        assert_eq!(net.coupling(0, 1), -106.0);
        assert_eq!(net.site_energies()[1], 420.0);
    }

    #[test]
    fn asymmetric_coupling_rejected() {
        let mut h = fmo4_hamiltonian();
        h[(0, 1)] = -100.0;
        assert!(matches!(
            SiteNetwork::from_hamiltonian(&h),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn preset_reorganization_energy() {
        let sd = fmo4_spectral_density();
        let lambda = sd.reorganization_energy_exact();
        // 72 (0.8 ω1 + 0.5 ω2) · 0.5 / 1.3 for the continuum, 0.22 · 180 for the mode
        assert!((lambda - (39.131_518 + 39.6)).abs() < 1e-5, "{lambda}");
    }

    #[test]
    fn fast_bath_drops_mode() {
        let b = fmo4_fast_bath();
        assert!(b.spectral_density.mode.is_none());
        assert!(
            (b.spectral_density.continuum[0].cutoff_cm - 10.0 * mev_to_cm_local(0.069)).abs()
                < 1e-12
        );
    }

    fn mev_to_cm_local(x: f64) -> f64 {
        x * 8.06554
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        assert!(
            BathSpec::new(0.0, CorrelationModel::Independent, fmo4_spectral_density()).is_err()
        );
    }
}
