//! Unit conventions.
//!
//! Energies are wavenumbers in cm⁻¹ and times are femtoseconds. A phase
//! accumulated by an energy `E` over a time `t` is `KAPPA * E * t` radians.

use std::f64::consts::PI;

/// Speed of light in cm/fs.
pub const SPEED_OF_LIGHT_CM_PER_FS: f64 = 2.997_924_58e-5;

/// Angular conversion `2π c`, in rad per (cm⁻¹ · fs).
pub const KAPPA: f64 = 2.0 * PI * SPEED_OF_LIGHT_CM_PER_FS;

/// Wavenumbers per meV.
pub const MEV_TO_CM: f64 = 8.065_54;

/// Phase in radians picked up by energy `energy_cm` over `t_fs`.
#[inline]
pub fn phase(energy_cm: f64, t_fs: f64) -> f64 {
    KAPPA * energy_cm * t_fs
}

/// Angular frequency in rad/fs for an energy in cm⁻¹.
#[inline]
pub fn angular_frequency(energy_cm: f64) -> f64 {
    KAPPA * energy_cm
}

#[inline]
pub fn mev_to_cm(mev: f64) -> f64 {
    mev * MEV_TO_CM
}

#[inline]
pub fn cm_to_mev(cm: f64) -> f64 {
    cm / MEV_TO_CM
}

/// `coth(ω / 2kT)` with the small-argument series used below `1e-3 kT`.
#[inline]
pub fn thermal_coth(omega_cm: f64, kt_cm: f64) -> f64 {
    if kt_cm <= 0.0 {
        return omega_cm.signum();
    }
    if omega_cm.abs() < 1e-3 * kt_cm {
        2.0 * kt_cm / omega_cm + omega_cm / (6.0 * kt_cm)
    } else {
        1.0 / (omega_cm / (2.0 * kt_cm)).tanh()
    }
}
