//! Physical constants and the derived emission-rate formulas.
//!
//! Source: CODATA 2018 snapshot, embedded as literals — no runtime lookup.
//! The analysis unit system is keV for spectral energies, seconds for time,
//! meters for lengths; `beta_k` performs the single J^(-1/3) -> keV^(-1/3)
//! conversion so every downstream formula works in that system directly.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Planck constant, J s (exact by SI definition).
const PLANCK_H: f64 = 6.62607015e-34;
/// Speed of light in vacuum, m/s (exact).
const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Fine-structure constant (CODATA 2018).
const FINE_STRUCTURE: f64 = 7.2973525693e-3;
/// Planck length, m (CODATA 2018).
const PLANCK_LENGTH: f64 = 1.616255e-35;
/// Proton mass, kg (CODATA 2018).
const PROTON_MASS: f64 = 1.67262192369e-27;
/// Neutron mass, kg (CODATA 2018).
const NEUTRON_MASS: f64 = 1.67492749804e-27;
/// 1 keV in joules (exact, from the elementary charge).
const JOULE_PER_KEV: f64 = 1.602176634e-16;
/// Avogadro constant, 1/mol (exact).
const AVOGADRO: f64 = 6.02214076e23;
/// Gamma(2/3), stored as a high-precision literal so no special-function
/// implementation is needed at runtime.
const GAMMA_TWO_THIRDS: f64 = 1.3541179394264004169;

/// Energy unit a computation is carried out in.
///
/// Time is always seconds and length always meters; only the energy unit
/// ever varies between the SI derivation and the keV analysis system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyUnit {
    KiloElectronVolt,
    Joule,
}

/// Declared unit system for all spectral quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitSystem {
    pub energy: EnergyUnit,
}

impl UnitSystem {
    /// The analysis system: keV, seconds, meters.
    pub const ANALYSIS: UnitSystem = UnitSystem {
        energy: EnergyUnit::KiloElectronVolt,
    };

    /// Pure SI: joules, seconds, meters.
    pub const SI: UnitSystem = UnitSystem {
        energy: EnergyUnit::Joule,
    };
}

impl Default for UnitSystem {
    fn default() -> Self {
        UnitSystem::ANALYSIS
    }
}

/// Immutable CODATA-style constant set.
///
/// `t_p` is derived as `l_p / c` at construction so the two stay consistent
/// to machine precision; the CODATA rounding of t_p itself differs from
/// l_p/c at the 1e-8 level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Speed of light, m/s.
    pub c: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Fine-structure constant, dimensionless.
    pub alpha_fs: f64,
    /// Planck length, m.
    pub l_p: f64,
    /// Planck time, s.
    pub t_p: f64,
    /// Nucleon mass (average of proton and neutron), kg.
    pub m0: f64,
    /// Gamma(2/3), dimensionless.
    pub gamma_two_thirds: f64,
    /// keV per joule conversion factor.
    pub kev_per_joule: f64,
    /// Avogadro constant, 1/mol.
    pub avogadro: f64,
}

impl PhysicalConstants {
    /// The embedded CODATA 2018 snapshot.
    pub fn codata2018() -> Self {
        PhysicalConstants {
            c: SPEED_OF_LIGHT,
            hbar: PLANCK_H / (2.0 * PI),
            alpha_fs: FINE_STRUCTURE,
            l_p: PLANCK_LENGTH,
            t_p: PLANCK_LENGTH / SPEED_OF_LIGHT,
            m0: 0.5 * (PROTON_MASS + NEUTRON_MASS),
            gamma_two_thirds: GAMMA_TWO_THIRDS,
            kev_per_joule: 1.0 / JOULE_PER_KEV,
            avogadro: AVOGADRO,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants::codata2018()
    }
}

/// Rate constant beta_K = Gamma(2/3) alpha c^2 t_p^(4/3) / (sqrt(3) pi hbar^(1/3)).
///
/// In the analysis system the result carries m^2 keV^(-1/3) s^(-1), so that
/// dGamma/dE = Y N_at N_p^2 beta_K E^(-2/3) is in counts per keV per second
/// for Y in m^-2 and E in keV. In the SI system it carries m^2 J^(-1/3) s^(-1).
pub fn beta_k(constants: &PhysicalConstants, units: UnitSystem) -> f64 {
    let hbar = match units.energy {
        EnergyUnit::Joule => constants.hbar,
        EnergyUnit::KiloElectronVolt => constants.hbar * constants.kev_per_joule,
    };
    // t_p * cbrt(t_p) evaluates t_p^(4/3) with an exact exponent.
    let t_p_four_thirds = constants.t_p * constants.t_p.cbrt();
    constants.gamma_two_thirds * constants.alpha_fs * constants.c * constants.c * t_p_four_thirds
        / (3.0_f64.sqrt() * PI * hbar.cbrt())
}

/// Collapse rate lambda = t_p m0^2 c^4 / (4 hbar^2), in Hz.
pub fn collapse_rate_lambda(constants: &PhysicalConstants) -> f64 {
    let c2 = constants.c * constants.c;
    constants.t_p * constants.m0 * constants.m0 * c2 * c2
        / (4.0 * constants.hbar * constants.hbar)
}

/// Spontaneous-emission spectral rate of a single free proton,
/// beta_K / (R_K^2 E^(2/3)), in 1/(keV s) for the analysis system.
pub fn free_particle_rate(
    e_kev: f64,
    r_k_m: f64,
    constants: &PhysicalConstants,
    units: UnitSystem,
) -> Result<f64> {
    if !(e_kev > 0.0) {
        return Err(Error::domain(format!("energy must be > 0, got {e_kev}")));
    }
    if !(r_k_m > 0.0) {
        return Err(Error::domain(format!(
            "correlation length must be > 0, got {r_k_m}"
        )));
    }
    let e_two_thirds = (e_kev * e_kev).cbrt();
    Ok(beta_k(constants, units) / (r_k_m * r_k_m * e_two_thirds))
}

/// Emission rate of a collection of atoms: N_at (N_p^2 + N_e) times the
/// free-particle rate. The electron term is the full atomic formula; the
/// analysis default keeps it switched off (see the detector module).
pub fn atomic_rate(
    e_kev: f64,
    r_k_m: f64,
    n_atoms: f64,
    protons_per_atom: u32,
    electrons_per_atom: u32,
    constants: &PhysicalConstants,
    units: UnitSystem,
) -> Result<f64> {
    if !(n_atoms >= 0.0) {
        return Err(Error::domain(format!(
            "atom count must be >= 0, got {n_atoms}"
        )));
    }
    let np = protons_per_atom as f64;
    let weight = n_atoms * (np * np + electrons_per_atom as f64);
    Ok(weight * free_particle_rate(e_kev, r_k_m, constants, units)?)
}
