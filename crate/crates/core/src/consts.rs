//! Physical constants (CODATA 2018) and unit conversions.
//!
//! Everything internal runs in SI. Gauss, G/cm, atomic units, amu, mbar and
//! kelvin-as-energy appear only at config/CLI boundaries, through the
//! conversion helpers below.

/// Vacuum permeability (T m / A).
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Boltzmann constant (J / K), exact.
pub const K_B: f64 = 1.380_649e-23;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Bohr radius (m).
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
/// Hartree energy (J).
pub const HARTREE: f64 = 4.359_744_722_207_1e-18;
/// Bohr magneton (J / T).
pub const MU_BOHR: f64 = 9.274_010_078_3e-24;

/// Atomic mass of rubidium-87 (kg).
pub const MASS_RB87: f64 = 86.909_180_531 * AMU;
/// Atomic mass of helium-4 (kg).
pub const MASS_HE4: f64 = 4.002_602 * AMU;

pub fn gauss_to_tesla(g: f64) -> f64 {
    g * 1e-4
}

pub fn tesla_to_gauss(t: f64) -> f64 {
    t * 1e4
}

pub fn gauss_per_cm_to_tesla_per_m(g: f64) -> f64 {
    g * 1e-2
}

pub fn tesla_per_m_to_gauss_per_cm(t: f64) -> f64 {
    t * 1e2
}

pub fn mbar_to_pascal(p: f64) -> f64 {
    p * 1e2
}

pub fn pascal_to_mbar(p: f64) -> f64 {
    p * 1e-2
}

pub fn amu_to_kg(m: f64) -> f64 {
    m * AMU
}

/// Van der Waals C6 coefficient, atomic units (Hartree * a0^6) to J m^6.
pub fn c6_au_to_si(c6: f64) -> f64 {
    c6 * HARTREE * BOHR_RADIUS.powi(6)
}

/// Trap depth or temperature expressed in kelvin to joules.
pub fn kelvin_to_joule(t: f64) -> f64 {
    t * K_B
}
