//! Background-gas collision losses of magnetically trapped atoms.
//!
//! A trapped atom is ejected when an elastic collision with a background-gas
//! particle transfers more than the trap depth. The loss rate is
//! `Gamma = sum_i n_i <sigma v>_i` over background species, with the
//! velocity-averaged loss cross section evaluated over the Maxwell-Boltzmann
//! distribution of the (much faster) background gas. A closed-form
//! approximation with the Slater-Kirkwood C6 coefficients covers the common
//! case and inverts cheaply for pressure inference from measured lifetimes.

use crate::consts::{amu_to_kg, c6_au_to_si, kelvin_to_joule, mbar_to_pascal, HBAR, K_B};
use crate::quadrature::{adaptive_simpson, semi_infinite, QuadratureError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossModelError {
    #[error("integration failed: {0}")]
    Integration(#[from] QuadratureError),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("decay fit needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("decay fit requires positive atom counts (sample {index} has N = {value})")]
    NonPositiveCount { index: usize, value: f64 },
    #[error("degenerate decay data: {reason}")]
    DegenerateFit { reason: String },
}

/// One background-gas species. Internally SI; constructors take the usual
/// boundary units (amu, atomic-unit C6, mbar).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GasSpecies {
    pub label: String,
    /// Mass (kg).
    pub mass: f64,
    /// Van der Waals C6 coefficient with the trapped species (J m^6).
    pub c6: f64,
    /// Partial pressure (mbar).
    pub partial_pressure: f64,
}

impl GasSpecies {
    pub fn from_boundary_units(
        label: impl Into<String>,
        mass_u: f64,
        c6_au: f64,
        partial_pressure_mbar: f64,
    ) -> Self {
        Self {
            label: label.into(),
            mass: amu_to_kg(mass_u),
            c6: c6_au_to_si(c6_au),
            partial_pressure: partial_pressure_mbar,
        }
    }

    /// Number density from the ideal-gas law at temperature `t` (1/m^3).
    pub fn density(&self, t: f64) -> f64 {
        mbar_to_pascal(self.partial_pressure) / (K_B * t)
    }
}

/// Trap-side inputs of the loss model.
#[derive(Debug, Clone)]
pub struct LossModelInput {
    /// Mass of the trapped atom (kg).
    pub trapped_mass: f64,
    /// Trap depth (J).
    pub trap_depth: f64,
    /// Background-gas temperature (K).
    pub background_temperature: f64,
    pub gas: Vec<GasSpecies>,
}

impl LossModelInput {
    pub fn validate(&self) -> Result<Vec<String>, LossModelError> {
        for (name, value) in [
            ("trapped_mass", self.trapped_mass),
            ("trap_depth", self.trap_depth),
            ("background_temperature", self.background_temperature),
        ] {
            if !(value > 0.0) {
                return Err(LossModelError::NonPositive { name, value });
            }
        }
        let mut warnings = Vec::new();
        let depth_k = self.trap_depth / K_B;
        if !(0.5..=2.0).contains(&depth_k) {
            warnings.push(format!(
                "trap depth {depth_k:.3} K is outside the usual 0.5-2 K range"
            ));
        }
        Ok(warnings)
    }

    pub fn reduced_mass(&self, gas: &GasSpecies) -> f64 {
        self.trapped_mass * gas.mass / (self.trapped_mass + gas.mass)
    }
}

/// Differential scattering probability |f(k, theta)|^2 (m^2/sr).
///
/// Analytic toy models plus a small-angle Van der Waals approximation; a
/// partial-wave amplitude from an interatomic potential can be slotted in as
/// [`AmplitudeModel::Custom`].
pub enum AmplitudeModel {
    /// |f|^2 = value, independent of k and theta.
    Isotropic { value: f64 },
    /// |f|^2 = value * cos^2(theta).
    CosineSquared { value: f64 },
    /// Classical small-angle scattering off V = -C6/r^6:
    /// |f|^2 = (1/6) (15 pi C6 / (16 E))^{1/3} theta^{-7/3} with E = (hbar k)^2 / (2 mu).
    /// Diverges for theta -> 0; use with a positive minimum angle.
    VanDerWaalsSmallAngle { c6: f64, reduced_mass: f64 },
    Custom(Box<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl AmplitudeModel {
    /// |f(k, theta)|^2 (m^2/sr).
    pub fn eval(&self, k: f64, theta: f64) -> f64 {
        match self {
            Self::Isotropic { value } => *value,
            Self::CosineSquared { value } => {
                let c = theta.cos();
                value * c * c
            }
            Self::VanDerWaalsSmallAngle { c6, reduced_mass } => {
                let energy = (HBAR * k) * (HBAR * k) / (2.0 * reduced_mass);
                let scale = (15.0 * std::f64::consts::PI * c6 / (16.0 * energy)).powf(1.0 / 3.0);
                scale / 6.0 * theta.powf(-7.0 / 3.0)
            }
            Self::Custom(f) => f(k, theta),
        }
    }
}

/// Kinetic energy transferred to a trapped atom at rest by an elastic
/// collision at relative speed `v_r` and scattering angle `theta` (J).
pub fn delta_e(reduced_mass: f64, trapped_mass: f64, v_r: f64, theta: f64) -> f64 {
    reduced_mass * reduced_mass / trapped_mass * v_r * v_r * (1.0 - theta.cos())
}

/// Smallest scattering angle that ejects the atom from a trap of depth
/// `trap_depth`.
///
/// The arccos argument 1 - M_a U / (mu^2 v_r^2) is clamped into [-1, 1]:
/// below -1 no collision at this speed can eject (returns pi, so the loss
/// cross section vanishes); the argument approaches +1 as the depth goes to
/// zero, where every collision ejects (returns 0).
pub fn theta_min(trap_depth: f64, reduced_mass: f64, trapped_mass: f64, v_r: f64) -> f64 {
    let arg = 1.0 - trapped_mass * trap_depth / (reduced_mass * reduced_mass * v_r * v_r);
    arg.clamp(-1.0, 1.0).acos()
}

/// Loss cross section: sigma = int_{theta_min}^{pi} 2 pi sin(theta) |f|^2 dtheta (m^2).
pub fn sigma_loss(
    model: &AmplitudeModel,
    k: f64,
    theta_min: f64,
) -> Result<f64, LossModelError> {
    if theta_min >= std::f64::consts::PI {
        return Ok(0.0);
    }
    let f = |theta: f64| 2.0 * std::f64::consts::PI * theta.sin() * model.eval(k, theta);
    Ok(adaptive_simpson(
        &f,
        theta_min,
        std::f64::consts::PI,
        1e-9,
    )?)
}

/// Velocity-averaged loss rate coefficient <sigma v> (m^3/s) against one
/// background species, treating the trapped atom as at rest (v_r ~ v_b).
///
/// The thermal average runs over the Maxwell-Boltzmann speed distribution of
/// the background gas, with the wavenumber k = mu v_b / hbar and the minimum
/// ejection angle recomputed at every speed. The semi-infinite integral is
/// truncated where the integrand falls below 1e-12 of its peak.
pub fn velocity_averaged_loss(
    model: &AmplitudeModel,
    input: &LossModelInput,
    gas: &GasSpecies,
) -> Result<f64, LossModelError> {
    let t = input.background_temperature;
    let mu = input.reduced_mass(gas);
    let alpha = gas.mass / (2.0 * K_B * t);
    let prefactor = (gas.mass / (2.0 * std::f64::consts::PI * K_B * t)).powf(1.5)
        * 4.0
        * std::f64::consts::PI;
    let integrand = |v: f64| -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let tm = theta_min(input.trap_depth, mu, input.trapped_mass, v);
        if tm >= std::f64::consts::PI {
            return 0.0;
        }
        let k = mu * v / HBAR;
        let sigma = sigma_loss(model, k, tm).unwrap_or(f64::NAN);
        sigma * v.powi(3) * (-alpha * v * v).exp()
    };
    // below this speed no collision can eject: M_a U >= 2 mu^2 v^2
    let v_eject = (input.trapped_mass * input.trap_depth / 2.0).sqrt() / mu;
    let v_peak = (3.0 * K_B * t / gas.mass).sqrt().max(v_eject * 1.0001);
    let value = semi_infinite(&integrand, v_eject, v_peak, 1e-12, 1e-8)?;
    if !value.is_finite() {
        return Err(LossModelError::Integration(QuadratureError::NoConvergence {
            a: v_eject,
            b: f64::INFINITY,
            depth: 0,
        }));
    }
    Ok(prefactor * value)
}

/// Total loss rate Gamma = sum_i n_i <sigma v>_i (1/s); densities from the
/// ideal-gas law at the background temperature.
pub fn gamma_total(input: &LossModelInput, sigma_v: &[f64]) -> f64 {
    input
        .gas
        .iter()
        .zip(sigma_v)
        .map(|(g, &sv)| g.density(input.background_temperature) * sv)
        .sum()
}

/// Closed-form loss rate for one species (1/s):
///
/// gamma_i = 6.8 P_i (k_B T)^{-2/3} (C6 / M_b)^{1/3} (U M_a)^{-1/6}
///
/// The formula is dimensionally coherent in SI with the dimensionless
/// constant 6.8 (classical small-angle Van der Waals scattering folded with
/// the thermal average); pressure converts from mbar at the boundary.
pub fn gamma_slater_kirkwood(gas: &GasSpecies, input: &LossModelInput) -> f64 {
    let p = mbar_to_pascal(gas.partial_pressure);
    let kt = K_B * input.background_temperature;
    6.8 * p * kt.powf(-2.0 / 3.0)
        * (gas.c6 / gas.mass).powf(1.0 / 3.0)
        * (input.trap_depth * input.trapped_mass).powf(-1.0 / 6.0)
}

/// Per-mbar loss rate of one species (1/s/mbar).
pub fn gamma_per_mbar(gas: &GasSpecies, input: &LossModelInput) -> f64 {
    let unit = GasSpecies {
        partial_pressure: 1.0,
        ..gas.clone()
    };
    gamma_slater_kirkwood(&unit, input)
}

/// Invert the closed form: partial pressure (mbar) of a single dominant
/// species producing the measured loss rate `gamma` (1/s).
pub fn pressure_from_lifetime(
    gamma: f64,
    gas: &GasSpecies,
    input: &LossModelInput,
) -> Result<f64, LossModelError> {
    if !(gamma > 0.0) {
        return Err(LossModelError::NonPositive {
            name: "gamma",
            value: gamma,
        });
    }
    Ok(gamma / gamma_per_mbar(gas, input))
}

/// Least-squares fit of N(t) = N0 exp(-Gamma t) in log space.
///
/// Returns (Gamma, N0). Two samples give the exact two-point solution.
pub fn lifetime_fit(samples: &[(f64, f64)]) -> Result<(f64, f64), LossModelError> {
    if samples.len() < 2 {
        return Err(LossModelError::TooFewSamples(samples.len()));
    }
    for (i, &(_, n)) in samples.iter().enumerate() {
        if !(n > 0.0) {
            return Err(LossModelError::NonPositiveCount { index: i, value: n });
        }
    }
    let m = samples.len() as f64;
    let mean_t = samples.iter().map(|s| s.0).sum::<f64>() / m;
    let mean_ln = samples.iter().map(|s| s.1.ln()).sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(t, n) in samples {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (n.ln() - mean_ln);
    }
    if sxx == 0.0 {
        return Err(LossModelError::DegenerateFit {
            reason: "all samples share the same hold time".into(),
        });
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Err(LossModelError::DegenerateFit {
            reason: format!("no decay in the data (fitted slope {slope:.3e} >= 0)"),
        });
    }
    let gamma = -slope;
    let n0 = (mean_ln - slope * mean_t).exp();
    Ok((gamma, n0))
}
