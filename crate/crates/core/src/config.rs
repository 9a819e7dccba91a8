//! Declarative run configuration.
//!
//! One TOML file describes the coil array, the transport path and window
//! schedule, the trapped species, the simulation parameters and the
//! background-gas loss model. All physical quantities carry explicit unit
//! suffixes; conversion to SI happens here, once.

use crate::cloudsim::{LifetimeStage, ParticleSpecies};
use crate::coil::{CoilArray, CoilError, CoilSpec};
use crate::consts::{amu_to_kg, gauss_per_cm_to_tesla_per_m, gauss_to_tesla, kelvin_to_joule, MU_BOHR};
use crate::lossmodel::{GasSpecies, LossModelInput};
use crate::motion::SectionSpec;
use crate::trapsolve::{PairChannel, PathGeometry, Schedule, SweepOptions, Window};
use nalgebra::Vector3;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path:?}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("coil array: {0}")]
    Coils(#[from] CoilError),
    #[error("config field {field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub path: RawPath,
    pub transport: RawTransport,
    #[serde(default)]
    pub motion: RawMotion,
    pub coils: Vec<RawCoil>,
    #[serde(default)]
    pub pairs: Vec<RawPair>,
    pub schedule: RawSchedule,
    pub species: RawSpecies,
    pub simulation: RawSimulation,
    pub lossmodel: RawLossModel,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPath {
    pub corner_m: f64,
    pub total_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTransport {
    #[serde(rename = "gradient_G_per_cm")]
    pub gradient_g_per_cm: f64,
    #[serde(rename = "initial_gradient_G_per_cm")]
    pub initial_gradient_g_per_cm: f64,
    /// Transverse gradient ratio; omitted = computed from the initial trap.
    pub aspect_ratio: Option<f64>,
    #[serde(default = "default_step_m")]
    pub step_m: f64,
    #[serde(default = "default_max_step_current", rename = "max_step_current_A")]
    pub max_step_current_a: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tolerance: f64,
    pub sections: Vec<RawSection>,
    #[serde(default = "default_mot_ramp")]
    pub mot_ramp_s: f64,
}

fn default_step_m() -> f64 {
    0.001
}
fn default_max_step_current() -> f64 {
    0.5
}
fn default_residual_tol() -> f64 {
    1e-6
}
fn default_mot_ramp() -> f64 {
    0.4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSection {
    pub length_m: f64,
    pub vmax_m_per_s: f64,
    pub ramp_fraction: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMotion {
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    /// Per-channel |dI/dt| limit (A/s), if enforced.
    #[serde(rename = "slew_limit_A_per_s")]
    pub slew_limit_a_per_s: Option<f64>,
}

impl Default for RawMotion {
    fn default() -> Self {
        Self {
            sample_rate_hz: default_sample_rate(),
            slew_limit_a_per_s: None,
        }
    }
}

fn default_sample_rate() -> f64 {
    1000.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCoil {
    pub name: String,
    pub center_m: [f64; 3],
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    pub radius_m: f64,
    pub windings: u32,
    #[serde(default = "default_polarity")]
    pub polarity: i8,
    #[serde(rename = "max_current_A")]
    pub max_current_a: f64,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn default_polarity() -> i8 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPair {
    pub coils: [String; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub horizontal: Vec<RawHorizontalWindow>,
    pub vertical: Vec<RawVerticalWindow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHorizontalWindow {
    pub s_end_m: f64,
    /// Three two-coil anti-Helmholtz channels, by coil name.
    pub pairs: Vec<[String; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVerticalWindow {
    pub s_end_m: f64,
    pub coils: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpecies {
    pub mass_u: f64,
    /// Effective moment of the trapped state in Bohr magnetons.
    pub magnetic_moment_bohr: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimulation {
    pub particle_count: usize,
    #[serde(rename = "temperature_uK")]
    pub temperature_uk: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub seed: u64,
    #[serde(default = "default_trap_radius")]
    pub trap_radius_mm: f64,
    #[serde(default)]
    pub majorana_enabled: bool,
    #[serde(default = "default_b_floor", rename = "majorana_b_floor_G")]
    pub majorana_b_floor_g: f64,
    #[serde(default)]
    pub lifetime_stages: Vec<RawStage>,
    #[serde(default)]
    pub efficiency_cut_positions_m: Vec<f64>,
}

fn default_dt() -> f64 {
    1e-5
}
fn default_trap_radius() -> f64 {
    6.25
}
fn default_b_floor() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStage {
    pub from_m: f64,
    pub to_m: f64,
    pub lifetime_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLossModel {
    #[serde(rename = "trap_depth_K")]
    pub trap_depth_k: f64,
    #[serde(rename = "background_temperature_K")]
    pub background_temperature_k: f64,
    pub gas: Vec<RawGas>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGas {
    pub label: String,
    pub mass_u: f64,
    pub c6_au: f64,
    pub partial_pressure_mbar: f64,
}

/// Fully validated configuration in SI units.
#[derive(Debug)]
pub struct RunConfig {
    pub array: CoilArray,
    pub path: PathGeometry,
    pub schedule: Schedule,
    pub sweep: SweepOptions,
    /// Aspect ratio as configured; `None` means derive from the initial trap.
    pub aspect_ratio_override: Option<f64>,
    pub initial_gradient: f64,
    pub step: f64,
    pub sections: Vec<SectionSpec>,
    pub mot_ramp: f64,
    pub sample_rate: f64,
    pub slew_limit: Option<f64>,
    pub species: ParticleSpecies,
    pub particle_count: usize,
    pub temperature: f64,
    pub dt: f64,
    pub seed: u64,
    pub trap_radius: f64,
    pub majorana_b_floor: Option<f64>,
    pub stages: Vec<LifetimeStage>,
    pub efficiency_cuts: Vec<f64>,
    pub loss: LossModelInput,
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::build(raw)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    fn build(raw: RawConfig) -> Result<Self, ConfigError> {
        if !(raw.path.corner_m > 0.0 && raw.path.total_m > raw.path.corner_m) {
            return Err(invalid("path", "need 0 < corner_m < total_m"));
        }
        let coils: Vec<CoilSpec> = raw
            .coils
            .iter()
            .map(|c| CoilSpec {
                name: c.name.clone(),
                center: Vector3::from_column_slice(&c.center_m),
                axis: Vector3::from_column_slice(&c.axis),
                radius: c.radius_m,
                windings: c.windings,
                polarity: c.polarity,
                max_current: c.max_current_a,
            })
            .collect();
        let name_index = |name: &str| -> Result<usize, ConfigError> {
            coils
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| invalid("coils", format!("unknown coil name {name:?}")))
        };
        let mut pair_indices = Vec::new();
        for p in &raw.pairs {
            pair_indices.push([name_index(&p.coils[0])?, name_index(&p.coils[1])?]);
        }
        let array = CoilArray::new(coils, pair_indices)?;

        let mut segments = Vec::new();
        for w in &raw.schedule.horizontal {
            let mut chans = Vec::new();
            for [a, b] in &w.pairs {
                chans.push(PairChannel {
                    a: array.index_of(a)?,
                    b: array.index_of(b)?,
                });
            }
            if chans.len() != 3 {
                return Err(invalid(
                    "schedule.horizontal",
                    format!("window ending at {} needs 3 pairs", w.s_end_m),
                ));
            }
            segments.push((w.s_end_m, Window::Pairs(chans)));
        }
        for w in &raw.schedule.vertical {
            let mut chans = Vec::new();
            for name in &w.coils {
                chans.push(array.index_of(name)?);
            }
            if chans.len() != 4 && chans.len() != 3 {
                return Err(invalid(
                    "schedule.vertical",
                    format!("window ending at {} needs 3 or 4 coils", w.s_end_m),
                ));
            }
            segments.push((w.s_end_m, Window::Coils(chans)));
        }
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        if segments
            .last()
            .is_none_or(|(end, _)| *end < raw.path.total_m - 1e-12)
        {
            return Err(invalid(
                "schedule",
                "windows do not cover the full path length",
            ));
        }
        let schedule = Schedule { segments };

        for (field, value) in [
            ("transport.gradient_G_per_cm", raw.transport.gradient_g_per_cm),
            (
                "transport.initial_gradient_G_per_cm",
                raw.transport.initial_gradient_g_per_cm,
            ),
            ("transport.step_m", raw.transport.step_m),
            ("transport.residual_tolerance", raw.transport.residual_tolerance),
            ("motion.sample_rate_hz", raw.motion.sample_rate_hz),
            ("simulation.dt_s", raw.simulation.dt_s),
            ("lossmodel.trap_depth_K", raw.lossmodel.trap_depth_k),
            (
                "lossmodel.background_temperature_K",
                raw.lossmodel.background_temperature_k,
            ),
        ] {
            if !(value > 0.0) {
                return Err(invalid(field, format!("must be positive, got {value}")));
            }
        }
        if raw.transport.sections.is_empty() {
            return Err(invalid("transport.sections", "at least one section"));
        }
        let section_total: f64 = raw.transport.sections.iter().map(|s| s.length_m).sum();
        if (section_total - raw.path.total_m).abs() > 1e-9 {
            return Err(invalid(
                "transport.sections",
                format!(
                    "section lengths sum to {section_total} m but the path is {} m",
                    raw.path.total_m
                ),
            ));
        }
        let sections = raw
            .transport
            .sections
            .iter()
            .map(|s| SectionSpec {
                length: s.length_m,
                vmax: s.vmax_m_per_s,
                ramp_fraction: s.ramp_fraction.unwrap_or(crate::motion::DEFAULT_RAMP_FRACTION),
            })
            .collect();

        let species = ParticleSpecies {
            mass: amu_to_kg(raw.species.mass_u),
            magnetic_moment: raw.species.magnetic_moment_bohr * MU_BOHR,
        };
        if !(species.mass > 0.0 && species.magnetic_moment > 0.0) {
            return Err(invalid("species", "mass and moment must be positive"));
        }
        let stages = raw
            .simulation
            .lifetime_stages
            .iter()
            .map(|s| LifetimeStage {
                from_s: s.from_m,
                to_s: s.to_m,
                lifetime: s.lifetime_s,
            })
            .collect();
        let gas = raw
            .lossmodel
            .gas
            .iter()
            .map(|g| {
                GasSpecies::from_boundary_units(
                    g.label.clone(),
                    g.mass_u,
                    g.c6_au,
                    g.partial_pressure_mbar,
                )
            })
            .collect();
        let loss = LossModelInput {
            trapped_mass: species.mass,
            trap_depth: kelvin_to_joule(raw.lossmodel.trap_depth_k),
            background_temperature: raw.lossmodel.background_temperature_k,
            gas,
        };

        Ok(Self {
            array,
            path: PathGeometry {
                corner: raw.path.corner_m,
                total: raw.path.total_m,
            },
            schedule,
            sweep: SweepOptions {
                gradient: gauss_per_cm_to_tesla_per_m(raw.transport.gradient_g_per_cm),
                aspect_ratio: raw.transport.aspect_ratio.unwrap_or(1.0),
                max_step_current: raw.transport.max_step_current_a,
                residual_tolerance: raw.transport.residual_tolerance,
            },
            aspect_ratio_override: raw.transport.aspect_ratio,
            initial_gradient: gauss_per_cm_to_tesla_per_m(
                raw.transport.initial_gradient_g_per_cm,
            ),
            step: raw.transport.step_m,
            sections,
            mot_ramp: raw.transport.mot_ramp_s,
            sample_rate: raw.motion.sample_rate_hz,
            slew_limit: raw.motion.slew_limit_a_per_s,
            species,
            particle_count: raw.simulation.particle_count,
            temperature: raw.simulation.temperature_uk * 1e-6,
            dt: raw.simulation.dt_s,
            seed: raw.simulation.seed,
            trap_radius: raw.simulation.trap_radius_mm * 1e-3,
            majorana_b_floor: raw
                .simulation
                .majorana_enabled
                .then(|| gauss_to_tesla(raw.simulation.majorana_b_floor_g)),
            stages,
            efficiency_cuts: raw.simulation.efficiency_cut_positions_m.clone(),
            loss,
        })
    }

    /// The first horizontal window's first pair: the initial (MOT) trap coils.
    pub fn initial_pair(&self) -> Result<PairChannel, ConfigError> {
        match self.schedule.segments.first() {
            Some((_, Window::Pairs(pairs))) => Ok(pairs[0]),
            _ => Err(invalid("schedule", "first window must be horizontal")),
        }
    }

    /// Channel current of the initial pair producing the initial gradient.
    pub fn initial_current(&self) -> Result<f64, ConfigError> {
        let pair = self.initial_pair()?;
        let mut unit = vec![0.0; self.array.len()];
        let (sa, sb) = pair.signs(&self.array);
        unit[pair.a] = sa;
        unit[pair.b] = sb;
        let (_, jac) = crate::field::field_unchecked(&self.array, &unit, &Vector3::zeros())
            .map_err(|e| invalid("coils", e.to_string()))?;
        let per_amp = jac[(2, 2)];
        if per_amp.abs() < 1e-12 {
            return Err(invalid("schedule", "initial pair produces no gradient"));
        }
        Ok(self.initial_gradient / per_amp)
    }

    /// Per-coil currents of the initial trap.
    pub fn initial_currents(&self) -> Result<Vec<f64>, ConfigError> {
        let pair = self.initial_pair()?;
        let current = self.initial_current()?;
        let mut out = vec![0.0; self.array.len()];
        let (sa, sb) = pair.signs(&self.array);
        out[pair.a] = sa * current;
        out[pair.b] = sb * current;
        Ok(out)
    }

    /// Aspect ratio in force: the configured override, or the ratio of
    /// transverse gradients of the initial trap (1 for an axisymmetric pair).
    pub fn aspect_ratio(&self) -> Result<f64, ConfigError> {
        if let Some(a) = self.aspect_ratio_override {
            return Ok(a);
        }
        let currents = self.initial_currents()?;
        let (_, jac) = crate::field::field_unchecked(&self.array, &currents, &Vector3::zeros())
            .map_err(|e| invalid("coils", e.to_string()))?;
        if jac[(0, 0)].abs() < 1e-15 {
            return Err(invalid("transport.aspect_ratio", "degenerate initial trap"));
        }
        Ok(jac[(1, 1)] / jac[(0, 0)])
    }
}

/// The canonical twenty-coil example layout shipped with the crate.
pub const EXAMPLE_CONFIG: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/conveyor20.toml"));

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses_and_validates() {
        let cfg = RunConfig::from_str(EXAMPLE_CONFIG).unwrap();
        assert_eq!(cfg.array.len(), 20);
        assert_eq!(cfg.path.corner, 0.33);
        assert_eq!(cfg.path.total, 0.73);
        assert_eq!(cfg.sections.len(), 3);
        assert!(cfg.loss.validate().unwrap().is_empty());
        // MOT current lands near the prototype value for 90 G/cm
        let i0 = cfg.initial_current().unwrap();
        assert!((i0.abs() - 44.485).abs() < 0.1, "I_MOT = {i0}");
        // aspect ratio of the axisymmetric initial pair is 1
        let a = cfg.aspect_ratio().unwrap();
        assert!((a - 1.0).abs() < 1e-9, "A = {a}");
    }

    #[test]
    fn malformed_config_reports_field() {
        let err = RunConfig::from_str("[path]\ncorner_m = 1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));

        let mut text = EXAMPLE_CONFIG.to_string();
        text = text.replace("gradient_G_per_cm = 120.0", "gradient_G_per_cm = -5.0");
        let err = RunConfig::from_str(&text).unwrap_err();
        match err {
            ConfigError::Invalid { field, .. } => {
                assert!(field.contains("gradient"), "field = {field}")
            }
            other => panic!("unexpected {other}"),
        }
    }
}
