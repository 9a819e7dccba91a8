//! Test-particle transport simulation in the time-varying quadrupole field.
//!
//! Particles follow m dv/dt = -mu grad|B(r, t)| by velocity Verlet, with the
//! field evaluated from currents linearly interpolated between waveform
//! samples (so the integrator's field at sample times is exactly the
//! assembly field). Losses: an aperture cut at a configurable distance from
//! the instantaneous trap zero, an optional Majorana proxy (low field plus
//! non-adiabatic field rotation), and a deterministic background-gas
//! survival weight accumulated from per-stage lifetimes.
//!
//! Determinism: per-particle RNG streams derive from the master seed, and
//! reductions run in particle order, so results are bit-identical for a
//! fixed seed regardless of thread count.

use crate::coil::CoilArray;
use crate::field::{field_unchecked, find_field_zero, FieldError};
use crate::trapsolve::PathGeometry;
use crate::waveform::CurrentWaveform;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("field evaluation failed: {0}")]
    Field(#[from] FieldError),
    #[error("no trap zero under the initial currents: {0}")]
    NoInitialZero(String),
    #[error("ensemble needs at least one particle")]
    EmptyEnsemble,
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error(
        "time step {dt} s unstable: static-field self-test drifted by {drift:.2e} (guard {guard:.2e})"
    )]
    StepSize { dt: f64, drift: f64, guard: f64 },
    #[error("waveform is empty")]
    EmptyWaveform,
}

/// Magnetic and inertial properties of the trapped state.
#[derive(Debug, Clone, Copy)]
pub struct ParticleSpecies {
    /// Mass (kg).
    pub mass: f64,
    /// Effective magnetic moment m_F g_F mu_B of the trapped state (J/T);
    /// positive for weak-field seekers.
    pub magnetic_moment: f64,
}

/// Test-particle representation of the cloud.
#[derive(Debug, Clone)]
pub struct CloudEnsemble {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    /// Temperature the ensemble was drawn at (K).
    pub temperature: f64,
    pub seed: u64,
}

impl CloudEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Mean kinetic energy per particle (J).
    pub fn mean_kinetic_energy(&self, species: &ParticleSpecies) -> f64 {
        let sum: f64 = self
            .velocities
            .iter()
            .map(|v| 0.5 * species.mass * v.norm_squared())
            .sum();
        sum / self.len() as f64
    }
}

/// Draw a thermal ensemble in the instantaneous trap.
///
/// Positions sample the Boltzmann weight of the linearized trap potential
/// U = mu |J (r - r0)| (exact for the quadrupole near its zero, where the
/// cloud lives: the thermal radius k_B T / (mu g) is far smaller than any
/// coil scale here). Velocities are Maxwell-Boltzmann. For a fixed seed the
/// ensemble is identical on every run; each particle draws from its own
/// counter-based stream.
pub fn sample_ensemble(
    species: &ParticleSpecies,
    array: &CoilArray,
    initial_currents: &[f64],
    n: usize,
    temperature: f64,
    seed: u64,
    zero_guess: &Vector3<f64>,
) -> Result<CloudEnsemble, SimError> {
    if n == 0 {
        return Err(SimError::EmptyEnsemble);
    }
    let zero = find_field_zero(array, initial_currents, zero_guess, 100)
        .map_err(|e| SimError::NoInitialZero(e.to_string()))?;
    let (_, jac) = field_unchecked(array, initial_currents, &zero)?;
    let jac_inv = jac
        .try_inverse()
        .ok_or_else(|| SimError::NoInitialZero("degenerate gradient at the zero".into()))?;

    let kt = crate::consts::K_B * temperature;
    let sigma_v = (kt / species.mass).sqrt();
    let radial_scale = kt / species.magnetic_moment;

    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        // |B|-radius is Gamma(3)-distributed for a linear potential
        let mut u = 0.0;
        for _ in 0..3 {
            let r: f64 = loop {
                let r: f64 = rng.random();
                if r > 0.0 {
                    break r;
                }
            };
            u -= r.ln();
        }
        let dir: [f64; 3] = UnitSphere.sample(&mut rng);
        let b_target = radial_scale * u * Vector3::from_column_slice(&dir);
        positions.push(zero + jac_inv * b_target);
        let v: Vector3<f64> = Vector3::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ) * sigma_v;
        velocities.push(v);
    }
    Ok(CloudEnsemble {
        positions,
        velocities,
        temperature,
        seed,
    })
}

/// Why a particle left the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossCause {
    /// Strayed beyond the aperture radius around the instantaneous trap zero.
    Aperture,
    /// Entered the low-field region with the field direction rotating faster
    /// than the Larmor frequency (spin-flip proxy).
    MajoranaProxy,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossEvent {
    pub particle: usize,
    pub time: f64,
    pub position: [f64; 3],
    pub cause: LossCause,
}

/// Piecewise background-gas loss rate along the path.
#[derive(Debug, Clone, Serialize)]
pub struct LifetimeStage {
    pub from_s: f64,
    pub to_s: f64,
    /// 1/e lifetime in this stage (s).
    pub lifetime: f64,
}

#[derive(Debug, Clone)]
pub struct PropagateOptions {
    /// Integrator time step (s).
    pub dt: f64,
    /// Aperture radius around the instantaneous trap zero (m), if any.
    pub trap_radius: Option<f64>,
    /// Majorana proxy field floor (T); the proxy is off when `None`.
    pub majorana_b_floor: Option<f64>,
    /// Background-gas stages for the survival weight.
    pub stages: Vec<LifetimeStage>,
    /// Trap-zero track per waveform sample (for the aperture cut and the
    /// stage lookup); `None` freezes the trap at the initial zero.
    pub trap_track: Option<TrapTrack>,
    /// Energy-drift guard of the static-field self-test; `None` skips it.
    pub self_test_guard: Option<f64>,
    /// Square-root the retained fraction (round-trip efficiency convention).
    pub round_trip: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            trap_radius: Some(6.25e-3),
            majorana_b_floor: None,
            stages: Vec::new(),
            trap_track: None,
            self_test_guard: Some(1e-3),
            round_trip: false,
        }
    }
}

/// Trap-zero position and path coordinate per waveform sample.
#[derive(Debug, Clone)]
pub struct TrapTrack {
    pub s: Vec<f64>,
    pub points: Vec<Vector3<f64>>,
}

impl TrapTrack {
    /// Build from the motion profile's path coordinate at each sample time.
    pub fn from_path(
        path: &PathGeometry,
        s_of_t: impl Fn(f64) -> f64,
        waveform: &CurrentWaveform,
    ) -> Self {
        let n = waveform.samples.len();
        let mut s = Vec::with_capacity(n);
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let si = s_of_t(waveform.time_of(i));
            s.push(si);
            points.push(path.point_at(si));
        }
        Self { s, points }
    }

    fn at(&self, x: f64, n: usize) -> (f64, Vector3<f64>) {
        let i = (x as usize).min(n - 1);
        if i + 1 >= n {
            return (self.s[n - 1], self.points[n - 1]);
        }
        let f = x - i as f64;
        (
            self.s[i] * (1.0 - f) + self.s[i + 1] * f,
            self.points[i] * (1.0 - f) + self.points[i + 1] * f,
        )
    }
}

/// Result of one transport run.
#[derive(Debug, Clone, Serialize)]
pub struct TransportResult {
    pub initial_count: usize,
    /// Weighted surviving fraction (mechanical survival times gas weight).
    pub retained_fraction: f64,
    /// sqrt(retained) when the run was a round trip.
    pub epsilon: Option<f64>,
    /// Temperature proxy 2<E_kin>/(3 k_B) of the survivors (K).
    pub final_temperature_proxy: f64,
    pub loss_events: Vec<LossEvent>,
    /// Largest per-particle |E(end) - E(start)| / E(start); meaningful for
    /// static fields, where E = m v^2 / 2 + mu |B| is conserved.
    pub max_energy_drift: f64,
}

struct ParticleOutcome {
    alive: bool,
    weight: f64,
    kinetic: f64,
    drift: f64,
    event: Option<(f64, Vector3<f64>, LossCause)>,
}

/// Integrate the ensemble through the waveform.
pub fn propagate(
    species: &ParticleSpecies,
    array: &CoilArray,
    waveform: &CurrentWaveform,
    ensemble: &CloudEnsemble,
    options: &PropagateOptions,
) -> Result<TransportResult, SimError> {
    if !(options.dt > 0.0) {
        return Err(SimError::BadTimeStep(options.dt));
    }
    if waveform.samples.is_empty() {
        return Err(SimError::EmptyWaveform);
    }
    if ensemble.is_empty() {
        return Err(SimError::EmptyEnsemble);
    }
    if let Some(guard) = options.self_test_guard {
        static_self_test(species, array, waveform, ensemble, options.dt, guard)?;
    }
    let steps = (waveform.duration() / options.dt).round() as usize;
    run_steps(species, array, waveform, ensemble, options, steps)
}

/// A short frozen-field run; the integrator must conserve energy there.
fn static_self_test(
    species: &ParticleSpecies,
    array: &CoilArray,
    waveform: &CurrentWaveform,
    ensemble: &CloudEnsemble,
    dt: f64,
    guard: f64,
) -> Result<(), SimError> {
    let m = ensemble.len().min(16);
    let sub = CloudEnsemble {
        positions: ensemble.positions[..m].to_vec(),
        velocities: ensemble.velocities[..m].to_vec(),
        temperature: ensemble.temperature,
        seed: ensemble.seed,
    };
    let frozen = CurrentWaveform {
        sample_rate: waveform.sample_rate,
        channels: waveform.channels.clone(),
        samples: vec![waveform.samples[0].clone(), waveform.samples[0].clone()],
    };
    let opts = PropagateOptions {
        dt,
        trap_radius: None,
        majorana_b_floor: None,
        stages: Vec::new(),
        trap_track: None,
        self_test_guard: None,
        round_trip: false,
    };
    let steps = 500;
    let result = run_steps(species, array, &frozen, &sub, &opts, steps)?;
    if result.max_energy_drift > guard {
        return Err(SimError::StepSize {
            dt,
            drift: result.max_energy_drift,
            guard,
        });
    }
    Ok(())
}

fn run_steps(
    species: &ParticleSpecies,
    array: &CoilArray,
    waveform: &CurrentWaveform,
    ensemble: &CloudEnsemble,
    options: &PropagateOptions,
    steps: usize,
) -> Result<TransportResult, SimError> {
    let n = ensemble.len();
    let dt = options.dt;
    let mass = species.mass;
    let moment = species.magnetic_moment;
    let nrows = waveform.samples.len();
    let rate_dt = waveform.sample_rate * dt;
    let radius_sq = options.trap_radius.map(|r| r * r);
    let initial_zero = options
        .trap_track
        .as_ref()
        .map(|t| t.points[0])
        .unwrap_or_else(|| {
            // frozen trap: locate the zero once
            find_field_zero(array, &waveform.samples[0], &Vector3::zeros(), 100)
                .unwrap_or_else(|_| Vector3::zeros())
        });

    // per-sample gas loss rate from the stage table
    let gamma_of_s = |s: f64| -> f64 {
        options
            .stages
            .iter()
            .find(|st| s >= st.from_s && s <= st.to_s)
            .map(|st| 1.0 / st.lifetime)
            .unwrap_or(0.0)
    };

    const CHUNK: usize = 32;
    let chunk_results: Vec<Vec<ParticleOutcome>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut currents = vec![0.0; waveform.channels.len()];
            let mut outcomes = Vec::with_capacity(chunk.len());
            let mut pos: Vec<Vector3<f64>> =
                chunk.iter().map(|&i| ensemble.positions[i]).collect();
            let mut vel: Vec<Vector3<f64>> =
                chunk.iter().map(|&i| ensemble.velocities[i]).collect();
            let k = chunk.len();
            let mut alive = vec![true; k];
            let mut weight = vec![1.0_f64; k];
            let mut event: Vec<Option<(f64, Vector3<f64>, LossCause)>> = vec![None; k];
            let mut b_dir: Vec<Vector3<f64>> = vec![Vector3::zeros(); k];
            let mut force = vec![Vector3::zeros(); k];
            let mut energy0 = vec![0.0_f64; k];
            let mut drift = vec![0.0_f64; k];

            waveform.currents_at(0.0, &mut currents);
            for j in 0..k {
                let (b, jac) = field_unchecked(array, &currents, &pos[j]).unwrap();
                let bn = b.norm();
                energy0[j] = 0.5 * mass * vel[j].norm_squared() + moment * bn;
                let grad_mag = if bn > 0.0 {
                    jac.transpose() * (b / bn)
                } else {
                    Vector3::zeros()
                };
                force[j] = -moment * grad_mag;
                b_dir[j] = if bn > 0.0 { b / bn } else { Vector3::zeros() };
            }

            for step in 0..steps {
                let t_next = (step + 1) as f64 * dt;
                let x_next = (rate_dt * (step + 1) as f64).min((nrows - 1) as f64);
                // interpolate currents once per step for the whole chunk
                waveform.currents_at(t_next, &mut currents);
                let (s_next, trap_next) = match &options.trap_track {
                    Some(track) => track.at(x_next, nrows),
                    None => (0.0, initial_zero),
                };
                let gamma = gamma_of_s(s_next);
                let decay = if gamma > 0.0 { (-gamma * dt).exp() } else { 1.0 };

                for j in 0..k {
                    if !alive[j] {
                        continue;
                    }
                    // velocity Verlet
                    let half_v = vel[j] + 0.5 * dt / mass * force[j];
                    pos[j] += dt * half_v;
                    let (b, jac) = match field_unchecked(array, &currents, &pos[j]) {
                        Ok(v) => v,
                        Err(_) => {
                            // on-filament: treat as an aperture loss
                            alive[j] = false;
                            event[j] = Some((t_next, pos[j], LossCause::Aperture));
                            continue;
                        }
                    };
                    let bn = b.norm();
                    let new_force = if bn > 0.0 {
                        -moment * (jac.transpose() * (b / bn))
                    } else {
                        Vector3::zeros()
                    };
                    vel[j] = half_v + 0.5 * dt / mass * new_force;
                    force[j] = new_force;
                    weight[j] *= decay;

                    if let Some(r2) = radius_sq {
                        if (pos[j] - trap_next).norm_squared() > r2 {
                            alive[j] = false;
                            event[j] = Some((t_next, pos[j], LossCause::Aperture));
                            continue;
                        }
                    }
                    if let Some(floor) = options.majorana_b_floor {
                        if bn < floor && bn > 0.0 {
                            let dir = b / bn;
                            let cosang = dir.dot(&b_dir[j]).clamp(-1.0, 1.0);
                            let rotation = cosang.acos();
                            let larmor = moment * bn / crate::consts::HBAR;
                            if rotation > larmor * dt {
                                alive[j] = false;
                                event[j] = Some((t_next, pos[j], LossCause::MajoranaProxy));
                                continue;
                            }
                        }
                        if bn > 0.0 {
                            b_dir[j] = b / bn;
                        }
                    }
                }
            }

            waveform.currents_at(steps as f64 * dt, &mut currents);
            for j in 0..k {
                let kinetic = 0.5 * mass * vel[j].norm_squared();
                if alive[j] {
                    if let Ok((b, _)) = field_unchecked(array, &currents, &pos[j]) {
                        let e1 = kinetic + moment * b.norm();
                        if energy0[j] > 0.0 {
                            drift[j] = (e1 - energy0[j]).abs() / energy0[j];
                        }
                    }
                }
                outcomes.push(ParticleOutcome {
                    alive: alive[j],
                    weight: weight[j],
                    kinetic,
                    drift: drift[j],
                    event: event[j],
                });
            }
            outcomes
        })
        .collect();

    // deterministic reduction in particle order
    let mut retained = 0.0;
    let mut kinetic_sum = 0.0;
    let mut survivors = 0usize;
    let mut max_drift: f64 = 0.0;
    let mut loss_events = Vec::new();
    let mut particle = 0usize;
    for chunk in &chunk_results {
        for o in chunk {
            if o.alive {
                retained += o.weight;
                kinetic_sum += o.kinetic;
                survivors += 1;
                max_drift = max_drift.max(o.drift);
            } else if let Some((time, p, cause)) = o.event {
                loss_events.push(LossEvent {
                    particle,
                    time,
                    position: [p.x, p.y, p.z],
                    cause,
                });
            }
            particle += 1;
        }
    }
    let retained_fraction = retained / n as f64;
    let final_temperature_proxy = if survivors > 0 {
        2.0 * (kinetic_sum / survivors as f64) / (3.0 * crate::consts::K_B)
    } else {
        0.0
    };
    Ok(TransportResult {
        initial_count: n,
        retained_fraction,
        epsilon: options.round_trip.then(|| retained_fraction.sqrt()),
        final_temperature_proxy,
        loss_events,
        max_energy_drift: max_drift,
    })
}
