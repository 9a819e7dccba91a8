//! Jerk-limited motion profiles for the transport sections.
//!
//! Each section is a seven-segment S-curve: jerk-limited ramp to a velocity
//! plateau and a mirrored ramp down, with velocity and acceleration zero at
//! both ends. The ramp takes a configurable fraction of the section's
//! plateau-limited time `length / vmax`, so a section lasts
//! `(1 + ramp_fraction) * length / vmax`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("section {index}: {name} must be positive, got {value}")]
    BadParameter {
        index: usize,
        name: &'static str,
        value: f64,
    },
    #[error("section {index}: ramp_fraction must lie in (0, 1], got {value}")]
    BadRampFraction { index: usize, value: f64 },
    #[error("profile needs at least one section")]
    Empty,
}

pub const DEFAULT_RAMP_FRACTION: f64 = 0.1;

/// One transport section.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SectionSpec {
    /// Section length (m).
    pub length: f64,
    /// Plateau speed (m/s).
    pub vmax: f64,
    /// Fraction of `length/vmax` spent ramping (half at each end).
    #[serde(default = "default_ramp_fraction")]
    pub ramp_fraction: f64,
}

fn default_ramp_fraction() -> f64 {
    DEFAULT_RAMP_FRACTION
}

impl SectionSpec {
    pub fn new(length: f64, vmax: f64) -> Self {
        Self {
            length,
            vmax,
            ramp_fraction: DEFAULT_RAMP_FRACTION,
        }
    }
}

/// Constant-jerk segment: state evolves as a cubic in time.
#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    duration: f64,
    s0: f64,
    v0: f64,
    a0: f64,
    jerk: f64,
}

impl Segment {
    fn state_at(&self, t: f64) -> (f64, f64, f64, f64) {
        let dt = t - self.t0;
        let s = self.s0 + dt * (self.v0 + dt * (self.a0 / 2.0 + dt * self.jerk / 6.0));
        let v = self.v0 + dt * (self.a0 + dt * self.jerk / 2.0);
        let a = self.a0 + dt * self.jerk;
        (s, v, a, self.jerk)
    }

    fn end_state(&self) -> (f64, f64, f64) {
        let (s, v, a, _) = self.state_at(self.t0 + self.duration);
        (s, v, a)
    }
}

/// Per-section summary for reports.
#[derive(Debug, Clone, Serialize)]
pub struct SectionSummary {
    pub start_s: f64,
    pub length: f64,
    pub start_time: f64,
    pub duration: f64,
    pub peak_velocity: f64,
    pub peak_acceleration: f64,
    pub peak_jerk: f64,
}

/// Piecewise-polynomial motion profile covering all sections.
#[derive(Debug, Clone)]
pub struct MotionProfile {
    segments: Vec<Segment>,
    sections: Vec<SectionSummary>,
    total_duration: f64,
    total_length: f64,
}

/// Build the full profile. Sections join at rest (v = a = 0), which also
/// covers the right-angle corner between the horizontal and vertical runs.
pub fn build_profile(sections: &[SectionSpec]) -> Result<MotionProfile, MotionError> {
    if sections.is_empty() {
        return Err(MotionError::Empty);
    }
    let mut segments = Vec::new();
    let mut summaries = Vec::new();
    let mut t = 0.0;
    let mut s = 0.0;
    for (index, sec) in sections.iter().enumerate() {
        if !(sec.length > 0.0) {
            return Err(MotionError::BadParameter {
                index,
                name: "length",
                value: sec.length,
            });
        }
        if !(sec.vmax > 0.0) {
            return Err(MotionError::BadParameter {
                index,
                name: "vmax",
                value: sec.vmax,
            });
        }
        if !(sec.ramp_fraction > 0.0 && sec.ramp_fraction <= 1.0) {
            return Err(MotionError::BadRampFraction {
                index,
                value: sec.ramp_fraction,
            });
        }
        let t_plateau_limited = sec.length / sec.vmax;
        let tau = sec.ramp_fraction * t_plateau_limited;
        // ramp split into jerk / constant-acceleration / jerk thirds
        let tj = tau / 3.0;
        let ta = tau / 3.0;
        let a_pk = sec.vmax / (tj + ta);
        let jerk = a_pk / tj;
        let cruise = t_plateau_limited - tau;

        let start_time = t;
        let start_s = s;
        let plan: [(f64, f64); 7] = [
            (tj, jerk),
            (ta, 0.0),
            (tj, -jerk),
            (cruise, 0.0),
            (tj, -jerk),
            (ta, 0.0),
            (tj, jerk),
        ];
        let mut v = 0.0;
        let mut a = 0.0;
        for (duration, j) in plan {
            let seg = Segment {
                t0: t,
                duration,
                s0: s,
                v0: v,
                a0: a,
                jerk: j,
            };
            let (se, ve, ae) = seg.end_state();
            segments.push(seg);
            t += duration;
            s = se;
            v = ve;
            a = ae;
        }
        // The construction is exact up to rounding; snap the section end so
        // later sections do not accumulate drift.
        debug_assert!((s - (start_s + sec.length)).abs() < 1e-9 * sec.length.max(1.0));
        debug_assert!(v.abs() < 1e-12 * sec.vmax.max(1.0) && a.abs() < 1e-9);
        s = start_s + sec.length;
        if let Some(last) = segments.last_mut() {
            let correction = s - last.end_state().0;
            last.s0 += correction;
        }
        summaries.push(SectionSummary {
            start_s,
            length: sec.length,
            start_time,
            duration: t - start_time,
            peak_velocity: sec.vmax,
            peak_acceleration: a_pk,
            peak_jerk: jerk,
        });
    }
    Ok(MotionProfile {
        segments,
        sections: summaries,
        total_duration: t,
        total_length: s,
    })
}

impl MotionProfile {
    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn sections(&self) -> &[SectionSummary] {
        &self.sections
    }

    /// Position, velocity, acceleration and jerk at time `t`; clamped to the
    /// rest states outside `[0, total_duration]`.
    pub fn sample(&self, t: f64) -> (f64, f64, f64, f64) {
        if t <= 0.0 {
            return (0.0, 0.0, 0.0, 0.0);
        }
        if t >= self.total_duration {
            return (self.total_length, 0.0, 0.0, 0.0);
        }
        let idx = self
            .segments
            .partition_point(|seg| seg.t0 + seg.duration < t)
            .min(self.segments.len() - 1);
        self.segments[idx].state_at(t)
    }

    pub fn position(&self, t: f64) -> f64 {
        self.sample(t).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn paper_sections() -> Vec<SectionSpec> {
        vec![
            SectionSpec::new(0.33, 0.50),
            SectionSpec::new(0.30, 0.20),
            SectionSpec::new(0.10, 0.007),
        ]
    }

    #[test]
    fn three_section_transport_duration() {
        let p = build_profile(&paper_sections()).unwrap();
        // (0.66 + 1.5 + 14.286) * 1.1 = 18.09 s
        assert!((p.total_duration() - 18.0).abs() < 0.15 * 18.0);
        assert_relative_eq!(p.total_length(), 0.73, max_relative = 1e-12);
    }

    #[test]
    fn boundary_conditions_exact() {
        let p = build_profile(&[SectionSpec::new(0.2, 0.35)]).unwrap();
        let (s0, v0, a0, _) = p.sample(0.0);
        assert_eq!((s0, v0, a0), (0.0, 0.0, 0.0));
        let (s1, v1, a1, _) = p.sample(p.total_duration());
        assert_eq!(s1, 0.2);
        assert_eq!(v1, 0.0);
        assert_eq!(a1, 0.0);
    }

    #[test]
    fn final_section_crawl() {
        let p = build_profile(&[SectionSpec::new(0.10, 0.007)]).unwrap();
        // plateau-dominated: duration close to 0.10 / 0.007 = 14.3 s
        let ideal = 0.10 / 0.007;
        assert!((p.total_duration() - ideal) / ideal < 0.15);
        // integrate the sampled velocity as an independent distance check
        let n = 100_000;
        let h = p.total_duration() / n as f64;
        let mut dist = 0.0;
        for i in 0..n {
            let v0 = p.sample(i as f64 * h).1;
            let v1 = p.sample((i + 1) as f64 * h).1;
            dist += 0.5 * (v0 + v1) * h;
        }
        assert_relative_eq!(dist, 0.10, max_relative = 1e-6);
        // mid-plateau speed is the crawl speed
        assert_relative_eq!(
            p.sample(p.total_duration() / 2.0).1,
            0.007,
            max_relative = 1e-12
        );
    }

    #[test]
    fn kinematic_consistency_by_finite_differences() {
        let p = build_profile(&paper_sections()).unwrap();
        let h = 1e-7;
        for i in 1..400 {
            let t = p.total_duration() * i as f64 / 400.0;
            let (_, v, a, _) = p.sample(t);
            let sp = p.position(t + h);
            let sm = p.position(t - h);
            let v_fd = (sp - sm) / (2.0 * h);
            assert_relative_eq!(v, v_fd, max_relative = 1e-5, epsilon = 1e-7);
            let vp = p.sample(t + h).1;
            let vm = p.sample(t - h).1;
            let a_fd = (vp - vm) / (2.0 * h);
            assert_relative_eq!(a, a_fd, max_relative = 1e-4, epsilon = 1e-5);
        }
    }

    #[test]
    fn rejects_bad_sections() {
        assert!(matches!(build_profile(&[]), Err(MotionError::Empty)));
        assert!(build_profile(&[SectionSpec::new(0.0, 0.1)]).is_err());
        assert!(build_profile(&[SectionSpec::new(0.1, 0.0)]).is_err());
        let mut s = SectionSpec::new(0.1, 0.1);
        s.ramp_fraction = 1.5;
        assert!(build_profile(&[s]).is_err());
    }

    proptest! {
        #[test]
        fn profile_invariants(
            length in 0.01f64..2.0,
            vmax in 0.001f64..2.0,
            ramp in 0.02f64..1.0,
        ) {
            let p = build_profile(&[SectionSpec { length, vmax, ramp_fraction: ramp }]).unwrap();
            let n = 600;
            let mut prev_s = -1e-15;
            for i in 0..=n {
                let t = p.total_duration() * i as f64 / n as f64;
                let (s, v, _, _) = p.sample(t);
                // monotone position, no velocity overshoot
                prop_assert!(s >= prev_s - 1e-12 * length);
                prop_assert!(v <= vmax + 1e-12 * vmax.max(1.0));
                prop_assert!(v >= -1e-12);
                prev_s = s;
            }
            prop_assert!((p.total_length() - length).abs() < 1e-9 * length);
            // duration = (1 + ramp) * length / vmax by construction
            let expect = (1.0 + ramp) * length / vmax;
            prop_assert!((p.total_duration() - expect).abs() < 1e-9 * expect);
        }
    }
}
