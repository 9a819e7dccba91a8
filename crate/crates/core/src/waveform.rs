//! Mapping spatial current profiles onto time-domain waveforms.
//!
//! The solver produces currents as a function of the path coordinate s; the
//! motion profile supplies s(t). Composition uses shape-preserving monotone
//! cubic interpolation (Fritsch-Carlson) of the spatial table per channel,
//! so interpolated currents never overshoot between samples.

use crate::motion::MotionProfile;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("spatial profile needs at least two samples")]
    TooFewSamples,
    #[error("spatial samples must be strictly increasing in s")]
    NotMonotone,
    #[error("channel count mismatch: table has {expected} channels, row has {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("profile reaches s = {needed} m outside the covered range [{lo}, {hi}] m")]
    CoverageGap { needed: f64, lo: f64, hi: f64 },
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error(
        "slew limit exceeded on channel {channel:?} at t = {time} s: |dI/dt| = {slew} A/s > {limit} A/s"
    )]
    SlewViolation {
        channel: String,
        time: f64,
        slew: f64,
        limit: f64,
    },
    #[error("malformed waveform data: {0}")]
    Parse(String),
}

/// Per-channel currents tabulated against the path coordinate.
#[derive(Debug, Clone)]
pub struct SpatialCurrentTable {
    pub s: Vec<f64>,
    pub channels: Vec<String>,
    /// `currents[i][c]` = channel c at s[i] (A).
    pub currents: Vec<Vec<f64>>,
}

impl SpatialCurrentTable {
    pub fn validate(&self) -> Result<(), WaveformError> {
        if self.s.len() < 2 {
            return Err(WaveformError::TooFewSamples);
        }
        if !self.s.windows(2).all(|w| w[1] > w[0]) {
            return Err(WaveformError::NotMonotone);
        }
        for row in &self.currents {
            if row.len() != self.channels.len() {
                return Err(WaveformError::ChannelMismatch {
                    expected: self.channels.len(),
                    got: row.len(),
                });
            }
        }
        Ok(())
    }

    /// Tabular text form (columns `s_m, I_<ch>_A, ...`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s_m");
        for ch in &self.channels {
            out.push_str(&format!(",I_{ch}_A"));
        }
        out.push('\n');
        for (s, row) in self.s.iter().zip(&self.currents) {
            out.push_str(&format!("{s}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, WaveformError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| WaveformError::Parse("empty file".into()))?;
        let mut cols = header.split(',');
        let first = cols.next().unwrap_or_default();
        if first != "s_m" {
            return Err(WaveformError::Parse(format!(
                "expected first column s_m, got {first:?}"
            )));
        }
        let channels: Vec<String> = cols
            .map(|c| {
                c.strip_prefix("I_")
                    .and_then(|c| c.strip_suffix("_A"))
                    .map(str::to_string)
                    .ok_or_else(|| WaveformError::Parse(format!("bad channel column {c:?}")))
            })
            .collect::<Result<_, _>>()?;
        let mut s = Vec::new();
        let mut currents = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let sval: f64 = it
                .next()
                .unwrap()
                .parse()
                .map_err(|e| WaveformError::Parse(format!("line {}: {e}", ln + 2)))?;
            let row: Vec<f64> = it
                .map(|v| {
                    v.parse()
                        .map_err(|e| WaveformError::Parse(format!("line {}: {e}", ln + 2)))
                })
                .collect::<Result<_, _>>()?;
            if row.len() != channels.len() {
                return Err(WaveformError::ChannelMismatch {
                    expected: channels.len(),
                    got: row.len(),
                });
            }
            s.push(sval);
            currents.push(row);
        }
        Ok(Self {
            s,
            channels,
            currents,
        })
    }
}

/// Monotone (Fritsch-Carlson) cubic interpolant on a fixed grid.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let mut delta = vec![0.0; n - 1];
        for i in 0..n - 1 {
            delta[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        }
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            m[i] = if delta[i - 1] * delta[i] > 0.0 {
                // harmonic mean keeps the interpolant monotone on the interval
                let w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
                let w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
                (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i])
            } else {
                0.0
            };
        }
        // clamp endpoint slopes (Fritsch-Carlson boundary treatment)
        for (i, d) in [(0usize, delta[0]), (n - 1, delta[n - 2])] {
            if d == 0.0 {
                m[i] = 0.0;
            } else if m[i] / d < 0.0 {
                m[i] = 0.0;
            } else if (m[i] / d).abs() > 3.0 {
                m[i] = 3.0 * d;
            }
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            slope: m,
        }
    }

    pub fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if xq <= self.x[0] {
            return self.y[0];
        }
        if xq >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= xq).saturating_sub(1);
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }
}

/// Time-sampled per-channel currents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentWaveform {
    /// Samples per second (Hz).
    pub sample_rate: f64,
    pub channels: Vec<String>,
    /// `samples[i][c]` = channel c at t = i / sample_rate (A).
    pub samples: Vec<Vec<f64>>,
}

impl CurrentWaveform {
    pub fn duration(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.samples.len() - 1) as f64 / self.sample_rate
        }
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate
    }

    /// Linear interpolation between rows at time `t` (clamped).
    pub fn currents_at(&self, t: f64, out: &mut [f64]) {
        let n = self.samples.len();
        debug_assert_eq!(out.len(), self.channels.len());
        if n == 0 {
            out.fill(0.0);
            return;
        }
        let x = (t * self.sample_rate).max(0.0);
        let i = (x as usize).min(n - 1);
        if i + 1 >= n {
            out.copy_from_slice(&self.samples[n - 1]);
            return;
        }
        let f = x - i as f64;
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.samples[i][k] * (1.0 - f) + self.samples[i + 1][k] * f;
        }
    }

    /// Worst per-channel slew rate |dI/dt| and where it occurs.
    pub fn max_slew(&self) -> Option<(String, f64, f64)> {
        let dt = 1.0 / self.sample_rate;
        let mut worst: Option<(String, f64, f64)> = None;
        for i in 1..self.samples.len() {
            for (c, ch) in self.channels.iter().enumerate() {
                let slew = (self.samples[i][c] - self.samples[i - 1][c]).abs() / dt;
                if worst.as_ref().is_none_or(|w| slew > w.2) {
                    worst = Some((ch.clone(), self.time_of(i), slew));
                }
            }
        }
        worst
    }

    /// Bit-exact CSV (header `t_s`, one column per channel).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s");
        for ch in &self.channels {
            out.push_str(&format!(",I_{ch}_A"));
        }
        out.push('\n');
        for (i, row) in self.samples.iter().enumerate() {
            out.push_str(&format!("{}", self.time_of(i)));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, WaveformError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| WaveformError::Parse("empty file".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("t_s") {
            return Err(WaveformError::Parse("expected first column t_s".into()));
        }
        let channels: Vec<String> = cols
            .map(|c| {
                c.strip_prefix("I_")
                    .and_then(|c| c.strip_suffix("_A"))
                    .map(str::to_string)
                    .ok_or_else(|| WaveformError::Parse(format!("bad channel column {c:?}")))
            })
            .collect::<Result<_, _>>()?;
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let t: f64 = it
                .next()
                .unwrap()
                .parse()
                .map_err(|e| WaveformError::Parse(format!("line {}: {e}", ln + 2)))?;
            let row: Vec<f64> = it
                .map(|v| {
                    v.parse()
                        .map_err(|e| WaveformError::Parse(format!("line {}: {e}", ln + 2)))
                })
                .collect::<Result<_, _>>()?;
            if row.len() != channels.len() {
                return Err(WaveformError::ChannelMismatch {
                    expected: channels.len(),
                    got: row.len(),
                });
            }
            times.push(t);
            samples.push(row);
        }
        let sample_rate = if times.len() >= 2 {
            let dt = times[1] - times[0];
            if dt <= 0.0 {
                return Err(WaveformError::Parse("non-increasing time column".into()));
            }
            1.0 / dt
        } else {
            1.0
        };
        Ok(Self {
            sample_rate,
            channels,
            samples,
        })
    }
}

/// Optional ramp prepended to the waveform: the initial-trap currents fade
/// linearly into the transport solution at s = 0 while the trap stays put.
#[derive(Debug, Clone)]
pub struct HandoffRamp {
    pub duration: f64,
    pub initial_currents: Vec<f64>,
}

/// Options for [`map_to_time`].
#[derive(Debug, Clone, Default)]
pub struct MapOptions {
    pub handoff: Option<HandoffRamp>,
    /// Per-channel |dI/dt| limit (A/s); violation reports the worst time.
    pub slew_limit: Option<f64>,
    /// Return to s = 0 after reaching the end (round-trip transport).
    pub round_trip: bool,
}

/// Compose the spatial currents with the motion profile: I_i(t) = I_i(s(t)).
///
/// Row count is `ceil(duration * rate) + 1`; the final rows clamp to the
/// profile's end state. With `round_trip` the motion retraces itself,
/// s(t) = s_profile(min(t, 2T - t)), doubling the duration.
pub fn map_to_time(
    profile: &MotionProfile,
    spatial: &SpatialCurrentTable,
    sample_rate: f64,
    options: &MapOptions,
) -> Result<CurrentWaveform, WaveformError> {
    if !(sample_rate > 0.0) {
        return Err(WaveformError::BadSampleRate(sample_rate));
    }
    spatial.validate()?;
    let (lo, hi) = (spatial.s[0], *spatial.s.last().unwrap());
    for probe in [0.0, profile.total_length()] {
        if probe < lo - 1e-12 || probe > hi + 1e-12 {
            return Err(WaveformError::CoverageGap {
                needed: probe,
                lo,
                hi,
            });
        }
    }
    let nch = spatial.channels.len();
    let splines: Vec<MonotoneCubic> = (0..nch)
        .map(|c| {
            let col: Vec<f64> = spatial.currents.iter().map(|row| row[c]).collect();
            MonotoneCubic::new(&spatial.s, &col)
        })
        .collect();

    if let Some(h) = &options.handoff {
        if h.initial_currents.len() != nch {
            return Err(WaveformError::ChannelMismatch {
                expected: nch,
                got: h.initial_currents.len(),
            });
        }
    }
    let ramp = options.handoff.as_ref().map_or(0.0, |h| h.duration);
    let travel = if options.round_trip {
        2.0 * profile.total_duration()
    } else {
        profile.total_duration()
    };
    let duration = ramp + travel;
    let rows = (duration * sample_rate).ceil() as usize + 1;

    let at_start: Vec<f64> = splines.iter().map(|sp| sp.eval(0.0)).collect();
    let mut samples = Vec::with_capacity(rows);
    for i in 0..rows {
        let t = i as f64 / sample_rate;
        let row: Vec<f64> = if t < ramp {
            let f = t / ramp;
            let init = &options.handoff.as_ref().unwrap().initial_currents;
            (0..nch)
                .map(|c| init[c] * (1.0 - f) + at_start[c] * f)
                .collect()
        } else {
            let tp = t - ramp;
            let tp = if options.round_trip {
                tp.min(travel - tp).max(0.0)
            } else {
                tp
            };
            let s = profile.position(tp);
            splines.iter().map(|sp| sp.eval(s)).collect()
        };
        samples.push(row);
    }
    let wf = CurrentWaveform {
        sample_rate,
        channels: spatial.channels.clone(),
        samples,
    };
    if let Some(limit) = options.slew_limit {
        if let Some((channel, time, slew)) = wf.max_slew() {
            if slew > limit {
                return Err(WaveformError::SlewViolation {
                    channel,
                    time,
                    slew,
                    limit,
                });
            }
        }
    }
    Ok(wf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{build_profile, SectionSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table_two_channels() -> SpatialCurrentTable {
        let s: Vec<f64> = (0..=100).map(|i| i as f64 * 0.005).collect();
        let currents = s
            .iter()
            .map(|&sv| vec![30.0 * (1.0 - sv), 12.5])
            .collect();
        SpatialCurrentTable {
            s,
            channels: vec!["a".into(), "b".into()],
            currents,
        }
    }

    #[test]
    fn constant_channel_stays_constant() {
        let profile = build_profile(&[SectionSpec::new(0.5, 0.25)]).unwrap();
        let wf = map_to_time(&profile, &table_two_channels(), 200.0, &MapOptions::default())
            .unwrap();
        for row in &wf.samples {
            assert_relative_eq!(row[1], 12.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn composition_matches_dense_reevaluation() {
        let profile = build_profile(&[SectionSpec::new(0.5, 0.25)]).unwrap();
        let table = table_two_channels();
        let wf = map_to_time(&profile, &table, 1000.0, &MapOptions::default()).unwrap();
        let spline = MonotoneCubic::new(
            &table.s,
            &table.currents.iter().map(|r| r[0]).collect::<Vec<_>>(),
        );
        for i in (0..wf.samples.len()).step_by(7) {
            let t = wf.time_of(i);
            let s = profile.position(t);
            assert!((wf.samples[i][0] - spline.eval(s)).abs() < 1e-3);
        }
    }

    #[test]
    fn row_count_is_ceil_duration_times_rate_plus_one() {
        let profile = build_profile(&[
            SectionSpec::new(0.33, 0.50),
            SectionSpec::new(0.30, 0.20),
            SectionSpec::new(0.10, 0.007),
        ])
        .unwrap();
        let table = SpatialCurrentTable {
            s: vec![0.0, 0.73],
            channels: vec!["a".into()],
            currents: vec![vec![1.0], vec![2.0]],
        };
        let wf = map_to_time(&profile, &table, 1000.0, &MapOptions::default()).unwrap();
        let expect = (profile.total_duration() * 1000.0).ceil() as usize + 1;
        assert_eq!(wf.samples.len(), expect);
    }

    #[test]
    fn handoff_ramp_prepends_linear_crossfade() {
        let profile = build_profile(&[SectionSpec::new(0.5, 0.25)]).unwrap();
        let table = table_two_channels();
        let opts = MapOptions {
            handoff: Some(HandoffRamp {
                duration: 0.4,
                initial_currents: vec![10.0, 0.0],
            }),
            ..Default::default()
        };
        let wf = map_to_time(&profile, &table, 1000.0, &opts).unwrap();
        assert_relative_eq!(wf.samples[0][0], 10.0);
        assert_relative_eq!(wf.samples[0][1], 0.0);
        // halfway through the ramp: average of initial and transport start
        let mid = &wf.samples[200];
        assert_relative_eq!(mid[0], 0.5 * (10.0 + 30.0), max_relative = 1e-9);
        assert_relative_eq!(mid[1], 0.5 * 12.5, max_relative = 1e-9);
        // after the ramp the motion has not started yet at t = 0.4
        assert_relative_eq!(wf.samples[400][0], 30.0, max_relative = 1e-9);
        assert_relative_eq!(
            wf.duration(),
            0.4 + profile.total_duration(),
            max_relative = 1e-3
        );
    }

    #[test]
    fn coverage_gap_detected() {
        let profile = build_profile(&[SectionSpec::new(0.9, 0.25)]).unwrap();
        let err = map_to_time(&profile, &table_two_channels(), 100.0, &MapOptions::default())
            .unwrap_err();
        assert!(matches!(err, WaveformError::CoverageGap { .. }));
    }

    #[test]
    fn slew_violation_reports_worst_time() {
        let profile = build_profile(&[SectionSpec::new(0.5, 0.25)]).unwrap();
        let err = map_to_time(
            &profile,
            &table_two_channels(),
            100.0,
            &MapOptions {
                slew_limit: Some(1e-3),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, WaveformError::SlewViolation { .. }));
    }

    #[test]
    fn empty_waveform_exports_header_only() {
        let wf = CurrentWaveform {
            sample_rate: 1000.0,
            channels: vec!["a".into(), "b".into()],
            samples: vec![],
        };
        assert_eq!(wf.to_csv(), "t_s,I_a_A,I_b_A\n");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let profile = build_profile(&[SectionSpec::new(0.5, 0.25)]).unwrap();
        let wf = map_to_time(&profile, &table_two_channels(), 333.0, &MapOptions::default())
            .unwrap();
        let parsed = CurrentWaveform::from_csv(&wf.to_csv()).unwrap();
        assert_eq!(parsed.channels, wf.channels);
        assert_eq!(parsed.samples, wf.samples);
        // JSON round-trip as well
        let js = serde_json::to_string(&wf).unwrap();
        let back: CurrentWaveform = serde_json::from_str(&js).unwrap();
        assert_eq!(back, wf);
    }

    #[test]
    fn round_trip_motion_retraces() {
        let profile = build_profile(&[SectionSpec::new(0.5, 0.25)]).unwrap();
        let table = table_two_channels();
        let opts = MapOptions {
            round_trip: true,
            ..Default::default()
        };
        let wf = map_to_time(&profile, &table, 500.0, &opts).unwrap();
        assert_relative_eq!(
            wf.duration(),
            2.0 * profile.total_duration(),
            max_relative = 1e-2
        );
        // ends back at the s = 0 currents
        let last = wf.samples.last().unwrap();
        assert_relative_eq!(last[0], 30.0, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn monotone_cubic_never_overshoots(
            values in proptest::collection::vec(-50.0f64..50.0, 4..20)
        ) {
            let x: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
            let sp = MonotoneCubic::new(&x, &values);
            for i in 0..values.len() - 1 {
                let (lo, hi) = if values[i] <= values[i + 1] {
                    (values[i], values[i + 1])
                } else {
                    (values[i + 1], values[i])
                };
                for k in 0..=20 {
                    let xq = x[i] + k as f64 / 20.0;
                    let v = sp.eval(xq);
                    prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9,
                        "overshoot at {xq}: {v} outside [{lo}, {hi}]");
                }
            }
        }
    }
}
