//! Per-channel currents satisfying the trap constraints along the transport.
//!
//! The transport line is L-shaped: horizontal along +x from the initial trap
//! to the corner, then vertical along +z. During horizontal transport three
//! anti-Helmholtz pair channels enforce a field zero on the axis, the axial
//! gradient and a fixed transverse-gradient ratio; during vertical transport
//! four individual coils enforce the zero, the gradient, vanishing curvature
//! and a zero current sum (three coils at the path ends, where the sum rule
//! is dropped).
//!
//! All constraints are linear in the channel currents once the gradient
//! ratio is cleared of its denominator, so the Newton iteration used here
//! converges in one step from any seed; the iteration is kept to guard the
//! residual check. Rank-deficient windows (which occur at mirror-symmetric
//! trap positions) are resolved by a minimum-norm step from the continuation
//! seed, which selects the branch continuously.

use crate::coil::CoilArray;
use crate::field::{assembly_field, field_unchecked, FieldError, HESSIAN_STEP};
use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("field evaluation failed: {0}")]
    Field(#[from] FieldError),
    #[error("horizontal solve needs exactly 3 pair channels, got {0}")]
    BadHorizontalWindow(usize),
    #[error("vertical solve needs 3 or 4 coil channels, got {0}")]
    BadVerticalWindow(usize),
    #[error("pair channel ({a}, {b}) is not anti-Helmholtz: {reason}")]
    BadPairChannel { a: String, b: String, reason: String },
    #[error("aspect ratio target required for the horizontal solve")]
    MissingAspectRatio,
    #[error("degenerate coil configuration: rank {rank} < {required} and residuals {residuals:?} irreducible at s = {s}")]
    Degenerate {
        s: f64,
        rank: usize,
        required: usize,
        residuals: Vec<f64>,
    },
    #[error("solver did not converge at s = {s}: residuals {residuals:?}")]
    NoConvergence { s: f64, residuals: Vec<f64> },
    #[error("current {current:.3} A exceeds limit {limit} A of coil {coil:?} at s = {s}")]
    CurrentBound {
        s: f64,
        coil: String,
        current: f64,
        limit: f64,
    },
    #[error(
        "current handoff discontinuity at s = {s}: coil {coil:?} steps by {delta:.3} A (> {max} A)"
    )]
    Continuity {
        s: f64,
        coil: String,
        delta: f64,
        max: f64,
    },
    #[error("path samples must be monotone in s")]
    PathNotMonotone,
    #[error("schedule has no window covering s = {0}")]
    NoWindow(f64),
}

/// Constraint set at one trap position.
#[derive(Debug, Clone)]
pub struct TrapTarget {
    /// Trap position (m).
    pub position: Vector3<f64>,
    /// Axial gradient dBz/dz (T/m).
    pub gradient: f64,
    /// Transverse gradient ratio (dBy/dy)/(dBx/dx); horizontal mode only.
    pub aspect_ratio: Option<f64>,
    /// Half-width (m) for the post-hoc gradient-linearity audit.
    pub curvature_window: Option<f64>,
}

impl TrapTarget {
    pub fn horizontal(position: Vector3<f64>, gradient: f64, aspect_ratio: f64) -> Self {
        Self {
            position,
            gradient,
            aspect_ratio: Some(aspect_ratio),
            curvature_window: None,
        }
    }

    pub fn vertical(position: Vector3<f64>, gradient: f64) -> Self {
        Self {
            position,
            gradient,
            aspect_ratio: None,
            curvature_window: Some(0.005),
        }
    }
}

/// Two coils driven as one anti-Helmholtz channel.
///
/// For a pair wired with opposite polarity the channel current feeds both
/// coils unchanged; equal-polarity coils get opposite currents. Both give
/// antisymmetric ampere-turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairChannel {
    pub a: usize,
    pub b: usize,
}

impl PairChannel {
    pub fn signs(&self, array: &CoilArray) -> (f64, f64) {
        if array.coil(self.a).polarity != array.coil(self.b).polarity {
            (1.0, 1.0)
        } else {
            (1.0, -1.0)
        }
    }

    pub fn validate(&self, array: &CoilArray) -> Result<(), SolveError> {
        let (ca, cb) = (array.coil(self.a), array.coil(self.b));
        let reason = if ca.radius != cb.radius {
            Some("unequal radii")
        } else if ca.windings != cb.windings {
            Some("unequal windings")
        } else if (ca.axis - cb.axis).norm() > 1e-12 {
            Some("axes differ")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(SolveError::BadPairChannel {
                a: ca.name.clone(),
                b: cb.name.clone(),
                reason: reason.to_string(),
            }),
            None => Ok(()),
        }
    }
}

/// Active channels of one solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Window {
    /// Three anti-Helmholtz pair channels (horizontal mode).
    Pairs(Vec<PairChannel>),
    /// Three or four individual coil channels (vertical mode).
    Coils(Vec<usize>),
}

impl Window {
    /// Scatter channel currents into a per-coil current vector.
    pub fn scatter(&self, array: &CoilArray, channel_currents: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            Window::Pairs(pairs) => {
                for (p, &i) in pairs.iter().zip(channel_currents) {
                    let (sa, sb) = p.signs(array);
                    out[p.a] = sa * i;
                    out[p.b] = sb * i;
                }
            }
            Window::Coils(coils) => {
                for (&c, &i) in coils.iter().zip(channel_currents) {
                    out[c] = i;
                }
            }
        }
    }

    /// Gather a channel-current seed from a per-coil vector.
    pub fn gather(&self, array: &CoilArray, coil_currents: &[f64]) -> Vec<f64> {
        match self {
            Window::Pairs(pairs) => pairs
                .iter()
                .map(|p| {
                    let (sa, _) = p.signs(array);
                    sa * coil_currents[p.a]
                })
                .collect(),
            Window::Coils(coils) => coils.iter().map(|&c| coil_currents[c]).collect(),
        }
    }

    pub fn channel_count(&self) -> usize {
        match self {
            Window::Pairs(p) => p.len(),
            Window::Coils(c) => c.len(),
        }
    }

    pub fn coil_indices(&self) -> Vec<usize> {
        match self {
            Window::Pairs(p) => p.iter().flat_map(|p| [p.a, p.b]).collect(),
            Window::Coils(c) => c.clone(),
        }
    }
}

/// Channel currents satisfying the constraints at one path position.
#[derive(Debug, Clone)]
pub struct CurrentSolution {
    /// Path coordinate (m).
    pub s: f64,
    pub window: Window,
    /// Per active channel (A).
    pub currents: Vec<f64>,
    /// Constraint residuals, in the order of the constraint rows (SI units).
    pub residuals: Vec<f64>,
}

impl CurrentSolution {
    pub fn per_coil(&self, array: &CoilArray) -> Vec<f64> {
        let mut out = vec![0.0; array.len()];
        self.window.scatter(array, &self.currents, &mut out);
        out
    }
}

/// Default residual tolerance of the solves (SI units per constraint).
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

const NEWTON_ITERATIONS: usize = 8;
const SVD_TRUNCATION: f64 = 1e-12;

/// Linear-constraint Newton with a minimum-norm step from the seed.
///
/// Rows are closures evaluating each constraint for given channel currents;
/// because the system is linear the matrix is assembled from unit-current
/// basis evaluations.
fn solve_linear_system(
    basis: &DMatrix<f64>,
    rhs: &DVector<f64>,
    seed: &DVector<f64>,
    s: f64,
    tol: f64,
) -> Result<(DVector<f64>, Vec<f64>), SolveError> {
    let mut x = seed.clone();
    for _ in 0..NEWTON_ITERATIONS {
        let residual = rhs - basis * &x;
        if residual.amax() < tol {
            break;
        }
        let svd = basis.clone().svd(true, true);
        let step = svd
            .solve(&residual, SVD_TRUNCATION * svd.singular_values.max())
            .map_err(|_| SolveError::Degenerate {
                s,
                rank: 0,
                required: basis.nrows(),
                residuals: residual.iter().map(|r| r.abs()).collect(),
            })?;
        x += step;
    }
    let residual = rhs - basis * &x;
    let residuals: Vec<f64> = residual.iter().map(|r| r.abs()).collect();
    if residual.amax() >= tol {
        let svd = basis.clone().svd(false, false);
        let rank = svd.rank(SVD_TRUNCATION * svd.singular_values.max());
        if rank < basis.nrows() {
            return Err(SolveError::Degenerate {
                s,
                rank,
                required: basis.nrows(),
                residuals,
            });
        }
        return Err(SolveError::NoConvergence { s, residuals });
    }
    Ok((x, residuals))
}

/// Horizontal constraint rows at `target.position` for unit channel current:
/// B_x = 0, dBz/dz = G, dBy/dy - A dBx/dx = 0.
fn horizontal_basis(
    array: &CoilArray,
    pairs: &[PairChannel],
    target: &TrapTarget,
) -> Result<DMatrix<f64>, SolveError> {
    let aspect = target.aspect_ratio.ok_or(SolveError::MissingAspectRatio)?;
    let mut m = DMatrix::zeros(3, pairs.len());
    let mut unit = vec![0.0; array.len()];
    for (j, p) in pairs.iter().enumerate() {
        p.validate(array)?;
        unit.fill(0.0);
        let (sa, sb) = p.signs(array);
        unit[p.a] = sa;
        unit[p.b] = sb;
        let (b, jac) = field_unchecked(array, &unit, &target.position)?;
        m[(0, j)] = b.x;
        m[(1, j)] = jac[(2, 2)];
        m[(2, j)] = jac[(1, 1)] - aspect * jac[(0, 0)];
    }
    Ok(m)
}

/// Vertical constraint rows: B_z = 0, dBz/dz = G, d2Bz/dz2 = 0 and, for
/// four-coil windows, sum of channel currents = 0.
fn vertical_basis(
    array: &CoilArray,
    coils: &[usize],
    target: &TrapTarget,
) -> Result<DMatrix<f64>, SolveError> {
    let with_sum = coils.len() == 4;
    let rows = if with_sum { 4 } else { 3 };
    let mut m = DMatrix::zeros(rows, coils.len());
    let mut unit = vec![0.0; array.len()];
    let dz = Vector3::new(0.0, 0.0, HESSIAN_STEP);
    for (j, &c) in coils.iter().enumerate() {
        unit.fill(0.0);
        unit[c] = 1.0;
        let (b, jac) = field_unchecked(array, &unit, &target.position)?;
        let (_, jp) = field_unchecked(array, &unit, &(target.position + dz))?;
        let (_, jm) = field_unchecked(array, &unit, &(target.position - dz))?;
        m[(0, j)] = b.z;
        m[(1, j)] = jac[(2, 2)];
        m[(2, j)] = (jp[(2, 2)] - jm[(2, 2)]) / (2.0 * HESSIAN_STEP);
        if with_sum {
            m[(3, j)] = 1.0;
        }
    }
    Ok(m)
}

fn to_solution(
    s: f64,
    window: Window,
    x: DVector<f64>,
    residuals: Vec<f64>,
    array: &CoilArray,
) -> Result<CurrentSolution, SolveError> {
    let solution = CurrentSolution {
        s,
        window,
        currents: x.iter().copied().collect(),
        residuals,
    };
    let per_coil = solution.per_coil(array);
    if let Some(idx) = array.over_limit(&per_coil) {
        let coil = array.coil(idx);
        return Err(SolveError::CurrentBound {
            s,
            coil: coil.name.clone(),
            current: per_coil[idx],
            limit: coil.max_current,
        });
    }
    Ok(solution)
}

/// Solve the three-pair horizontal system at one trap position.
pub fn solve_horizontal(
    array: &CoilArray,
    target: &TrapTarget,
    pairs: &[PairChannel],
    guess: Option<&[f64]>,
) -> Result<CurrentSolution, SolveError> {
    if pairs.len() != 3 {
        return Err(SolveError::BadHorizontalWindow(pairs.len()));
    }
    let basis = horizontal_basis(array, pairs, target)?;
    let rhs = DVector::from_vec(vec![0.0, target.gradient, 0.0]);
    let seed = match guess {
        Some(g) => DVector::from_row_slice(g),
        None => DVector::zeros(3),
    };
    let s = target.position.x;
    let (x, residuals) = solve_linear_system(&basis, &rhs, &seed, s, RESIDUAL_TOLERANCE)?;
    to_solution(s, Window::Pairs(pairs.to_vec()), x, residuals, array)
}

/// Solve the vertical system at one trap position (4 coils interior with the
/// current-sum condition, 3 coils at the path ends without it).
pub fn solve_vertical(
    array: &CoilArray,
    target: &TrapTarget,
    coils: &[usize],
    guess: Option<&[f64]>,
) -> Result<CurrentSolution, SolveError> {
    if coils.len() != 3 && coils.len() != 4 {
        return Err(SolveError::BadVerticalWindow(coils.len()));
    }
    let basis = vertical_basis(array, coils, target)?;
    let mut rhs = DVector::zeros(basis.nrows());
    rhs[1] = target.gradient;
    let seed = match guess {
        Some(g) => DVector::from_row_slice(g),
        None => DVector::zeros(coils.len()),
    };
    let s = target.position.z;
    let (x, residuals) = solve_linear_system(&basis, &rhs, &seed, s, RESIDUAL_TOLERANCE)?;
    to_solution(s, Window::Coils(coils.to_vec()), x, residuals, array)
}

/// Sample |d2Bz/dz2| over +-`half_window` around the trap; the vertical
/// curvature condition is enforced pointwise and audited over this window.
pub fn audit_curvature_window(
    array: &CoilArray,
    coil_currents: &[f64],
    center: &Vector3<f64>,
    half_window: f64,
    samples: usize,
) -> Result<f64, FieldError> {
    let mut worst: f64 = 0.0;
    for i in 0..=samples {
        let z = -half_window + 2.0 * half_window * i as f64 / samples as f64;
        let p = center + Vector3::new(0.0, 0.0, z);
        let s = assembly_field(array, coil_currents, &p, true)?;
        let h = s.hessian.expect("hessian requested");
        worst = worst.max(h[2][(2, 2)].abs());
    }
    Ok(worst)
}

/// L-shaped transport path: horizontal along +x to the corner, vertical
/// along +z above it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathGeometry {
    /// Path coordinate of the right-angle corner (m).
    pub corner: f64,
    /// Total path length (m).
    pub total: f64,
}

impl PathGeometry {
    pub fn point_at(&self, s: f64) -> Vector3<f64> {
        if s <= self.corner {
            Vector3::new(s, 0.0, 0.0)
        } else {
            Vector3::new(self.corner, 0.0, s - self.corner)
        }
    }

    pub fn is_vertical(&self, s: f64) -> bool {
        s > self.corner
    }
}

/// Active-window schedule: piecewise-constant in s, switching at handoff
/// points where the adjacent windows agree exactly.
#[derive(Debug, Clone)]
pub struct Schedule {
    /// (s_end, window), sorted by s_end; a window serves s up to its s_end.
    pub segments: Vec<(f64, Window)>,
}

impl Schedule {
    pub fn window_at(&self, s: f64) -> Result<&Window, SolveError> {
        self.segments
            .iter()
            .find(|(end, _)| s <= end + 1e-12)
            .map(|(_, w)| w)
            .ok_or(SolveError::NoWindow(s))
    }

    /// Nearest-coils heuristic: bracketing pairs plus the preceding pair
    /// horizontally (switching at pair centers), bracketing coils plus one on
    /// each side vertically (switching at coil centers). Pair channels come
    /// from the array's pair map ordered by center x; vertical channels are
    /// the unpaired coils ordered by center z.
    pub fn nearest_heuristic(array: &CoilArray, path: &PathGeometry) -> Result<Self, SolveError> {
        let mut pairs: Vec<(f64, PairChannel)> = array
            .pairs()
            .iter()
            .map(|&[a, b]| {
                let x = 0.5 * (array.coil(a).center.x + array.coil(b).center.x);
                (x, PairChannel { a, b })
            })
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let paired: Vec<usize> = array.pairs().iter().flatten().copied().collect();
        let mut stack: Vec<(f64, usize)> = (0..array.len())
            .filter(|i| !paired.contains(i))
            .map(|i| (array.coil(i).center.z, i))
            .collect();
        stack.sort_by(|p, q| p.0.total_cmp(&q.0));

        let mut segments = Vec::new();
        if pairs.len() >= 3 {
            for k in 1..pairs.len() {
                let lo = (k - 1).saturating_sub(1).min(pairs.len() - 3);
                let window: Vec<PairChannel> =
                    pairs[lo..lo + 3].iter().map(|(_, p)| *p).collect();
                let end = if k == pairs.len() - 1 {
                    path.corner
                } else {
                    pairs[k].0
                };
                segments.push((end, Window::Pairs(window)));
            }
        }
        if stack.len() >= 4 {
            for k in 1..stack.len() {
                let lo = (k - 1).saturating_sub(1).min(stack.len() - 4);
                let window: Vec<usize> = stack[lo..lo + 4].iter().map(|(_, c)| *c).collect();
                let end = if k == stack.len() - 1 {
                    path.total
                } else {
                    path.corner + stack[k].0
                };
                segments.push((end, Window::Coils(window)));
            }
        }
        segments.dedup_by(|a, b| {
            if a.1 == b.1 {
                b.0 = a.0.max(b.0);
                true
            } else {
                false
            }
        });
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { segments })
    }
}

/// Options of [`sweep_path`].
#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Axial gradient target (T/m).
    pub gradient: f64,
    /// Transverse-gradient ratio held during horizontal transport.
    pub aspect_ratio: f64,
    /// Largest tolerated per-coil current step between consecutive samples (A).
    pub max_step_current: f64,
    /// Residual tolerance per constraint (SI units).
    pub residual_tolerance: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            gradient: 1.2,
            aspect_ratio: 1.0,
            max_step_current: 0.5,
            residual_tolerance: RESIDUAL_TOLERANCE,
        }
    }
}

/// Continuation solve along the path: each sample is seeded by the previous
/// solution, currents stay continuous across window handoffs, and the last
/// vertical sample drops to three coils (the current-sum rule does not apply
/// at the path ends).
pub fn sweep_path(
    array: &CoilArray,
    path: &PathGeometry,
    s_samples: &[f64],
    schedule: &Schedule,
    options: &SweepOptions,
) -> Result<Vec<CurrentSolution>, SolveError> {
    let increasing = s_samples.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = s_samples.windows(2).all(|w| w[1] <= w[0]);
    if !(increasing || decreasing) {
        return Err(SolveError::PathNotMonotone);
    }
    let mut results = Vec::with_capacity(s_samples.len());
    let mut prev_per_coil: Option<Vec<f64>> = None;
    let path_end = path.total;
    for &s in s_samples {
        let mut window = schedule.window_at(s)?.clone();
        // endpoint rule: three nearest coils, no current-sum condition
        if let Window::Coils(coils) = &window {
            if coils.len() == 4 && (s - path_end).abs() < 1e-12 {
                let point = path.point_at(s);
                let mut by_distance = coils.clone();
                by_distance.sort_by(|&a, &b| {
                    let da = (array.coil(a).center.z - point.z).abs();
                    let db = (array.coil(b).center.z - point.z).abs();
                    da.total_cmp(&db).then(a.cmp(&b))
                });
                let mut kept = by_distance[..3].to_vec();
                kept.sort_unstable();
                window = Window::Coils(kept);
            }
        }
        let seed: Option<Vec<f64>> = prev_per_coil
            .as_ref()
            .map(|pc| window.gather(array, pc));
        let position = path.point_at(s);
        let solution = match &window {
            Window::Pairs(pairs) => {
                let target =
                    TrapTarget::horizontal(position, options.gradient, options.aspect_ratio);
                let mut sol = solve_horizontal(array, &target, pairs, seed.as_deref())?;
                sol.s = s;
                sol
            }
            Window::Coils(coils) => {
                let target = TrapTarget::vertical(position, options.gradient);
                let mut sol = solve_vertical(array, &target, coils, seed.as_deref())?;
                sol.s = s;
                sol
            }
        };
        let per_coil = solution.per_coil(array);
        if let Some(prev) = &prev_per_coil {
            for (idx, (now, before)) in per_coil.iter().zip(prev).enumerate() {
                let delta = (now - before).abs();
                if delta > options.max_step_current {
                    return Err(SolveError::Continuity {
                        s,
                        coil: array.coil(idx).name.clone(),
                        delta,
                        max: options.max_step_current,
                    });
                }
            }
        }
        prev_per_coil = Some(per_coil);
        results.push(solution);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coil::CoilSpec;
    use approx::assert_relative_eq;

    /// Uniform coaxial stack of identical unpaired coils along z.
    fn stack(n: usize, spacing: f64, radius: f64) -> CoilArray {
        let coils = (0..n)
            .map(|i| CoilSpec {
                name: format!("s{i}"),
                center: Vector3::new(0.0, 0.0, i as f64 * spacing),
                axis: Vector3::z(),
                radius,
                windings: 40,
                polarity: 1,
                max_current: 1e4,
            })
            .collect();
        CoilArray::new(coils, vec![]).unwrap()
    }

    /// Row of anti-Helmholtz pairs along x with vertical axes.
    fn pair_row(n: usize, spacing: f64, radius: f64, sep: f64) -> CoilArray {
        let mut coils = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..n {
            let x = i as f64 * spacing;
            coils.push(CoilSpec {
                name: format!("p{i}b"),
                center: Vector3::new(x, 0.0, -sep / 2.0),
                axis: Vector3::z(),
                radius,
                windings: 120,
                polarity: -1,
                max_current: 1e4,
            });
            coils.push(CoilSpec {
                name: format!("p{i}t"),
                center: Vector3::new(x, 0.0, sep / 2.0),
                axis: Vector3::z(),
                radius,
                windings: 120,
                polarity: 1,
                max_current: 1e4,
            });
            pairs.push([2 * i, 2 * i + 1]);
        }
        CoilArray::new(coils, pairs).unwrap()
    }

    fn pair_channels(array: &CoilArray) -> Vec<PairChannel> {
        array
            .pairs()
            .iter()
            .map(|&[a, b]| PairChannel { a, b })
            .collect()
    }

    #[test]
    fn horizontal_at_pair_center_is_single_pair() {
        let array = pair_row(3, 0.0825, 0.08, 0.08);
        let chans = pair_channels(&array);
        let target = TrapTarget::horizontal(Vector3::new(0.0825, 0.0, 0.0), 1.2, 1.0);
        let sol = solve_horizontal(&array, &target, &chans, None).unwrap();
        // center pair carries everything; neighbors vanish by axisymmetry
        assert!(sol.currents[0].abs() < 1e-9, "{:?}", sol.currents);
        assert!(sol.currents[2].abs() < 1e-9, "{:?}", sol.currents);
        assert!(sol.currents[1].abs() > 10.0);
        // and the analytic single-pair inversion agrees
        let g_per_amp = {
            let mut unit = vec![0.0; array.len()];
            unit[2] = 1.0;
            unit[3] = 1.0;
            field_unchecked(&array, &unit, &target.position).unwrap().1[(2, 2)]
        };
        assert_relative_eq!(sol.currents[1], 1.2 / g_per_amp, max_relative = 1e-9);
    }

    #[test]
    fn horizontal_midpoint_symmetry() {
        let array = pair_row(4, 0.0825, 0.08, 0.08);
        let chans = pair_channels(&array);
        // midpoint between pairs 1 and 2: mirror symmetry forces equal currents
        let target = TrapTarget::horizontal(Vector3::new(0.12375, 0.0, 0.0), 1.2, 1.0);
        let sol = solve_horizontal(&array, &target, &chans[0..3], None).unwrap();
        let audit = field_unchecked(&array, &sol.per_coil(&array), &target.position).unwrap();
        assert!(audit.0.norm() < 1e-9);
        assert_relative_eq!(audit.1[(2, 2)], 1.2, max_relative = 1e-9);
    }

    #[test]
    fn horizontal_gradient_scaling_is_linear() {
        let array = pair_row(3, 0.0825, 0.08, 0.08);
        let chans = pair_channels(&array);
        let pos = Vector3::new(0.05, 0.0, 0.0);
        let t1 = TrapTarget::horizontal(pos, 1.2, 1.0);
        let t2 = TrapTarget::horizontal(pos, 2.4, 1.0);
        let s1 = solve_horizontal(&array, &t1, &chans, None).unwrap();
        let s2 = solve_horizontal(&array, &t2, &chans, None).unwrap();
        for (a, b) in s1.currents.iter().zip(&s2.currents) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-9, epsilon = 1e-9);
        }
    }

    #[test]
    fn horizontal_wrong_window_size() {
        let array = pair_row(3, 0.0825, 0.08, 0.08);
        let chans = pair_channels(&array);
        let target = TrapTarget::horizontal(Vector3::zeros(), 1.2, 1.0);
        assert!(matches!(
            solve_horizontal(&array, &target, &chans[0..2], None),
            Err(SolveError::BadHorizontalWindow(2))
        ));
    }

    #[test]
    fn vertical_mid_pair_antisymmetric_with_zero_sum() {
        let array = stack(4, 0.05, 0.05);
        // trap at the mid-plane of the middle pair: z = 0.075
        let target = TrapTarget::vertical(Vector3::new(0.0, 0.0, 0.075), 1.2);
        let sol = solve_vertical(&array, &target, &[0, 1, 2, 3], None).unwrap();
        let i = &sol.currents;
        assert_relative_eq!(i[0], -i[3], max_relative = 1e-9, epsilon = 1e-12);
        assert_relative_eq!(i[1], -i[2], max_relative = 1e-9, epsilon = 1e-12);
        assert!(i.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn vertical_solution_reproduces_all_conditions() {
        let array = stack(6, 0.05, 0.05);
        let target = TrapTarget::vertical(Vector3::new(0.0, 0.0, 0.12), 1.2);
        let sol = solve_vertical(&array, &target, &[0, 1, 2, 3], None).unwrap();
        let per_coil = sol.per_coil(&array);
        let sample = assembly_field(&array, &per_coil, &target.position, true).unwrap();
        assert!(sample.b.norm() < 1e-8);
        assert_relative_eq!(sample.jacobian[(2, 2)], 1.2, max_relative = 1e-8);
        assert!(sample.hessian.unwrap()[2][(2, 2)].abs() < 1e-4);
        assert!(per_coil.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn vertical_endpoint_three_coils_without_sum() {
        let array = stack(4, 0.05, 0.05);
        let target = TrapTarget::vertical(Vector3::new(0.0, 0.0, 0.06), 1.2);
        let sol = solve_vertical(&array, &target, &[0, 1, 2], None).unwrap();
        assert_eq!(sol.residuals.len(), 3);
        let per_coil = sol.per_coil(&array);
        let sample = assembly_field(&array, &per_coil, &target.position, true).unwrap();
        assert!(sample.b.norm() < 1e-8);
        assert_relative_eq!(sample.jacobian[(2, 2)], 1.2, max_relative = 1e-8);
        assert!(sample.hessian.unwrap()[2][(2, 2)].abs() < 1e-4);
        // three coils cannot also satisfy the sum rule here
        assert!(per_coil.iter().sum::<f64>().abs() > 1e-3);
    }

    #[test]
    fn sweep_degenerate_single_sample_matches_point_solve() {
        let array = stack(5, 0.05, 0.05);
        let path = PathGeometry {
            corner: 0.0,
            total: 0.20,
        };
        let schedule = Schedule {
            segments: vec![(0.20, Window::Coils(vec![0, 1, 2, 3]))],
        };
        let opts = SweepOptions {
            max_step_current: 1e4,
            ..Default::default()
        };
        let sweep = sweep_path(&array, &path, &[0.075], &schedule, &opts).unwrap();
        assert_eq!(sweep.len(), 1);
        let target = TrapTarget::vertical(Vector3::new(0.0, 0.0, 0.075), 1.2);
        let point = solve_vertical(&array, &target, &[0, 1, 2, 3], None).unwrap();
        for (a, b) in sweep[0].currents.iter().zip(&point.currents) {
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_reversal_matches_forward() {
        let array = stack(6, 0.05, 0.05);
        let path = PathGeometry {
            corner: 0.0,
            total: 0.25,
        };
        let schedule = Schedule::nearest_heuristic(&array, &path).unwrap();
        let opts = SweepOptions {
            max_step_current: 1e4,
            ..Default::default()
        };
        let forward: Vec<f64> = (50..=200).map(|i| i as f64 * 0.001).collect();
        let mut backward = forward.clone();
        backward.reverse();
        let fs = sweep_path(&array, &path, &forward, &schedule, &opts).unwrap();
        let bs = sweep_path(&array, &path, &backward, &schedule, &opts).unwrap();
        for (f, b) in fs.iter().zip(bs.iter().rev()) {
            assert_eq!(f.s, b.s);
            let fc = f.per_coil(&array);
            let bc = b.per_coil(&array);
            for (x, y) in fc.iter().zip(&bc) {
                assert!((x - y).abs() < 1e-9, "s = {}: {x} vs {y}", f.s);
            }
        }
    }

    #[test]
    fn sweep_rejects_non_monotone_path() {
        let array = stack(5, 0.05, 0.05);
        let path = PathGeometry {
            corner: 0.0,
            total: 0.2,
        };
        let schedule = Schedule::nearest_heuristic(&array, &path).unwrap();
        let err = sweep_path(
            &array,
            &path,
            &[0.05, 0.10, 0.07],
            &schedule,
            &SweepOptions::default(),
        );
        assert!(matches!(err, Err(SolveError::PathNotMonotone)));
    }
}
