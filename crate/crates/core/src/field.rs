//! Magnetic fields of circular-loop coil assemblies.
//!
//! The off-axis field of a circular loop is evaluated in closed form with
//! complete elliptic integrals (Simpson, Lane, Immer & Youngquist, NASA
//! TM-2001-210119), together with analytic first derivatives obtained by
//! differentiating the closed form through dK/dm and dE/dm. Second
//! derivatives use central finite differences of the analytic Jacobian with
//! step `HESSIAN_STEP`.

use crate::coil::{CoilArray, CoilSpec};
use crate::consts::MU_0;
use crate::elliptic::{ellip_derivatives, ellipk_ellipe};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Step (m) for finite-difference second derivatives of the field.
pub const HESSIAN_STEP: f64 = 1e-5;

/// Default residual threshold for [`find_field_zero`] (T).
pub const ZERO_TOLERANCE: f64 = 1e-10;

/// Relative radial distance below which the near-axis series is used.
const AXIS_RHO_FRACTION: f64 = 1e-6;

/// Relative squared distance to the filament treated as singular.
const FILAMENT_TOLERANCE_SQ: f64 = 1e-18;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("evaluation point lies on the filament of coil {coil:?}")]
    SingularEvaluation { coil: String },
    #[error("currents length {got} does not match coil count {expected}")]
    CurrentsLength { expected: usize, got: usize },
    #[error("current {current} A exceeds limit {limit} A of coil {coil:?}")]
    OverLimit {
        coil: String,
        current: f64,
        limit: f64,
    },
    #[error("no field zero found: |B| = {residual} T after {iterations} iterations")]
    NoZeroFound { residual: f64, iterations: usize },
    #[error("singular field Jacobian during zero search")]
    SingularJacobian,
}

/// Field, gradient matrix and optional second derivatives at one point.
#[derive(Debug, Clone)]
pub struct FieldSample {
    /// Magnetic field (T).
    pub b: Vector3<f64>,
    /// Gradient matrix J_ij = dB_i/dx_j (T/m).
    pub jacobian: Matrix3<f64>,
    /// Optional second derivatives: `hessian[k][(i, j)] = d^2 B_i / dx_j dx_k` (T/m^2).
    pub hessian: Option<[Matrix3<f64>; 3]>,
}

/// (B_rho, B_z) and their rho/z derivatives for a unit-current single loop
/// of radius `a` centered at the origin with axis z.
struct LoopTerms {
    br: f64,
    bz: f64,
    dbr_drho: f64,
    dbr_dz: f64,
    dbz_drho: f64,
    dbz_dz: f64,
}

fn loop_terms(a: f64, rho: f64, z: f64) -> Option<LoopTerms> {
    if rho < AXIS_RHO_FRACTION * a {
        return Some(loop_terms_near_axis(a, rho, z));
    }
    let c = MU_0 / (2.0 * std::f64::consts::PI);
    let q = (a + rho) * (a + rho) + z * z;
    let d = (a - rho) * (a - rho) + z * z;
    if d <= FILAMENT_TOLERANCE_SQ * a * a {
        return None;
    }
    let m = 4.0 * a * rho / q;
    let (k, e) = ellipk_ellipe(m)?;
    let sq = q.sqrt();
    let num_z = a * a - rho * rho - z * z;
    let num_r = a * a + rho * rho + z * z;

    let t = k + e * num_z / d;
    let u = -k + e * num_r / d;
    let bz = c / sq * t;
    let br = c * z / (rho * sq) * u;

    let (dk, de) = ellip_derivatives(m, k, e);
    let dq_dr = 2.0 * (a + rho);
    let dq_dz = 2.0 * z;
    let dd_dr = -2.0 * (a - rho);
    let dd_dz = 2.0 * z;
    let dm_dr = 4.0 * a / q - 4.0 * a * rho / (q * q) * dq_dr;
    let dm_dz = -4.0 * a * rho / (q * q) * dq_dz;

    let dt = |dmx: f64, ddx: f64, dnzx: f64| {
        dk * dmx + de * dmx * num_z / d + e * (dnzx * d - num_z * ddx) / (d * d)
    };
    let du = |dmx: f64, ddx: f64, dnrx: f64| {
        -dk * dmx + de * dmx * num_r / d + e * (dnrx * d - num_r * ddx) / (d * d)
    };
    let dt_dr = dt(dm_dr, dd_dr, -2.0 * rho);
    let dt_dz = dt(dm_dz, dd_dz, -2.0 * z);
    let du_dr = du(dm_dr, dd_dr, 2.0 * rho);
    let du_dz = du(dm_dz, dd_dz, 2.0 * z);

    let dbz_drho = c * (-0.5 * q.powf(-1.5) * dq_dr * t + dt_dr / sq);
    let dbz_dz = c * (-0.5 * q.powf(-1.5) * dq_dz * t + dt_dz / sq);
    let pref = c * z / (rho * sq);
    let dbr_drho = -br / rho + pref * (-0.5 / q * dq_dr * u + du_dr);
    let dbr_dz = c / (rho * sq) * u + pref * (-0.5 / q * dq_dz * u + du_dz);

    Some(LoopTerms {
        br,
        bz,
        dbr_drho,
        dbr_dz,
        dbz_drho,
        dbz_dz,
    })
}

/// First-order expansion about the axis: B_rho = -(rho/2) f'(z) + O(rho^3),
/// B_z = f(z) + O(rho^2), with f the on-axis field.
fn loop_terms_near_axis(a: f64, rho: f64, z: f64) -> LoopTerms {
    let w = a * a + z * z;
    let f = MU_0 * a * a / 2.0 * w.powf(-1.5);
    let fp = -1.5 * MU_0 * a * a * z * w.powf(-2.5);
    let fpp = 1.5 * MU_0 * a * a * (4.0 * z * z - a * a) * w.powf(-3.5);
    LoopTerms {
        br: -0.5 * rho * fp,
        bz: f,
        dbr_drho: -0.5 * fp,
        dbr_dz: -0.5 * rho * fpp,
        dbz_drho: -0.5 * rho * fpp,
        dbz_dz: fp,
    }
}

fn cylindrical_frame(coil: &CoilSpec, point: &Vector3<f64>) -> (f64, f64, Vector3<f64>) {
    let r = point - coil.center;
    let z = r.dot(&coil.axis);
    let rho_vec = r - z * coil.axis;
    let rho = rho_vec.norm();
    let rho_hat = if rho > 0.0 {
        rho_vec / rho
    } else {
        Vector3::zeros()
    };
    (rho, z, rho_hat)
}

/// Field and gradient of one coil at unit channel current, accumulated into
/// `b` and `jac`. The coil's polarity and winding count are applied.
fn accumulate_coil(
    coil: &CoilSpec,
    current: f64,
    point: &Vector3<f64>,
    b: &mut Vector3<f64>,
    jac: &mut Matrix3<f64>,
) -> Result<(), FieldError> {
    let amp_turns = coil.turns() * current;
    if amp_turns == 0.0 {
        return Ok(());
    }
    let (rho, z, rho_hat) = cylindrical_frame(coil, point);
    let t = loop_terms(coil.radius, rho, z).ok_or_else(|| FieldError::SingularEvaluation {
        coil: coil.name.clone(),
    })?;
    let n = coil.axis;
    *b += amp_turns * (t.br * rho_hat + t.bz * n);

    // J = rho_hat (dBr/drho rho_hat^T + dBr/dz n^T)
    //   + (Br/rho) phi_hat phi_hat^T
    //   + n (dBz/drho rho_hat^T + dBz/dz n^T)
    let br_over_rho = if rho > AXIS_RHO_FRACTION * coil.radius {
        t.br / rho
    } else {
        t.dbr_drho // limit of Br/rho on the axis
    };
    let phi_hat = n.cross(&rho_hat);
    let mut jc = Matrix3::zeros();
    jc += t.dbr_drho * rho_hat * rho_hat.transpose();
    jc += t.dbr_dz * rho_hat * n.transpose();
    jc += t.dbz_drho * n * rho_hat.transpose();
    jc += t.dbz_dz * n * n.transpose();
    if rho > 0.0 {
        jc += br_over_rho * phi_hat * phi_hat.transpose();
    } else {
        // phi_hat is undefined on the axis; the transverse block is isotropic
        jc += br_over_rho * (Matrix3::identity() - n * n.transpose());
    }
    *jac += amp_turns * jc;
    Ok(())
}

/// Field of a single coil at the given channel current (T).
pub fn loop_field(
    coil: &CoilSpec,
    current: f64,
    point: &Vector3<f64>,
) -> Result<Vector3<f64>, FieldError> {
    let mut b = Vector3::zeros();
    let mut jac = Matrix3::zeros();
    accumulate_coil(coil, current, point, &mut b, &mut jac)?;
    Ok(b)
}

fn field_and_jacobian(
    array: &CoilArray,
    currents: &[f64],
    point: &Vector3<f64>,
) -> Result<(Vector3<f64>, Matrix3<f64>), FieldError> {
    let mut b = Vector3::zeros();
    let mut jac = Matrix3::zeros();
    for (coil, &current) in array.coils().iter().zip(currents) {
        accumulate_coil(coil, current, point, &mut b, &mut jac)?;
    }
    Ok((b, jac))
}

/// Superposed field sample of the whole array.
///
/// `currents` holds one channel current per coil. Limits are enforced here;
/// exceeding a coil's `max_current` is an error naming the coil.
pub fn assembly_field(
    array: &CoilArray,
    currents: &[f64],
    point: &Vector3<f64>,
    with_hessian: bool,
) -> Result<FieldSample, FieldError> {
    if currents.len() != array.len() {
        return Err(FieldError::CurrentsLength {
            expected: array.len(),
            got: currents.len(),
        });
    }
    if let Some(idx) = array.over_limit(currents) {
        let c = array.coil(idx);
        return Err(FieldError::OverLimit {
            coil: c.name.clone(),
            current: currents[idx],
            limit: c.max_current,
        });
    }
    let (b, jacobian) = field_and_jacobian(array, currents, point)?;
    let hessian = if with_hessian {
        let mut h = [Matrix3::zeros(); 3];
        for (k, axis) in [Vector3::x(), Vector3::y(), Vector3::z()].iter().enumerate() {
            let step = HESSIAN_STEP * axis;
            let (_, jp) = field_and_jacobian(array, currents, &(point + step))?;
            let (_, jm) = field_and_jacobian(array, currents, &(point - step))?;
            h[k] = (jp - jm) / (2.0 * HESSIAN_STEP);
        }
        Some(h)
    } else {
        None
    };
    Ok(FieldSample {
        b,
        jacobian,
        hessian,
    })
}

/// Unchecked variant for hot loops: no length/limit checks, no hessian.
///
/// Caller guarantees `currents.len() == array.len()` and points off the
/// filaments; a filament hit still errors.
pub fn field_unchecked(
    array: &CoilArray,
    currents: &[f64],
    point: &Vector3<f64>,
) -> Result<(Vector3<f64>, Matrix3<f64>), FieldError> {
    field_and_jacobian(array, currents, point)
}

/// Newton search for a field zero near `guess`.
pub fn find_field_zero(
    array: &CoilArray,
    currents: &[f64],
    guess: &Vector3<f64>,
    max_iterations: usize,
) -> Result<Vector3<f64>, FieldError> {
    if currents.len() != array.len() {
        return Err(FieldError::CurrentsLength {
            expected: array.len(),
            got: currents.len(),
        });
    }
    let mut x = *guess;
    let mut residual = f64::INFINITY;
    for it in 0..max_iterations {
        let (b, jac) = field_and_jacobian(array, currents, &x)?;
        residual = b.norm();
        if residual < ZERO_TOLERANCE {
            return Ok(x);
        }
        let lu = jac.lu();
        match lu.solve(&b) {
            Some(step) => x -= step,
            None => return Err(FieldError::SingularJacobian),
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(FieldError::NoZeroFound {
                residual,
                iterations: it + 1,
            });
        }
    }
    // final check after the last step
    let (b, _) = field_and_jacobian(array, currents, &x)?;
    if b.norm() < ZERO_TOLERANCE {
        return Ok(x);
    }
    Err(FieldError::NoZeroFound {
        residual: residual.min(b.norm()),
        iterations: max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_loop(radius: f64) -> CoilArray {
        let coil = CoilSpec {
            name: "loop".into(),
            center: Vector3::zeros(),
            axis: Vector3::z(),
            radius,
            windings: 1,
            polarity: 1,
            max_current: 1e6,
        };
        CoilArray::new(vec![coil], vec![]).unwrap()
    }

    /// Anti-Helmholtz pair: bottom/top at -+ separation/2, opposite polarity,
    /// driven by a shared channel current.
    pub(crate) fn ah_pair(radius: f64, separation: f64, windings: u32) -> CoilArray {
        let mk = |name: &str, z: f64, pol: i8| CoilSpec {
            name: name.into(),
            center: Vector3::new(0.0, 0.0, z),
            axis: Vector3::z(),
            radius,
            windings,
            polarity: pol,
            max_current: 1e6,
        };
        CoilArray::new(
            vec![
                mk("bottom", -separation / 2.0, -1),
                mk("top", separation / 2.0, 1),
            ],
            vec![[0, 1]],
        )
        .unwrap()
    }

    #[test]
    fn center_of_loop_matches_closed_form() {
        let array = single_loop(0.05);
        let b = loop_field(array.coil(0), 1.0, &Vector3::zeros()).unwrap();
        assert_relative_eq!(b.z, MU_0 / (2.0 * 0.05), max_relative = 1e-12);
        assert_eq!(b.x, 0.0);
        assert_eq!(b.y, 0.0);
    }

    #[test]
    fn on_axis_at_one_radius() {
        let array = single_loop(0.05);
        let b = loop_field(array.coil(0), 1.0, &Vector3::new(0.0, 0.0, 0.05)).unwrap();
        let expect = MU_0 / (2.0 * 0.05) * 2.0_f64.powf(-1.5);
        assert_relative_eq!(b.z, expect, max_relative = 1e-12);
    }

    // Off-axis reference values computed with an independent 4e5-segment
    // Biot-Savart midpoint quadrature (converged well past 1e-12).
    #[test]
    fn off_axis_reference_points() {
        let array = single_loop(0.05);
        let cases = [
            // (rho, z, Br, Bz)
            (0.02, 0.03, 2.2903329830905426e-6, 1.1628957416760665e-5),
            (0.04, -0.01, -3.4943215106242e-6, 1.741922720076951e-5),
            (0.10, 0.08, 5.487356151296466e-7, 1.3786774401204248e-7),
            (0.002, 0.0005, 7.560596853651725e-9, 1.2579576847694812e-5),
            (0.07, 0.0, 0.0, -5.05269714405014e-6),
        ];
        for (rho, z, br, bz) in cases {
            let b = loop_field(array.coil(0), 1.0, &Vector3::new(rho, 0.0, z)).unwrap();
            assert_relative_eq!(b.x, br, max_relative = 1e-9, epsilon = 1e-18);
            assert_relative_eq!(b.z, bz, max_relative = 1e-9);
        }
    }

    #[test]
    fn near_filament_is_singular() {
        let array = single_loop(0.05);
        let on_wire = Vector3::new(0.05, 0.0, 0.0);
        assert!(matches!(
            loop_field(array.coil(0), 1.0, &on_wire),
            Err(FieldError::SingularEvaluation { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let array = single_loop(0.05);
        let pts = [
            Vector3::new(0.02, 0.01, 0.03),
            Vector3::new(-0.03, 0.04, -0.02),
            Vector3::new(0.0, 0.0, 0.04),
            Vector3::new(1e-9, -2e-9, 0.025),
        ];
        let h = 1e-7;
        for p in pts {
            let s = assembly_field(&array, &[1.0], &p, false).unwrap();
            for k in 0..3 {
                let mut dp = Vector3::zeros();
                dp[k] = h;
                let bp = assembly_field(&array, &[1.0], &(p + dp), false).unwrap().b;
                let bm = assembly_field(&array, &[1.0], &(p - dp), false).unwrap().b;
                let fd = (bp - bm) / (2.0 * h);
                for i in 0..3 {
                    assert_relative_eq!(
                        s.jacobian[(i, k)],
                        fd[i],
                        max_relative = 1e-5,
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn pair_center_field_vanishes() {
        let array = ah_pair(0.05, 0.05, 40);
        let s = assembly_field(&array, &[10.0, 10.0], &Vector3::zeros(), false).unwrap();
        assert!(s.b.norm() < 1e-16);
    }

    #[test]
    fn pair_gradient_matches_closed_form() {
        // dBz/dz at the center of an anti-Helmholtz pair:
        // 3 mu0 N I a^2 d / (a^2 + (d/2)^2)^{5/2} / 2 per coil pair
        let (a, d, n) = (0.05_f64, 0.05_f64, 40.0_f64);
        let array = ah_pair(0.05, 0.05, 40);
        let i = 10.0;
        let s = assembly_field(&array, &[i, i], &Vector3::zeros(), false).unwrap();
        let expect = 3.0 * MU_0 * n * i * a * a * d / 2.0
            / (a * a + d * d / 4.0).powf(2.5);
        assert_relative_eq!(s.jacobian[(2, 2)], expect, max_relative = 1e-10);
        // transverse gradients are -g/2 by symmetry and div B = 0
        assert_relative_eq!(s.jacobian[(0, 0)], -expect / 2.0, max_relative = 1e-9);
        assert_relative_eq!(s.jacobian[(1, 1)], -expect / 2.0, max_relative = 1e-9);
    }

    #[test]
    fn zero_currents_give_zero_field() {
        let array = ah_pair(0.05, 0.05, 40);
        let s = assembly_field(&array, &[0.0, 0.0], &Vector3::new(0.01, 0.0, 0.02), false)
            .unwrap();
        assert_eq!(s.b, Vector3::zeros());
        assert_eq!(s.jacobian, Matrix3::zeros());
    }

    #[test]
    fn over_limit_names_coil() {
        let mut coils = ah_pair(0.05, 0.05, 40).coils().to_vec();
        coils[1].max_current = 5.0;
        let array = CoilArray::new(coils, vec![[0, 1]]).unwrap();
        let err = assembly_field(&array, &[1.0, 6.0], &Vector3::zeros(), false).unwrap_err();
        match err {
            FieldError::OverLimit { coil, .. } => assert_eq!(coil, "top"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn hessian_is_symmetric_and_consistent() {
        let array = ah_pair(0.05, 0.05, 40);
        let p = Vector3::new(0.004, -0.006, 0.009);
        let s = assembly_field(&array, &[12.0, 12.0], &p, true).unwrap();
        let h = s.hessian.unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    // d^2 B_i / dx_j dx_k symmetric in (j, k)
                    assert_relative_eq!(h[k][(i, j)], h[j][(i, k)], epsilon = 1e-4);
                }
            }
        }
    }

    #[test]
    fn find_zero_symmetric_pair() {
        let array = ah_pair(0.05, 0.05, 40);
        let x = find_field_zero(&array, &[10.0, 10.0], &Vector3::new(0.003, -0.002, 0.004), 50)
            .unwrap();
        assert!(x.norm() < 1e-9, "zero at {x:?}");
    }

    #[test]
    fn find_zero_imbalanced_pair_is_displaced() {
        let array = ah_pair(0.05, 0.05, 40);
        // +10% imbalance in the top coil pushes the zero along the axis
        let currents = [10.0, 11.0];
        let x = find_field_zero(&array, &currents, &Vector3::new(0.0, 0.0, 0.001), 80).unwrap();
        assert!(x.z.abs() > 1e-4, "expected axial displacement, got {x:?}");
        let s = assembly_field(&array, &currents, &x, false).unwrap();
        assert!(s.b.norm() < ZERO_TOLERANCE);
    }

    #[test]
    fn find_zero_zero_currents_errors() {
        let array = ah_pair(0.05, 0.05, 40);
        assert!(find_field_zero(&array, &[0.0, 0.0], &Vector3::zeros(), 20).is_err());
    }
}
