//! Complete elliptic integrals K(m) and E(m) by the arithmetic-geometric mean.
//!
//! Parameter convention m = k^2 with 0 <= m < 1, matching
//! `scipy.special.ellipk/ellipe`. The AGM iteration converges quadratically,
//! giving close to full double precision; the A&S polynomial fits (~2e-8)
//! are not accurate enough for the field evaluations here.

/// K(m) and E(m) from a single AGM iteration.
///
/// Returns `None` for m outside [0, 1) where the integrals are not both
/// finite and real.
pub fn ellipk_ellipe(m: f64) -> Option<(f64, f64)> {
    if !(0.0..1.0).contains(&m) {
        return None;
    }
    if m == 0.0 {
        return Some((std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2));
    }
    let mut a = 1.0_f64;
    let mut b = (1.0 - m).sqrt();
    // E/K = 1 - sum_{n>=0} 2^{n-1} c_n^2 with c_0^2 = m
    let mut c2_sum = 0.5 * m;
    let mut pow = 0.5;
    for _ in 0..64 {
        let c = 0.5 * (a - b);
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
        pow *= 2.0;
        c2_sum += pow * c * c;
        if c.abs() <= f64::EPSILON * a {
            break;
        }
    }
    let k = std::f64::consts::FRAC_PI_2 / a;
    Some((k, k * (1.0 - c2_sum)))
}

/// dK/dm and dE/dm from the standard closed forms.
///
/// Valid for 0 < m < 1. Used by the analytic loop-field Jacobian.
pub fn ellip_derivatives(m: f64, k: f64, e: f64) -> (f64, f64) {
    let dk = (e - (1.0 - m) * k) / (2.0 * m * (1.0 - m));
    let de = (e - k) / (2.0 * m);
    (dk, de)
}
