//! Adaptive quadrature used by the loss-model integrals.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not converge on [{a}, {b}] (limit depth {depth})")]
    NoConvergence { a: f64, b: f64, depth: usize },
    #[error("invalid integration interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
}

const MAX_DEPTH: usize = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to relative tolerance
/// `rel_tol` (with a small absolute floor for integrals near zero).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, QuadratureError> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadratureError::BadInterval { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // first pass to estimate the scale for the tolerance
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let eps = rel_tol * scale;
    step(f, a, b, fa, fm, fb, whole, eps, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
) -> Result<f64, QuadratureError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureError::NoConvergence {
            a,
            b,
            depth: MAX_DEPTH,
        });
    }
    let l = step(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)?;
    let r = step(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)?;
    Ok(l + r)
}

/// Integrate `f` over `[a, inf)`, truncating where the integrand has fallen
/// below `cutoff` times its peak. The peak is located by doubling from
/// `peak_guess`.
pub fn semi_infinite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    peak_guess: f64,
    cutoff: f64,
    rel_tol: f64,
) -> Result<f64, QuadratureError> {
    let mut peak = f(peak_guess).abs();
    let mut x = peak_guess;
    // walk up while the integrand still grows
    loop {
        let xn = x * 1.5;
        let v = f(xn).abs();
        if v > peak {
            peak = v;
            x = xn;
        } else {
            break;
        }
        if xn > peak_guess * 1e9 {
            break;
        }
    }
    if peak == 0.0 {
        return Ok(0.0);
    }
    let mut hi = x;
    let mut steps = 0;
    while f(hi).abs() > cutoff * peak {
        hi *= 2.0;
        steps += 1;
        if steps > 60 {
            return Err(QuadratureError::NoConvergence {
                a,
                b: hi,
                depth: steps,
            });
        }
    }
    adaptive_simpson(f, a, hi, rel_tol)
}
