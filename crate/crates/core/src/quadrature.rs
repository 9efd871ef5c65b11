//! One-dimensional quadrature.

use crate::error::{Error, Result};

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::param("integration bounds must be finite"));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 60);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Unstable("non-finite integrand".into()))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `int_a^b f(x) dx` by the trapezoid rule in `t = ln x`, doubling the
/// number of panels until the relative change drops below `rel_tol`.
pub fn log_trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(a > 0.0 && b > a) {
        return Err(Error::param(format!("log grid needs 0 < a < b, got [{a}, {b}]")));
    }
    let (ta, tb) = (a.ln(), b.ln());
    let g = |t: f64| {
        let x = t.exp();
        f(x) * x
    };
    let mut n = 64usize;
    let mut step = (tb - ta) / n as f64;
    let mut sum = 0.5 * (g(ta) + g(tb)) + (1..n).map(|i| g(ta + i as f64 * step)).sum::<f64>();
    let mut prev = sum * step;
    for _ in 0..16 {
        // Add the midpoints of the current panels.
        let mids: f64 = (0..n).map(|i| g(ta + (i as f64 + 0.5) * step)).sum();
        sum += mids;
        n *= 2;
        step /= 2.0;
        let cur = sum * step;
        if (cur - prev).abs() <= rel_tol * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}
