//! Bracketing root finder: log-grid scan for the first sign change, then
//! bisection with a secant polish.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scan `[lo, hi]` on a log grid and return the first bracket `[a, b]` with
/// `g(a) <= 0 <= g(b)` (or the reverse). Non-finite values of `g` are treated
/// as keeping the previous sign of infinity they carry.
pub fn first_bracket_log<S: Scalar, G: Fn(S) -> S>(g: &G, lo: S, hi: S, n: usize) -> Option<(S, S)> {
    assert!(lo > S::zero() && hi > lo && n >= 2);
    let ratio = (hi / lo).powf(S::one() / S::c((n - 1) as f64));
    let mut a = lo;
    let mut ga = g(a);
    for k in 1..n {
        let b = if k == n - 1 { hi } else { lo * ratio.powi(k as i32) };
        let gb = g(b);
        if ga.is_nan() {
            a = b;
            ga = gb;
            continue;
        }
        if !gb.is_nan() && (ga <= S::zero()) != (gb <= S::zero()) {
            return Some((a, b));
        }
        a = b;
        ga = gb;
    }
    None
}

/// Refine a sign-change bracket to relative tolerance `rel_tol` on the root.
pub fn bisect<S: Scalar, G: Fn(S) -> S>(g: &G, a: S, b: S, rel_tol: S, max_iter: usize) -> Result<S> {
    let (mut a, mut b) = (a, b);
    let mut ga = g(a);
    let gb = g(b);
    let neg = |v: S| v <= S::zero();
    if ga.is_nan() || gb.is_nan() || neg(ga) == neg(gb) {
        return Err(Error::RootNotFound {
            lo: a.f64(),
            hi: b.f64(),
            g_lo: ga.f64(),
            g_hi: gb.f64(),
        });
    }
    for _ in 0..max_iter {
        let mid = (a + b) * S::c(0.5);
        let gm = g(mid);
        if gm.is_nan() {
            // Retreat towards the finite side.
            b = mid;
            continue;
        }
        if neg(gm) == neg(ga) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
        if (b - a).abs() <= rel_tol * mid.abs().max(S::min_positive_value()) {
            break;
        }
    }

    // Secant polish inside the final bracket, kept only if it stays bracketed.
    let (fa, fb) = (g(a), g(b));
    if fa.is_finite() && fb.is_finite() && fa != fb {
        let s = a - fa * (b - a) / (fb - fa);
        if s > a && s < b {
            return Ok(s);
        }
    }
    Ok((a + b) * S::c(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simple_root() {
        let g = |t: f64| t * t - 2.0;
        let (a, b) = first_bracket_log(&g, 1e-3, 1e3, 200).unwrap();
        let r = bisect(&g, a, b, 1e-12, 200).unwrap();
        assert!((r - 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn handles_divergent_left_edge() {
        // g -> -inf as t -> 0, single crossing at t = 1.
        let g = |t: f64| t - 1.0 / t;
        let (a, b) = first_bracket_log(&g, 1e-9, 1e9, 300).unwrap();
        let r = bisect(&g, a, b, 1e-12, 200).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn no_bracket_reported() {
        let g = |_t: f64| 1.0;
        assert!(first_bracket_log(&g, 1e-3, 1e3, 50).is_none());
    }
}
