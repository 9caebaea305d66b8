//! Adaptive Gauss-Kronrod quadrature.
//!
//! A 7-point Gauss / 15-point Kronrod pair drives interval bisection until
//! the summed error estimate meets `max(abs_tol, rel_tol * |I|)`. Integrable
//! endpoint singularities of square-root type are handled by the caller via
//! [`integrate_sqrt_from_zero`], which substitutes t = u^2 before integrating.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

// Kronrod-15 abscissae on [0, 1] side (symmetric), and the paired weights.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
// Gauss-7 weights, matching the odd Kronrod abscissae (indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<S> {
    pub value: S,
    pub error: S,
    pub intervals: usize,
}

struct Panel<S> {
    a: S,
    b: S,
    value: S,
    error: S,
}

fn gk15<S: Scalar, F: Fn(S) -> S>(f: &F, a: S, b: S) -> (S, S) {
    let half = S::c(0.5);
    let center = (a + b) * half;
    let hlen = (b - a) * half;

    let mut resk = S::zero();
    let mut resg = S::zero();
    let mut resabs = S::zero();

    let mut samples = [S::zero(); 15];
    let mut idx = 0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let xs = S::c(x) * hlen;
        if i == 7 {
            let fc = f(center);
            resk += S::c(wk) * fc;
            resg += S::c(WG[3]) * fc;
            resabs += S::c(wk) * fc.abs();
            samples[idx] = fc;
            idx += 1;
        } else {
            let f1 = f(center - xs);
            let f2 = f(center + xs);
            let sum = f1 + f2;
            resk += S::c(wk) * sum;
            resabs += S::c(wk) * (f1.abs() + f2.abs());
            if i % 2 == 1 {
                resg += S::c(WG[i / 2]) * sum;
            }
            samples[idx] = f1;
            samples[idx + 1] = f2;
            idx += 2;
        }
    }

    let mean = resk * half;
    let mut resasc = S::zero();
    idx = 0;
    for (i, &wk) in WGK.iter().enumerate() {
        if i == 7 {
            resasc += S::c(wk) * (samples[idx] - mean).abs();
            idx += 1;
        } else {
            resasc += S::c(wk) * ((samples[idx] - mean).abs() + (samples[idx + 1] - mean).abs());
            idx += 2;
        }
    }
    resasc *= hlen.abs();

    let value = resk * hlen;
    let raw = ((resk - resg) * hlen).abs();
    // QUADPACK-style sharpened error estimate.
    let mut err = raw;
    if resasc > S::zero() && raw > S::zero() {
        let scaled = (S::c(200.0) * raw / resasc).powf(S::c(1.5));
        err = resasc * scaled.min(S::one());
    }
    let _ = resabs;
    (value, err)
}

/// Integrate `f` over `[a, b]` by adaptive bisection.
pub fn integrate<S: Scalar, F: Fn(S) -> S>(
    f: F,
    a: S,
    b: S,
    abs_tol: S,
    rel_tol: S,
    max_intervals: usize,
) -> Result<QuadResult<S>> {
    if a == b {
        return Ok(QuadResult { value: S::zero(), error: S::zero(), intervals: 0 });
    }
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![Panel { a, b, value: v, error: e }];

    loop {
        let total: S = panels.iter().map(|p| p.value).sum();
        let err: S = panels.iter().map(|p| p.error).sum();
        let target = abs_tol.max(rel_tol * total.abs());
        if err <= target {
            return Ok(QuadResult { value: total, error: err, intervals: panels.len() });
        }
        if panels.len() >= max_intervals {
            return Err(Error::QuadratureDidNotConverge {
                requested: target.f64(),
                achieved: err.f64(),
            });
        }
        // Split the worst panel.
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).expect("finite errors"))
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = (p.a + p.b) * S::c(0.5);
        if mid <= p.a.min(p.b) || mid >= p.a.max(p.b) {
            return Err(Error::QuadratureDidNotConverge {
                requested: target.f64(),
                achieved: err.f64(),
            });
        }
        let (v1, e1) = gk15(&f, p.a, mid);
        let (v2, e2) = gk15(&f, mid, p.b);
        panels.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
        panels.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
    }
}

/// Integrate `f` over `(0, upper]` where `f` may behave like t^(-1/2) near 0.
///
/// Substituting t = u^2 turns the integrand into `2 u f(u^2)`, which is
/// bounded for square-root-integrable singularities.
pub fn integrate_sqrt_from_zero<S: Scalar, F: Fn(S) -> S>(
    f: F,
    upper: S,
    abs_tol: S,
    rel_tol: S,
    max_intervals: usize,
) -> Result<QuadResult<S>> {
    let two = S::c(2.0);
    integrate(
        move |u: S| two * u * f(u * u),
        S::zero(),
        upper.sqrt(),
        abs_tol,
        rel_tol,
        max_intervals,
    )
}
