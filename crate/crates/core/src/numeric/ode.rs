//! Embedded Cash-Karp 4(5) step for two-component systems, with the
//! classic proportional step-size controller.
//!
//! The solver is used on arc-length parametrized fields that are globally
//! smooth, so an explicit pair with adaptive rejection is sufficient; the
//! caller owns the outer loop (event handling, termination).

use crate::scalar::Scalar;

pub type State2<S> = [S; 2];

const A2: f64 = 0.2;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [0.3, -0.9, 1.2];
const A5: [f64; 4] = [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0];
const A6: [f64; 5] = [
    1631.0 / 55296.0,
    175.0 / 512.0,
    575.0 / 13824.0,
    44275.0 / 110592.0,
    253.0 / 4096.0,
];
const B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    0.25,
];

#[derive(Debug, Clone, Copy)]
pub struct Step<S> {
    pub y: State2<S>,
    /// Error norm scaled so that values <= 1 are acceptable.
    pub err: S,
}

fn axpy<S: Scalar>(y: &State2<S>, coeffs: &[f64], ks: &[State2<S>], h: S) -> State2<S> {
    let mut out = *y;
    for (c, k) in coeffs.iter().zip(ks.iter()) {
        let c = S::c(*c);
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One Cash-Karp 4(5) step of size `h` from `(s, y)`.
pub fn cash_karp_step<S: Scalar, F: Fn(S, &State2<S>) -> State2<S>>(
    f: &F,
    s: S,
    y: &State2<S>,
    h: S,
    abs_tol: S,
    rel_tol: S,
) -> Step<S> {
    let k1 = f(s, y);
    let k2 = f(s + S::c(A2) * h, &axpy(y, &[A2], &[k1], h));
    let k3 = f(s + S::c(0.3) * h, &axpy(y, &A3, &[k1, k2], h));
    let k4 = f(s + S::c(0.6) * h, &axpy(y, &A4, &[k1, k2, k3], h));
    let k5 = f(s + h, &axpy(y, &A5, &[k1, k2, k3, k4], h));
    let k6 = f(s + S::c(0.875) * h, &axpy(y, &A6, &[k1, k2, k3, k4, k5], h));

    let ks = [k1, k2, k3, k4, k5, k6];
    let y5 = axpy(y, &B5, &ks, h);
    let y4 = axpy(y, &B4, &ks, h);

    let mut err = S::zero();
    for i in 0..2 {
        let scale = abs_tol + rel_tol * y[i].abs().max(y5[i].abs());
        err = err.max(((y5[i] - y4[i]) / scale).abs());
    }
    Step { y: y5, err }
}

/// New step size after observing `err` (values <= 1 mean the step passed).
pub fn next_step_size<S: Scalar>(h: S, err: S) -> S {
    let safety = S::c(0.9);
    let e = err.max(S::c(1e-12));
    let factor = safety * e.powf(S::c(-0.2));
    h * factor.max(S::c(0.2)).min(S::c(5.0))
}
