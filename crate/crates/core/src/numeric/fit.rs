//! Weighted linear least squares, the workhorse behind log-log slope and
//! power-law estimation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct LinearFit<S> {
    pub slope: S,
    pub intercept: S,
    pub r_squared: S,
}

/// Least squares of y on x with optional per-point weights.
pub fn linear_fit<S: Scalar>(x: &[S], y: &[S], weights: Option<&[S]>) -> Result<LinearFit<S>> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData { needed: 2, got: n.min(y.len()) });
    }
    if let Some(w) = weights {
        assert_eq!(w.len(), n, "weight vector length mismatch");
    }
    let w_at = |i: usize| weights.map_or(S::one(), |w| w[i]);

    let mut sw = S::zero();
    let mut sx = S::zero();
    let mut sy = S::zero();
    for i in 0..n {
        let w = w_at(i);
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
    }
    let xm = sx / sw;
    let ym = sy / sw;

    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for i in 0..n {
        let w = w_at(i);
        let dx = x[i] - xm;
        sxx += w * dx * dx;
        sxy += w * dx * (y[i] - ym);
    }
    if sxx == S::zero() {
        return Err(Error::InsufficientData { needed: 2, got: 1 });
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;

    let mut ss_res = S::zero();
    let mut ss_tot = S::zero();
    for i in 0..n {
        let w = w_at(i);
        let resid = y[i] - (intercept + slope * x[i]);
        let dev = y[i] - ym;
        ss_res += w * resid * resid;
        ss_tot += w * dev * dev;
    }
    let r_squared = if ss_tot == S::zero() { S::one() } else { S::one() - ss_res / ss_tot };

    Ok(LinearFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.5).collect();
        let fit = linear_fit(&x, &y, None).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_pull_the_fit() {
        let x = [0.0, 1.0, 2.0];
        let y = [0.0, 1.0, 10.0];
        let heavy_last = [1.0, 1.0, 1e6];
        let a = linear_fit(&x, &y, None).unwrap();
        let b = linear_fit(&x, &y, Some(&heavy_last)).unwrap();
        assert!(b.slope > a.slope);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(linear_fit::<f64>(&[1.0], &[2.0], None).is_err());
    }
}
