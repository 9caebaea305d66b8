//! Static geometry of ion chains: lattice positions, the zigzag critical
//! frequency, harmonic-trap equilibria and the local-density spacing profile.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ring (periodic) lattice positions with uniform spacing.
pub fn ring_positions<S: Scalar>(n: usize, spacing: S) -> Vec<S> {
    (0..n).map(|i| spacing * S::c(i as f64)).collect()
}

/// Critical transverse frequency squared of a periodic chain of `n` ions
/// (n even) with spacing `a`: the zigzag mode y_i = (-1)^i softens at
///
///   omega_c^2 = (coulomb / (m a^3)) * [ 4 sum_{k odd, k < n/2} k^-3
///                                       + (n/2 odd) 2 (n/2)^-3 ].
///
/// For n -> infinity the bracket approaches (7/2) zeta(3) = 4.2072.
pub fn ring_critical_omega_sq<S: Scalar>(n: usize, mass: S, coulomb: S, spacing: S) -> S {
    assert!(n >= 4 && n.is_multiple_of(2), "ring zigzag mode needs an even ion count >= 4");
    let mut sum = 0.0_f64;
    let half = n / 2;
    for k in (1..half).step_by(2) {
        sum += 4.0 / (k as f64).powi(3);
    }
    if half % 2 == 1 {
        sum += 2.0 / (half as f64).powi(3);
    }
    S::c(sum) * coulomb / (mass * spacing.powi(3))
}

/// Equilibrium positions of `n` ions in a harmonic axial trap, found by
/// Barzilai-Borwein gradient descent on the Coulomb + trap energy until the
/// force residual drops below `1e-10` of the Coulomb force scale.
pub fn harmonic_equilibrium<S: Scalar>(n: usize, mass: S, coulomb: S, nu: S) -> Result<Vec<S>> {
    assert!(n >= 2);
    // Coulomb length: charge^2/(4 pi eps0 m nu^2) in physical units.
    let ell = (coulomb / (mass * nu * nu)).powf(S::c(1.0 / 3.0));
    // Initial guess: parabola quantiles scaled to the known N-dependence of
    // the chain half-length.
    let half_len = ell * S::c(1.8) * S::c(n as f64).powf(S::c(0.4));
    let mut x: Vec<S> = lda_positions(n, half_len + half_len).into_iter().collect();

    let grad = |x: &[S], g: &mut [S]| {
        for gi in g.iter_mut() {
            *gi = S::zero();
        }
        for i in 0..n {
            g[i] += mass * nu * nu * x[i];
            for j in 0..i {
                let d = x[i] - x[j];
                let f = coulomb / (d * d) * d.signum();
                g[i] -= f;
                g[j] += f;
            }
        }
    };

    let typical_gap = (half_len + half_len) / S::c(n as f64);
    let force_scale = coulomb / (typical_gap * typical_gap);
    let target = force_scale * S::c(1e-10);

    let mut g = vec![S::zero(); n];
    let mut g_prev = vec![S::zero(); n];
    let mut x_prev = x.clone();
    grad(&x, &mut g);
    let mut step = typical_gap * S::c(1e-3) / force_scale;
    let max_iter = 200_000;
    for iter in 0..max_iter {
        let res = g.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        if res < target {
            x.sort_by(|a, b| a.partial_cmp(b).expect("finite positions"));
            return Ok(x);
        }
        x_prev.copy_from_slice(&x);
        for i in 0..n {
            x[i] -= step * g[i];
        }
        std::mem::swap(&mut g, &mut g_prev);
        grad(&x, &mut g);
        // Barzilai-Borwein step length from successive gradients.
        let mut sy = S::zero();
        let mut yy = S::zero();
        for i in 0..n {
            let s = x[i] - x_prev[i];
            let y = g[i] - g_prev[i];
            sy += s * y;
            yy += y * y;
        }
        if yy > S::zero() && sy > S::zero() {
            step = sy / yy;
        } else {
            step *= S::c(0.5);
        }
        if iter == max_iter - 1 {
            return Err(Error::EquilibriumNotConverged { residual: res.f64(), iters: max_iter });
        }
    }
    unreachable!()
}

/// Ion positions from the local-density parabola n(x) = (3N/4X)(1 - (x/X)^2)
/// on a chain of total length `length` (X = length/2): ion i sits at the
/// (i - 1/2)/N quantile of the density.
pub fn lda_positions<S: Scalar>(n: usize, length: S) -> Vec<S> {
    let half = length * S::c(0.5);
    (0..n)
        .map(|i| {
            let q = (S::c(i as f64) + S::c(0.5)) / S::c(n as f64);
            half * parabola_quantile(q)
        })
        .collect()
}

/// Per-ion local spacings a_i = 1/n(x_i) from the same parabola profile.
pub fn lda_spacings<S: Scalar>(n: usize, length: S) -> Vec<S> {
    let half = length * S::c(0.5);
    let dens_max = S::c(3.0 * n as f64 / 4.0) / half;
    lda_positions(n, length)
        .into_iter()
        .map(|x| {
            let u = x / half;
            let d = dens_max * (S::one() - u * u);
            S::one() / d
        })
        .collect()
}

/// Inverse CDF of the normalized parabola density on [-1, 1]:
/// F(u) = (3u - u^3 + 2)/4, solved by bisection.
fn parabola_quantile<S: Scalar>(q: S) -> S {
    let f = |u: S| (S::c(3.0) * u - u * u * u + S::c(2.0)) / S::c(4.0) - q;
    let mut lo = -S::one();
    let mut hi = S::one();
    for _ in 0..200 {
        let mid = (lo + hi) * S::c(0.5);
        if f(mid) > S::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < S::c(1e-14) {
            break;
        }
    }
    (lo + hi) * S::c(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_critical_frequency_approaches_infinite_chain() {
        let w2 = ring_critical_omega_sq(22, 1.0f64, 1.0, 1.0);
        // 4 (1 + 3^-3 + 5^-3 + 7^-3 + 9^-3) + 2/11^3
        assert!((w2 - 4.19883).abs() < 1e-4, "{w2}");
        let w2_big = ring_critical_omega_sq(2000, 1.0f64, 1.0, 1.0);
        assert!((w2_big - 3.5 * crate::scalar::ZETA_3).abs() < 1e-6);
    }

    #[test]
    fn three_ion_equilibrium_matches_textbook_positions() {
        let (mass, coulomb, nu) = (1.0f64, 1.0f64, 0.8f64);
        let x = harmonic_equilibrium(3, mass, coulomb, nu).unwrap();
        // Outer ions balance at (5/4)^(1/3) times the Coulomb length.
        let d = (5.0 / 4.0 * coulomb / (mass * nu * nu)).powf(1.0 / 3.0);
        assert!(x[1].abs() < 1e-8, "center ion at origin, got {}", x[1]);
        assert!((x[2] - d).abs() < 1e-6, "outer ion at {} vs {}", x[2], d);
        assert!((x[0] + d).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_forces_vanish() {
        let x = harmonic_equilibrium(12, 1.0f64, 1.0, 0.7).unwrap();
        for i in 0..12 {
            let mut f = -0.49 * x[i];
            for j in 0..12 {
                if j != i {
                    let d: f64 = x[i] - x[j];
                    f += d.signum() / (d * d);
                }
            }
            assert!(f.abs() < 1e-8, "residual force {f} on ion {i}");
        }
    }

    #[test]
    fn lda_spacings_are_smallest_at_the_center() {
        let a = lda_spacings(10, 20.0f64);
        assert_eq!(a.len(), 10);
        let center = a[4].min(a[5]);
        assert!(a[0] > center && a[9] > center);
    }
}
