//! Quench protocols: the time-dependent reduced control parameter eps(t),
//! its rate, and the position-dependent detuning used by predictor and
//! simulator alike.
//!
//! Sign convention: eps is the signed distance past criticality in reduced
//! units, so eps = 0 is the critical point and |eps| feeds every scaling
//! formula. `Linear` and `PowerLaw` satisfy sign(eps(t)) = sign(t). The
//! oscillation kinds keep their published forms: `OscSin2OverT` is
//! -lambda sin^2(omega t)/(delta_0 t) and `OscEq8` is
//! ((t^2 + lambda sin(omega t^2))/t - t_f)/tau_q, which approaches a shifted
//! linear ramp for large t.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A quench protocol as a first-class immutable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub enum QuenchProtocol<S: Scalar> {
    Linear {
        tau_q: S,
    },
    PowerLaw {
        tau_q: S,
        r: S,
    },
    /// delta(t) = -lambda sin^2(omega t) / t, reduced via delta_0.
    #[serde(rename = "osc_sin2")]
    OscSin2OverT {
        tau_q: S,
        lambda: S,
        omega: S,
        delta_0: S,
    },
    /// delta(t) = (delta_0/tau_q) ((t^2 + lambda sin(omega t^2))/t - t_f).
    /// `alt_grouping` switches the ambiguous term to lambda sin^2(omega t).
    OscEq8 {
        tau_q: S,
        lambda: S,
        omega: S,
        t_f: S,
        #[serde(default)]
        alt_grouping: bool,
    },
    Tabulated {
        samples: Vec<(S, S)>,
    },
}

/// Below this fraction of the oscillation period the t -> 0 limits are
/// evaluated by series expansion instead of the bare quotient.
const SERIES_WINDOW: f64 = 1e-8;

impl<S: Scalar + Serialize + serde::de::DeserializeOwned> QuenchProtocol<S> {
    /// Check the structural invariants (positivity, ordering).
    pub fn validate(&self) -> Result<()> {
        let positive = |v: S, name: &str| {
            if v > S::zero() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be > 0, got {}", v.f64())))
            }
        };
        match self {
            Self::Linear { tau_q } => positive(*tau_q, "tau_q"),
            Self::PowerLaw { tau_q, r } => {
                positive(*tau_q, "tau_q")?;
                positive(*r, "r")
            }
            Self::OscSin2OverT { tau_q, lambda, omega, delta_0 } => {
                positive(*tau_q, "tau_q")?;
                positive(*omega, "omega")?;
                positive(*delta_0, "delta_0")?;
                if *lambda < S::zero() {
                    return Err(Error::InvalidConfig("lambda must be >= 0".into()));
                }
                Ok(())
            }
            Self::OscEq8 { tau_q, lambda, omega, .. } => {
                positive(*tau_q, "tau_q")?;
                positive(*omega, "omega")?;
                if *lambda < S::zero() {
                    return Err(Error::InvalidConfig("lambda must be >= 0".into()));
                }
                Ok(())
            }
            Self::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(Error::InvalidConfig("tabulated protocol needs >= 2 samples".into()));
                }
                for w in samples.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::InvalidConfig(
                            "tabulated samples must be strictly increasing in t".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Quench timescale, when the kind defines one.
    pub fn tau_q(&self) -> Option<S> {
        match self {
            Self::Linear { tau_q }
            | Self::PowerLaw { tau_q, .. }
            | Self::OscSin2OverT { tau_q, .. }
            | Self::OscEq8 { tau_q, .. } => Some(*tau_q),
            Self::Tabulated { .. } => None,
        }
    }

    /// Same protocol with a different quench timescale (used by sweeps).
    pub fn with_tau_q(&self, tau_q: S) -> Result<Self> {
        let mut p = self.clone();
        match &mut p {
            Self::Linear { tau_q: t }
            | Self::PowerLaw { tau_q: t, .. }
            | Self::OscSin2OverT { tau_q: t, .. }
            | Self::OscEq8 { tau_q: t, .. } => *t = tau_q,
            Self::Tabulated { .. } => {
                return Err(Error::InvalidConfig("tabulated protocols cannot be re-scaled".into()))
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Short descriptor used in report metadata.
    pub fn describe(&self) -> String {
        match self {
            Self::Linear { tau_q } => format!("linear(tau_q={})", tau_q.f64()),
            Self::PowerLaw { tau_q, r } => format!("power_law(tau_q={}, r={})", tau_q.f64(), r.f64()),
            Self::OscSin2OverT { tau_q, lambda, omega, .. } => format!(
                "osc_sin2(tau_q={}, lambda={}, omega={})",
                tau_q.f64(),
                lambda.f64(),
                omega.f64()
            ),
            Self::OscEq8 { tau_q, lambda, omega, t_f, .. } => format!(
                "osc_eq8(tau_q={}, lambda={}, omega={}, t_f={})",
                tau_q.f64(),
                lambda.f64(),
                omega.f64(),
                t_f.f64()
            ),
            Self::Tabulated { samples } => format!("tabulated({} samples)", samples.len()),
        }
    }
}

/// Reduced control parameter eps(t).
pub fn epsilon_at<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    protocol: &QuenchProtocol<S>,
    t: S,
) -> Result<S> {
    match protocol {
        QuenchProtocol::Linear { tau_q } => Ok(t / *tau_q),
        QuenchProtocol::PowerLaw { tau_q, r } => {
            let u = (t / *tau_q).abs();
            Ok(u.powf(*r) * sign_of(t))
        }
        QuenchProtocol::OscSin2OverT { lambda, omega, delta_0, .. } => {
            let w = *omega;
            if t.abs() < S::c(SERIES_WINDOW) / w {
                // sin^2(wt)/t = w^2 t - w^4 t^3/3 + ...
                let wt2 = w * w * t;
                return Ok(-*lambda * wt2 / *delta_0);
            }
            Ok(-*lambda * (w * t).sin().powi(2) / (t * *delta_0))
        }
        QuenchProtocol::OscEq8 { tau_q, lambda, omega, t_f, alt_grouping } => {
            let w = *omega;
            let osc = if *alt_grouping {
                // lambda sin^2(omega t) / t
                if t.abs() < S::c(SERIES_WINDOW) / w {
                    *lambda * w * w * t
                } else {
                    *lambda * (w * t).sin().powi(2) / t
                }
            } else {
                // lambda sin(omega t^2) / t
                if t.abs() < (S::c(SERIES_WINDOW) / w).sqrt() {
                    *lambda * w * t
                } else {
                    *lambda * (w * t * t).sin() / t
                }
            };
            Ok((t + osc - *t_f) / *tau_q)
        }
        QuenchProtocol::Tabulated { samples } => interp_tabulated(samples, t),
    }
}

/// Analytic d eps/dt for closed-form kinds, central difference for tables.
pub fn epsilon_rate<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    protocol: &QuenchProtocol<S>,
    t: S,
) -> Result<S> {
    match protocol {
        QuenchProtocol::Linear { tau_q } => Ok(S::one() / *tau_q),
        QuenchProtocol::PowerLaw { tau_q, r } => {
            let u = (t / *tau_q).abs();
            // d/dt |t/tau|^r sign(t) = (r/tau) |t/tau|^(r-1)
            Ok(*r / *tau_q * u.powf(*r - S::one()))
        }
        QuenchProtocol::OscSin2OverT { lambda, omega, delta_0, .. } => {
            let w = *omega;
            let pref = -*lambda / *delta_0;
            if t.abs() < S::c(SERIES_WINDOW) / w {
                // d/dt [sin^2(wt)/t] = w^2 - w^4 t^2 + ...
                return Ok(pref * (w * w - w * w * w * w * t * t));
            }
            let s = (w * t).sin();
            let d = w * (S::c(2.0) * w * t).sin() / t - s * s / (t * t);
            Ok(pref * d)
        }
        QuenchProtocol::OscEq8 { tau_q, lambda, omega, t_f: _, alt_grouping } => {
            let w = *omega;
            let d_osc = if *alt_grouping {
                if t.abs() < S::c(SERIES_WINDOW) / w {
                    *lambda * w * w
                } else {
                    let s = (w * t).sin();
                    *lambda * (w * (S::c(2.0) * w * t).sin() / t - s * s / (t * t))
                }
            } else {
                // d/dt [lambda sin(w t^2)/t] = lambda (2 w cos(w t^2) - sin(w t^2)/t^2)
                if t.abs() < (S::c(SERIES_WINDOW) / w).sqrt() {
                    *lambda * w
                } else {
                    let p = w * t * t;
                    *lambda * (S::c(2.0) * w * p.cos() - p.sin() / (t * t))
                }
            };
            Ok((S::one() + d_osc) / *tau_q)
        }
        QuenchProtocol::Tabulated { samples } => {
            let lo = samples[0].0;
            let hi = samples[samples.len() - 1].0;
            let span = hi - lo;
            let h = span * S::c(1e-6);
            let a = (t - h).max(lo);
            let b = (t + h).min(hi);
            if b <= a {
                return Err(Error::TabulatedRange { t: t.f64(), lo: lo.f64(), hi: hi.f64() });
            }
            Ok((interp_tabulated(samples, b)? - interp_tabulated(samples, a)?) / (b - a))
        }
    }
}

fn sign_of<S: Scalar>(t: S) -> S {
    if t > S::zero() {
        S::one()
    } else if t < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

fn interp_tabulated<S: Scalar>(samples: &[(S, S)], t: S) -> Result<S> {
    let lo = samples[0].0;
    let hi = samples[samples.len() - 1].0;
    if t < lo || t > hi {
        return Err(Error::TabulatedRange { t: t.f64(), lo: lo.f64(), hi: hi.f64() });
    }
    let idx = samples.partition_point(|(ts, _)| *ts <= t);
    if idx == 0 {
        return Ok(samples[0].1);
    }
    if idx >= samples.len() {
        return Ok(samples[samples.len() - 1].1);
    }
    let (t0, e0) = samples[idx - 1];
    let (t1, e1) = samples[idx];
    let frac = (t - t0) / (t1 - t0);
    Ok(e0 + frac * (e1 - e0))
}

/// Trap geometry: where the local critical frequency comes from.
///
/// The harmonic profile uses the local-density parabola
/// n(x) = (3N/4X)(1 - (x/X)^2), giving omega_c^2(x) proportional to n(x)^3;
/// the chain center x = 0 carries the largest critical frequency and crosses
/// first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub enum TrapGeometry<S: Scalar> {
    Homogeneous { omega_c_sq: S },
    Harmonic { omega_c_sq_center: S, half_length: S },
}

impl<S: Scalar + Serialize + serde::de::DeserializeOwned> TrapGeometry<S> {
    pub fn omega_c_sq(&self, x: S) -> S {
        match self {
            Self::Homogeneous { omega_c_sq } => *omega_c_sq,
            Self::Harmonic { omega_c_sq_center, half_length } => {
                let u = x / *half_length;
                if u.abs() >= S::one() {
                    S::zero()
                } else {
                    let body = S::one() - u * u;
                    *omega_c_sq_center * body * body * body
                }
            }
        }
    }

    /// Gap between the reference (center) critical frequency and the local one.
    pub fn gap(&self, x: S) -> S {
        match self {
            Self::Homogeneous { .. } => S::zero(),
            Self::Harmonic { omega_c_sq_center, .. } => *omega_c_sq_center - self.omega_c_sq(x),
        }
    }

    /// d(omega_c^2)/dx where an analytic form exists.
    pub fn omega_c_sq_dx(&self, x: S) -> Option<S> {
        match self {
            Self::Homogeneous { .. } => Some(S::zero()),
            Self::Harmonic { omega_c_sq_center, half_length } => {
                let u = x / *half_length;
                if u.abs() >= S::one() {
                    return Some(S::zero());
                }
                let body = S::one() - u * u;
                Some(-S::c(6.0) * *omega_c_sq_center * u * body * body / *half_length)
            }
        }
    }
}

/// Local detuning: signed distance past criticality at position `x`, in
/// squared-frequency units. Homogeneous chains reduce to delta_0 * eps(t).
pub fn delta_at<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    protocol: &QuenchProtocol<S>,
    delta_0: S,
    x: S,
    t: S,
    trap: &TrapGeometry<S>,
) -> Result<S> {
    Ok(delta_0 * epsilon_at(protocol, t)? - trap.gap(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(tau_q: f64) -> QuenchProtocol<f64> {
        QuenchProtocol::Linear { tau_q }
    }

    #[test]
    fn linear_examples() {
        let p = linear(100.0);
        assert_eq!(epsilon_at(&p, 50.0).unwrap(), 0.5);
        assert_eq!(epsilon_rate(&p, -123.0).unwrap(), 0.01);
    }

    #[test]
    fn power_law_examples() {
        let p = QuenchProtocol::PowerLaw { tau_q: 10.0, r: 2.0 };
        assert!((epsilon_at(&p, -5.0).unwrap() + 0.25f64).abs() < 1e-15);
        let p1 = QuenchProtocol::PowerLaw { tau_q: 10.0, r: 1.0 };
        assert!((epsilon_rate(&p1, 3.0).unwrap() - 0.1f64).abs() < 1e-15);
    }

    #[test]
    fn osc_sin2_limit_at_zero() {
        let p = QuenchProtocol::OscSin2OverT { tau_q: 1.0, lambda: 1.0, omega: 1.0, delta_0: 1.0 };
        let eps: f64 = epsilon_at(&p, 1e-12).unwrap();
        assert!(eps.abs() < 1e-10);
        // Rate limit: -lambda omega^2 / delta_0.
        let rate0: f64 = epsilon_rate(&p, 0.0).unwrap();
        assert!((rate0 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn osc_eq8_limit_and_large_time() {
        let (tau_q, lambda, omega, t_f) = (50.0f64, 2.0f64, 3.0f64, 1.0f64);
        let p = QuenchProtocol::OscEq8 { tau_q, lambda, omega, t_f, alt_grouping: false };
        // Finite limit at t -> 0.
        let e0: f64 = epsilon_at(&p, 0.0).unwrap();
        assert!((e0 + t_f / tau_q).abs() < 1e-14);
        let r0: f64 = epsilon_rate(&p, 0.0).unwrap();
        assert!((r0 - (1.0 + lambda * omega) / tau_q).abs() < 1e-12);
        // Approaches the shifted linear ramp within the lambda/t envelope.
        let t = 100.0 * (2.0 * std::f64::consts::PI / omega);
        let diff = (epsilon_at(&p, t).unwrap() - (t - t_f) / tau_q).abs();
        assert!(diff <= lambda / (t * tau_q) + 1e-15);
    }

    #[test]
    fn rates_match_central_differences() {
        let protocols: Vec<QuenchProtocol<f64>> = vec![
            linear(37.0),
            QuenchProtocol::PowerLaw { tau_q: 12.0, r: 2.5 },
            QuenchProtocol::OscSin2OverT { tau_q: 5.0, lambda: 2.0, omega: 5.0, delta_0: 1.0 },
            QuenchProtocol::OscEq8 { tau_q: 9.0, lambda: 1.3, omega: 2.0, t_f: 0.4, alt_grouping: false },
            QuenchProtocol::OscEq8 { tau_q: 9.0, lambda: 1.3, omega: 2.0, t_f: 0.4, alt_grouping: true },
        ];
        for p in &protocols {
            for &t in &[0.31f64, 0.7, 1.9, 4.3] {
                let h = 1e-6 * t.max(1.0);
                let fd = (epsilon_at(p, t + h).unwrap() - epsilon_at(p, t - h).unwrap()) / (2.0 * h);
                let an = epsilon_rate(p, t).unwrap();
                let denom = an.abs().max(1e-12);
                assert!(
                    ((an - fd) / denom).abs() < 1e-6,
                    "{p:?} at t = {t}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn sign_follows_time_for_monotone_kinds() {
        for p in [linear(3.0), QuenchProtocol::PowerLaw { tau_q: 3.0, r: 1.7 }] {
            for &t in &[-2.0, -0.5, 0.5, 2.0] {
                assert_eq!(epsilon_at(&p, t).unwrap().signum(), t.signum());
            }
        }
    }

    #[test]
    fn tabulated_interpolation_and_range() {
        let p = QuenchProtocol::Tabulated {
            samples: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 4.0)],
        };
        p.validate().unwrap();
        assert_eq!(epsilon_at(&p, 0.5).unwrap(), 1.0);
        assert_eq!(epsilon_at(&p, 2.0).unwrap(), 3.0);
        assert!(matches!(epsilon_at(&p, 5.0), Err(Error::TabulatedRange { .. })));
        let bad = QuenchProtocol::Tabulated { samples: vec![(0.0, 0.0), (0.0, 1.0)] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn delta_reduces_to_scaled_epsilon_for_homogeneous() {
        let p = linear(10.0);
        let trap = TrapGeometry::Homogeneous { omega_c_sq: 4.0 };
        let d: f64 = delta_at(&p, 1.0, 123.0, 5.0, &trap).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn delta_vanishes_at_local_crossing() {
        let trap: TrapGeometry<f64> = TrapGeometry::Harmonic { omega_c_sq_center: 4.0, half_length: 10.0 };
        let p = linear(10.0);
        let x = 5.0;
        // Find t where delta_0 eps(t) equals the local gap: eps = gap / delta_0.
        let delta_0 = 2.0;
        let t = trap.gap(x) / delta_0 * 10.0;
        let d = delta_at(&p, delta_0, x, t, &trap).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn eq8_detuning_matches_independent_expression() {
        let (tau_q, lambda, omega, t_f, delta_0) = (20.0f64, 1.5f64, 4.0f64, 2.0f64, 3.0f64);
        let p = QuenchProtocol::OscEq8 { tau_q, lambda, omega, t_f, alt_grouping: false };
        let trap = TrapGeometry::Harmonic { omega_c_sq_center: 5.0, half_length: 8.0 };
        for &x in &[0.0, 1.5, 4.0] {
            for &t in &[0.3, 1.1, 2.9, 7.7] {
                // Independent re-evaluation of the published expression.
                let direct = delta_0 / tau_q * ((t * t + lambda * (omega * t * t).sin()) / t - t_f)
                    - (trap.omega_c_sq(0.0) - trap.omega_c_sq(x));
                let via_op = delta_at(&p, delta_0, x, t, &trap).unwrap();
                assert!((direct - via_op).abs() < 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn continuity_across_series_window() {
        let (lambda, omega) = (3.0f64, 2.0f64);
        let p = QuenchProtocol::OscSin2OverT { tau_q: 1.0, lambda, omega, delta_0: 1.0 };
        // Just inside the series window the expansion must agree with the
        // bare quotient evaluated at the same t.
        let t = 0.999 * 1e-8 / omega;
        let series = epsilon_at(&p, t).unwrap();
        let direct = -lambda * (omega * t).sin().powi(2) / t;
        assert!(((series - direct) / direct).abs() < 1e-10);
    }
}
