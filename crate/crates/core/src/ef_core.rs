//! The extended-formulation defect predictor.
//!
//! Everything is driven by the relaxation time
//!
//!   tau(eps) = tau_0 / (sqrt(1 + alpha |eps|) - 1),      alpha = 4 delta_0 / eta^2,
//!
//! the lifetime tau_N = c_N tau, the renamed correlation length
//! xi_N = kappa_N xi_0 |eps|^(-1/2), and the propagation velocity
//! v_p = xi_N / tau_N. The freeze-out boundary generalizes the classic root
//! t = tau_N(eps(t)) by a driven divisor, t_N = t / (sqrt(beta eps') + 1),
//! and the frozen domain length is the integral of v_p up to that boundary.
//!
//! A useful closed consequence used throughout: with x = alpha |eps|,
//!
//!   v_p(eps) = gamma sqrt(alpha) * sqrt(x) / (sqrt(1 + x) + 1),
//!
//! which increases monotonically from 0 towards the finite ceiling
//! v_max = gamma sqrt(alpha); the inhomogeneous-chain ODE below has its pole
//! exactly at that ceiling.

use serde::{Deserialize, Serialize};

use crate::chain_geometry;
use crate::error::{Error, Result};
use crate::numeric::{fresnel, ode, quad, roots};
use crate::quench::{epsilon_at, epsilon_rate, QuenchProtocol};
use crate::scalar::{Scalar, ZETA_3};

/// Fixed ratio realizing the semi-quantitative ">>" (and "<<" as its
/// reciprocal) in regime classification and closed-form preconditions.
pub const MUCH_GREATER: f64 = 10.0;

/// Physical and phenomenological constants of a quenched chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct ScalingParams<S: Scalar> {
    /// Correlation-length amplitude xi_0 (length).
    pub xi_0: S,
    /// Renamed length amplitude xi_1 = kappa_N xi_0 (length).
    pub xi_1: S,
    /// Relaxation-time amplitude tau_0 (time).
    pub tau_0: S,
    /// Lifetime amplitude tau_1 = c_N tau_0 (time).
    pub tau_1: S,
    /// Damping coefficient eta (1/time).
    pub eta: S,
    /// Detuning scale delta_0 (1/time^2).
    pub delta_0: S,
    /// Inter-particle spacing a_0 (length); 0 selects the continuous medium.
    pub a_0: S,
    /// Ion count N.
    pub n_ions: usize,
    /// Particle mass m.
    pub mass: S,
    /// Coulomb coupling Q^2/(4 pi eps_0).
    pub charge_sq: S,
    /// Chain length L.
    pub length: S,
    /// Thermal energy k_B T.
    pub k_t: S,
    /// Dimensionless lifetime constant c_N.
    pub c_n: S,
    /// kappa_N = xi_N / xi.
    pub kappa_n: S,
    /// Reference trap frequency omega_0 (1/time).
    pub omega_0: S,
}

impl<S: Scalar + Serialize + serde::de::DeserializeOwned> ScalingParams<S> {
    /// Build from the base amplitudes; xi_1 and tau_1 are derived.
    #[allow(clippy::too_many_arguments)]
    pub fn from_base(
        xi_0: S,
        tau_0: S,
        c_n: S,
        kappa_n: S,
        eta: S,
        delta_0: S,
        a_0: S,
        n_ions: usize,
        mass: S,
        charge_sq: S,
        length: S,
        k_t: S,
        omega_0: S,
    ) -> Result<Self> {
        let p = Self {
            xi_0,
            xi_1: kappa_n * xi_0,
            tau_0,
            tau_1: c_n * tau_0,
            eta,
            delta_0,
            a_0,
            n_ions,
            mass,
            charge_sq,
            length,
            k_t,
            c_n,
            kappa_n,
            omega_0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |v: S, name: &str| {
            if v > S::zero() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be > 0, got {}", v.f64())))
            }
        };
        check(self.xi_0, "xi_0")?;
        check(self.xi_1, "xi_1")?;
        check(self.tau_0, "tau_0")?;
        check(self.tau_1, "tau_1")?;
        check(self.eta, "eta")?;
        check(self.delta_0, "delta_0")?;
        check(self.mass, "mass")?;
        check(self.charge_sq, "charge_sq")?;
        check(self.length, "length")?;
        check(self.c_n, "c_n")?;
        check(self.kappa_n, "kappa_n")?;
        check(self.omega_0, "omega_0")?;
        if self.a_0 < S::zero() {
            return Err(Error::InvalidConfig("a_0 must be >= 0".into()));
        }
        if self.k_t < S::zero() {
            return Err(Error::InvalidConfig("k_t must be >= 0".into()));
        }
        if self.n_ions < 2 {
            return Err(Error::InvalidConfig("n_ions must be >= 2".into()));
        }
        let rel = |a: S, b: S| ((a - b) / b).abs();
        if rel(self.xi_1, self.kappa_n * self.xi_0) > S::c(1e-9) {
            return Err(Error::InvalidConfig("xi_1 must equal kappa_n * xi_0".into()));
        }
        if rel(self.tau_1, self.c_n * self.tau_0) > S::c(1e-9) {
            return Err(Error::InvalidConfig("tau_1 must equal c_n * tau_0".into()));
        }
        Ok(())
    }

    /// alpha = 4 delta_0 / eta^2.
    pub fn alpha(&self) -> S {
        S::c(4.0) * self.delta_0 / (self.eta * self.eta)
    }

    /// beta = 4 (a/xi_1)^3 (eta/sqrt(delta_0)) tau_1 for a given spacing.
    pub fn beta_for_spacing(&self, spacing: S) -> S {
        let ratio = spacing / self.xi_1;
        S::c(4.0) * ratio.powi(3) * self.eta / self.delta_0.sqrt() * self.tau_1
    }

    /// beta evaluated at the homogeneous spacing a_0 (zero for a_0 = 0).
    pub fn beta(&self) -> S {
        self.beta_for_spacing(self.a_0)
    }

    /// gamma = xi_1 / tau_1.
    pub fn gamma(&self) -> S {
        self.xi_1 / self.tau_1
    }

    /// chi = 189 Q^2 zeta(3) N^3 tau_Q / (512 pi m L^3 delta_0), per tau_Q.
    pub fn chi(&self, tau_q: S) -> S {
        let n3 = S::c((self.n_ions as f64).powi(3));
        S::c(189.0) * self.charge_sq * S::c(ZETA_3) * n3 * tau_q
            / (S::c(512.0) * S::c(std::f64::consts::PI)
                * self.mass
                * self.length.powi(3)
                * self.delta_0)
    }

    /// Velocity ceiling gamma sqrt(alpha), the pole of the chain ODE.
    pub fn v_max(&self) -> S {
        self.gamma() * self.alpha().sqrt()
    }

    /// The lifetime-constant prefactor of the stochastic-breaking formula,
    ///
    ///   c_N = exp(m w_tc^4 / (8 k_T A)) * 8 k_T A gamma sqrt(w_tc) / (N m eta^3),
    ///
    /// for callers that know the barrier constant `a_script` (the published
    /// derivation leaves it undefined, so it is an explicit input here).
    pub fn c_n_from_lifetime_formula(&self, a_script: S, omega_tc: S) -> S {
        let n = S::c(self.n_ions as f64);
        let kt_a = S::c(8.0) * self.k_t * a_script;
        (self.mass * omega_tc.powi(4) / kt_a).exp() * kt_a * self.gamma() * omega_tc.sqrt()
            / (n * self.mass * self.eta.powi(3))
    }
}

/// Solved freeze-out boundary quantities for one protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeOut<S> {
    pub t_hat: S,
    pub t_hat_n: S,
    pub tau_n_at_boundary: S,
    pub xi_n_at_boundary: S,
    pub v_p_at_boundary: S,
}

/// Damping/saturation regime tags; thresholds are `MUCH_GREATER` ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Underdamped,
    Overdamped,
    Transition,
    Saturation,
    Supersaturation,
}

/// Geometry the defect estimate is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Homogeneous,
    Harmonic,
}

/// Defect-loss correction parameters for the annihilation factor f_p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct DefectLoss<S: Scalar> {
    pub p: S,
    /// Upper summation index; `None` means the full geometric series.
    pub n_max: Option<usize>,
}

/// Predicted defect statistics for one protocol and geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEstimate<S> {
    /// Average frozen domain length.
    pub xi_hat: S,
    /// Defect density 1/xi_hat.
    pub density: S,
    /// Domain count L/xi_hat, clamped to the kink capacity N - 2.
    pub count: S,
    pub regime: Regime,
    /// Count after the defect-loss correction, when requested.
    pub corrected_count: Option<S>,
    /// True when the chain solve had to clamp xi at L.
    pub clamped: bool,
}

/// Result of the oscillation-quench closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OscillationOutcome<S> {
    /// The drive never sustains a breaking nucleus: no defects are produced.
    NoDefects,
    /// Frozen domain length.
    DomainLength(S),
}

/// Relaxation time tau(eps) = tau_0 / (sqrt(1 + alpha|eps|) - 1).
///
/// Evaluated as tau_0 (sqrt(1+x) + 1)/x, which is exact and free of
/// cancellation in the overdamped limit x -> 0.
pub fn relaxation_time<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    eps: S,
) -> Result<S> {
    if eps == S::zero() {
        return Err(Error::CriticalDivergence);
    }
    let x = params.alpha() * eps.abs();
    Ok(params.tau_0 * ((S::one() + x).sqrt() + S::one()) / x)
}

/// Lifetime tau_N = c_N tau(eps).
pub fn lifetime_tau_n<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    eps: S,
) -> Result<S> {
    Ok(params.c_n * relaxation_time(params, eps)?)
}

/// Equilibrium correlation length xi(eps) = xi_0 |eps|^(-1/2).
pub fn correlation_length<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    eps: S,
) -> Result<S> {
    if eps == S::zero() {
        return Err(Error::CriticalDivergence);
    }
    Ok(params.xi_0 / eps.abs().sqrt())
}

/// Propagation velocity v_p = kappa_N xi(eps) / tau_N(eps).
///
/// The ratio of the two divergent quantities stays finite; at eps = 0 the
/// one-sided limit is zero and is returned as such.
pub fn propagation_velocity<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    eps: S,
) -> S {
    if eps == S::zero() {
        return S::zero();
    }
    let x = params.alpha() * eps.abs();
    params.v_max() * x.sqrt() / ((S::one() + x).sqrt() + S::one())
}

/// Classic freeze-out root t_hat of t = tau_N(eps(t)) on t > 0.
pub fn kzm_freeze_out<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    protocol: &QuenchProtocol<S>,
) -> Result<S> {
    let hint = protocol.tau_q().unwrap_or(params.tau_1).max(params.tau_1);
    let g = |t: S| -> S {
        match epsilon_at(protocol, t) {
            Ok(eps) if eps != S::zero() => match lifetime_tau_n(params, eps) {
                Ok(tau) => t - tau,
                Err(_) => S::nan(),
            },
            // At a protocol node the lifetime diverges: definitely frozen side.
            Ok(_) => -S::infinity(),
            Err(_) => S::nan(),
        }
    };
    let lo = hint * S::c(1e-12);
    let hi = hint * S::c(1e12);
    let (a, b) = roots::first_bracket_log(&g, lo, hi, 1200).ok_or(Error::RootNotFound {
        lo: lo.f64(),
        hi: hi.f64(),
        g_lo: g(lo).f64(),
        g_hi: g(hi).f64(),
    })?;
    let root = roots::bisect(&g, a, b, S::c(1e-12), 300)?;
    // Contract: the residual of the fixed-point equation is tiny.
    let residual = (g(root) / root).abs();
    if residual > S::c(1e-10) {
        return Err(Error::RootNotFound {
            lo: a.f64(),
            hi: b.f64(),
            g_lo: residual.f64(),
            g_hi: residual.f64(),
        });
    }
    Ok(root)
}

/// Driven freeze-out boundary: t_N = t_hat / (sqrt(beta |eps'(t_hat)|) + 1),
/// with every boundary field evaluated at t_N.
pub fn freeze_out_time<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    protocol: &QuenchProtocol<S>,
) -> Result<FreezeOut<S>> {
    freeze_out_time_for_spacing(params, protocol, params.a_0)
}

/// Same as [`freeze_out_time`] with the boundary divisor evaluated at a local
/// inter-particle spacing (the per-ion beta of the inhomogeneous chain).
pub fn freeze_out_time_for_spacing<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    protocol: &QuenchProtocol<S>,
    spacing: S,
) -> Result<FreezeOut<S>> {
    let t_hat = kzm_freeze_out(params, protocol)?;
    let beta = params.beta_for_spacing(spacing);
    let rate = epsilon_rate(protocol, t_hat)?.abs();
    let divisor = (beta * rate).sqrt() + S::one();
    let t_hat_n = t_hat / divisor;
    let eps_n = epsilon_at(protocol, t_hat_n)?;
    Ok(FreezeOut {
        t_hat,
        t_hat_n,
        tau_n_at_boundary: lifetime_tau_n(params, eps_n)?,
        xi_n_at_boundary: params.kappa_n * correlation_length(params, eps_n)?,
        v_p_at_boundary: propagation_velocity(params, eps_n),
    })
}

/// Frozen domain length xi_hat = integral of v_p(eps(t)) over (0, t_N].
///
/// The eps^(1/2)-type endpoint behaviour at t = 0 is handled by the t = u^2
/// substitution inside the quadrature.
pub fn xi_hat<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    protocol: &QuenchProtocol<S>,
) -> Result<S> {
    let fo = freeze_out_time(params, protocol)?;
    xi_hat_to_boundary(params, protocol, fo.t_hat_n)
}

fn xi_hat_to_boundary<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    protocol: &QuenchProtocol<S>,
    t_boundary: S,
) -> Result<S> {
    let tol = S::c(1e-8);
    let q = quad::integrate_sqrt_from_zero(
        |t: S| match epsilon_at(protocol, t) {
            Ok(eps) => propagation_velocity(params, eps),
            Err(_) => S::zero(),
        },
        t_boundary,
        tol,
        tol,
        4096,
    )?;
    Ok(q.value)
}

/// Closed form of the frozen domain length under the sin^2(omega t)/t
/// oscillation drive, valid in the overdamped radial-driving regime.
///
/// Derivation from this module's own definitions (overdamped tau, static
/// boundary t = tau_N(t), continuous medium): the boundary sits at
/// sin^2(omega t_hat) = c_N tau_0 eta^2 / (2 lambda) and
///
///   xi_hat = (2 xi_1 sqrt(delta_0 lambda) / (c_N tau_0 eta^2))
///            * sqrt(2 pi / omega) * F_rs(omega t_hat),
///
/// with F_rs the sine-type Fresnel integral. At the published normalization
/// tau_0 = 2/eta, delta_0 = 1 this is exactly the printed closed form with
/// threshold lambda < c_N eta; below threshold the boundary equation has no
/// real solution and no defects are produced.
pub fn xi_oscillation_closed_form<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    lambda: S,
    omega: S,
) -> Result<OscillationOutcome<S>> {
    if lambda <= S::zero() || omega <= S::zero() {
        return Err(Error::InvalidConfig("lambda and omega must be > 0".into()));
    }
    let drive = S::c(0.724) * lambda * omega;
    if params.eta < S::c(MUCH_GREATER) * drive {
        return Err(Error::RegimeViolation(format!(
            "need eta >> 0.724 lambda omega (ratio {:.3} < {MUCH_GREATER})",
            (params.eta / drive).f64()
        )));
    }
    let s_crit = params.c_n * params.tau_0 * params.eta * params.eta / (S::c(2.0) * lambda);
    if s_crit > S::one() {
        return Ok(OscillationOutcome::NoDefects);
    }
    let theta_hat = s_crit.sqrt().asin();
    let two_pi = S::c(2.0 * std::f64::consts::PI);
    let pref = S::c(2.0) * params.xi_1 * (params.delta_0 * lambda).sqrt()
        / (params.c_n * params.tau_0 * params.eta * params.eta);
    let xi = pref * (two_pi / omega).sqrt() * fresnel::fresnel_rs(theta_hat);
    Ok(OscillationOutcome::DomainLength(xi))
}

/// Options for the inhomogeneous-chain solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct ChainSolveOptions<S: Scalar> {
    /// Starting velocity as a fraction of the pole gamma sqrt(alpha).
    pub v_start_frac: S,
    /// Local tolerance of the adaptive integrator.
    pub tol: S,
}

impl<S: Scalar + Serialize + serde::de::DeserializeOwned> Default for ChainSolveOptions<S> {
    fn default() -> Self {
        Self { v_start_frac: S::c(1e-6), tol: S::c(1e-9) }
    }
}

/// Diagnostics of one chain solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainSolveDiagnostics {
    /// Times the trajectory traversed a fold of the explicit form.
    pub folds: usize,
    /// xi reached the chain length and was clamped there.
    pub clamped: bool,
}

/// Solve the inhomogeneous-chain equation for xi(tau_q, v_eval).
///
/// The explicit form
///
///   d xi / dv = A(v) / D(v, xi),
///   A = 4 v gamma^2 (v^2 + alpha gamma^2) / (alpha gamma^2 - v^2)^3,
///   D = 1/(2 v tau_q) - 3 chi xi (L^2 - xi^2)^2,
///
/// is integrated as an arc-length continuation of the direction field (D, A),
/// which stays regular where D changes sign (a fold of the classical
/// solution). xi starts at 0 at v_start and is read at the last crossing of
/// `v_eval`; it is clamped at L if the trajectory reaches the chain length.
pub fn solve_inhomogeneous_xi<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    tau_q: S,
    v_eval: S,
) -> Result<S> {
    let (mut xi, _diag) =
        solve_inhomogeneous_xi_multi(params, tau_q, &[v_eval], &ChainSolveOptions::default())?;
    Ok(xi.pop().expect("one target requested"))
}

/// Multi-target version: `v_targets` must be sorted ascending; one pass of
/// the integration reports xi at each target plus diagnostics.
pub fn solve_inhomogeneous_xi_multi<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    tau_q: S,
    v_targets: &[S],
    opts: &ChainSolveOptions<S>,
) -> Result<(Vec<S>, ChainSolveDiagnostics)> {
    if tau_q <= S::zero() {
        return Err(Error::InvalidConfig("tau_q must be > 0".into()));
    }
    let gamma = params.gamma();
    let alpha = params.alpha();
    let v_pole = params.v_max();
    let len = params.length;
    let chi = params.chi(tau_q);

    for w in v_targets.windows(2) {
        if w[1] < w[0] {
            return Err(Error::InvalidConfig("v_targets must be sorted ascending".into()));
        }
    }
    let v_last = *v_targets.last().ok_or_else(|| {
        Error::InvalidConfig("at least one evaluation velocity is required".into())
    })?;
    if v_last >= v_pole {
        return Err(Error::PoleCrossing { v: v_last.f64(), pole: v_pole.f64() });
    }

    let v_start = opts.v_start_frac * v_pole;
    let ag2 = alpha * gamma * gamma;
    let a_of = |v: S| {
        let d = ag2 - v * v;
        S::c(4.0) * v * gamma * gamma * (v * v + ag2) / (d * d * d)
    };
    let d_of = |v: S, xi: S| {
        let l2 = len * len - xi * xi;
        S::one() / (S::c(2.0) * v * tau_q) - S::c(3.0) * chi * xi * l2 * l2
    };

    // Scaled arc-length field; v in units of the pole, xi in units of L.
    let field = |_s: S, y: &ode::State2<S>| -> ode::State2<S> {
        let v = y[0] * v_pole;
        let xi = y[1] * len;
        let dv = d_of(v, xi);
        let dxi = a_of(v);
        let sv = dv / v_pole;
        let sxi = dxi / len;
        let norm = (sv * sv + sxi * sxi).sqrt();
        [sv / norm, sxi / norm]
    };

    let mut y = [v_start / v_pole, S::zero()];
    let mut s = S::zero();
    let mut h = S::c(1e-6);
    let mut diag = ChainSolveDiagnostics::default();
    let mut results = vec![S::nan(); v_targets.len()];
    let mut d_sign_prev = d_of(v_start, S::zero()) > S::zero();
    let scaled_targets: Vec<S> = v_targets.iter().map(|&v| v / v_pole).collect();
    let hit_tol = S::c(1e-12);

    // Generous arc bound: the scaled trajectory lives in [0,1] x [0,~1].
    let s_max = S::c(50.0);
    let v_done = (v_last / v_pole) * (S::one() + S::c(1e-3)) + S::c(1e-12);
    let max_steps = 2_000_000usize;
    let mut steps = 0usize;

    while s < s_max {
        steps += 1;
        if steps > max_steps {
            return Err(Error::OdeFailure(format!(
                "step budget exhausted at s = {}, v = {}, xi = {}",
                s.f64(),
                (y[0] * v_pole).f64(),
                (y[1] * len).f64()
            )));
        }
        let mut step = ode::cash_karp_step(&field, s, &y, h, opts.tol, opts.tol);
        if step.err > S::one() {
            h = ode::next_step_size(h, step.err);
            if h < S::c(1e-15) {
                return Err(Error::OdeFailure("step size underflow".into()));
            }
            continue;
        }

        // Land exactly on bracketed evaluation velocities: shrink the step
        // towards the nearest crossing so xi is read on the trajectory, not
        // interpolated across a long arc.
        let mut h_used = h;
        for _ in 0..80 {
            let nearest = scaled_targets
                .iter()
                .filter(|&&vt| {
                    (y[0] - vt) * (step.y[0] - vt) < S::zero()
                        && (y[0] - vt).abs() > hit_tol
                })
                .map(|&vt| ((vt - y[0]) / (step.y[0] - y[0]), vt))
                .filter(|(w, _)| w.is_finite() && *w > S::zero())
                .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite fractions"));
            let Some((frac, _vt)) = nearest else { break };
            let h_try = (h_used * frac).max(h_used * S::c(1e-6));
            let trial = ode::cash_karp_step(&field, s, &y, h_try, opts.tol, opts.tol);
            h_used = h_try;
            step = trial;
        }
        let y_new = step.y;
        for (k, &vt) in scaled_targets.iter().enumerate() {
            if (y[0] - vt).abs() <= hit_tol {
                results[k] = y[1] * len;
            } else if (y_new[0] - vt).abs() <= hit_tol {
                results[k] = y_new[1] * len;
            } else if (y[0] - vt) * (y_new[0] - vt) < S::zero() {
                // The landing loop keeps bracketing steps short, so linear
                // interpolation inside the step is already at tolerance.
                let w = (vt - y[0]) / (y_new[0] - y[0]);
                results[k] = (y[1] + w * (y_new[1] - y[1])) * len;
            }
        }

        s += h_used;
        y = y_new;
        h = ode::next_step_size(h_used, step.err).min(S::c(0.02));

        if y[0] <= S::zero() {
            return Err(Error::OdeFailure(format!(
                "trajectory left the physical domain (v = {} at s = {})",
                (y[0] * v_pole).f64(),
                s.f64()
            )));
        }
        let v_now = y[0] * v_pole;
        let xi_now = y[1] * len;
        let mut d_sign = d_of(v_now, xi_now) > S::zero();
        if d_sign != d_sign_prev {
            diag.folds += 1;
            d_sign_prev = d_sign;
        }
        // A fold entered below the hump of xi (L^2 - xi^2)^2 is a runaway:
        // the classical solution jumps vertically to the upper branch where
        // the denominator is positive again. Land the jump by bisection.
        let hump = len * S::c(0.4472135954999579); // L / sqrt(5)
        if !d_sign && xi_now < hump {
            let mut lo = hump / len;
            let mut hi = S::one();
            // D(v, hump) < 0 here and D(v, L) > 0; bisect on scaled xi.
            for _ in 0..200 {
                let mid = (lo + hi) * S::c(0.5);
                if d_of(v_now, mid * len) > S::zero() {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < S::c(1e-14) {
                    break;
                }
            }
            y[1] = hi;
            diag.folds += 1;
            d_sign = d_of(v_now, y[1] * len) > S::zero();
            d_sign_prev = d_sign;
            h = S::c(1e-6);
        }
        if y[1] >= S::one() {
            diag.clamped = true;
            // xi is capped at the chain length from here on; every unmet
            // target reads the clamp value.
            for r in results.iter_mut() {
                if r.is_nan() {
                    *r = len;
                }
            }
            break;
        }
        if y[0] >= v_done && d_sign {
            break;
        }
        if y[0] * v_pole >= v_pole * (S::one() - S::c(1e-9)) {
            return Err(Error::PoleCrossing { v: v_now.f64(), pole: v_pole.f64() });
        }
    }

    for (k, r) in results.iter_mut().enumerate() {
        if r.is_nan() {
            // Targets below the start velocity accumulate nothing.
            if v_targets[k] <= v_start {
                *r = S::zero();
            } else {
                return Err(Error::OdeFailure(format!(
                    "integration ended before reaching v = {}",
                    v_targets[k].f64()
                )));
            }
        }
        if *r > len {
            *r = len;
            diag.clamped = true;
        }
    }
    Ok((results, diag))
}

/// Defect density for a protocol: d = 1/<xi_hat>, count = L/<xi_hat>.
///
/// Harmonic chains average xi over per-ion nucleation sites: each local
/// spacing a_i gets its own driven boundary (beta depends on a_i) and
/// evaluation velocity, and the chain ODE is read at each of them.
pub fn defect_density<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    protocol: &QuenchProtocol<S>,
    geometry: Geometry,
    loss: Option<&DefectLoss<S>>,
) -> Result<DefectEstimate<S>> {
    let (xi_mean, clamped) = match geometry {
        Geometry::Homogeneous => (xi_hat(params, protocol)?, false),
        Geometry::Harmonic => {
            let t_hat = kzm_freeze_out(params, protocol)?;
            let rate = epsilon_rate(protocol, t_hat)?.abs();
            let spacings = chain_geometry::lda_spacings(params.n_ions, params.length);
            let mut velocities: Vec<S> = spacings
                .iter()
                .map(|&a| {
                    let divisor = (params.beta_for_spacing(a) * rate).sqrt() + S::one();
                    let t_n = t_hat / divisor;
                    epsilon_at(protocol, t_n).map(|e| propagation_velocity(params, e))
                })
                .collect::<Result<_>>()?;
            velocities.sort_by(|a, b| a.partial_cmp(b).expect("finite velocities"));
            let (xis, diag) = solve_inhomogeneous_xi_multi(
                params,
                effective_tau_q(protocol, t_hat, rate),
                &velocities,
                &ChainSolveOptions::default(),
            )?;
            let mean = xis.iter().copied().sum::<S>() / S::c(xis.len() as f64);
            (mean, diag.clamped)
        }
    };

    let density = S::one() / xi_mean;
    let cap = S::c((params.n_ions.saturating_sub(2)) as f64);
    let count = (params.length / xi_mean).min(cap).max(S::zero());
    let tau_q = match protocol.tau_q() {
        Some(t) => t,
        None => {
            let t_hat = kzm_freeze_out(params, protocol)?;
            effective_tau_q(protocol, t_hat, epsilon_rate(protocol, t_hat)?.abs())
        }
    };
    let corrected_count = match loss {
        Some(l) => Some(defect_loss_correction(l.p, density, l.n_max)? * params.length),
        None => None,
    };
    Ok(DefectEstimate {
        xi_hat: xi_mean,
        density,
        count,
        regime: regime_classify(params, tau_q)?,
        corrected_count,
        clamped,
    })
}

/// Protocols without a literal timescale use the freeze-out rate instead.
fn effective_tau_q<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    protocol: &QuenchProtocol<S>,
    _t_hat: S,
    rate: S,
) -> S {
    protocol.tau_q().unwrap_or_else(|| S::one() / rate)
}

/// Defect-loss corrected density: f_p(x) * x with
/// f_p(x) = p x / sum_{n=1..n_max} (p x)^n. `n_max = None` sums the full
/// geometric series, which requires p x < 1.
pub fn defect_loss_correction<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    p: S,
    x: S,
    n_max: Option<usize>,
) -> Result<S> {
    if p <= S::zero() {
        return Err(Error::InvalidConfig("p must be > 0".into()));
    }
    if x < S::zero() {
        return Err(Error::InvalidConfig("raw density must be >= 0".into()));
    }
    if x == S::zero() {
        return Ok(S::zero());
    }
    let px = p * x;
    let f = defect_loss_factor(px, n_max)?;
    Ok(f * x)
}

fn defect_loss_factor<S: Scalar>(px: S, n_max: Option<usize>) -> Result<S> {
    match n_max {
        None => {
            if px >= S::one() {
                return Err(Error::LossSumDiverges { px: px.f64() });
            }
            // px / (px/(1-px)) = 1 - px
            Ok(S::one() - px)
        }
        Some(k) => {
            if k == 0 {
                return Err(Error::InvalidConfig("n_max must be >= 1".into()));
            }
            // Geometric partial sum, stable near px = 1.
            if (px - S::one()).abs() < S::c(1e-9) {
                return Ok(S::one() / S::c(k as f64));
            }
            let sum = px * (S::one() - px.powi(k as i32)) / (S::one() - px);
            Ok(px / sum)
        }
    }
}

/// Regime classification for a linear quench of timescale `tau_q`.
pub fn regime_classify<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    params: &ScalingParams<S>,
    tau_q: S,
) -> Result<Regime> {
    let big = S::c(MUCH_GREATER);
    let small = S::one() / big;

    let beta = params.beta();
    if beta > S::zero() && tau_q / beta < small {
        let super_threshold =
            S::c(0.52) * params.omega_0 * (params.kappa_n / params.c_n).powf(S::c(1.0 / 3.0));
        if params.eta / super_threshold > big {
            return Ok(Regime::Supersaturation);
        }
        return Ok(Regime::Saturation);
    }

    let protocol = QuenchProtocol::Linear { tau_q };
    let t_hat = kzm_freeze_out(params, &protocol)?;
    let damping_ratio = params.delta_0 * t_hat / (tau_q * params.eta * params.eta);
    if damping_ratio > big {
        Ok(Regime::Underdamped)
    } else if damping_ratio < small {
        Ok(Regime::Overdamped)
    } else {
        Ok(Regime::Transition)
    }
}
