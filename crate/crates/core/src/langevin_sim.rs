//! Direct Langevin simulation of an N-ion chain crossing the linear-to-
//! zigzag transition.
//!
//! Ions live in two dimensions (axial x, one transverse y), interact through
//! pairwise Coulomb repulsion, and feel a transverse confinement
//! omega_t^2(t) driven by a quench protocol. The thermostat is the BAOAB
//! splitting: velocity Verlet around an exact Ornstein-Uhlenbeck midpoint,
//! so the fluctuation-dissipation relation holds at finite step size and the
//! zero-noise limit is symplectic.
//!
//! One trajectory is strictly sequential and deterministic in (config, seed).
//! Ensembles fan out over per-trajectory seeds derived from the master seed,
//! so results do not depend on worker scheduling.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain_geometry;
use crate::error::{Error, Result};
use crate::quench::{epsilon_at, QuenchProtocol};
use crate::scalar::Scalar;

/// Axial confinement of the simulated chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub enum SimTrap<S: Scalar> {
    /// Periodic chain with uniform spacing: the homogeneous idealization.
    Ring { spacing: S },
    /// Harmonic axial trap with frequency nu.
    Harmonic { nu: S },
}

/// Final linear pull-down phase appended to an oscillation drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Pulldown<S: Scalar> {
    /// Protocol time at which the ramp starts.
    pub t_switch: S,
    /// Reduced detuning depth reached at t_end.
    pub eps_final: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct SimConfig<S: Scalar> {
    pub n_ions: usize,
    pub mass: S,
    /// Coulomb coupling Q^2/(4 pi eps_0) in simulation units.
    pub coulomb: S,
    /// Damping eta (1/time).
    pub eta: S,
    /// Thermal energy k_B T.
    pub k_t: S,
    pub trap: SimTrap<S>,
    pub dt: S,
    pub protocol: QuenchProtocol<S>,
    /// Reduced-to-squared-frequency conversion of the drive.
    pub delta_0: S,
    /// Protocol time window of the drive.
    pub t_start: S,
    pub t_end: S,
    /// Thermostatted hold at omega_c^2 + delta_0 * hold_epsilon before the drive.
    pub equilibration_time: S,
    #[serde(default = "default_hold_epsilon")]
    pub hold_epsilon: f64,
    /// Relaxation at the final confinement before kinks are counted.
    pub final_relax_time: S,
    #[serde(default)]
    pub pulldown: Option<Pulldown<S>>,
    /// Mask threshold for kink detection, as a fraction of the largest
    /// staggered amplitude.
    #[serde(default = "default_kink_threshold")]
    pub kink_threshold: f64,
    pub seed: u64,
}

fn default_hold_epsilon() -> f64 {
    0.5
}

fn default_kink_threshold() -> f64 {
    0.1
}

/// One trajectory's state: positions, velocities, time and generator.
#[derive(Debug, Clone)]
pub struct ChainState<S> {
    pub x: Vec<S>,
    pub y: Vec<S>,
    pub vx: Vec<S>,
    pub vy: Vec<S>,
    /// Protocol time.
    pub t: S,
    pub rng: ChaCha12Rng,
    pub seed: u64,
}

/// Metadata attached to a kink report.
///
/// Wall time is kept in memory but excluded from serialization so that
/// identical (config, seed) runs produce identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub protocol: String,
    #[serde(skip)]
    pub wall_time_ms: u128,
}

/// Kink census of a final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinkReport<S> {
    pub kink_count: usize,
    /// Left ion index of each staggered-phase flip.
    pub kink_positions: Vec<usize>,
    /// Per-ion signed zigzag amplitude psi_i = (-1)^i y_i.
    pub order_parameter: Vec<S>,
    /// All ions below the mask threshold: the chain is still linear.
    pub linear_phase: bool,
    /// Raw flip count exceeded the N-2 capacity and was clamped.
    pub capped: bool,
    pub meta: TrajectoryMeta,
}

/// Geometry-derived constants computed once per configuration.
#[derive(Debug, Clone)]
pub struct SimContext<S> {
    pub omega_c_sq: S,
    /// Equilibrium axial positions (ring lattice or trap minimum).
    pub x_eq: Vec<S>,
    /// Ring circumference, if periodic.
    pub ring_length: Option<S>,
}

impl<S: Scalar + Serialize + serde::de::DeserializeOwned> SimConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.n_ions < 4 {
            return Err(Error::InvalidConfig("need at least 4 ions".into()));
        }
        if matches!(self.trap, SimTrap::Ring { .. }) && !self.n_ions.is_multiple_of(2) {
            return Err(Error::InvalidConfig(
                "ring geometry needs an even ion count for a commensurate zigzag".into(),
            ));
        }
        let positive = |v: S, name: &str| {
            if v > S::zero() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be > 0, got {}", v.f64())))
            }
        };
        positive(self.mass, "mass")?;
        positive(self.coulomb, "coulomb")?;
        positive(self.delta_0, "delta_0")?;
        positive(self.dt, "dt")?;
        if self.eta < S::zero() || self.k_t < S::zero() {
            return Err(Error::InvalidConfig("eta and k_t must be >= 0".into()));
        }
        if self.t_end <= self.t_start {
            return Err(Error::InvalidConfig("t_end must exceed t_start".into()));
        }
        self.protocol.validate()?;
        match self.trap {
            SimTrap::Ring { spacing } => positive(spacing, "spacing")?,
            SimTrap::Harmonic { nu } => positive(nu, "nu")?,
        }
        Ok(())
    }

    /// Stability bound dt <= (1/50) min(2 pi / omega_max, 1/eta).
    fn check_dt(&self, ctx: &SimContext<S>) -> Result<()> {
        let a_min = match self.trap {
            SimTrap::Ring { spacing } => spacing,
            SimTrap::Harmonic { .. } => {
                let mut min_gap = S::infinity();
                for w in ctx.x_eq.windows(2) {
                    min_gap = min_gap.min(w[1] - w[0]);
                }
                min_gap
            }
        };
        let hold = ctx.omega_c_sq + self.delta_0 * S::c(self.hold_epsilon);
        let axial_sq = match self.trap {
            SimTrap::Ring { .. } => S::zero(),
            SimTrap::Harmonic { nu } => nu * nu,
        };
        // Stiffest phonon estimate: hold confinement plus the axial band top.
        let omega_max =
            (hold + S::c(9.0) * self.coulomb / (self.mass * a_min.powi(3)) + axial_sq).sqrt();
        let two_pi = S::c(2.0 * std::f64::consts::PI);
        let mut bound = two_pi / omega_max;
        if self.eta > S::zero() {
            bound = bound.min(S::one() / self.eta);
        }
        let bound = bound / S::c(50.0);
        if self.dt > bound {
            return Err(Error::InvalidConfig(format!(
                "dt = {} exceeds the stability bound {}",
                self.dt.f64(),
                bound.f64()
            )));
        }
        Ok(())
    }

    /// Geometry constants; for the harmonic trap this includes the axial
    /// equilibrium and the soft-mode critical frequency from the transverse
    /// Hessian.
    pub fn context(&self) -> Result<SimContext<S>> {
        self.validate()?;
        let ctx = match self.trap {
            SimTrap::Ring { spacing } => SimContext {
                omega_c_sq: chain_geometry::ring_critical_omega_sq(
                    self.n_ions,
                    self.mass,
                    self.coulomb,
                    spacing,
                ),
                x_eq: chain_geometry::ring_positions(self.n_ions, spacing),
                ring_length: Some(spacing * S::c(self.n_ions as f64)),
            },
            SimTrap::Harmonic { nu } => {
                let x_eq =
                    chain_geometry::harmonic_equilibrium(self.n_ions, self.mass, self.coulomb, nu)?;
                let omega_c_sq = transverse_critical_sq(&x_eq, self.mass, self.coulomb);
                SimContext { omega_c_sq, x_eq, ring_length: None }
            }
        };
        self.check_dt(&ctx)?;
        Ok(ctx)
    }

    /// Drive detuning: protocols are consumed as a crossing depth, so the
    /// transverse confinement is omega_c^2 - delta_0 * eps_drive(t). The
    /// sin^2/t oscillation is published as a negative detuning and enters
    /// with its sign flipped, which makes its arches dip below criticality.
    pub fn drive_epsilon(&self, t: S) -> Result<S> {
        let eps = epsilon_at(&self.protocol, t)?;
        Ok(match self.protocol {
            QuenchProtocol::OscSin2OverT { .. } => -eps,
            _ => eps,
        })
    }

    /// Transverse confinement during the drive window, including the
    /// optional final pull-down ramp.
    pub fn omega_t_sq(&self, ctx: &SimContext<S>, t: S) -> Result<S> {
        if let Some(p) = self.pulldown {
            if t >= p.t_switch {
                let w_switch = ctx.omega_c_sq - self.delta_0 * self.drive_epsilon(p.t_switch)?;
                let w_final = ctx.omega_c_sq - self.delta_0 * p.eps_final;
                let frac = (t - p.t_switch) / (self.t_end - p.t_switch);
                let frac = frac.min(S::one());
                return Ok(w_switch + (w_final - w_switch) * frac);
            }
        }
        Ok(ctx.omega_c_sq - self.delta_0 * self.drive_epsilon(t)?)
    }
}

/// Critical transverse confinement of an arbitrary axial arrangement: the
/// largest eigenvalue of the Coulomb destabilization matrix, found by power
/// iteration.
fn transverse_critical_sq<S: Scalar>(x_eq: &[S], mass: S, coulomb: S) -> S {
    let n = x_eq.len();
    // Transverse Hessian of the Coulomb energy (per unit mass) is -M with
    // M_ij = c_ij for i != j and M_ii = -sum_j c_ij, c_ij = coulomb/|dx|^3.
    let mut m = vec![S::zero(); n * n];
    for i in 0..n {
        let mut diag = S::zero();
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (x_eq[i] - x_eq[j]).abs();
            let c = coulomb / (d * d * d);
            m[i * n + j] = c;
            diag -= c;
        }
        m[i * n + i] = diag;
    }
    // Power iteration on -M, seeded with the staggered pattern.
    let mut v: Vec<S> = (0..n).map(|i| if i % 2 == 0 { S::one() } else { -S::one() }).collect();
    let norm0 = v.iter().map(|x| *x * *x).sum::<S>().sqrt();
    for vi in v.iter_mut() {
        *vi /= norm0;
    }
    let mut lambda = S::zero();
    for _ in 0..10_000 {
        let mut w = vec![S::zero(); n];
        for i in 0..n {
            for j in 0..n {
                w[i] -= m[i * n + j] * v[j];
            }
        }
        let new_lambda = v.iter().zip(&w).map(|(a, b)| *a * *b).sum::<S>();
        let norm = w.iter().map(|x| *x * *x).sum::<S>().sqrt();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = *wi / norm;
        }
        if (new_lambda - lambda).abs() <= S::c(1e-13) * new_lambda.abs() {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda / mass
}

/// Pairwise Coulomb forces: exact O(N^2) sum, minimum-image in x for rings.
pub fn coulomb_forces<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
) -> Result<(Vec<S>, Vec<S>)> {
    let n = config.n_ions;
    let mut fx = vec![S::zero(); n];
    let mut fy = vec![S::zero(); n];
    let ring = match config.trap {
        SimTrap::Ring { spacing } => Some(spacing * S::c(n as f64)),
        SimTrap::Harmonic { .. } => None,
    };
    accumulate_coulomb(state, config, ring, &mut fx, &mut fy)?;
    Ok((fx, fy))
}

fn accumulate_coulomb<S: Scalar>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
    ring: Option<S>,
    fx: &mut [S],
    fy: &mut [S],
) -> Result<()> {
    let n = config.n_ions;
    let q2 = config.coulomb;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut dx = state.x[i] - state.x[j];
            if let Some(l) = ring {
                dx = dx - (dx / l).round() * l;
            }
            let dy = state.y[i] - state.y[j];
            let r2 = dx * dx + dy * dy;
            if r2 == S::zero() {
                return Err(Error::CoincidentIons { i, j });
            }
            let inv_r3 = S::one() / (r2 * r2.sqrt());
            let f = q2 * inv_r3;
            fx[i] += f * dx;
            fy[i] += f * dy;
            fx[j] -= f * dx;
            fy[j] -= f * dy;
        }
    }
    Ok(())
}

/// Trap forces at protocol time `t`: transverse -m omega_t^2(t) y, axial
/// -m nu^2 x in the harmonic trap and zero on the ring.
pub fn trap_forces<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
    t: S,
) -> Result<(Vec<S>, Vec<S>)> {
    let ctx = config.context()?;
    let w2 = config.omega_t_sq(&ctx, t)?;
    Ok(trap_forces_with(state, config, w2))
}

fn trap_forces_with<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
    omega_t_sq: S,
) -> (Vec<S>, Vec<S>) {
    let n = config.n_ions;
    let m = config.mass;
    let mut fx = vec![S::zero(); n];
    let mut fy = vec![S::zero(); n];
    if let SimTrap::Harmonic { nu } = config.trap {
        for (f, x) in fx.iter_mut().zip(&state.x) {
            *f = -m * nu * nu * *x;
        }
    }
    for (f, y) in fy.iter_mut().zip(&state.y) {
        *f = -m * omega_t_sq * *y;
    }
    (fx, fy)
}

/// Scratch force buffers reused across steps.
struct ForceBuf<S> {
    fx: Vec<S>,
    fy: Vec<S>,
}

impl<S: Scalar> ForceBuf<S> {
    fn new(n: usize) -> Self {
        Self { fx: vec![S::zero(); n], fy: vec![S::zero(); n] }
    }
}

fn total_forces<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
    ctx: &SimContext<S>,
    omega_t_sq: S,
    buf: &mut ForceBuf<S>,
) -> Result<()> {
    let (tfx, tfy) = trap_forces_with(state, config, omega_t_sq);
    buf.fx.copy_from_slice(&tfx);
    buf.fy.copy_from_slice(&tfy);
    accumulate_coulomb(state, config, ctx.ring_length, &mut buf.fx, &mut buf.fy)?;
    Ok(())
}

/// One BAOAB step at fixed transverse confinement; `forces` must hold the
/// forces at the current positions and is left holding the new ones.
fn baoab_step<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &mut ChainState<S>,
    config: &SimConfig<S>,
    ctx: &SimContext<S>,
    omega_t_sq: S,
    forces: &mut ForceBuf<S>,
) -> Result<()> {
    let n = config.n_ions;
    let m = config.mass;
    let dt = config.dt;
    let half_dt = dt * S::c(0.5);

    // B: half kick.
    for i in 0..n {
        state.vx[i] += half_dt * forces.fx[i] / m;
        state.vy[i] += half_dt * forces.fy[i] / m;
    }
    // A: half drift.
    for i in 0..n {
        state.x[i] += half_dt * state.vx[i];
        state.y[i] += half_dt * state.vy[i];
    }
    // O: exact Ornstein-Uhlenbeck velocity update.
    if config.eta > S::zero() {
        let c1 = (-config.eta * dt).exp();
        let c2 = (config.k_t / m * (S::one() - c1 * c1)).sqrt();
        for i in 0..n {
            let gx = S::standard_normal(&mut state.rng);
            let gy = S::standard_normal(&mut state.rng);
            state.vx[i] = c1 * state.vx[i] + c2 * gx;
            state.vy[i] = c1 * state.vy[i] + c2 * gy;
        }
    }
    // A: half drift.
    for i in 0..n {
        state.x[i] += half_dt * state.vx[i];
        state.y[i] += half_dt * state.vy[i];
    }
    // B: half kick with fresh forces.
    total_forces(state, config, ctx, omega_t_sq, forces)?;
    for i in 0..n {
        state.vx[i] += half_dt * forces.fx[i] / m;
        state.vy[i] += half_dt * forces.fy[i] / m;
    }
    state.t += dt;

    check_ordering(state, ctx)
}

fn check_ordering<S: Scalar>(state: &ChainState<S>, ctx: &SimContext<S>) -> Result<()> {
    let n = state.x.len();
    match ctx.ring_length {
        Some(l) => {
            for i in 0..n {
                let j = (i + 1) % n;
                let mut gap = state.x[j] - state.x[i];
                if j == 0 {
                    gap += l;
                }
                if gap <= S::zero() {
                    return Err(Error::IonCrossing { i, j, t: state.t.f64() });
                }
            }
        }
        None => {
            for i in 0..n - 1 {
                if state.x[i + 1] <= state.x[i] {
                    return Err(Error::IonCrossing { i, j: i + 1, t: state.t.f64() });
                }
            }
        }
    }
    Ok(())
}

/// Advance one step at the confinement given by the protocol at the state's
/// own clock. Deterministic in (state, config).
pub fn step<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
) -> Result<ChainState<S>> {
    let ctx = config.context()?;
    let mut next = state.clone();
    let w2 = config.omega_t_sq(&ctx, state.t)?;
    let mut buf = ForceBuf::new(config.n_ions);
    total_forces(&next, config, &ctx, w2, &mut buf)?;
    baoab_step(&mut next, config, &ctx, w2, &mut buf)?;
    Ok(next)
}

/// Ions at the linear-phase equilibrium, velocity-thermalized and
/// equilibrated at the supercritical hold confinement.
pub fn init_chain<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    config: &SimConfig<S>,
) -> Result<ChainState<S>> {
    let ctx = config.context()?;
    init_chain_with(config, &ctx)
}

fn init_chain_with<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    config: &SimConfig<S>,
    ctx: &SimContext<S>,
) -> Result<ChainState<S>> {
    let n = config.n_ions;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let sigma_v = (config.k_t / config.mass).sqrt();
    let vx = (0..n).map(|_| sigma_v * S::standard_normal(&mut rng)).collect();
    let vy = (0..n).map(|_| sigma_v * S::standard_normal(&mut rng)).collect();
    let mut state = ChainState {
        x: ctx.x_eq.clone(),
        y: vec![S::zero(); n],
        vx,
        vy,
        t: config.t_start,
        rng,
        seed: config.seed,
    };

    let hold = ctx.omega_c_sq + config.delta_0 * S::c(config.hold_epsilon);
    let steps = (config.equilibration_time / config.dt).f64().ceil() as u64;
    let mut buf = ForceBuf::new(n);
    total_forces(&state, config, ctx, hold, &mut buf)?;
    for _ in 0..steps {
        baoab_step(&mut state, config, ctx, hold, &mut buf)?;
    }
    state.t = config.t_start;
    Ok(state)
}

/// Full quench: equilibrate, drive through the window, relax, count kinks.
pub fn run_quench<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    config: &SimConfig<S>,
) -> Result<KinkReport<S>> {
    run_quench_with(config, 0, |_| {})
}

/// A frame handed to trajectory observers.
pub struct Frame<'a, S> {
    pub t: S,
    pub x: &'a [S],
    pub y: &'a [S],
    pub vx: &'a [S],
    pub vy: &'a [S],
}

/// As [`run_quench`], invoking `sink` every `stride` steps (0 disables).
pub fn run_quench_with<S, F>(
    config: &SimConfig<S>,
    stride: usize,
    mut sink: F,
) -> Result<KinkReport<S>>
where
    S: Scalar + Serialize + serde::de::DeserializeOwned,
    F: FnMut(Frame<'_, S>),
{
    let started = Instant::now();
    let ctx = config.context()?;
    // The drive must actually cross criticality inside the window; the
    // sin^2/t oscillation touches it tangentially by construction.
    match config.protocol {
        QuenchProtocol::OscSin2OverT { .. } => {}
        _ => {
            let w_start = config.omega_t_sq(&ctx, config.t_start)?;
            let w_end = config.omega_t_sq(&ctx, config.t_end)?;
            if !(w_start > ctx.omega_c_sq && w_end < ctx.omega_c_sq) {
                return Err(Error::InvalidConfig(format!(
                    "drive window does not cross criticality: omega_t^2 goes {} -> {} vs omega_c^2 = {}",
                    w_start.f64(),
                    w_end.f64(),
                    ctx.omega_c_sq.f64()
                )));
            }
        }
    }

    let mut state = init_chain_with(config, &ctx)?;
    let mut buf = ForceBuf::new(config.n_ions);
    let w2 = config.omega_t_sq(&ctx, state.t)?;
    total_forces(&state, config, &ctx, w2, &mut buf)?;

    let mut step_idx: usize = 0;
    while state.t < config.t_end {
        let w2 = config.omega_t_sq(&ctx, state.t)?;
        baoab_step(&mut state, config, &ctx, w2, &mut buf)?;
        step_idx += 1;
        if stride > 0 && step_idx.is_multiple_of(stride) {
            sink(Frame { t: state.t, x: &state.x, y: &state.y, vx: &state.vx, vy: &state.vy });
        }
    }
    // Brief relaxation at the final confinement.
    let w_final = config.omega_t_sq(&ctx, config.t_end)?;
    let relax_steps = (config.final_relax_time / config.dt).f64().ceil() as u64;
    for _ in 0..relax_steps {
        baoab_step(&mut state, config, &ctx, w_final, &mut buf)?;
        step_idx += 1;
        if stride > 0 && step_idx.is_multiple_of(stride) {
            sink(Frame { t: state.t, x: &state.x, y: &state.y, vx: &state.vx, vy: &state.vy });
        }
    }

    let mut report = count_kinks(&state, config)?;
    report.meta.wall_time_ms = started.elapsed().as_millis();
    Ok(report)
}

/// Count zigzag kinks in the staggered order parameter psi_i = (-1)^i y_i.
///
/// Ions with |psi| below `kink_threshold` of the largest amplitude are
/// masked; the kink count is the number of sign changes between unmasked
/// neighbours (cyclically on rings).
pub fn count_kinks<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
) -> Result<KinkReport<S>> {
    let n = config.n_ions;
    let psi: Vec<S> =
        (0..n).map(|i| if i % 2 == 0 { state.y[i] } else { -state.y[i] }).collect();
    let max_amp = psi.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    let threshold = S::c(config.kink_threshold) * max_amp;
    let unmasked: Vec<usize> =
        (0..n).filter(|&i| psi[i].abs() >= threshold && psi[i] != S::zero()).collect();

    let meta = TrajectoryMeta {
        seed: state.seed,
        protocol: config.protocol.describe(),
        wall_time_ms: 0,
    };

    if unmasked.is_empty() || max_amp == S::zero() {
        return Ok(KinkReport {
            kink_count: 0,
            kink_positions: Vec::new(),
            order_parameter: psi,
            linear_phase: true,
            capped: false,
            meta,
        });
    }

    let ring = matches!(config.trap, SimTrap::Ring { .. });
    let mut positions = Vec::new();
    let pairs = if ring { unmasked.len() } else { unmasked.len().saturating_sub(1) };
    for k in 0..pairs {
        let i = unmasked[k];
        let j = unmasked[(k + 1) % unmasked.len()];
        if (psi[i] > S::zero()) != (psi[j] > S::zero()) {
            positions.push(i);
        }
    }
    let cap = n.saturating_sub(2);
    let capped = positions.len() > cap;
    let kink_count = positions.len().min(cap);

    Ok(KinkReport {
        kink_count,
        kink_positions: positions,
        order_parameter: psi,
        linear_phase: false,
        capped,
        meta,
    })
}

/// Kinetic temperature estimate: m <v_c^2> over all velocity components.
pub fn measure_temperature<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
) -> S {
    let n = state.vx.len();
    let sum: S = state.vx.iter().map(|v| *v * *v).sum::<S>()
        + state.vy.iter().map(|v| *v * *v).sum::<S>();
    config.mass * sum / S::c((2 * n) as f64)
}

/// Total mechanical energy at fixed confinement; used by the zero-noise
/// conservation checks.
pub fn total_energy<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    state: &ChainState<S>,
    config: &SimConfig<S>,
    omega_t_sq: S,
) -> Result<S> {
    let n = config.n_ions;
    let m = config.mass;
    let mut e = S::zero();
    for i in 0..n {
        e += m * S::c(0.5) * (state.vx[i] * state.vx[i] + state.vy[i] * state.vy[i]);
        e += m * S::c(0.5) * omega_t_sq * state.y[i] * state.y[i];
        if let SimTrap::Harmonic { nu } = config.trap {
            e += m * S::c(0.5) * nu * nu * state.x[i] * state.x[i];
        }
    }
    let ring = match config.trap {
        SimTrap::Ring { spacing } => Some(spacing * S::c(n as f64)),
        _ => None,
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let mut dx = state.x[i] - state.x[j];
            if let Some(l) = ring {
                dx = dx - (dx / l).round() * l;
            }
            let dy = state.y[i] - state.y[j];
            let r = (dx * dx + dy * dy).sqrt();
            if r == S::zero() {
                return Err(Error::CoincidentIons { i, j });
            }
            e += config.coulomb / r;
        }
    }
    Ok(e)
}

/// Run an ensemble with per-trajectory seeds derived from `master_seed`;
/// parallel over available workers, deterministic regardless of scheduling.
pub fn run_ensemble<S: Scalar + Serialize + serde::de::DeserializeOwned>(
    config: &SimConfig<S>,
    n_seeds: usize,
    master_seed: u64,
) -> Result<Vec<KinkReport<S>>> {
    (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.seed = derive_seed(master_seed, i as u64);
            run_quench(&cfg)
        })
        .collect()
}

/// SplitMix64 step: decorrelates per-trajectory seeds from the master.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
