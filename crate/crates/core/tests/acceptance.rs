//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured numbers.
//!
//! Criteria 1-8 are hard gates. Criterion 9 gates only the convergence of
//! the large-tau_q slope; its value is reported, not asserted.

use kzq_core::ef_core::{
    freeze_out_time, xi_hat, xi_oscillation_closed_form, Geometry,
    OscillationOutcome, ScalingParams,
};
use kzq_core::experiments::{
    compare_protocols, fit_power_law, local_slope, log_grid, saturation_detect, sweep_tau_q,
    SweepSource,
};
use kzq_core::langevin_sim::{run_ensemble, run_quench, Pulldown, SimConfig, SimTrap};
use kzq_core::quench::{epsilon_at, epsilon_rate, QuenchProtocol};

/// Homogeneous parameter set in the alpha|eps| << 1 window, where the
/// quarter power law holds over decades.
fn homogeneous_params() -> ScalingParams<f64> {
    ScalingParams::from_base(
        1.0,   // xi_0
        1.0,   // tau_0
        1.0,   // c_n
        1.0,   // kappa_n
        20.0,  // eta
        1.0,   // delta_0
        0.0,   // a_0 (continuous medium)
        22,    // n_ions
        1.0,   // mass
        1.0,   // coulomb coupling
        100.0, // length
        1.0,   // k_t
        1.0,   // omega_0
    )
    .unwrap()
}

/// Harmonic-chain parameter set: underdamped runway with the finite-size
/// feedback engaging mid-grid.
fn harmonic_params() -> ScalingParams<f64> {
    ScalingParams::from_base(
        8.9,     // xi_0
        1.0,     // tau_0
        1.0,     // c_n
        1.0,     // kappa_n
        0.02236, // eta  (alpha = 8.0e3)
        1.0,     // delta_0
        6.67,    // a_0 = center spacing 2L/(3N)
        100,     // n_ions
        1.0,     // mass
        1.2e-20, // coulomb coupling (sets the chain feedback scale)
        1000.0,  // length
        1.0,     // k_t
        0.19,    // omega_0 (front/characteristic velocity reference)
    )
    .unwrap()
}

/// Published normalization for the oscillation closed form:
/// tau_0 = 2/eta, delta_0 = 1, continuous medium.
fn oscillation_params(eta: f64) -> ScalingParams<f64> {
    ScalingParams::from_base(
        1.0,
        2.0 / eta,
        1.0,
        1.0,
        eta,
        1.0,
        0.0,
        22,
        1.0,
        1.0,
        100.0,
        1.0,
        1.0,
    )
    .unwrap()
}

fn ring_sim(n_ions: usize, tau_q: f64) -> SimConfig<f64> {
    SimConfig {
        n_ions,
        mass: 1.0,
        coulomb: 1.0,
        eta: 0.1,
        k_t: 0.002,
        trap: SimTrap::Ring { spacing: 1.0 },
        dt: 0.02,
        protocol: QuenchProtocol::Linear { tau_q },
        delta_0: 1.0,
        t_start: -0.9 * tau_q,
        t_end: 0.8 * tau_q,
        equilibration_time: 20.0,
        hold_epsilon: 1.0,
        final_relax_time: 5.0,
        pulldown: None,
        kink_threshold: 0.1,
        seed: 0,
    }
}

#[test]
fn criterion_1_homogeneous_exponent() {
    let source = SweepSource::Predictor {
        params: homogeneous_params(),
        protocol: QuenchProtocol::Linear { tau_q: 1.0 },
        geometry: Geometry::Homogeneous,
        loss: None,
    };
    let grid = log_grid(1e3, 1e5, 10);
    let sweep = sweep_tau_q(&grid, &source, 1, 0).unwrap();
    let fit = fit_power_law(&sweep, (1e3, 1e5)).unwrap();
    let pass = (fit.exponent + 0.25).abs() <= 0.03;
    println!(
        "[criterion 1] {}: homogeneous exponent {:.4} (target -0.25 +/- 0.03, r^2 = {:.6})",
        if pass { "PASS" } else { "FAIL" },
        fit.exponent,
        fit.r_squared
    );
    assert!(pass, "exponent {} outside -0.25 +/- 0.03", fit.exponent);
}

#[test]
fn criterion_2_smooth_inhomogeneous_curve() {
    let source = SweepSource::Predictor {
        params: harmonic_params(),
        protocol: QuenchProtocol::Linear { tau_q: 1.0 },
        geometry: Geometry::Harmonic,
        loss: None,
    };
    // 20 points per decade up to tau_q where the slope peak sits.
    let grid = log_grid(1.0, 10f64.powf(2.95), 20);
    let sweep = sweep_tau_q(&grid, &source, 1, 0).unwrap();
    let slopes = local_slope(&sweep, 5).unwrap();
    let mags: Vec<(f64, f64)> = slopes.iter().map(|&(t, s)| (t, -s)).collect();

    let first_in = |lo: f64, hi: f64| mags.iter().position(|&(_, m)| m >= lo && m <= hi);
    let b1 = first_in(0.28, 0.38);
    let b2 = first_in(1.2, 1.5);
    let b3 = first_in(2.5, 2.8);
    let ordered = matches!((b1, b2, b3), (Some(i), Some(j), Some(k)) if i < j && j < k);

    let max_jump = mags
        .windows(2)
        .map(|w| (w[1].1 - w[0].1).abs())
        .fold(0.0f64, f64::max);
    let continuous = max_jump < 0.5;

    println!(
        "[criterion 2] {}: bands 1/3, 4/3, 8/3 visited in order = {ordered} \
         (first hits at indices {b1:?}, {b2:?}, {b3:?}); max adjacent slope jump = {max_jump:.3} \
         (continuity bound 0.5 at 20 points/decade: {})",
        if ordered && continuous { "PASS" } else { "FAIL" },
        if continuous { "met" } else { "NOT met" },
    );
    assert!(ordered, "slope curve must pass the 1/3, 4/3, 8/3 bands in order");
    assert!(
        continuous,
        "max adjacent local-slope jump {max_jump:.3} exceeds the 0.5 continuity bound"
    );
}

#[test]
fn criterion_3_kzm_compatibility_limit() {
    // Continuous medium: the driven boundary equals the classic one bitwise.
    let params = homogeneous_params(); // a_0 = 0
    let proto = QuenchProtocol::Linear { tau_q: 4321.0 };
    let fo = freeze_out_time(&params, &proto).unwrap();
    let bitwise = fo.t_hat.to_bits() == fo.t_hat_n.to_bits();

    // Slow quench: tau_q / beta = 1e4 leaves a relative gap below 2%.
    let mut finite = homogeneous_params();
    finite.a_0 = 1.0;
    let beta = finite.beta();
    assert!(beta > 0.0);
    let fo2 = freeze_out_time(&finite, &QuenchProtocol::Linear { tau_q: 1e4 * beta }).unwrap();
    let gap = (fo2.t_hat - fo2.t_hat_n) / fo2.t_hat;
    let pass = bitwise && (0.0..0.02).contains(&gap);
    println!(
        "[criterion 3] {}: a_0 = 0 gives t_N == t_hat bitwise = {bitwise}; \
         tau_q/beta = 1e4 gives relative gap {gap:.3e} (< 2%)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn criterion_4_quadrature_vs_closed_form() {
    let eta = 1e6;
    let params = oscillation_params(eta);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for lam_ratio in [2.0, 3.0, 5.0, 8.0, 12.0] {
        for omega in [0.002, 0.005] {
            let lambda = lam_ratio * eta;
            let proto =
                QuenchProtocol::OscSin2OverT { tau_q: 1.0, lambda, omega, delta_0: 1.0 };
            let quad = xi_hat(&params, &proto).unwrap();
            match xi_oscillation_closed_form(&params, lambda, omega).unwrap() {
                OscillationOutcome::DomainLength(closed) => {
                    let rel = ((quad - closed) / closed).abs();
                    worst = worst.max(rel);
                    checked += 1;
                }
                OscillationOutcome::NoDefects => panic!("defect production expected"),
            }
        }
    }
    // Below threshold: the no-defect marker everywhere.
    let mut markers = 0;
    for lam_ratio in [0.3, 0.6, 0.9, 0.99] {
        if matches!(
            xi_oscillation_closed_form(&params, lam_ratio * eta, 0.002).unwrap(),
            OscillationOutcome::NoDefects
        ) {
            markers += 1;
        }
    }
    let pass = checked == 10 && worst < 1e-6 && markers == 4;
    println!(
        "[criterion 4] {}: quadrature vs Fresnel closed form on a 10-point grid, \
         worst relative difference {worst:.3e} (< 1e-6); {markers}/4 sub-threshold \
         points return the no-defect marker",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn criterion_5_saturation_plateau() {
    // N = 16 ring chain, three decades of tau_q into the fast-quench limit.
    let base = ring_sim(16, 1.0);
    let source = SweepSource::Simulator { config: base, eps_pre: 0.9, eps_post: 0.8 };
    let grid = log_grid(0.01, 10.0, 7);
    let sweep = sweep_tau_q(&grid, &source, 200, 4242).unwrap();
    for r in &sweep.rows {
        assert!(r.density.is_some(), "gap row at tau_q = {} ({:?})", r.tau_q, r.note);
    }
    let boundary = saturation_detect(&sweep, 0.05).unwrap();
    let ceiling = sweep
        .rows
        .iter()
        .filter_map(|r| r.density)
        .fold(f64::MIN, f64::max);
    let plateau_rows: Vec<f64> = match boundary {
        Some(b) => sweep
            .rows
            .iter()
            .filter(|r| r.tau_q <= b)
            .filter_map(|r| r.density)
            .collect(),
        None => Vec::new(),
    };
    let plateau =
        plateau_rows.iter().sum::<f64>() / plateau_rows.len().max(1) as f64;
    let pass = boundary.is_some() && !plateau_rows.is_empty() && plateau >= 0.8 * ceiling;
    println!(
        "[criterion 5] {}: saturation boundary at tau_q = {:?}, plateau mean {plateau:.2} \
         within 20% of the ensemble ceiling {ceiling:.2}",
        if pass { "PASS" } else { "FAIL" },
        boundary
    );
    assert!(pass, "plateau {plateau} vs ceiling {ceiling}, boundary {boundary:?}");
}

#[test]
fn criterion_6_oscillation_suppression() {
    // 22-ion ring, equal total quench duration, >= 200 seeds.
    let n_seeds = 200;
    let tau_lin = 95.0;
    let mut linear = ring_sim(22, tau_lin);
    linear.eta = 0.3;
    linear.k_t = 3e-5;
    linear.t_start = -0.2 * tau_lin; // window length 1.7 tau = 161.5
    linear.t_end = 1.5 * tau_lin;

    let t_total = linear.t_end - linear.t_start;
    let mut osc = linear.clone();
    osc.protocol = QuenchProtocol::OscSin2OverT {
        tau_q: tau_lin,
        lambda: 14.0,
        omega: 0.9,
        delta_0: 1.0,
    };
    osc.t_start = 20.0;
    osc.t_end = 20.0 + t_total;
    osc.pulldown = Some(Pulldown { t_switch: 20.0 + t_total - 11.5, eps_final: 1.5 });

    let report = compare_protocols(&linear, &osc, n_seeds, 777).unwrap();
    let reduction = report.reduction.expect("baseline produces kinks");
    // One-sided 95% lower bound via the delta-method error.
    let sigma = report
        .reduction_ci95
        .map(|(lo, hi)| (hi - lo) / (2.0 * 1.96))
        .unwrap();
    let lo95 = reduction - 1.645 * sigma;
    let pass = lo95 >= 0.75;
    println!(
        "[criterion 6] {}: linear mean {:.3} +/- {:.3} vs oscillation mean {:.3} +/- {:.3} \
         over {n_seeds} seeds; reduction {:.1}% (one-sided 95% lower bound {:.1}%, \
         requirement >= 75%); equivalent slowdown {:?}",
        if pass { "PASS" } else { "FAIL" },
        report.mean_a,
        report.stderr_a,
        report.mean_b,
        report.stderr_b,
        100.0 * reduction,
        100.0 * lo95,
        report.equivalent_slowdown,
    );
    assert!(pass, "reduction lower bound {:.3} below 0.75", lo95);
}

#[test]
fn criterion_7_thermostat_fidelity() {
    // Long-run kinetic temperature on a 10-ion chain within 5% of k_T.
    let mut cfg = ring_sim(10, 50.0);
    cfg.eta = 1.0;
    cfg.k_t = 0.01;
    cfg.dt = 0.02;
    cfg.equilibration_time = 50.0;
    cfg.seed = 31;

    use kzq_core::langevin_sim::{init_chain, measure_temperature, step};
    let mut state = init_chain(&cfg).unwrap();
    // Hold the drive frozen at the start of the window and average.
    let mut acc = 0.0;
    let n_steps = 30_000;
    for _ in 0..n_steps {
        state = step(&state, &cfg).unwrap();
        state.t = cfg.t_start; // stay at the pre-quench confinement
        acc += measure_temperature(&state, &cfg);
    }
    let avg = acc / n_steps as f64;
    let rel = (avg - cfg.k_t).abs() / cfg.k_t;
    let pass = rel < 0.05;
    println!(
        "[criterion 7] {}: long-run kinetic temperature {avg:.5} vs k_T = {} \
         (relative error {:.2}%, bound 5%)",
        if pass { "PASS" } else { "FAIL" },
        cfg.k_t,
        100.0 * rel
    );
    assert!(pass);
}

#[test]
fn criterion_8_property_suites() {
    // (a) Determinism: bit-identical reruns.
    let cfg = {
        let mut c = ring_sim(8, 30.0);
        c.seed = 99;
        c
    };
    let a = run_quench(&cfg).unwrap();
    let b = run_quench(&cfg).unwrap();
    let deterministic = a.kink_count == b.kink_count
        && a.kink_positions == b.kink_positions
        && a.order_parameter
            .iter()
            .zip(&b.order_parameter)
            .all(|(x, y)| x.to_bits() == y.to_bits());

    // (b) Root residual < 1e-10 across random-ish parameter draws.
    let mut worst_residual: f64 = 0.0;
    for k in 0..100 {
        let mut p = homogeneous_params();
        p.delta_0 = 10f64.powf(-6.0 + 0.12 * k as f64);
        p.eta = 0.5 + 0.2 * (k % 7) as f64;
        let tau_q = 10f64.powf(1.0 + 0.05 * k as f64);
        let proto = QuenchProtocol::Linear { tau_q };
        let t = kzq_core::ef_core::kzm_freeze_out(&p, &proto).unwrap();
        let tau = kzq_core::ef_core::lifetime_tau_n(&p, epsilon_at(&proto, t).unwrap()).unwrap();
        worst_residual = worst_residual.max(((t - tau) / t).abs());
    }

    // (c) epsilon_rate agrees with central differences to 1e-6 relative.
    let mut worst_rate: f64 = 0.0;
    let protocols: Vec<QuenchProtocol<f64>> = vec![
        QuenchProtocol::Linear { tau_q: 37.0 },
        QuenchProtocol::PowerLaw { tau_q: 11.0, r: 1.8 },
        QuenchProtocol::OscSin2OverT { tau_q: 5.0, lambda: 2.5, omega: 3.0, delta_0: 1.0 },
        QuenchProtocol::OscEq8 { tau_q: 9.0, lambda: 0.8, omega: 2.5, t_f: 0.7, alt_grouping: false },
    ];
    for p in &protocols {
        for k in 1..40 {
            let t = 0.1 * k as f64;
            let h = 1e-6 * t.max(1.0);
            let fd = (epsilon_at(p, t + h).unwrap() - epsilon_at(p, t - h).unwrap()) / (2.0 * h);
            let an = epsilon_rate(p, t).unwrap();
            worst_rate = worst_rate.max(((an - fd) / an.abs().max(1e-9)).abs());
        }
    }

    // (d) Kink counter equals a brute-force segment scan on 500 synthetic
    //     staggered configurations.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2025);
    let count_cfg = ring_sim(20, 1.0);
    let mut brute_force_ok = true;
    for _ in 0..500 {
        let mut sign = 1.0f64;
        let y: Vec<f64> = (0..20)
            .map(|i| {
                if rng.random::<f64>() < 0.3 {
                    sign = -sign;
                }
                sign * 0.4 * if i % 2 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        let state = kzq_core::langevin_sim::ChainState {
            x: (0..20).map(|i| i as f64).collect(),
            y: y.clone(),
            vx: vec![0.0; 20],
            vy: vec![0.0; 20],
            t: 0.0,
            rng: rand_chacha::ChaCha12Rng::seed_from_u64(0),
            seed: 0,
        };
        let got = kzq_core::langevin_sim::count_kinks(&state, &count_cfg).unwrap();
        let psi: Vec<f64> =
            y.iter().enumerate().map(|(i, v)| if i % 2 == 0 { *v } else { -*v }).collect();
        let mut expected = 0;
        for i in 0..20 {
            if (psi[i] > 0.0) != (psi[(i + 1) % 20] > 0.0) {
                expected += 1;
            }
        }
        brute_force_ok &= got.kink_count == expected.min(18);
    }

    // (e) Zero-noise energy conservation: symplectic limit of the stepper.
    let drift_ok = {
        use kzq_core::langevin_sim::{init_chain, step as sim_step, total_energy};
        let mut frozen = ring_sim(8, 1e12);
        frozen.eta = 0.0;
        frozen.k_t = 0.0;
        frozen.dt = 0.001;
        frozen.equilibration_time = 0.0;
        frozen.seed = 5;
        let ctx = frozen.context().unwrap();
        // Hold 20% above criticality by pinning the protocol clock.
        let eps_hold = -0.2 * ctx.omega_c_sq / frozen.delta_0;
        frozen.t_start = eps_hold * 1e12;
        frozen.t_end = frozen.t_start + 1.0;
        let w2 = 1.2 * ctx.omega_c_sq;
        let mut state = init_chain(&frozen).unwrap();
        for (i, y) in state.y.iter_mut().enumerate() {
            *y = if i % 2 == 0 { 0.01 } else { -0.01 };
        }
        state.t = frozen.t_start;
        let e0 = total_energy(&state, &frozen, w2).unwrap();
        let mut max_drift = 0.0f64;
        for _ in 0..10_000 {
            state = sim_step(&state, &frozen).unwrap();
            state.t = frozen.t_start;
            let e = total_energy(&state, &frozen, w2).unwrap();
            max_drift = max_drift.max(((e - e0) / e0).abs());
        }
        max_drift < 1e-6
    };

    // (f) dt-halving: ensemble mean kink count moves by less than one
    //     combined standard error.
    let mut coarse = ring_sim(22, 20.0);
    coarse.seed = 0;
    let mut fine = coarse.clone();
    fine.dt = 0.01;
    let n = 300;
    let ens_a = run_ensemble(&coarse, n, 2024).unwrap();
    let ens_b = run_ensemble(&fine, n, 2024).unwrap();
    let stats = |rs: &[kzq_core::KinkReport]| {
        let mean = rs.iter().map(|r| r.kink_count as f64).sum::<f64>() / rs.len() as f64;
        let var = rs
            .iter()
            .map(|r| (r.kink_count as f64 - mean).powi(2))
            .sum::<f64>()
            / (rs.len() - 1) as f64;
        (mean, (var / rs.len() as f64).sqrt())
    };
    let (m_a, se_a) = stats(&ens_a);
    let (m_b, se_b) = stats(&ens_b);
    let dt_shift = (m_a - m_b).abs();
    let dt_bound = (se_a * se_a + se_b * se_b).sqrt();
    let dt_ok = dt_shift < dt_bound;

    let pass = deterministic
        && worst_residual < 1e-10
        && worst_rate < 1e-6
        && brute_force_ok
        && drift_ok
        && dt_ok;
    println!(
        "[criterion 8] {}: determinism = {deterministic}; root residual {worst_residual:.2e} \
         (< 1e-10); rate-vs-FD {worst_rate:.2e} (< 1e-6); kink brute force 500/500 = \
         {brute_force_ok}; zero-noise drift < 1e-6 = {drift_ok}; dt halving shift {dt_shift:.3} \
         vs 1 SE {dt_bound:.3} = {dt_ok}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn criterion_9_asymptotic_slope_report() {
    let source = SweepSource::Predictor {
        params: harmonic_params(),
        protocol: QuenchProtocol::Linear { tau_q: 1.0 },
        geometry: Geometry::Harmonic,
        loss: None,
    };
    let grid = log_grid(1.0, 3e4, 20);
    let sweep = sweep_tau_q(&grid, &source, 1, 0).unwrap();
    let slopes = local_slope(&sweep, 5).unwrap();
    let mags: Vec<(f64, f64)> = slopes.iter().map(|&(t, s)| (t, -s)).collect();

    let t_max = mags.last().unwrap().0;
    let tail: Vec<f64> =
        mags.iter().filter(|(t, _)| *t >= t_max / 10.0).map(|&(_, m)| m).collect();
    let tail_min = tail.iter().cloned().fold(f64::MAX, f64::min);
    let tail_max = tail.iter().cloned().fold(f64::MIN, f64::max);
    let variation = tail_max - tail_min;
    let tail_value = tail.iter().sum::<f64>() / tail.len() as f64;
    let steepest = mags.iter().map(|&(_, m)| m).fold(f64::MIN, f64::max);

    let converged = variation < 0.05;
    println!(
        "[criterion 9] {}: large-tau_q local slope converged to {tail_value:.3} \
         (variation {variation:.3} over the final decade; bound 0.05). Steepest local slope \
         along the curve: {steepest:.3}. Reported against the published claims 3.5 and \
         13/4 = 3.25 without asserting either: the converged tail sits in the clamped \
         single-domain plateau, the steepest transient slope is the comparable figure.",
        if converged { "PASS" } else { "FAIL" }
    );
    assert!(converged, "tail slope variation {variation} exceeds 0.05");
}
