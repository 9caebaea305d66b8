//! Subcommand implementations.

use std::io::Write;

use anyhow::{bail, Context, Result};
use serde_json::json;

use kzq_core::ef_core::{defect_density, freeze_out_time, xi_oscillation_closed_form};
use kzq_core::experiments::{
    compare_protocols, fit_power_law, local_slope, saturation_detect, sweep_tau_q, ConfigSnapshot,
    SweepSource,
};
use kzq_core::langevin_sim::{run_quench, run_quench_with};
use kzq_core::quench::QuenchProtocol;
use kzq_core::Real;

use crate::config::{RunConfig, SweepKind};
use crate::logging::info;
use crate::output::OutputSink;

/// Predictor run: freeze-out boundary plus corrected defect estimate.
pub fn cmd_predict(config: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let params = config.params.as_ref().context("`params` section required for predict")?;
    let protocol = config.protocol.as_ref().context("`protocol` section required for predict")?;
    let geometry = config.geometry.context("`geometry` section required for predict")?;

    // The oscillation drive gets its closed-form check first: below the
    // defect-production threshold the boundary equation has no root and the
    // whole prediction is the no-defect marker.
    let closed_form = match protocol {
        QuenchProtocol::OscSin2OverT { lambda, omega, .. } => {
            Some(xi_oscillation_closed_form(params, *lambda, *omega)?)
        }
        _ => None,
    };
    let report = if matches!(closed_form, Some(kzq_core::ef_core::OscillationOutcome::NoDefects)) {
        json!({
            "freeze_out": null,
            "estimate": null,
            "oscillation_closed_form": closed_form,
        })
    } else {
        let freeze_out = freeze_out_time(params, protocol)?;
        let estimate = defect_density(params, protocol, geometry, config.loss.as_ref())?;
        json!({
            "freeze_out": freeze_out,
            "estimate": estimate,
            "oscillation_closed_form": closed_form,
        })
    };
    let path = sink.write_json("predict", &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    info!("predict report at {}", path.display());
    Ok(())
}

/// One stochastic trajectory, optionally dumping frames.
pub fn cmd_simulate(
    config: &RunConfig,
    sink: &mut OutputSink,
    seed_override: Option<u64>,
    dump: bool,
) -> Result<()> {
    let mut sim = config.sim.clone().context("`sim` section required for simulate")?;
    if let Some(seed) = seed_override {
        sim.seed = seed;
    }

    let report = if dump {
        let stride = config.dump_stride();
        let (mut file, path) = sink.create_file("trajectory", "csv")?;
        writeln!(file, "t,ion,x,y,vx,vy")?;
        let report = run_quench_with(&sim, stride, |frame| {
            for i in 0..frame.x.len() {
                let _ = writeln!(
                    file,
                    "{},{},{},{},{},{}",
                    frame.t, i, frame.x[i], frame.y[i], frame.vx[i], frame.vy[i]
                );
            }
        })?;
        info!("trajectory frames at {}", path.display());
        report
    } else {
        run_quench(&sim)?
    };

    let path = sink.write_json("simulate", &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    info!("simulation report at {}", path.display());
    Ok(())
}

/// Density sweep over tau_q, with slopes, optional fit and plot data.
pub fn cmd_sweep(
    config: &RunConfig,
    sink: &mut OutputSink,
    fit_range: Option<(Real, Real)>,
) -> Result<()> {
    let section = config.sweep.as_ref().context("`sweep` section required for sweep")?;
    if section.grid.min <= 0.0 || section.grid.max <= section.grid.min {
        bail!("config error at `sweep.grid`: need 0 < min < max");
    }
    let grid = kzq_core::experiments::log_grid(
        section.grid.min,
        section.grid.max,
        section.grid.points_per_decade,
    );

    let source = match section.source {
        SweepKind::Predictor => SweepSource::Predictor {
            params: config.params.clone().context("`params` required for a predictor sweep")?,
            protocol: config
                .protocol
                .clone()
                .context("`protocol` required for a predictor sweep")?,
            geometry: config.geometry.context("`geometry` required for a predictor sweep")?,
            loss: config.loss,
        },
        SweepKind::Simulator => SweepSource::Simulator {
            config: config.sim.clone().context("`sim` required for a simulator sweep")?,
            eps_pre: section.eps_pre,
            eps_post: section.eps_post,
        },
    };

    let sweep = sweep_tau_q(&grid, &source, section.n_seeds, section.master_seed)?;
    let gaps = sweep.rows.iter().filter(|r| r.density.is_none()).count();
    if gaps > 0 {
        crate::logging::warn_log!("{gaps} of {} grid points failed (gap rows kept)", grid.len());
    }
    if gaps == sweep.rows.len() {
        bail!("sweep failed at every grid point");
    }

    // CSV rows.
    let mut csv = String::from("tau_q,density,stderr,n_samples,source\n");
    for r in &sweep.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.tau_q,
            r.density.map_or("nan".into(), |d| d.to_string()),
            r.stderr.map_or("nan".into(), |s| s.to_string()),
            r.n_samples,
            match r.source {
                kzq_core::experiments::RowSource::Predictor => "predictor",
                kzq_core::experiments::RowSource::Simulator => "simulator",
            }
        ));
    }
    sink.write_text("sweep", "csv", &csv)?;
    sink.write_json("sweep", &sweep)?;

    // Two-column log10 plot data plus the local-slope curve.
    let mut plot = String::from("# log10_tau_q log10_density\n");
    for r in &sweep.rows {
        if let Some(d) = r.density {
            if d > 0.0 {
                plot.push_str(&format!("{} {}\n", r.tau_q.log10(), d.log10()));
            }
        }
    }
    let slopes = local_slope(&sweep, section.slope_window)?;
    plot.push_str("\n# log10_tau_q local_slope\n");
    for (t, s) in &slopes {
        plot.push_str(&format!("{} {}\n", t.log10(), s));
    }
    sink.write_text("plotdata", "txt", &plot)?;

    let saturation = saturation_detect(&sweep, section.slope_tol).ok().flatten();
    let fit = match fit_range {
        Some(range) => Some(fit_power_law(&sweep, range)?),
        None => None,
    };
    sink.write_json("slopes", &slopes)?;
    let summary = json!({
        "rows": sweep.rows.len(),
        "gap_rows": gaps,
        "saturation_boundary_tau_q": saturation,
        "fit": fit,
        "slope_window": section.slope_window,
        "slopes": slopes,
    });
    if let Some(f) = &fit {
        sink.write_json("fit", f)?;
        println!(
            "fit: exponent {:.4}, prefactor {:.4e}, r^2 {:.6} over {:?}",
            f.exponent, f.prefactor, f.r_squared, f.fit_range
        );
    }
    sink.write_json("summary", &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// Ensemble comparison of two drives.
pub fn cmd_compare(config: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let section = config.compare.as_ref().context("`compare` section required for compare")?;
    let sim_a = config.sim.as_ref().context("`sim` section required for compare")?;
    let report = compare_protocols(sim_a, &section.sim_b, section.n_seeds, section.master_seed)?;
    let path = sink.write_json("compare", &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    info!("comparison report at {}", path.display());
    Ok(())
}

/// Canonical hash of the run configuration, used to key output files.
pub fn config_hash(config: &RunConfig) -> String {
    ConfigSnapshot::of(config).hash
}
