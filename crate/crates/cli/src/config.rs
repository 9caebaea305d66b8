//! Strict JSON run configuration.
//!
//! Unknown keys are rejected everywhere and the schema version must match
//! exactly: a silent typo in a physics config produces a plausible but
//! wrong curve, so parsing is deliberately unforgiving.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use kzq_core::ef_core::{DefectLoss, Geometry, ScalingParams};
use kzq_core::langevin_sim::SimConfig;
use kzq_core::quench::QuenchProtocol;
use kzq_core::Real;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Scaling constants for the predictor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ScalingParams<Real>>,
    /// Quench protocol for predictor commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<QuenchProtocol<Real>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<DefectLoss<Real>>,
    /// Full simulator configuration (includes its own protocol and seed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig<Real>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub grid: GridSpec,
    pub source: SweepKind,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Simulator window in reduced units: t in [-eps_pre, eps_post] * tau_q.
    #[serde(default = "default_eps_pre")]
    pub eps_pre: Real,
    #[serde(default = "default_eps_post")]
    pub eps_post: Real,
    #[serde(default = "default_slope_window")]
    pub slope_window: usize,
    #[serde(default = "default_slope_tol")]
    pub slope_tol: Real,
}

fn default_seeds() -> usize {
    1
}
fn default_eps_pre() -> Real {
    0.9
}
fn default_eps_post() -> Real {
    0.8
}
fn default_slope_window() -> usize {
    5
}
fn default_slope_tol() -> Real {
    0.05
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: Real,
    pub max: Real,
    pub points_per_decade: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Predictor,
    Simulator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Second simulator configuration; must match `sim` except for the
    /// protocol and drive window.
    pub sim_b: SimConfig<Real>,
    #[serde(default = "default_compare_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_compare_seeds() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Trajectory dump stride in steps, used with --dump-trajectory.
    #[serde(default = "default_stride")]
    pub dump_stride: usize,
}

fn default_stride() -> usize {
    100
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let config: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("config error at `{}`: {}", e.path(), e.inner()))?;
        if config.schema_version != SCHEMA_VERSION {
            bail!(
                "config error at `schema_version`: expected {SCHEMA_VERSION}, got {}",
                config.schema_version
            );
        }
        if let Some(p) = &config.params {
            p.validate().map_err(|e| anyhow::anyhow!("config error at `params`: {e}"))?;
        }
        if let Some(p) = &config.protocol {
            p.validate().map_err(|e| anyhow::anyhow!("config error at `protocol`: {e}"))?;
        }
        if let Some(s) = &config.sim {
            s.validate().map_err(|e| anyhow::anyhow!("config error at `sim`: {e}"))?;
        }
        Ok(config)
    }

    pub fn output_dir(&self) -> &str {
        self.output.as_ref().map_or("out", |o| o.dir.as_str())
    }

    pub fn dump_stride(&self) -> usize {
        self.output.as_ref().map_or_else(default_stride, |o| o.dump_stride)
    }
}
