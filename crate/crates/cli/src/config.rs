//! Run configuration: a versioned TOML document that maps onto the core
//! model, cost, life-cycle, simulation and grid types.

use std::path::Path;

use anyhow::{bail, Context};
use cbm_core::optimizer::linspace;
use cbm_core::{
    CbmError, CostStructure, GammaDegradation, LifeCycle, PolicyGrid, RateFunction, ShockIntensity,
    SimulationConfig, SystemModel,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelSection,
    pub costs: CostSection,
    pub life: LifeSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub policy: PolicySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub shape_rate: f64,
    pub scale: f64,
    pub breakdown_threshold: f64,
    pub shock_threshold: f64,
    pub shock_below: RateFunction,
    pub shock_above: RateFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub corrective: f64,
    pub preventive: f64,
    pub inspection: f64,
    pub downtime_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifeSection {
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub samples: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_step: Option<f64>,
    pub lattice_divisions: usize,
    pub batches: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimulationConfig::default();
        Self {
            samples: d.n_samples,
            seed: d.master_seed,
            path_step: d.path_step,
            lattice_divisions: d.lattice_divisions,
            batches: d.batches,
            workers: d.workers,
        }
    }
}

/// A grid axis: explicit values or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Range { start: f64, end: f64, count: usize },
    Values(Vec<f64>),
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Range { start, end, count } => linspace(*start, *end, *count),
            Axis::Values(v) => v.clone(),
        }
    }

    /// Parses `start:end:count` or a comma-separated list.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() == 3 {
            return Ok(Axis::Range {
                start: parts[0].trim().parse().context("range start")?,
                end: parts[1].trim().parse().context("range end")?,
                count: parts[2].trim().parse().context("range count")?,
            });
        }
        if parts.len() != 1 {
            bail!("expected start:end:count or a comma-separated list, got {text:?}");
        }
        let values = text
            .split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad grid value {s:?}")))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(Axis::Values(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub periods: Axis,
    pub thresholds: Axis,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            periods: Axis::Range { start: 5.0, end: 50.0, count: 10 },
            thresholds: Axis::Range { start: 1.0, end: 30.0, count: 30 },
        }
    }
}

/// The single policy used by `curves`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub period: f64,
    pub threshold: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { period: 10.0, threshold: 14.0 }
    }
}

/// Core objects built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: SystemModel,
    pub costs: CostStructure,
    pub life: LifeCycle,
    pub simulation: SimulationConfig,
    pub grid: PolicyGrid,
}

/// Prefixes core parameter errors with the config section they came from.
fn in_section<T>(section: &str, r: cbm_core::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| match e {
        CbmError::InvalidParameter { field, reason } => {
            let key = match field {
                "n_samples" => "samples",
                "master_seed" => "seed",
                "grid_periods" => "periods",
                "grid_thresholds" => "thresholds",
                other => other,
            };
            anyhow::anyhow!("invalid config field `{section}.{key}`: {reason}")
        }
        other => anyhow::anyhow!("invalid config section `{section}`: {other}"),
    })
}

impl RunConfig {
    pub fn reference() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            model: ModelSection {
                shape_rate: 0.1,
                scale: 0.1,
                breakdown_threshold: 30.0,
                shock_threshold: 20.0,
                shock_below: RateFunction::Constant { rate: 0.01 },
                shock_above: RateFunction::Constant { rate: 0.1 },
            },
            costs: CostSection {
                corrective: 300.0,
                preventive: 150.0,
                inspection: 45.0,
                downtime_rate: 25.0,
            },
            life: LifeSection { horizon: 50.0 },
            simulation: SimulationSection::default(),
            grid: GridSection::default(),
            policy: PolicySection::default(),
        }
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("malformed configuration")?;
        if cfg.schema != SCHEMA_VERSION {
            bail!(
                "unsupported config schema {} (this build reads schema {SCHEMA_VERSION})",
                cfg.schema
            );
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string_pretty(self).context("serializing configuration")
    }

    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let m = &self.model;
        let degradation = in_section("model", GammaDegradation::new(m.shape_rate, m.scale))?;
        let shocks = in_section("model", ShockIntensity::new(m.shock_below, m.shock_above))?;
        let model = in_section(
            "model",
            SystemModel::new(degradation, shocks, m.breakdown_threshold, m.shock_threshold),
        )?;
        let c = &self.costs;
        let costs = in_section(
            "costs",
            CostStructure::new(c.corrective, c.preventive, c.inspection, c.downtime_rate),
        )?;
        let life = in_section("life", LifeCycle::new(self.life.horizon))?;
        let s = &self.simulation;
        let simulation = SimulationConfig {
            n_samples: s.samples,
            path_step: s.path_step,
            lattice_divisions: s.lattice_divisions,
            master_seed: s.seed,
            batches: s.batches,
            workers: s.workers,
            ..SimulationConfig::default()
        };
        in_section("simulation", simulation.validate())?;
        let grid = in_section(
            "grid",
            PolicyGrid::new(self.grid.periods.values(), self.grid.thresholds.values()),
        )?;
        in_section("grid", grid.check_against(&model))?;
        Ok(Resolved {
            model,
            costs,
            life,
            simulation,
            grid,
        })
    }
}
