//! Robustness of the optimal transient cost to the model parameters.
//!
//! Each cell multiplies one parameter by `1 + v_i/100` and another by
//! `1 + v_j/100`, re-optimizes over the free policy axis, and reports
//! `|E* - E*_{ij}| / E* × 100` where `E*` is the unperturbed optimum. Every
//! cell reuses the same seeds (common random numbers), so the `(0, 0)` cell
//! is exactly zero and cell differences reflect the parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{invalid, Result};
use crate::model::{CostStructure, GammaDegradation, LifeCycle, ShockIntensity, SystemModel};
use crate::optimizer::{grid_tables, PolicyGrid};
use crate::simulator::SimulationConfig;
use crate::solver::expected_cost;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Rows vary the shape rate α, columns the scale β.
    Gamma,
    /// Rows vary the low-regime shock rate λ₁, columns the high-regime rate λ₂.
    Shocks,
}

/// Which policy coordinate is held fixed; the other is optimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedAxis {
    Period(f64),
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScheme {
    /// Variations in percent.
    pub variations: Vec<f64>,
    pub target: Target,
}

impl PerturbationScheme {
    pub fn new(variations: Vec<f64>, target: Target) -> Result<Self> {
        if variations.is_empty() {
            return Err(invalid("variations", "must not be empty"));
        }
        if variations.iter().any(|&v| !(v > -100.0 && v.is_finite())) {
            return Err(invalid("variations", "every variation must be finite and > -100%"));
        }
        Ok(Self { variations, target })
    }

    /// `(-10, -5, -1, 0, 1, 5, 10)` percent.
    pub fn standard(target: Target) -> Self {
        Self {
            variations: vec![-10.0, -5.0, -1.0, 0.0, 1.0, 5.0, 10.0],
            target,
        }
    }

    fn factor(v: f64) -> f64 {
        1.0 + v / 100.0
    }

    /// Model for cell `(i, j)`, plus whether the shock ordering was broken.
    pub fn perturb(&self, model: &SystemModel, i: usize, j: usize) -> Result<(SystemModel, bool)> {
        let fi = Self::factor(self.variations[i]);
        let fj = Self::factor(self.variations[j]);
        match self.target {
            Target::Gamma => {
                let g = GammaDegradation::new(
                    model.degradation.shape_rate() * fi,
                    model.degradation.scale() * fj,
                )?;
                Ok((model.with_degradation(g), false))
            }
            Target::Shocks => {
                let s = ShockIntensity::new_unordered(
                    model.shocks.below().scaled(fi)?,
                    model.shocks.above().scaled(fj)?,
                );
                Ok((model.with_shocks(s), !s.is_ordered()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationTable {
    pub target: Target,
    pub fixed: FixedAxis,
    pub variations: Vec<f64>,
    /// Unperturbed optimal transient cost rate.
    pub baseline: f64,
    /// Optimal transient cost rate per cell.
    pub minima: Vec<Vec<f64>>,
    /// Relative variation in percent per cell.
    pub relative: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl VariationTable {
    pub fn size(&self) -> usize {
        self.variations.len()
    }

    pub fn diagonal_mean(&self) -> f64 {
        let n = self.size();
        (0..n).map(|i| self.relative[i][i]).sum::<f64>() / n as f64
    }

    pub fn off_diagonal_mean(&self) -> f64 {
        let n = self.size();
        let sum: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.relative[i][j])
            .sum();
        sum / (n * n - n).max(1) as f64
    }

    /// Mean over columns of the spread along rows: the effect of the row
    /// parameter (α or λ₁).
    pub fn row_parameter_effect(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|j| spread((0..n).map(|i| self.minima[i][j])))
            .sum::<f64>()
            / n as f64
    }

    /// Mean over rows of the spread along columns: the effect of the column
    /// parameter (β or λ₂).
    pub fn column_parameter_effect(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| spread((0..n).map(|j| self.minima[i][j])))
            .sum::<f64>()
            / n as f64
    }

    /// Cell with the largest relative variation.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.relative.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > self.relative[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Minimal transient cost rate over the free axis.
fn optimal_rate(
    model: &SystemModel,
    costs: &CostStructure,
    life: &LifeCycle,
    fixed: FixedAxis,
    free: &[f64],
    cfg: &SimulationConfig,
) -> Result<f64> {
    let grid = match fixed {
        FixedAxis::Period(t) => PolicyGrid::new(vec![t], free.to_vec())?,
        FixedAxis::Threshold(m) => PolicyGrid::new(free.to_vec(), vec![m])?,
    };
    grid.check_against(model)?;
    let horizon = life.horizon();
    let tables = grid_tables(model, life, &grid, cfg)?;
    let mut best = f64::INFINITY;
    for cell in tables.iter().flatten() {
        best = best.min(expected_cost(&cell.pooled, costs, horizon)? / horizon);
    }
    Ok(best)
}

/// Variation table for `scheme`, re-optimizing over `free` at each cell.
pub fn sensitivity(
    model: &SystemModel,
    costs: &CostStructure,
    life: &LifeCycle,
    fixed: FixedAxis,
    free: &[f64],
    scheme: &PerturbationScheme,
    cfg: &SimulationConfig,
) -> Result<VariationTable> {
    let n = scheme.variations.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let perturbed = cells
        .iter()
        .map(|&(i, j)| scheme.perturb(model, i, j))
        .collect::<Result<Vec<_>>>()?;

    let (baseline, minima) = cfg.install(|| -> Result<(f64, Vec<f64>)> {
        let baseline = optimal_rate(model, costs, life, fixed, free, cfg)?;
        let minima = cells
            .par_iter()
            .zip(perturbed.par_iter())
            .map(|(&(i, j), (m, _))| {
                if scheme.variations[i] == 0.0 && scheme.variations[j] == 0.0 {
                    Ok(baseline)
                } else {
                    optimal_rate(m, costs, life, fixed, free, cfg)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((baseline, minima))
    })??;

    let mut warnings = Vec::new();
    for (&(i, j), (_, broken)) in cells.iter().zip(&perturbed) {
        if *broken {
            let msg = format!(
                "cell ({}%, {}%): low-regime shock rate exceeds the high-regime rate",
                scheme.variations[i], scheme.variations[j]
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let minima: Vec<Vec<f64>> = minima.chunks(n).map(|c| c.to_vec()).collect();
    let relative = minima
        .iter()
        .map(|row| row.iter().map(|&v| (baseline - v).abs() / baseline * 100.0).collect())
        .collect();
    Ok(VariationTable {
        target: scheme.target,
        fixed,
        variations: scheme.variations.clone(),
        baseline,
        minima,
        relative,
        warnings,
    })
}

pub fn gamma_sensitivity(
    model: &SystemModel,
    costs: &CostStructure,
    life: &LifeCycle,
    fixed: FixedAxis,
    free: &[f64],
    cfg: &SimulationConfig,
) -> Result<VariationTable> {
    sensitivity(model, costs, life, fixed, free, &PerturbationScheme::standard(Target::Gamma), cfg)
}

pub fn shock_sensitivity(
    model: &SystemModel,
    costs: &CostStructure,
    life: &LifeCycle,
    fixed: FixedAxis,
    free: &[f64],
    cfg: &SimulationConfig,
) -> Result<VariationTable> {
    sensitivity(model, costs, life, fixed, free, &PerturbationScheme::standard(Target::Shocks), cfg)
}
