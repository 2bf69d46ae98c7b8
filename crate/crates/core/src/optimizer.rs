//! Grid search over inspection periods and preventive thresholds.
//!
//! Each inspection period gets one set of simulated paths, seeded from the
//! master seed and the period value, and every threshold in the grid is
//! resolved on those paths. Both objectives (long-run rate and transient
//! rate at the horizon) are read off the same tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{CostStructure, LifeCycle, MaintenancePolicy, SystemModel};
use crate::sampling::mix_seed;
use crate::simulator::{table_set_on_current_pool, BatchedTables, SimulationConfig};
use crate::solver::{asymptotic_cost_rate, expected_cost, TRUNCATION_WARNING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Long-run expected cost per time unit.
    Asymptotic,
    /// `E[C(t_f)]/t_f`.
    Transient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGrid {
    pub periods: Vec<f64>,
    pub thresholds: Vec<f64>,
}

/// `count` equally spaced points on `[start, end]`.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

impl PolicyGrid {
    pub fn new(periods: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        if periods.is_empty() {
            return Err(invalid("grid_periods", "must not be empty"));
        }
        if thresholds.is_empty() {
            return Err(invalid("grid_thresholds", "must not be empty"));
        }
        if periods.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(invalid("grid_periods", "every period must be finite and > 0"));
        }
        if thresholds.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(invalid("grid_thresholds", "every threshold must be finite and > 0"));
        }
        Ok(Self {
            periods,
            thresholds,
        })
    }

    /// Ten periods on `[5, 50]` and thirty thresholds on `[1, 30]`.
    pub fn reference() -> Self {
        Self {
            periods: linspace(5.0, 50.0, 10),
            thresholds: linspace(1.0, 30.0, 30),
        }
    }

    pub fn check_against(&self, model: &SystemModel) -> Result<()> {
        for &t in &self.periods {
            for &m in &self.thresholds {
                MaintenancePolicy::new(t, m)?.check_against(model)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub objective: Objective,
    pub periods: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// `values[i][j]` for period `i` and threshold `j`.
    pub values: Vec<Vec<f64>>,
    /// Batch-means standard errors, same layout.
    pub stderr: Vec<Vec<f64>>,
    pub argmin: (f64, f64),
    pub argmin_index: (usize, usize),
    pub minimum: f64,
    pub warnings: Vec<String>,
}

impl OptimizationResult {
    fn from_matrix(
        objective: Objective,
        grid: &PolicyGrid,
        values: Vec<Vec<f64>>,
        stderr: Vec<Vec<f64>>,
        warnings: Vec<String>,
    ) -> Self {
        let (i, j) = argmin_with_tiebreak(grid, &values);
        Self {
            objective,
            periods: grid.periods.clone(),
            thresholds: grid.thresholds.clone(),
            minimum: values[i][j],
            argmin: (grid.periods[i], grid.thresholds[j]),
            argmin_index: (i, j),
            values,
            stderr,
            warnings,
        }
    }

    /// Values along the threshold axis at period index `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Index of the minimizing threshold at period index `i`, same tie-break.
    pub fn row_argmin(&self, i: usize) -> usize {
        let mut best = 0;
        for j in 1..self.thresholds.len() {
            if better(self.values[i][j], self.thresholds[j], self.periods[i], self.values[i][best], self.thresholds[best], self.periods[i]) {
                best = j;
            }
        }
        best
    }

    /// Index of the minimizing period at threshold index `j`.
    pub fn column_argmin(&self, j: usize) -> usize {
        let mut best = 0;
        for i in 1..self.periods.len() {
            if better(self.values[i][j], self.thresholds[j], self.periods[i], self.values[best][j], self.thresholds[j], self.periods[best]) {
                best = i;
            }
        }
        best
    }
}

/// Is cell `a` preferred to cell `b`: lower value, then smaller `M`, then
/// smaller `T`. `NaN` never wins.
fn better(va: f64, ma: f64, ta: f64, vb: f64, mb: f64, tb: f64) -> bool {
    if va.is_nan() {
        return false;
    }
    if vb.is_nan() {
        return true;
    }
    (va, ma, ta) < (vb, mb, tb)
}

fn argmin_with_tiebreak(grid: &PolicyGrid, values: &[Vec<f64>]) -> (usize, usize) {
    let mut best = (0, 0);
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let (bi, bj) = best;
            if better(
                v,
                grid.thresholds[j],
                grid.periods[i],
                values[bi][bj],
                grid.thresholds[bj],
                grid.periods[bi],
            ) {
                best = (i, j);
            }
        }
    }
    best
}

/// Seed of the path set for inspection period `period`.
pub fn period_seed(master: u64, period: f64) -> u64 {
    mix_seed(master, period.to_bits(), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEvaluation {
    pub asymptotic: OptimizationResult,
    pub transient: OptimizationResult,
}

/// Both objectives over the full grid.
pub fn evaluate_grid(
    model: &SystemModel,
    costs: &CostStructure,
    life: &LifeCycle,
    grid: &PolicyGrid,
    cfg: &SimulationConfig,
) -> Result<GridEvaluation> {
    grid.check_against(model)?;
    let columns = cfg.install(|| grid_tables(model, life, grid, cfg))??;
    let mut asym = Vec::with_capacity(columns.len());
    let mut asym_se = Vec::with_capacity(columns.len());
    let mut trans = Vec::with_capacity(columns.len());
    let mut trans_se = Vec::with_capacity(columns.len());
    let mut warnings = Vec::new();
    let horizon = life.horizon();
    for (i, column) in columns.iter().enumerate() {
        let mut row_a = Vec::with_capacity(column.len());
        let mut row_as = Vec::with_capacity(column.len());
        let mut row_t = Vec::with_capacity(column.len());
        let mut row_ts = Vec::with_capacity(column.len());
        for (j, cell) in column.iter().enumerate() {
            let censored = cell.pooled.censored_mass();
            if censored >= TRUNCATION_WARNING {
                warnings.push(format!(
                    "T={} M={}: censored mass {censored:.4} truncates the long-run rate",
                    grid.periods[i], grid.thresholds[j]
                ));
            }
            match asymptotic_cost_rate(&cell.pooled, costs) {
                Ok(v) => {
                    row_a.push(v);
                    row_as.push(cell.standard_error(|t| asymptotic_cost_rate(t, costs)).unwrap_or(f64::NAN));
                }
                Err(e) => {
                    warnings.push(format!("T={} M={}: {e}", grid.periods[i], grid.thresholds[j]));
                    row_a.push(f64::NAN);
                    row_as.push(f64::NAN);
                }
            }
            let rate = |t: &_| expected_cost(t, costs, horizon).map(|c| c / horizon);
            row_t.push(rate(&cell.pooled)?);
            row_ts.push(cell.standard_error(rate)?);
        }
        asym.push(row_a);
        asym_se.push(row_as);
        trans.push(row_t);
        trans_se.push(row_ts);
    }
    Ok(GridEvaluation {
        asymptotic: OptimizationResult::from_matrix(Objective::Asymptotic, grid, asym, asym_se, warnings.clone()),
        transient: OptimizationResult::from_matrix(Objective::Transient, grid, trans, trans_se, Vec::new()),
    })
}

/// Tables for every cell, `[period][threshold]`.
pub(crate) fn grid_tables(
    model: &SystemModel,
    life: &LifeCycle,
    grid: &PolicyGrid,
    cfg: &SimulationConfig,
) -> Result<Vec<Vec<BatchedTables>>> {
    grid.periods
        .par_iter()
        .map(|&t| {
            table_set_on_current_pool(
                model,
                t,
                &grid.thresholds,
                life,
                cfg,
                period_seed(cfg.master_seed, t),
            )
        })
        .collect()
}

pub fn optimize_asymptotic(
    model: &SystemModel,
    costs: &CostStructure,
    life: &LifeCycle,
    grid: &PolicyGrid,
    cfg: &SimulationConfig,
) -> Result<OptimizationResult> {
    evaluate_grid(model, costs, life, grid, cfg).map(|g| g.asymptotic)
}

pub fn optimize_transient(
    model: &SystemModel,
    costs: &CostStructure,
    life: &LifeCycle,
    grid: &PolicyGrid,
    cfg: &SimulationConfig,
) -> Result<OptimizationResult> {
    evaluate_grid(model, costs, life, grid, cfg).map(|g| g.transient)
}
