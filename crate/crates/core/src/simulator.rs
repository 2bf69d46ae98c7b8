//! Maintained-system trajectories and their reduction into estimate tables.
//!
//! Degradation advances on a uniform grid of `steps_per_period` steps per
//! inspection period, so every inspection epoch `kT` is a grid point and
//! crossing times are grid times. Shocks are drawn by thinning a homogeneous
//! Poisson stream at the majorant rate; a candidate at time `u` is accepted
//! with probability `λ_j(u)/λ_max`, where `j` is the regime of the path state
//! on the grid cell containing `u`.
//!
//! A simulated path is independent of the preventive threshold `M`: it runs
//! until failure (or a caller-supplied stop level, or the horizon) and records
//! degradation at each inspection. Any number of thresholds can then be
//! resolved against the same path.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CbmError, Result};
use crate::lattice::Lattice;
use crate::model::{CostStructure, LifeCycle, MaintenancePolicy, ShockRegime, SystemModel};
use crate::sampling::{IncrementSampler, SampleStreams};
use crate::tables::{config_digest, EstimateTables};

/// Default number of path steps per inspection period.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_samples: usize,
    /// Path step δ; `None` means `T/100`. Must satisfy `δ ≤ T/10`.
    pub path_step: Option<f64>,
    /// Lattice points per inspection period.
    pub lattice_divisions: usize,
    /// Extra times to place on the evaluation lattice.
    pub eval_times: Vec<f64>,
    pub master_seed: u64,
    /// Independent sample batches, used for standard errors.
    pub batches: usize,
    /// Each path step is drawn as the sum of this many sub-increments. Equal
    /// in law for any value; a run with `δ` and 2 substeps shares its path
    /// with a run at `δ/2`, which isolates discretization error.
    pub substeps: usize,
    /// Thread count; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_samples: 50_000,
            path_step: None,
            lattice_divisions: 10,
            eval_times: Vec::new(),
            master_seed: 0x5EED_CB3D,
            batches: 10,
            substeps: 1,
            workers: None,
        }
    }
}

impl SimulationConfig {
    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "must be >= 1"));
        }
        if self.batches == 0 {
            return Err(invalid("batches", "must be >= 1"));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be >= 1"));
        }
        if self.lattice_divisions == 0 {
            return Err(invalid("lattice_divisions", "must be >= 1"));
        }
        if let Some(d) = self.path_step {
            if !(d > 0.0) || !d.is_finite() {
                return Err(CbmError::Config(format!(
                    "path_step must be finite and > 0, got {d}"
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be >= 1"));
        }
        Ok(())
    }

    /// Grid steps per inspection period; the effective step is `T/steps`.
    pub fn steps_per_period(&self, period: f64) -> Result<usize> {
        self.validate()?;
        match self.path_step {
            None => Ok(DEFAULT_STEPS_PER_PERIOD),
            Some(d) => {
                if d > period / 10.0 * (1.0 + 1e-12) {
                    return Err(CbmError::Config(format!(
                        "path_step {d} is coarser than T/10 = {}",
                        period / 10.0
                    )));
                }
                Ok(((period / d) - 1e-9).ceil().max(1.0) as usize)
            }
        }
    }

    /// Steps per period and the sub-increment sampler for period `period`.
    pub(crate) fn stepper(&self, model: &SystemModel, period: f64) -> Result<(usize, IncrementSampler)> {
        let spp = self.steps_per_period(period)?;
        let sub = IncrementSampler::new(&model.degradation, period / (spp * self.substeps) as f64)?;
        Ok((spp, sub))
    }

    pub fn lattice(&self, period: f64, horizon: f64) -> Result<Lattice> {
        Lattice::new(period, horizon, self.lattice_divisions, &self.eval_times)
    }

    /// Runs `f` on a pool with `workers` threads, or inline on the global pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        match self.workers {
            None => Ok(f()),
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| CbmError::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }

    /// Sample index ranges of the batches.
    pub(crate) fn batch_ranges(&self) -> Vec<(u64, u64)> {
        let b = self.batches.min(self.n_samples) as u64;
        let n = self.n_samples as u64;
        (0..b).map(|i| (i * n / b, (i + 1) * n / b)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementKind {
    Corrective,
    Preventive,
    Censored,
}

/// One simulated first renewal cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementSample {
    /// `kT` for a replacement, the horizon when censored.
    pub replacement_time: f64,
    pub kind: ReplacementKind,
    /// `D = min(σ_L, Y)` when it falls within the horizon. Always present for
    /// corrective cycles; a censored cycle may carry a failure after its last
    /// inspection.
    pub failure_time: Option<f64>,
    pub preventive_crossing: Option<f64>,
    pub shock_threshold_crossing: Option<f64>,
    pub breakdown_crossing: Option<f64>,
    pub shock_time: Option<f64>,
    /// Inspections performed, including the one that triggered replacement.
    pub inspections: usize,
}

impl ReplacementSample {
    /// `R₁ - D` for corrective cycles.
    pub fn downtime(&self) -> Option<f64> {
        match self.kind {
            ReplacementKind::Corrective => self.failure_time.map(|d| self.replacement_time - d),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub(crate) struct PathSpec {
    pub period: f64,
    pub horizon: f64,
    pub steps_per_period: usize,
    pub substeps: usize,
    /// Stop at the first inspection whose level reaches this.
    pub stop_level: f64,
    /// Stop as soon as the failure time is known.
    pub stop_on_failure: bool,
    /// Record the first crossing of this level.
    pub watch: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct PathRecord {
    pub failure_time: Option<f64>,
    pub breakdown_crossing: Option<f64>,
    pub shock_threshold_crossing: Option<f64>,
    pub watch_crossing: Option<f64>,
    pub shock_time: Option<f64>,
    /// `X(kT)` for each inspection reached before failure, `k = 1, 2, ...`.
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Preventive(usize),
    Corrective(usize),
    Censored,
}

fn epochs_within(horizon: f64, period: f64) -> usize {
    (horizon / period + 1e-9).floor() as usize
}

/// Simulates one path. `step` must be the sampler for `T/(steps·substeps)`.
pub(crate) fn simulate_path(
    model: &SystemModel,
    spec: &PathSpec,
    step: &IncrementSampler,
    streams: &mut SampleStreams,
    record: &mut PathRecord,
) -> Result<()> {
    record.failure_time = None;
    record.breakdown_crossing = None;
    record.shock_threshold_crossing = None;
    record.watch_crossing = None;
    record.shock_time = None;
    record.levels.clear();

    let spp = spec.steps_per_period;
    let delta = spec.period / spp as f64;
    let tol = 1e-9 * spec.period;
    let epochs = epochs_within(spec.horizon, spec.period);
    let rem = (spec.horizon - epochs as f64 * spec.period).max(0.0);
    let rem_steps = ((rem / delta) + 1e-9).floor() as usize;
    let full_steps = epochs * spp + rem_steps.min(spp.saturating_sub(1));
    let last_grid = grid_time(full_steps, spp, spec.period, delta);
    let partial = spec.horizon - last_grid;
    let total_steps = full_steps + usize::from(partial > tol);

    let breakdown = model.breakdown_threshold();
    let shock_level = model.shock_threshold();
    let majorant = model.shocks.majorant(spec.horizon);
    let mut next_candidate = if majorant > 0.0 {
        streams.shocks.sample::<f64, _>(Exp1) / majorant
    } else {
        f64::INFINITY
    };

    let mut x = 0.0f64;
    let mut t = 0.0f64;
    let mut regime = ShockRegime::Below;
    for n in 1..=total_steps {
        let is_partial = n > full_steps;
        let t_next = if is_partial {
            spec.horizon
        } else {
            grid_time(n, spp, spec.period, delta)
        };

        // shocks on (t, t_next], with the regime of the state held on that cell
        while record.shock_time.is_none() && next_candidate <= t_next {
            let u = next_candidate;
            let accept = model.shocks.rate(regime, u) / majorant;
            if streams.shocks.random::<f64>() < accept {
                record.shock_time = Some(u);
            } else {
                next_candidate += streams.shocks.sample::<f64, _>(Exp1) / majorant;
            }
        }

        x += if is_partial {
            IncrementSampler::new(&model.degradation, t_next - t)?.sample(&mut streams.degradation)
        } else {
            let mut dx = 0.0;
            for _ in 0..spec.substeps {
                dx += step.sample(&mut streams.degradation);
            }
            dx
        };
        t = t_next;

        if regime == ShockRegime::Below && x >= shock_level {
            regime = ShockRegime::Above;
            record.shock_threshold_crossing = Some(t);
        }
        if record.breakdown_crossing.is_none() && x >= breakdown {
            record.breakdown_crossing = Some(t);
        }
        if let Some(level) = spec.watch {
            if record.watch_crossing.is_none() && x >= level {
                record.watch_crossing = Some(t);
            }
        }
        record.failure_time = match (record.breakdown_crossing, record.shock_time) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };

        if spec.stop_on_failure {
            if record.failure_time.is_some() {
                break;
            }
        } else if record.breakdown_crossing.is_some() && record.shock_time.is_some() {
            break;
        }
        if !is_partial && n % spp == 0 {
            record.levels.push(x);
            if x >= spec.stop_level {
                break;
            }
        }
    }
    Ok(())
}

#[inline]
fn grid_time(n: usize, spp: usize, period: f64, delta: f64) -> f64 {
    (n / spp) as f64 * period + (n % spp) as f64 * delta
}

/// First maintenance action for threshold `M` on a recorded path.
pub(crate) fn resolve(record: &PathRecord, threshold: f64, period: f64, epochs: usize) -> Outcome {
    for k in 1..=epochs {
        if let Some(d) = record.failure_time {
            if d <= k as f64 * period {
                return Outcome::Corrective(k);
            }
        }
        match record.levels.get(k - 1) {
            Some(&level) if level >= threshold => return Outcome::Preventive(k),
            Some(_) => {}
            None => {
                debug_assert!(false, "path stopped before threshold {threshold} was resolved");
                return Outcome::Censored;
            }
        }
    }
    Outcome::Censored
}

fn to_sample(record: &PathRecord, outcome: Outcome, period: f64, horizon: f64, epochs: usize) -> ReplacementSample {
    let (kind, replacement_time, inspections) = match outcome {
        Outcome::Corrective(k) => (ReplacementKind::Corrective, k as f64 * period, k),
        Outcome::Preventive(k) => (ReplacementKind::Preventive, k as f64 * period, k),
        Outcome::Censored => (ReplacementKind::Censored, horizon, epochs),
    };
    let within = |v: Option<f64>| v.filter(|&t| t <= replacement_time);
    ReplacementSample {
        replacement_time,
        kind,
        failure_time: within(record.failure_time),
        preventive_crossing: within(record.watch_crossing),
        shock_threshold_crossing: within(record.shock_threshold_crossing),
        breakdown_crossing: within(record.breakdown_crossing),
        shock_time: within(record.shock_time),
        inspections,
    }
}

/// Simulates one first renewal cycle over `(0, horizon]`.
pub fn simulate_cycle(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    horizon: f64,
    cfg: &SimulationConfig,
    streams: &mut SampleStreams,
) -> Result<ReplacementSample> {
    policy.check_against(model)?;
    let (spp, step) = cfg.stepper(model, policy.inspection_period())?;
    let mut record = PathRecord::default();
    cycle_with(model, policy, horizon, (spp, cfg.substeps), &step, streams, &mut record)
}

fn cycle_with(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    horizon: f64,
    (spp, substeps): (usize, usize),
    step: &IncrementSampler,
    streams: &mut SampleStreams,
    record: &mut PathRecord,
) -> Result<ReplacementSample> {
    let period = policy.inspection_period();
    let threshold = policy.preventive_threshold();
    let spec = PathSpec {
        period,
        horizon,
        steps_per_period: spp,
        substeps,
        stop_level: threshold,
        stop_on_failure: true,
        watch: Some(threshold),
    };
    simulate_path(model, &spec, step, streams, record)?;
    let epochs = epochs_within(horizon, period);
    let outcome = resolve(record, threshold, period, epochs);
    Ok(to_sample(record, outcome, period, horizon, epochs))
}

// ---------------------------------------------------------------------------
// Chained cycles (strict Monte Carlo)
// ---------------------------------------------------------------------------

/// One realization of the maintained process over the whole life cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRealization {
    /// Cycle records with times relative to each cycle's start; the last is
    /// censored unless a replacement landed exactly on the horizon.
    pub cycles: Vec<ReplacementSample>,
    /// Realized cost `C(t_f)`.
    pub cost: f64,
    /// Replacements performed within the life cycle.
    pub completed_renewals: usize,
}

/// Chains fresh cycles after every replacement until the horizon, charging
/// `C_I` per non-replacing inspection, `C_p` or `C_c` per replacement and
/// `C_d` per unit of downtime.
pub fn chain_cycles(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    costs: &CostStructure,
    life: &LifeCycle,
    cfg: &SimulationConfig,
    streams: &mut SampleStreams,
) -> Result<ChainRealization> {
    policy.check_against(model)?;
    let (spp, step) = cfg.stepper(model, policy.inspection_period())?;
    let mut record = PathRecord::default();
    chain_with(model, policy, costs, life, (spp, cfg.substeps), &step, streams, &mut record)
}

#[allow(clippy::too_many_arguments)]
fn chain_with(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    costs: &CostStructure,
    life: &LifeCycle,
    steps: (usize, usize),
    step: &IncrementSampler,
    streams: &mut SampleStreams,
    record: &mut PathRecord,
) -> Result<ChainRealization> {
    let tol = 1e-9 * policy.inspection_period();
    let mut clock = 0.0;
    let mut cost = 0.0;
    let mut cycles = Vec::new();
    let mut completed = 0;
    loop {
        let remaining = life.horizon() - clock;
        if remaining <= tol {
            break;
        }
        let cycle = cycle_with(model, policy, remaining, steps, step, streams, record)?;
        let paid_inspections = match cycle.kind {
            ReplacementKind::Censored => cycle.inspections,
            _ => cycle.inspections - 1,
        };
        cost += costs.inspection * paid_inspections as f64;
        match cycle.kind {
            ReplacementKind::Preventive => cost += costs.preventive,
            ReplacementKind::Corrective => {
                cost += costs.corrective + costs.downtime_rate * cycle.downtime().unwrap_or(0.0)
            }
            ReplacementKind::Censored => {
                if let Some(d) = cycle.failure_time {
                    cost += costs.downtime_rate * (remaining - d);
                }
            }
        }
        let done = cycle.kind == ReplacementKind::Censored;
        clock += cycle.replacement_time;
        if !done {
            completed += 1;
        }
        cycles.push(cycle);
        if done {
            break;
        }
    }
    Ok(ChainRealization {
        cycles,
        cost,
        completed_renewals: completed,
    })
}

/// Summary of many chained realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictEstimate {
    pub n: usize,
    pub horizon: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
    /// Standard error of `mean_cost`.
    pub stderr_cost: f64,
    /// Standard error of `std_cost` (normal-theory approximation from the
    /// fourth central moment).
    pub stderr_std: f64,
    pub mean_renewals: f64,
    pub stderr_renewals: f64,
}

impl StrictEstimate {
    pub fn mean_rate(&self) -> f64 {
        self.mean_cost / self.horizon
    }
}

/// Strict Monte Carlo over `cfg.n_samples` chained realizations.
pub fn strict_monte_carlo(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    costs: &CostStructure,
    life: &LifeCycle,
    cfg: &SimulationConfig,
) -> Result<StrictEstimate> {
    policy.check_against(model)?;
    let (spp, step) = cfg.stepper(model, policy.inspection_period())?;
    let steps = (spp, cfg.substeps);
    let seed = cfg.master_seed;
    let outcomes: Vec<(f64, usize)> = cfg.install(|| {
        (0..cfg.n_samples as u64)
            .into_par_iter()
            .map_init(PathRecord::default, |record, i| {
                let mut streams = SampleStreams::new(seed, i);
                chain_with(model, policy, costs, life, steps, &step, &mut streams, record)
                    .map(|c| (c.cost, c.completed_renewals))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.0).sum::<f64>() / n;
    let m2 = outcomes.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / n;
    let m4 = outcomes.iter().map(|o| (o.0 - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0).max(1.0);
    let std = var.sqrt();
    let renew_mean = outcomes.iter().map(|o| o.1 as f64).sum::<f64>() / n;
    let renew_var = outcomes
        .iter()
        .map(|o| (o.1 as f64 - renew_mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    // Var(s) ≈ (μ4 - σ⁴) / (4 n σ²)
    let stderr_std = if m2 > 0.0 {
        ((m4 - m2 * m2).max(0.0) / (4.0 * n * m2)).sqrt()
    } else {
        0.0
    };
    Ok(StrictEstimate {
        n: outcomes.len(),
        horizon: life.horizon(),
        mean_cost: mean,
        std_cost: std,
        stderr_cost: (var / n).sqrt(),
        stderr_std,
        mean_renewals: renew_mean,
        stderr_renewals: (renew_var / n).sqrt(),
    })
}

/// Expected number of replacements within the life cycle.
pub fn renewal_counts(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    life: &LifeCycle,
    cfg: &SimulationConfig,
) -> Result<f64> {
    strict_monte_carlo(model, policy, &CostStructure::zero(), life, cfg).map(|s| s.mean_renewals)
}

// ---------------------------------------------------------------------------
// Failure law without maintenance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureLawEstimate {
    pub n: usize,
    pub mean_breakdown_time: f64,
    pub stderr_breakdown_time: f64,
    pub mean_shock_time: f64,
    pub stderr_shock_time: f64,
    /// Fraction of paths where the shock came first.
    pub shock_first: f64,
    /// Paths where either time exceeded the cap (contributing the cap).
    pub censored: usize,
}

/// Estimates `E[σ_L]` and `E[Y]` on the unmaintained process with path step
/// `step` and a time cap. Shock and degradation streams are separate, so
/// two models with the same degradation law share their paths.
pub fn failure_law(
    model: &SystemModel,
    step: f64,
    cap: f64,
    n: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<FailureLawEstimate> {
    if !(step > 0.0) || !(cap > step) || n == 0 {
        return Err(CbmError::Config(format!(
            "failure law needs step > 0, cap > step and n > 0 (step {step}, cap {cap}, n {n})"
        )));
    }
    let spec = PathSpec {
        period: cap,
        horizon: cap,
        steps_per_period: (cap / step).round().max(1.0) as usize,
        substeps: 1,
        stop_level: f64::INFINITY,
        stop_on_failure: false,
        watch: None,
    };
    let inc = IncrementSampler::new(&model.degradation, cap / spec.steps_per_period as f64)?;
    let cfg = SimulationConfig {
        workers,
        ..SimulationConfig::default()
    };
    let rows: Vec<(f64, f64, bool)> = cfg.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map_init(PathRecord::default, |record, i| {
                let mut streams = SampleStreams::new(seed, i);
                simulate_path(model, &spec, &inc, &mut streams, record)?;
                let s = record.breakdown_crossing.unwrap_or(cap);
                let y = record.shock_time.unwrap_or(cap);
                let censored = record.breakdown_crossing.is_none() || record.shock_time.is_none();
                Ok((s, y, censored))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let nf = n as f64;
    let stats = |f: &dyn Fn(&(f64, f64, bool)) -> f64| {
        let mean = rows.iter().map(f).sum::<f64>() / nf;
        let var = rows.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
        (mean, (var / nf).sqrt())
    };
    let (ms, ss) = stats(&|r| r.0);
    let (my, sy) = stats(&|r| r.1);
    Ok(FailureLawEstimate {
        n,
        mean_breakdown_time: ms,
        stderr_breakdown_time: ss,
        mean_shock_time: my,
        stderr_shock_time: sy,
        shock_first: rows.iter().filter(|r| r.1 < r.0).count() as f64 / nf,
        censored: rows.iter().filter(|r| r.2).count(),
    })
}

/// First grid time at which degradation reaches `level`, per path, on a
/// grid of step `step` up to `cap` (`None` if not reached).
pub fn crossing_times(
    model: &SystemModel,
    level: f64,
    step: f64,
    cap: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    if !(step > 0.0) || !(cap > step) {
        return Err(CbmError::Config(format!(
            "crossing times need step > 0 and cap > step (step {step}, cap {cap})"
        )));
    }
    let spec = PathSpec {
        period: cap,
        horizon: cap,
        steps_per_period: (cap / step).round().max(1.0) as usize,
        substeps: 1,
        stop_level: f64::INFINITY,
        stop_on_failure: true,
        watch: None,
    };
    // shock-free copy whose breakdown threshold is the level of interest
    let probe = SystemModel::new(
        model.degradation,
        crate::model::ShockIntensity::constant(0.0, 0.0)?,
        level,
        level,
    )?;
    let inc = IncrementSampler::new(&model.degradation, cap / spec.steps_per_period as f64)?;
    (0..n as u64)
        .into_par_iter()
        .map_init(PathRecord::default, |record, i| {
            let mut streams = SampleStreams::new(seed, i);
            simulate_path(&probe, &spec, &inc, &mut streams, record)?;
            Ok(record.breakdown_crossing)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Table estimation
// ---------------------------------------------------------------------------

/// Running sums for one threshold; lattice arrays are indexed by time rank.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    n: u64,
    censored: u64,
    preventive: Vec<u64>,
    corrective: Vec<u64>,
    downtime: Vec<f64>,
    downtime_sq: Vec<f64>,
    /// histogram of the rank at which each sample stops counting as alive
    cut_hist: Vec<u64>,
    residual: Vec<f64>,
    residual_sq: Vec<f64>,
}

impl Accumulator {
    pub(crate) fn new(epochs: usize, points: usize) -> Self {
        Self {
            n: 0,
            censored: 0,
            preventive: vec![0; epochs],
            corrective: vec![0; epochs],
            downtime: vec![0.0; epochs],
            downtime_sq: vec![0.0; epochs],
            cut_hist: vec![0; points + 1],
            residual: vec![0.0; points],
            residual_sq: vec![0.0; points],
        }
    }

    pub(crate) fn record(&mut self, outcome: Outcome, failure: Option<f64>, period: f64, times: &[f64]) {
        self.n += 1;
        // alive while t < cut; downtime accrues on [failure, downtime_end)
        let (cut, downtime_end) = match outcome {
            Outcome::Preventive(k) => {
                self.preventive[k - 1] += 1;
                (k as f64 * period, f64::NEG_INFINITY)
            }
            Outcome::Corrective(k) => {
                let d = failure.expect("corrective outcome without failure time");
                let r = k as f64 * period;
                let w = r - d;
                self.corrective[k - 1] += 1;
                self.downtime[k - 1] += w;
                self.downtime_sq[k - 1] += w * w;
                (d, r)
            }
            Outcome::Censored => {
                self.censored += 1;
                (failure.unwrap_or(f64::INFINITY), f64::INFINITY)
            }
        };
        self.cut_hist[times.partition_point(|&t| t < cut)] += 1;
        if let Some(d) = failure {
            let start = times.partition_point(|&t| t < d);
            for (r, &t) in times.iter().enumerate().skip(start) {
                if t >= downtime_end {
                    break;
                }
                let w = t - d;
                self.residual[r] += w;
                self.residual_sq[r] += w * w;
            }
        }
    }

    pub(crate) fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.censored += other.censored;
        add(&mut self.preventive, &other.preventive);
        add(&mut self.corrective, &other.corrective);
        add(&mut self.cut_hist, &other.cut_hist);
        addf(&mut self.downtime, &other.downtime);
        addf(&mut self.downtime_sq, &other.downtime_sq);
        addf(&mut self.residual, &other.residual);
        addf(&mut self.residual_sq, &other.residual_sq);
    }

    pub(crate) fn finish(&self, meta: &TableMeta) -> EstimateTables {
        let n = self.n as f64;
        let lattice = &meta.lattice;
        let points = lattice.len();
        let mut alive = vec![0.0; points];
        let mut residual = vec![0.0; points];
        let mut residual_sq = vec![0.0; points];
        let mut above: u64 = 0;
        for r in (0..points).rev() {
            above += self.cut_hist[r + 1];
            let flat = lattice.flat_of_rank(r);
            alive[flat] = above as f64 / n;
            residual[flat] = self.residual[r] / n;
            residual_sq[flat] = self.residual_sq[r] / n;
        }
        let scale = |v: &[f64]| v.iter().map(|x| x / n).collect::<Vec<_>>();
        let freq = |v: &[u64]| v.iter().map(|&c| c as f64 / n).collect::<Vec<_>>();
        EstimateTables {
            inspection_period: meta.period,
            preventive_threshold: meta.threshold,
            horizon: meta.horizon,
            lattice: lattice.clone(),
            preventive_count: self.preventive.clone(),
            corrective_count: self.corrective.clone(),
            p_preventive: freq(&self.preventive),
            p_corrective: freq(&self.corrective),
            downtime_corrective: scale(&self.downtime),
            downtime_corrective_sq: scale(&self.downtime_sq),
            alive_no_replacement: alive,
            residual_downtime: residual,
            residual_downtime_sq: residual_sq,
            sample_count: self.n,
            censored_count: self.censored,
            seed: meta.seed,
            digest: meta.digest,
        }
    }
}

fn add(a: &mut [u64], b: &[u64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn addf(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

pub(crate) struct TableMeta {
    period: f64,
    threshold: f64,
    horizon: f64,
    lattice: Lattice,
    seed: u64,
    digest: [u8; 32],
}

/// Pooled tables plus one table per independent batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedTables {
    pub pooled: EstimateTables,
    pub batches: Vec<EstimateTables>,
}

impl BatchedTables {
    /// Batch-means standard error of a scalar functional of the tables.
    pub fn standard_error<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&EstimateTables) -> Result<f64>,
    {
        let values = self.batches.iter().map(&f).collect::<Result<Vec<_>>>()?;
        Ok(batch_stderr(&values))
    }
}

pub(crate) fn batch_stderr(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Estimates tables for one inspection period and several preventive
/// thresholds from a single set of paths (common random numbers across `M`).
pub fn estimate_table_set(
    model: &SystemModel,
    period: f64,
    thresholds: &[f64],
    life: &LifeCycle,
    cfg: &SimulationConfig,
    seed: u64,
) -> Result<Vec<BatchedTables>> {
    cfg.install(|| table_set_on_current_pool(model, period, thresholds, life, cfg, seed))?
}

/// As [`estimate_table_set`], on whatever rayon pool is current.
pub(crate) fn table_set_on_current_pool(
    model: &SystemModel,
    period: f64,
    thresholds: &[f64],
    life: &LifeCycle,
    cfg: &SimulationConfig,
    seed: u64,
) -> Result<Vec<BatchedTables>> {
    let per_batch = cfg
        .batch_ranges()
        .par_iter()
        .map(|&range| simulate_batch(model, period, thresholds, life, cfg, seed, range))
        .collect::<Result<Vec<_>>>()?;
    finish_batches(model, period, thresholds, life, cfg, seed, per_batch)
}

pub(crate) fn finish_batches(
    model: &SystemModel,
    period: f64,
    thresholds: &[f64],
    life: &LifeCycle,
    cfg: &SimulationConfig,
    seed: u64,
    per_batch: Vec<Vec<Accumulator>>,
) -> Result<Vec<BatchedTables>> {
    let lattice = cfg.lattice(period, life.horizon())?;
    thresholds
        .iter()
        .enumerate()
        .map(|(m, &threshold)| {
            let meta = TableMeta {
                period,
                threshold,
                horizon: life.horizon(),
                lattice: lattice.clone(),
                seed,
                digest: config_digest(model, period, threshold, life, cfg, seed),
            };
            let mut pooled = per_batch[0][m].clone();
            for acc in &per_batch[1..] {
                pooled.merge(&acc[m]);
            }
            Ok(BatchedTables {
                pooled: pooled.finish(&meta),
                batches: per_batch.iter().map(|b| b[m].finish(&meta)).collect(),
            })
        })
        .collect()
}

/// Simulates samples `range.0..range.1` sequentially into one accumulator
/// per threshold.
pub(crate) fn simulate_batch(
    model: &SystemModel,
    period: f64,
    thresholds: &[f64],
    life: &LifeCycle,
    cfg: &SimulationConfig,
    seed: u64,
    range: (u64, u64),
) -> Result<Vec<Accumulator>> {
    if thresholds.is_empty() {
        return Err(invalid("thresholds", "at least one preventive threshold is required"));
    }
    for &m in thresholds {
        MaintenancePolicy::new(period, m)?.check_against(model)?;
    }
    let horizon = life.horizon();
    let (spp, step) = cfg.stepper(model, period)?;
    let lattice = cfg.lattice(period, horizon)?;
    let times = lattice.sorted_times();
    let epochs = epochs_within(horizon, period);
    let stop_level = thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spec = PathSpec {
        period,
        horizon,
        steps_per_period: spp,
        substeps: cfg.substeps,
        stop_level,
        stop_on_failure: true,
        watch: None,
    };
    let mut accs = vec![Accumulator::new(epochs, lattice.len()); thresholds.len()];
    let mut record = PathRecord::default();
    for i in range.0..range.1 {
        let mut streams = SampleStreams::new(seed, i);
        simulate_path(model, &spec, &step, &mut streams, &mut record)?;
        // a failure seen after the horizon is irrelevant
        if record.failure_time.is_some_and(|d| d > horizon) {
            record.failure_time = None;
        }
        for (acc, &m) in accs.iter_mut().zip(thresholds) {
            let outcome = resolve(&record, m, period, epochs);
            acc.record(outcome, record.failure_time, period, times);
        }
    }
    Ok(accs)
}

/// Tables for a single policy, seeded by `cfg.master_seed`.
pub fn estimate_tables(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    life: &LifeCycle,
    cfg: &SimulationConfig,
) -> Result<EstimateTables> {
    estimate_batched(model, policy, life, cfg).map(|b| b.pooled)
}

pub fn estimate_batched(
    model: &SystemModel,
    policy: &MaintenancePolicy,
    life: &LifeCycle,
    cfg: &SimulationConfig,
) -> Result<BatchedTables> {
    let mut set = estimate_table_set(
        model,
        policy.inspection_period(),
        &[policy.preventive_threshold()],
        life,
        cfg,
        cfg.master_seed,
    )?;
    Ok(set.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GammaDegradation, ShockIntensity};

    fn reference_model() -> SystemModel {
        SystemModel::new(
            GammaDegradation::new(0.1, 0.1).unwrap(),
            ShockIntensity::constant(0.01, 0.1).unwrap(),
            30.0,
            20.0,
        )
        .unwrap()
    }

    fn inert_model() -> SystemModel {
        SystemModel::new(
            GammaDegradation::new(0.1, 0.1).unwrap(),
            ShockIntensity::constant(0.0, 0.0).unwrap(),
            1e9,
            1e9,
        )
        .unwrap()
    }

    #[test]
    fn nothing_triggers_replacement() {
        let model = inert_model();
        let policy = MaintenancePolicy::new(10.0, 1e9).unwrap();
        let cfg = SimulationConfig::default();
        let mut streams = SampleStreams::new(1, 0);
        let s = simulate_cycle(&model, &policy, 50.0, &cfg, &mut streams).unwrap();
        assert_eq!(s.kind, ReplacementKind::Censored);
        assert_eq!(s.inspections, 5);
        assert_eq!(s.failure_time, None);
    }

    #[test]
    fn inert_tables() {
        let model = inert_model();
        let policy = MaintenancePolicy::new(10.0, 1e9).unwrap();
        let life = LifeCycle::new(50.0).unwrap();
        let cfg = SimulationConfig::default().with_samples(500);
        let t = estimate_tables(&model, &policy, &life, &cfg).unwrap();
        assert!(t.p_preventive.iter().chain(&t.p_corrective).all(|&p| p == 0.0));
        assert!(t.alive_no_replacement.iter().all(|&a| a == 1.0));
        assert!(t.residual_downtime.iter().all(|&w| w == 0.0));
        assert_eq!(t.censored_count, 500);
    }

    #[test]
    fn sample_invariants() {
        let model = reference_model();
        let cfg = SimulationConfig::default();
        for (period, m) in [(10.0, 14.0), (5.0, 5.0), (30.0, 25.0), (15.0, 30.0)] {
            let policy = MaintenancePolicy::new(period, m).unwrap();
            for i in 0..2_000 {
                let mut streams = SampleStreams::new(9, i);
                let s = simulate_cycle(&model, &policy, 50.0, &cfg, &mut streams).unwrap();
                match s.kind {
                    ReplacementKind::Corrective => {
                        let w = s.downtime().unwrap();
                        assert!((0.0..period).contains(&w), "downtime {w}");
                    }
                    ReplacementKind::Preventive => {
                        assert!(s.failure_time.is_none());
                        assert!(s.preventive_crossing.unwrap() <= s.replacement_time);
                        assert!(s.breakdown_crossing.is_none());
                    }
                    ReplacementKind::Censored => assert_eq!(s.replacement_time, 50.0),
                }
                if s.kind != ReplacementKind::Censored {
                    let k = s.replacement_time / period;
                    assert!((k - k.round()).abs() < 1e-12);
                    assert_eq!(s.inspections, k.round() as usize);
                }
            }
        }
    }

    #[test]
    fn counting_identity() {
        let model = reference_model();
        let life = LifeCycle::new(50.0).unwrap();
        let cfg = SimulationConfig::default().with_samples(3_000);
        for m in [3.0, 14.0, 30.0] {
            let policy = MaintenancePolicy::new(10.0, m).unwrap();
            let t = estimate_tables(&model, &policy, &life, &cfg).unwrap();
            let replaced: u64 = t.preventive_count.iter().chain(&t.corrective_count).sum();
            assert_eq!(replaced + t.censored_count, t.sample_count);
            let p: f64 = t.p_preventive.iter().chain(&t.p_corrective).sum();
            assert!((p + t.censored_count as f64 / 3_000.0 - 1.0).abs() < 1e-12);
            assert_eq!(t.alive(0.0).unwrap(), 1.0);
            assert!(t.alive_no_replacement.iter().all(|&a| (0.0..=1.0).contains(&a)));
            assert!(t.residual_downtime.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn single_threshold_matches_shared_paths() {
        let model = reference_model();
        let life = LifeCycle::new(50.0).unwrap();
        let cfg = SimulationConfig::default().with_samples(2_000);
        let set = estimate_table_set(&model, 10.0, &[8.0, 14.0, 22.0], &life, &cfg, cfg.master_seed).unwrap();
        let single = estimate_tables(&model, &MaintenancePolicy::new(10.0, 14.0).unwrap(), &life, &cfg).unwrap();
        assert_eq!(set[1].pooled.p_preventive, single.p_preventive);
        assert_eq!(set[1].pooled.alive_no_replacement, single.alive_no_replacement);
    }

    #[test]
    fn chain_with_zero_costs_costs_nothing() {
        let model = reference_model();
        let policy = MaintenancePolicy::new(10.0, 14.0).unwrap();
        let life = LifeCycle::new(50.0).unwrap();
        let cfg = SimulationConfig::default();
        for i in 0..200 {
            let mut streams = SampleStreams::new(3, i);
            let c = chain_cycles(&model, &policy, &CostStructure::zero(), &life, &cfg, &mut streams).unwrap();
            assert_eq!(c.cost, 0.0);
            let total: f64 = c.cycles.iter().map(|s| s.replacement_time).sum();
            assert!((total - 50.0).abs() < 1e-9, "{total}");
        }
    }

    #[test]
    fn no_renewals_when_nothing_can_fail() {
        let policy = MaintenancePolicy::new(60.0, 1e9).unwrap();
        let life = LifeCycle::new(50.0).unwrap();
        let cfg = SimulationConfig::default().with_samples(200);
        assert_eq!(renewal_counts(&inert_model(), &policy, &life, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn rejects_coarse_steps() {
        let cfg = SimulationConfig {
            path_step: Some(2.0),
            ..SimulationConfig::default()
        };
        assert!(cfg.steps_per_period(10.0).is_err());
        let cfg = SimulationConfig {
            path_step: Some(0.0),
            ..SimulationConfig::default()
        };
        assert!(cfg.steps_per_period(10.0).is_err());
        let cfg = SimulationConfig {
            path_step: Some(0.3),
            ..SimulationConfig::default()
        };
        assert_eq!(cfg.steps_per_period(10.0).unwrap(), 34);
    }
}
