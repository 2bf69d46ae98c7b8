//! Markov renewal recursions over estimate tables.
//!
//! With `P(k) = P[R₁ = kT]`, every measure solves a recursion of the form
//! `V(t) = Σ_{k ≤ ⌊t/T⌋} V(t - kT)·P(k) + (non-renewal term)(t)`:
//!
//! * expected cost: `E[C(t)]`, with the cycle costs of replacements at or
//!   before `⌊t/T⌋T` plus inspections and downtime of the open stretch;
//! * second moment `E[C(t)²]`, whose aggregate term also carries the cross
//!   products `2·E[cycle cost·1{R₁ = kT}]·E[C(t - kT)]`;
//! * availability, renewing on every replacement;
//! * reliability, renewing on preventive replacements only;
//! * interval reliability `IR(t, t + s)`.
//!
//! Each measure is evaluated two ways: a staged sweep along each lattice
//! phase (the `*_curve` functions), and a direct memoized recursion on a
//! single time that resolves `t - kT` through lattice lookups. Both perform
//! the same floating-point operations in the same order.
//!
//! Probabilities are clamped to `[0, 1]` on output only, so the identities
//! `IR(t, t) = A(t)` and `IR(0, t) = R(t)` hold exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{CbmError, Result};
use crate::model::CostStructure;
use crate::tables::EstimateTables;

/// Censored mass above which the long-run rate is flagged as truncated.
pub const TRUNCATION_WARNING: f64 = 0.01;

/// Relative tolerance for Monte Carlo jitter in `E[C²] - E[C]²`.
pub const VARIANCE_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub std_dev: Vec<f64>,
    /// `E[C(t)]/t`; `NaN` at `t = 0`.
    pub rate: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    Availability,
    Reliability,
    IntervalReliability { length: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub kind: MeasureKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PerformanceCurve {
    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .position(|&u| (u - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|i| self.values[i])
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Cost terms
// ---------------------------------------------------------------------------

/// Cost-dependent per-epoch terms.
struct CostTerms<'a> {
    tables: &'a EstimateTables,
    costs: CostStructure,
    /// `Σ_{k ≤ j} P(k)`, index `j`
    cum_p: Vec<f64>,
    /// `E[cycle cost·1{R₁ = kT}]`, index `k`
    first: Vec<f64>,
    /// prefix sums of `first` and of `E[cycle cost²·1{R₁ = kT}]`, index `j`
    cum_first: Vec<f64>,
    cum_second: Vec<f64>,
}

impl<'a> CostTerms<'a> {
    fn new(tables: &'a EstimateTables, costs: &CostStructure) -> Self {
        let epochs = tables.num_epochs();
        let c = *costs;
        let mut cum_p = vec![0.0; epochs + 1];
        let mut first = vec![0.0; epochs + 1];
        let mut cum_first = vec![0.0; epochs + 1];
        let mut cum_second = vec![0.0; epochs + 1];
        for k in 1..=epochs {
            let pp = tables.p_preventive[k - 1];
            let pc = tables.p_corrective[k - 1];
            let dw = tables.downtime_corrective[k - 1];
            let dw2 = tables.downtime_corrective_sq[k - 1];
            let insp = c.inspection * (k - 1) as f64;
            let prev = c.preventive + insp;
            let corr = c.corrective + insp;
            first[k] = prev * pp + corr * pc + c.downtime_rate * dw;
            // (corr + C_d W)² expanded against the joint downtime moments
            let second = prev * prev * pp
                + corr * corr * pc
                + 2.0 * corr * c.downtime_rate * dw
                + c.downtime_rate * c.downtime_rate * dw2;
            cum_p[k] = cum_p[k - 1] + pp + pc;
            cum_first[k] = cum_first[k - 1] + first[k];
            cum_second[k] = cum_second[k - 1] + second;
        }
        Self {
            tables,
            costs: c,
            cum_p,
            first,
            cum_first,
            cum_second,
        }
    }

    /// `G` at lattice point `flat` with `⌊t/T⌋ = j`.
    fn aggregate_first(&self, j: usize, flat: usize) -> f64 {
        let open = self.costs.inspection * j as f64;
        self.cum_first[j]
            + open * (1.0 - self.cum_p[j])
            + self.costs.downtime_rate * self.tables.residual_downtime[flat]
    }

    /// `H` without its renewal cross terms.
    fn aggregate_second(&self, j: usize, flat: usize) -> f64 {
        let open = self.costs.inspection * j as f64;
        let cd = self.costs.downtime_rate;
        self.cum_second[j]
            + open * open * (1.0 - self.cum_p[j])
            + 2.0 * open * cd * self.tables.residual_downtime[flat]
            + cd * cd * self.tables.residual_downtime_sq[flat]
    }
}

fn replacement_probs(tables: &EstimateTables) -> Vec<f64> {
    let mut p = vec![0.0; tables.num_epochs() + 1];
    for (k, v) in p.iter_mut().enumerate().skip(1) {
        *v = tables.replacement_probability(k);
    }
    p
}

fn preventive_probs(tables: &EstimateTables) -> Vec<f64> {
    let mut p = vec![0.0; tables.num_epochs() + 1];
    for (k, v) in p.iter_mut().enumerate().skip(1) {
        *v = tables.p_preventive[k - 1];
    }
    p
}

fn variance_to_std(mean: f64, second: f64) -> Result<f64> {
    let var = second - mean * mean;
    if var < -VARIANCE_CLAMP * mean * mean {
        return Err(CbmError::NegativeVariance {
            mean,
            second_moment: second,
            variance: var,
        });
    }
    Ok(var.max(0.0).sqrt())
}

// ---------------------------------------------------------------------------
// Staged evaluation
// ---------------------------------------------------------------------------

/// Per-phase arrays of `(E[C], E[C²])`.
fn staged_cost(tables: &EstimateTables, costs: &CostStructure) -> Vec<(Vec<f64>, Vec<f64>)> {
    let terms = CostTerms::new(tables, costs);
    let p = replacement_probs(tables);
    let lattice = &tables.lattice;
    (0..lattice.phases().len())
        .map(|ph| {
            let len = lattice.phase_len(ph);
            let mut mean = vec![0.0; len];
            let mut second = vec![0.0; len];
            for j in 0..len {
                let flat = lattice.index(ph, j);
                let mut acc = 0.0;
                for k in 1..=j {
                    acc += mean[j - k] * p[k];
                }
                mean[j] = acc + terms.aggregate_first(j, flat);

                let mut acc2 = 0.0;
                for k in 1..=j {
                    acc2 += second[j - k] * p[k];
                }
                let mut cross = 0.0;
                for k in 1..=j {
                    cross += 2.0 * mean[j - k] * terms.first[k];
                }
                second[j] = acc2 + (cross + terms.aggregate_second(j, flat));
            }
            (mean, second)
        })
        .collect()
}

/// Expected cost, second moment, standard deviation and rate at every
/// lattice point, in time order.
pub fn cost_curve(tables: &EstimateTables, costs: &CostStructure) -> Result<CostCurve> {
    let staged = staged_cost(tables, costs);
    let lattice = &tables.lattice;
    let n = lattice.len();
    let mut flat_mean = vec![0.0; n];
    let mut flat_second = vec![0.0; n];
    for (ph, (mean, second)) in staged.iter().enumerate() {
        for j in 0..mean.len() {
            let f = lattice.index(ph, j);
            flat_mean[f] = mean[j];
            flat_second[f] = second[j];
        }
    }
    let mut curve = CostCurve {
        times: Vec::with_capacity(n),
        mean: Vec::with_capacity(n),
        second_moment: Vec::with_capacity(n),
        std_dev: Vec::with_capacity(n),
        rate: Vec::with_capacity(n),
    };
    for r in 0..n {
        let f = lattice.flat_of_rank(r);
        let t = lattice.time(f);
        curve.times.push(t);
        curve.mean.push(flat_mean[f]);
        curve.second_moment.push(flat_second[f]);
        curve.std_dev.push(variance_to_std(flat_mean[f], flat_second[f])?);
        curve.rate.push(if t > 0.0 { flat_mean[f] / t } else { f64::NAN });
    }
    Ok(curve)
}

/// Per-phase arrays of a performance recursion renewing with `probs`.
fn staged_performance(tables: &EstimateTables, probs: &[f64]) -> Vec<Vec<f64>> {
    let lattice = &tables.lattice;
    (0..lattice.phases().len())
        .map(|ph| {
            let len = lattice.phase_len(ph);
            let mut v = vec![0.0; len];
            for j in 0..len {
                let mut acc = 0.0;
                for k in 1..=j {
                    acc += v[j - k] * probs[k];
                }
                v[j] = acc + tables.alive_no_replacement[lattice.index(ph, j)];
            }
            v
        })
        .collect()
}

fn phase_arrays_to_curve(tables: &EstimateTables, kind: MeasureKind, arrays: &[Vec<f64>]) -> PerformanceCurve {
    let lattice = &tables.lattice;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for r in 0..lattice.len() {
        let f = lattice.flat_of_rank(r);
        let (ph, j) = lattice.locate(lattice.time(f)).expect("lattice point locates");
        if let Some(&v) = arrays[ph].get(j) {
            times.push(lattice.time(f));
            values.push(v.clamp(0.0, 1.0));
        }
    }
    PerformanceCurve { kind, times, values }
}

/// Availability, reliability or interval reliability at every lattice point
/// where it is defined (for interval reliability, `t + s ≤ t_f` and `t + s`
/// on the lattice).
pub fn performance_curve(tables: &EstimateTables, kind: MeasureKind) -> Result<PerformanceCurve> {
    match kind {
        MeasureKind::Availability => {
            let a = staged_performance(tables, &replacement_probs(tables));
            Ok(phase_arrays_to_curve(tables, kind, &a))
        }
        MeasureKind::Reliability => {
            let r = staged_performance(tables, &preventive_probs(tables));
            Ok(phase_arrays_to_curve(tables, kind, &r))
        }
        MeasureKind::IntervalReliability { length } => {
            let ir = staged_interval(tables, length)?;
            Ok(phase_arrays_to_curve(tables, kind, &ir))
        }
    }
}

fn staged_interval(tables: &EstimateTables, length: f64) -> Result<Vec<Vec<f64>>> {
    if !(length >= 0.0) {
        return Err(CbmError::Domain(format!(
            "interval length must be >= 0, got {length}"
        )));
    }
    let lattice = &tables.lattice;
    let reliability = staged_performance(tables, &preventive_probs(tables));
    let p = replacement_probs(tables);
    let pp = preventive_probs(tables);
    let mut out = Vec::with_capacity(lattice.phases().len());
    for (ph, &phase) in lattice.phases().iter().enumerate() {
        let end = phase + length;
        // phases whose shifted end is off the lattice or past t_f have no points
        let Some((end_ph, m)) = (end <= tables.horizon * (1.0 + 1e-12))
            .then(|| lattice.locate(end).ok())
            .flatten()
        else {
            out.push(Vec::new());
            continue;
        };
        let end_len = lattice.phase_len(end_ph);
        let len = lattice.phase_len(ph).min(end_len.saturating_sub(m));
        let mut ir = vec![0.0; len];
        for j in 0..len {
            let mut acc = 0.0;
            for k in (j + 1)..=(j + m) {
                acc += reliability[end_ph][j + m - k] * pp[k];
            }
            for k in 1..=j {
                acc += ir[j - k] * p[k];
            }
            ir[j] = acc + tables.alive_no_replacement[lattice.index(end_ph, j + m)];
        }
        out.push(ir);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Direct memoized recursion
// ---------------------------------------------------------------------------

struct Direct<'a> {
    tables: &'a EstimateTables,
    memo: HashMap<(usize, usize), f64>,
}

impl<'a> Direct<'a> {
    fn new(tables: &'a EstimateTables) -> Self {
        Self {
            tables,
            memo: HashMap::new(),
        }
    }

    /// Generic renewal recursion at time `t`: `V(t) = Σ V(t - kT)·probs[k] + base(t)`.
    fn solve(
        &mut self,
        t: f64,
        probs: &[f64],
        base: &dyn Fn(usize, usize) -> f64,
    ) -> Result<f64> {
        let (ph, j) = self.tables.lattice.locate(t)?;
        if let Some(&v) = self.memo.get(&(ph, j)) {
            return Ok(v);
        }
        let period = self.tables.inspection_period;
        let mut acc = 0.0;
        for k in 1..=j {
            acc += self.solve(t - k as f64 * period, probs, base)? * probs[k];
        }
        let flat = self.tables.lattice.index(ph, j);
        let v = acc + base(j, flat);
        self.memo.insert((ph, j), v);
        Ok(v)
    }
}

fn check_time(tables: &EstimateTables, t: f64) -> Result<()> {
    if t < 0.0 || t > tables.horizon * (1.0 + 1e-12) {
        return Err(CbmError::GridCoverage {
            t,
            step: tables.inspection_period,
            horizon: tables.horizon,
        });
    }
    Ok(())
}

/// `E[C(t)]` by direct recursion.
pub fn expected_cost(tables: &EstimateTables, costs: &CostStructure, t: f64) -> Result<f64> {
    check_time(tables, t)?;
    let terms = CostTerms::new(tables, costs);
    let p = replacement_probs(tables);
    Direct::new(tables).solve(t, &p, &|j, flat| terms.aggregate_first(j, flat))
}

/// `E[C(t)²]` by direct recursion.
pub fn expected_cost_sq(tables: &EstimateTables, costs: &CostStructure, t: f64) -> Result<f64> {
    check_time(tables, t)?;
    let terms = CostTerms::new(tables, costs);
    let p = replacement_probs(tables);
    let period = tables.inspection_period;
    let mut mean = Direct::new(tables);
    let (_, j_t) = tables.lattice.locate(t)?;
    // the cross terms need E[C] along the chain t, t - T, ..., which share a phase
    let mut means = vec![0.0; j_t + 1];
    for (j, m) in means.iter_mut().enumerate() {
        let s = t - (j_t - j) as f64 * period;
        *m = mean.solve(s, &p, &|j, flat| terms.aggregate_first(j, flat))?;
    }
    let base = |j: usize, flat: usize| {
        let mut cross = 0.0;
        for k in 1..=j {
            cross += 2.0 * means[j - k] * terms.first[k];
        }
        cross + terms.aggregate_second(j, flat)
    };
    Direct::new(tables).solve(t, &p, &base)
}

/// `S(t) = sqrt(E[C(t)²] - E[C(t)]²)`, clamping small negative jitter.
pub fn std_dev(tables: &EstimateTables, costs: &CostStructure, t: f64) -> Result<f64> {
    variance_to_std(expected_cost(tables, costs, t)?, expected_cost_sq(tables, costs, t)?)
}

pub fn availability(tables: &EstimateTables, t: f64) -> Result<f64> {
    check_time(tables, t)?;
    let p = replacement_probs(tables);
    let alive = &tables.alive_no_replacement;
    Direct::new(tables)
        .solve(t, &p, &|_, flat| alive[flat])
        .map(|v| v.clamp(0.0, 1.0))
}

pub fn reliability(tables: &EstimateTables, t: f64) -> Result<f64> {
    reliability_raw(tables, t).map(|v| v.clamp(0.0, 1.0))
}

fn reliability_raw(tables: &EstimateTables, t: f64) -> Result<f64> {
    check_time(tables, t)?;
    let pp = preventive_probs(tables);
    let alive = &tables.alive_no_replacement;
    Direct::new(tables).solve(t, &pp, &|_, flat| alive[flat])
}

/// `IR(t, t + s)`: probability of working throughout `[t, t + s]`.
pub fn interval_reliability(tables: &EstimateTables, t: f64, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(CbmError::Domain(format!("interval length must be >= 0, got {s}")));
    }
    check_time(tables, t)?;
    check_time(tables, t + s)?;
    let period = tables.inspection_period;
    let p = replacement_probs(tables);
    let pp = preventive_probs(tables);
    let alive = &tables.alive_no_replacement;
    let (_, j_t) = tables.lattice.locate(t)?;
    let (end_ph, j_end) = tables.lattice.locate(t + s)?;
    let m = j_end - j_t;

    let mut rel = Direct::new(tables);
    let mut memo: Vec<f64> = Vec::with_capacity(j_t + 1);
    for j in 0..=j_t {
        let shift = (j_t - j) as f64 * period;
        let mut acc = 0.0;
        for k in (j + 1)..=(j + m) {
            let u = t + s - shift - k as f64 * period;
            acc += rel.solve(u, &pp, &|_, flat| alive[flat])? * pp[k];
        }
        for k in 1..=j {
            acc += memo[j - k] * p[k];
        }
        let flat = tables.lattice.index(end_ph, j + m);
        memo.push(acc + alive[flat]);
    }
    Ok(memo[j_t].clamp(0.0, 1.0))
}

/// Long-run cost rate by the renewal-reward theorem, with sums truncated at
/// the table horizon. Logs a warning when the censored mass is at least 1%.
pub fn asymptotic_cost_rate(tables: &EstimateTables, costs: &CostStructure) -> Result<f64> {
    let censored = tables.censored_mass();
    if censored >= TRUNCATION_WARNING {
        warn!(
            censored_mass = censored,
            period = tables.inspection_period,
            threshold = tables.preventive_threshold,
            "long-run rate truncated at the table horizon"
        );
    }
    let mut cost = 0.0;
    let mut length = 0.0;
    for k in 1..=tables.num_epochs() {
        let pp = tables.p_preventive[k - 1];
        let pc = tables.p_corrective[k - 1];
        cost += costs.corrective * pc
            + costs.preventive * pp
            + costs.inspection * (k - 1) as f64 * (pp + pc)
            + costs.downtime_rate * tables.downtime_corrective[k - 1];
        length += k as f64 * tables.inspection_period * (pp + pc);
    }
    if length <= 0.0 {
        return Err(CbmError::Domain(
            "no replacement observed within the horizon; long-run rate undefined".into(),
        ));
    }
    Ok(cost / length)
}
