//! Evaluation lattice for the renewal recursions.
//!
//! Every recursion looks up its own value at `t - kT`. The lattice is built as
//! a set of phases `φ ∈ [0, T)` and holds every point `φ + jT ≤ t_f`, so a
//! lookup at `t - kT` is always the point `(φ, j - k)` and no interpolation is
//! ever needed. The default phases are those of `t_f - m·T/q` for
//! `m = 0..q`, plus phase 0 (the origin and the inspection epochs); callers
//! may add the phases of any extra times they want evaluated.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, CbmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    period: f64,
    horizon: f64,
    phases: Vec<f64>,
    offsets: Vec<usize>,
    counts: Vec<usize>,
    times: Vec<f64>,
    /// flat indices ordered by time
    by_time: Vec<usize>,
    sorted_times: Vec<f64>,
}

impl Lattice {
    /// Lattice with `divisions` points per period anchored at the horizon,
    /// extended by the phases of `extra_times`.
    pub fn new(period: f64, horizon: f64, divisions: usize, extra_times: &[f64]) -> Result<Self> {
        require_positive("inspection_period", period)?;
        require_positive("horizon", horizon)?;
        if divisions == 0 {
            return Err(invalid("lattice_divisions", "must be >= 1"));
        }
        let step = period / divisions as f64;
        let mut phases = vec![0.0];
        for m in 0..divisions {
            phases.push(horizon - m as f64 * step);
        }
        for &t in extra_times {
            if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
                return Err(invalid(
                    "eval_times",
                    format!("evaluation time {t} lies outside [0, {horizon}]"),
                ));
            }
            phases.push(t);
        }
        let phases = phases.into_iter().map(|t| phase_of(t, period).0).collect();
        Self::from_phases(period, horizon, phases)
    }

    /// Rebuilds a lattice from explicit phases in `[0, period)`.
    pub fn from_phases(period: f64, horizon: f64, mut phases: Vec<f64>) -> Result<Self> {
        require_positive("inspection_period", period)?;
        require_positive("horizon", horizon)?;
        let tol = tolerance(period);
        if phases.iter().any(|&p| !(p >= 0.0 && p < period)) {
            return Err(invalid("phases", "every phase must lie in [0, period)"));
        }
        phases.sort_by(f64::total_cmp);
        phases.dedup_by(|a, b| (*a - *b).abs() <= tol);
        phases.retain(|&p| p <= horizon + tol);

        let mut offsets = Vec::with_capacity(phases.len());
        let mut counts = Vec::with_capacity(phases.len());
        let mut times = Vec::new();
        for &p in &phases {
            offsets.push(times.len());
            let mut j = 0usize;
            loop {
                let t = p + j as f64 * period;
                if t > horizon + tol {
                    break;
                }
                times.push(t.min(horizon));
                j += 1;
            }
            counts.push(j);
        }
        let mut by_time: Vec<usize> = (0..times.len()).collect();
        by_time.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let sorted_times = by_time.iter().map(|&i| times[i]).collect();
        Ok(Self {
            period,
            horizon,
            phases,
            offsets,
            counts,
            times,
            by_time,
            sorted_times,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of points `φ + jT` in phase `p`.
    pub fn phase_len(&self, p: usize) -> usize {
        self.counts[p]
    }

    /// Flat index of `(phase, j)`.
    pub fn index(&self, phase: usize, j: usize) -> usize {
        debug_assert!(j < self.counts[phase]);
        self.offsets[phase] + j
    }

    pub fn time(&self, flat: usize) -> f64 {
        self.times[flat]
    }

    /// Point times in flat (phase-major) order.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Point times in increasing order.
    pub fn sorted_times(&self) -> &[f64] {
        &self.sorted_times
    }

    /// Flat index of the `r`-th smallest point.
    pub fn flat_of_rank(&self, r: usize) -> usize {
        self.by_time[r]
    }

    /// Resolves a time to `(phase, j)`, or a grid-coverage error if it is not
    /// a lattice point.
    pub fn locate(&self, t: f64) -> Result<(usize, usize)> {
        let coverage = || CbmError::GridCoverage {
            t,
            step: self.period,
            horizon: self.horizon,
        };
        let tol = tolerance(self.period);
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(coverage());
        }
        let (phase, j) = phase_of(t.max(0.0), self.period);
        let p = self
            .phases
            .iter()
            .position(|&q| (q - phase).abs() <= tol)
            .ok_or_else(coverage)?;
        if j >= self.counts[p] {
            return Err(coverage());
        }
        Ok((p, j))
    }

    pub fn locate_flat(&self, t: f64) -> Result<usize> {
        self.locate(t).map(|(p, j)| self.index(p, j))
    }

    pub fn contains(&self, t: f64) -> bool {
        self.locate(t).is_ok()
    }
}

/// Splits `t` into `(φ, j)` with `t = φ + jT`, snapping `φ` within tolerance
/// of `T` back to 0.
fn phase_of(t: f64, period: f64) -> (f64, usize) {
    let tol = tolerance(period);
    let mut j = (t / period).floor();
    let mut phase = t - j * period;
    if phase >= period - tol {
        phase = 0.0;
        j += 1.0;
    } else if phase < tol {
        phase = 0.0;
    }
    (phase, j.max(0.0) as usize)
}

fn tolerance(period: f64) -> f64 {
    1e-9 * period.max(1.0)
}
