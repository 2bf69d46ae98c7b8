//! Parametric system model: gamma-process degradation, a two-regime shock
//! process whose intensity jumps once degradation passes a sensitivity
//! threshold, the periodic inspection policy, costs, and the life cycle.
//!
//! Failure happens at `D = min(σ_L, Y)`: `σ_L` is the first time degradation
//! reaches the breakdown threshold and `Y` the arrival of the first shock.
//! Given the time `v` at which degradation first exceeds the shock threshold,
//! shocks arrive as a non-homogeneous Poisson process with rate `λ₁` before
//! `v` and `λ₂` after it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, CbmError, Result};
use crate::special::regularized_upper_gamma;

// ---------------------------------------------------------------------------
// Degradation
// ---------------------------------------------------------------------------

/// Stationary gamma process. The increment over a window of length `dt` has
/// density `β^{α dt} x^{α dt - 1} e^{-β x} / Γ(α dt)`, i.e. shape `α·dt` and
/// rate `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaDegradation {
    shape_rate: f64,
    scale: f64,
}

impl GammaDegradation {
    /// `shape_rate` is α (per time unit); `scale` is β (per degradation unit),
    /// entering the density as `exp(-β x)`.
    pub fn new(shape_rate: f64, scale: f64) -> Result<Self> {
        Ok(Self {
            shape_rate: require_positive("shape_rate", shape_rate)?,
            scale: require_positive("scale", scale)?,
        })
    }

    pub fn shape_rate(&self) -> f64 {
        self.shape_rate
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `E[X(t)] = α t / β`.
    pub fn mean(&self, t: f64) -> f64 {
        self.shape_rate * t / self.scale
    }

    /// `Var[X(t)] = α t / β²`.
    pub fn variance(&self, t: f64) -> f64 {
        self.shape_rate * t / (self.scale * self.scale)
    }

    /// CDF of the first-passage time to level `z`:
    /// `P[σ_z ≤ t] = P[X(t) ≥ z] = Γ(α t, z β) / Γ(α t)`.
    pub fn first_passage_cdf(&self, level: f64, t: f64) -> Result<f64> {
        if !(level > 0.0) {
            return Err(CbmError::Domain(format!(
                "first-passage level must be > 0, got {level}"
            )));
        }
        if !(t >= 0.0) {
            return Err(CbmError::Domain(format!(
                "first-passage time must be >= 0, got {t}"
            )));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        regularized_upper_gamma(self.shape_rate * t, level * self.scale)
    }

    pub fn first_passage_survival(&self, level: f64, t: f64) -> Result<f64> {
        self.first_passage_cdf(level, t).map(|f| 1.0 - f)
    }
}

// ---------------------------------------------------------------------------
// Shock intensities
// ---------------------------------------------------------------------------

/// A nonnegative shock rate as a function of time since the last renewal.
///
/// `Constant` covers every dataset used so far; `Linear` is the time-varying
/// variant, integrated by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    Constant { rate: f64 },
    Linear { intercept: f64, slope: f64 },
}

impl RateFunction {
    pub fn constant(rate: f64) -> Result<Self> {
        Ok(Self::Constant {
            rate: require_nonnegative("rate", rate)?,
        })
    }

    /// `λ(t) = intercept + slope·t`, both nonnegative.
    pub fn linear(intercept: f64, slope: f64) -> Result<Self> {
        Ok(Self::Linear {
            intercept: require_nonnegative("intercept", intercept)?,
            slope: require_nonnegative("slope", slope)?,
        })
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { rate } => rate,
            Self::Linear { intercept, slope } => intercept + slope * t,
        }
    }

    /// `∫₀ᵗ λ(u) du`; exact for constants, Gauss–Legendre otherwise.
    pub fn cumulative(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { rate } => rate * t,
            Self::Linear { .. } => gauss_legendre(|u| self.rate(u), 0.0, t),
        }
    }

    /// Upper bound of the rate on `[0, horizon]`, used as the thinning majorant.
    pub fn supremum(&self, horizon: f64) -> f64 {
        match *self {
            Self::Constant { rate } => rate,
            Self::Linear { intercept, slope } => intercept + slope * horizon,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }

    /// Multiplies the rate function by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        require_nonnegative("factor", factor)?;
        Ok(match *self {
            Self::Constant { rate } => Self::Constant {
                rate: rate * factor,
            },
            Self::Linear { intercept, slope } => Self::Linear {
                intercept: intercept * factor,
                slope: slope * factor,
            },
        })
    }

    fn dominated_by(&self, other: &RateFunction) -> bool {
        // both are affine, so comparing at t = 0 and the slopes is enough
        let (a0, a1) = self.affine();
        let (b0, b1) = other.affine();
        a0 <= b0 && a1 <= b1
    }

    fn affine(&self) -> (f64, f64) {
        match *self {
            Self::Constant { rate } => (rate, 0.0),
            Self::Linear { intercept, slope } => (intercept, slope),
        }
    }
}

/// Composite 8-point Gauss–Legendre over 64 panels.
fn gauss_legendre<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    const PANELS: usize = 64;
    if hi <= lo {
        return 0.0;
    }
    let width = (hi - lo) / PANELS as f64;
    let mut total = 0.0;
    for p in 0..PANELS {
        let a = lo + p as f64 * width;
        let mid = a + 0.5 * width;
        let half = 0.5 * width;
        for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
            total += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}

/// Which shock regime applies: below the shock threshold (`λ₁`) or above it (`λ₂`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShockRegime {
    Below,
    Above,
}

/// The two shock rates. Assumption: `λ₁(t) ≤ λ₂(t)` for all `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockIntensity {
    below: RateFunction,
    above: RateFunction,
}

impl ShockIntensity {
    pub fn new(below: RateFunction, above: RateFunction) -> Result<Self> {
        let s = Self::new_unordered(below, above);
        if !s.is_ordered() {
            return Err(invalid(
                "shocks",
                "rate below the shock threshold must not exceed the rate above it",
            ));
        }
        Ok(s)
    }

    /// Skips the ordering check; perturbation studies may cross it and only warn.
    pub fn new_unordered(below: RateFunction, above: RateFunction) -> Self {
        Self { below, above }
    }

    pub fn constant(below: f64, above: f64) -> Result<Self> {
        Self::new(RateFunction::constant(below)?, RateFunction::constant(above)?)
    }

    pub fn is_ordered(&self) -> bool {
        self.below.dominated_by(&self.above)
    }

    pub fn below(&self) -> &RateFunction {
        &self.below
    }

    pub fn above(&self) -> &RateFunction {
        &self.above
    }

    pub fn regime(&self, regime: ShockRegime) -> &RateFunction {
        match regime {
            ShockRegime::Below => &self.below,
            ShockRegime::Above => &self.above,
        }
    }

    pub fn rate(&self, regime: ShockRegime, t: f64) -> f64 {
        self.regime(regime).rate(t)
    }

    /// Thinning majorant over `[0, horizon]`.
    pub fn majorant(&self, horizon: f64) -> f64 {
        self.below.supremum(horizon).max(self.above.supremum(horizon))
    }
}

// ---------------------------------------------------------------------------
// System
// ---------------------------------------------------------------------------

/// Degradation law, shock process, breakdown threshold `L` and shock-sensitivity
/// threshold `M_s`.
///
/// `M_s ≥ L` is accepted: the elevated rate is then never active before
/// degradation failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub degradation: GammaDegradation,
    pub shocks: ShockIntensity,
    breakdown_threshold: f64,
    shock_threshold: f64,
}

impl SystemModel {
    pub fn new(
        degradation: GammaDegradation,
        shocks: ShockIntensity,
        breakdown_threshold: f64,
        shock_threshold: f64,
    ) -> Result<Self> {
        Ok(Self {
            degradation,
            shocks,
            breakdown_threshold: require_positive("breakdown_threshold", breakdown_threshold)?,
            shock_threshold: require_positive("shock_threshold", shock_threshold)?,
        })
    }

    pub fn breakdown_threshold(&self) -> f64 {
        self.breakdown_threshold
    }

    pub fn shock_threshold(&self) -> f64 {
        self.shock_threshold
    }

    pub fn with_degradation(&self, degradation: GammaDegradation) -> Self {
        Self {
            degradation,
            ..*self
        }
    }

    pub fn with_shocks(&self, shocks: ShockIntensity) -> Self {
        Self { shocks, ..*self }
    }

    pub fn first_passage_cdf(&self, level: f64, t: f64) -> Result<f64> {
        self.degradation.first_passage_cdf(level, t)
    }

    /// `F̄_j(t) = exp(-∫₀ᵗ λ_j(u) du)`.
    pub fn shock_survival_baseline(&self, regime: ShockRegime, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(CbmError::Domain(format!(
                "shock survival time must be >= 0, got {t}"
            )));
        }
        Ok((-self.shocks.regime(regime).cumulative(t)).exp())
    }

    /// Survival of the shock time `Y` past `t`, given that degradation first
    /// exceeded the shock threshold at `v ≤ t`:
    /// `I(v, t) = F̄₁(v)/F̄₁(0) · F̄₂(t)/F̄₂(v)`.
    pub fn conditional_shock_survival(&self, v: f64, t: f64) -> Result<f64> {
        if !(v >= 0.0) || !(t >= v) {
            return Err(CbmError::Domain(format!(
                "conditional shock survival needs 0 <= v <= t, got v={v}, t={t}"
            )));
        }
        let below = self.shocks.below().cumulative(v);
        let above = self.shocks.above().cumulative(t) - self.shocks.above().cumulative(v);
        Ok((-(below + above)).exp())
    }
}

// ---------------------------------------------------------------------------
// Policy, costs, horizon
// ---------------------------------------------------------------------------

/// Periodic inspections every `T`; preventive replacement when an inspection
/// finds a working system with degradation at or above `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaintenancePolicy {
    inspection_period: f64,
    preventive_threshold: f64,
}

impl MaintenancePolicy {
    pub fn new(inspection_period: f64, preventive_threshold: f64) -> Result<Self> {
        Ok(Self {
            inspection_period: require_positive("inspection_period", inspection_period)?,
            preventive_threshold: require_positive("preventive_threshold", preventive_threshold)?,
        })
    }

    pub fn inspection_period(&self) -> f64 {
        self.inspection_period
    }

    pub fn preventive_threshold(&self) -> f64 {
        self.preventive_threshold
    }

    /// `M ≤ L` is required. `M = L` is the corrective-only policy: degradation
    /// at `L` means the system has already failed.
    pub fn check_against(&self, model: &SystemModel) -> Result<()> {
        if self.preventive_threshold > model.breakdown_threshold() {
            return Err(invalid(
                "preventive_threshold",
                format!(
                    "must not exceed the breakdown threshold {}, got {}",
                    model.breakdown_threshold(),
                    self.preventive_threshold
                ),
            ));
        }
        Ok(())
    }
}

/// Unit costs. Invariant: `C_c > C_p > C_I ≥ 0` and `C_d ≥ 0`, except for the
/// all-zero structure used in degenerate checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostStructure {
    pub corrective: f64,
    pub preventive: f64,
    pub inspection: f64,
    pub downtime_rate: f64,
}

impl CostStructure {
    pub fn new(corrective: f64, preventive: f64, inspection: f64, downtime_rate: f64) -> Result<Self> {
        require_nonnegative("inspection", inspection)?;
        require_nonnegative("downtime_rate", downtime_rate)?;
        if !(corrective.is_finite() && corrective > preventive) {
            return Err(invalid(
                "corrective",
                format!("must exceed the preventive cost {preventive}, got {corrective}"),
            ));
        }
        if !(preventive > inspection) {
            return Err(invalid(
                "preventive",
                format!("must exceed the inspection cost {inspection}, got {preventive}"),
            ));
        }
        Ok(Self {
            corrective,
            preventive,
            inspection,
            downtime_rate,
        })
    }

    pub fn zero() -> Self {
        Self {
            corrective: 0.0,
            preventive: 0.0,
            inspection: 0.0,
            downtime_rate: 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            corrective: self.corrective * factor,
            preventive: self.preventive * factor,
            inspection: self.inspection * factor,
            downtime_rate: self.downtime_rate * factor,
        }
    }
}

/// Finite operating life cycle `(0, t_f]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifeCycle {
    horizon: f64,
}

impl LifeCycle {
    pub fn new(horizon: f64) -> Result<Self> {
        Ok(Self {
            horizon: require_positive("horizon", horizon)?,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}
