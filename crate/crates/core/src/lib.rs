//! Condition-based maintenance for a system that fails either by gamma-process
//! degradation or by a random shock whose intensity rises once degradation
//! passes a sensitivity threshold.
//!
//! The pipeline is: [`simulator`] draws first renewal cycles and reduces them
//! into [`tables::EstimateTables`]; [`solver`] runs the Markov renewal
//! recursions on those tables (transient cost and its second moment,
//! availability, reliability, interval reliability, long-run cost rate);
//! [`optimizer`] and [`sensitivity`] grid-search policies on top.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod export;
pub mod lattice;
pub mod model;
pub mod optimizer;
pub mod sampling;
pub mod sensitivity;
pub mod simulator;
pub mod solver;
pub mod special;
pub mod tables;

pub use error::{CbmError, Result};
pub use lattice::Lattice;
pub use model::{
    CostStructure, GammaDegradation, LifeCycle, MaintenancePolicy, RateFunction, ShockIntensity,
    ShockRegime, SystemModel,
};
pub use optimizer::{Objective, OptimizationResult, PolicyGrid};
pub use simulator::{ReplacementKind, ReplacementSample, SimulationConfig};
pub use solver::{CostCurve, MeasureKind, PerformanceCurve};
pub use tables::EstimateTables;
