//! Plot-ready CSV renderings of curves, objective matrices and variation
//! tables. Curves and matrices use 6 fractional digits, variation tables 4.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CbmError, Result};
use crate::optimizer::OptimizationResult;
use crate::sensitivity::VariationTable;
use crate::solver::{CostCurve, PerformanceCurve};

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn cost_curve_csv(curve: &CostCurve) -> String {
    let mut out = String::from("t,mean,second_moment,stddev,rate\n");
    for i in 0..curve.times.len() {
        let rate = if curve.rate[i].is_nan() { String::new() } else { f6(curve.rate[i]) };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f6(curve.times[i]),
            f6(curve.mean[i]),
            f6(curve.second_moment[i]),
            f6(curve.std_dev[i]),
            rate
        );
    }
    out
}

pub fn performance_csv(curve: &PerformanceCurve) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in curve.times.iter().zip(&curve.values) {
        let _ = writeln!(out, "{},{}", f6(*t), f6(*v));
    }
    out
}

/// Rows `(T, M, value, stderr)` in grid order.
pub fn matrix_csv(result: &OptimizationResult) -> String {
    let mut out = String::from("T,M,value,stderr\n");
    for (i, &t) in result.periods.iter().enumerate() {
        for (j, &m) in result.thresholds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                f6(t),
                f6(m),
                f6(result.values[i][j]),
                f6(result.stderr[i][j])
            );
        }
    }
    out
}

/// Square table: first column the row variation, header the column variations.
pub fn variation_csv(table: &VariationTable) -> String {
    let mut out = String::from("row\\col");
    for v in &table.variations {
        let _ = write!(out, ",{v}%");
    }
    out.push('\n');
    for (i, v) in table.variations.iter().enumerate() {
        let _ = write!(out, "{v}%");
        for x in &table.relative[i] {
            let _ = write!(out, ",{x:.4}");
        }
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CbmError::Io {
        path: path.to_path_buf(),
        source,
    })
}
