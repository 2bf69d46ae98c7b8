//! Monte Carlo estimate tables feeding every renewal recursion, and their
//! on-disk cache.
//!
//! Tables are cost-free: they hold replacement probabilities per inspection
//! epoch, joint downtime moments for corrective replacements, and the
//! non-renewal terms on the evaluation lattice. Costs enter only in the
//! solver, so one table set serves any cost structure.
//!
//! Cache layout (little-endian): magic `CBMTABLE`, format version `u32`, the
//! 32-byte configuration digest, then scalars and length-prefixed arrays.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CbmError, Result};
use crate::lattice::Lattice;
use crate::model::{CostStructure, LifeCycle, SystemModel};
use crate::simulator::SimulationConfig;

const MAGIC: &[u8; 8] = b"CBMTABLE";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTables {
    pub inspection_period: f64,
    pub preventive_threshold: f64,
    pub horizon: f64,
    pub lattice: Lattice,
    /// Replacement counts at epoch `kT`, index `k - 1`.
    pub preventive_count: Vec<u64>,
    pub corrective_count: Vec<u64>,
    pub p_preventive: Vec<f64>,
    pub p_corrective: Vec<f64>,
    /// `E[W·1{corrective at kT}]` and `E[W²·1{corrective at kT}]`, `W = kT - D`.
    pub downtime_corrective: Vec<f64>,
    pub downtime_corrective_sq: Vec<f64>,
    /// `P[working at t, no replacement by ⌊t/T⌋T]`, per flat lattice index.
    pub alive_no_replacement: Vec<f64>,
    /// `E[W(⌊t/T⌋T, t)·1{no replacement by ⌊t/T⌋T}]` and its square.
    pub residual_downtime: Vec<f64>,
    pub residual_downtime_sq: Vec<f64>,
    pub sample_count: u64,
    pub censored_count: u64,
    pub seed: u64,
    pub digest: [u8; 32],
}

impl EstimateTables {
    /// Number of inspection epochs covered, `⌊t_f/T⌋`.
    pub fn num_epochs(&self) -> usize {
        self.p_preventive.len()
    }

    /// `P[R₁ = kT]` for `k ≥ 1`; zero beyond the table.
    pub fn replacement_probability(&self, k: usize) -> f64 {
        if k == 0 || k > self.num_epochs() {
            return 0.0;
        }
        self.p_preventive[k - 1] + self.p_corrective[k - 1]
    }

    /// Mass of first cycles that end in no replacement within the horizon.
    pub fn censored_mass(&self) -> f64 {
        1.0 - (1..=self.num_epochs())
            .map(|k| self.replacement_probability(k))
            .sum::<f64>()
    }

    pub fn alive(&self, t: f64) -> Result<f64> {
        Ok(self.alive_no_replacement[self.lattice.locate_flat(t)?])
    }

    pub fn residual(&self, t: f64) -> Result<f64> {
        Ok(self.residual_downtime[self.lattice.locate_flat(t)?])
    }

    /// Expected cost of a single stretch `[0, t]` with `t < T`:
    /// `E[C_d·(t - D)⁺]`.
    pub fn base_cost(&self, costs: &CostStructure, t: f64) -> Result<f64> {
        self.require_base_case(t)?;
        Ok(costs.downtime_rate * self.residual(t)?)
    }

    /// `E[(C_d·(t - D)⁺)²]` for `t < T`.
    pub fn base_cost_sq(&self, costs: &CostStructure, t: f64) -> Result<f64> {
        self.require_base_case(t)?;
        let i = self.lattice.locate_flat(t)?;
        Ok(costs.downtime_rate.powi(2) * self.residual_downtime_sq[i])
    }

    fn require_base_case(&self, t: f64) -> Result<()> {
        if t < self.inspection_period {
            Ok(())
        } else {
            Err(CbmError::Domain(format!(
                "base case needs t < T = {}, got {t}",
                self.inspection_period
            )))
        }
    }

    /// Drops epochs beyond `k_max`; their mass moves to the censored bucket.
    pub fn truncated(&self, k_max: usize) -> Self {
        let mut out = self.clone();
        let k = k_max.min(self.num_epochs());
        let dropped: u64 = self.preventive_count[k..].iter().sum::<u64>()
            + self.corrective_count[k..].iter().sum::<u64>();
        for v in [
            &mut out.p_preventive,
            &mut out.p_corrective,
            &mut out.downtime_corrective,
            &mut out.downtime_corrective_sq,
        ] {
            v.truncate(k);
        }
        out.preventive_count.truncate(k);
        out.corrective_count.truncate(k);
        out.censored_count += dropped;
        out
    }
}

/// SHA-256 over a canonical rendering of everything that determines a table.
/// Worker count is excluded: it never changes the result.
pub fn config_digest(
    model: &SystemModel,
    period: f64,
    threshold: f64,
    life: &LifeCycle,
    cfg: &SimulationConfig,
    seed: u64,
) -> [u8; 32] {
    let canonical = format!(
        "v{FORMAT_VERSION}|{model:?}|T={period:?}|M={threshold:?}|tf={:?}|n={}|delta={:?}|q={}|extra={:?}|batches={}|substeps={}|seed={seed}",
        life.horizon(),
        cfg.n_samples,
        cfg.path_step,
        cfg.lattice_divisions,
        cfg.eval_times,
        cfg.batches,
        cfg.substeps,
    );
    Sha256::digest(canonical.as_bytes()).into()
}

pub fn digest_hex(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn persist_tables(tables: &EstimateTables, path: &Path) -> Result<()> {
    let io = |source| CbmError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&tables.digest);
    for v in [
        tables.inspection_period,
        tables.preventive_threshold,
        tables.horizon,
    ] {
        put_f64(&mut buf, v);
    }
    for v in [tables.sample_count, tables.censored_count, tables.seed] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    put_f64s(&mut buf, tables.lattice.phases());
    put_u64s(&mut buf, &tables.preventive_count);
    put_u64s(&mut buf, &tables.corrective_count);
    for arr in [
        &tables.p_preventive,
        &tables.p_corrective,
        &tables.downtime_corrective,
        &tables.downtime_corrective_sq,
        &tables.alive_no_replacement,
        &tables.residual_downtime,
        &tables.residual_downtime_sq,
    ] {
        put_f64s(&mut buf, arr);
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

/// Loads tables and checks them against the digest the caller expects.
pub fn load_tables(path: &Path, expected_digest: &[u8; 32]) -> Result<EstimateTables> {
    let tables = read_tables(path)?;
    if &tables.digest != expected_digest {
        return Err(CbmError::CacheInvalid {
            path: path.to_path_buf(),
            reason: format!(
                "digest {} does not match expected {}",
                digest_hex(&tables.digest),
                digest_hex(expected_digest)
            ),
        });
    }
    Ok(tables)
}

/// Loads tables without a digest check.
pub fn read_tables(path: &Path) -> Result<EstimateTables> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|source| CbmError::Io {
        path: path.to_path_buf(),
        source,
    })?)
    .read_to_end(&mut bytes)
    .map_err(|source| CbmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let invalid = |reason: &str| CbmError::CacheInvalid {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = Cursor { bytes: &bytes, pos: 0 };
    if r.take(8).ok_or_else(|| invalid("truncated header"))? != MAGIC {
        return Err(invalid("bad magic"));
    }
    let version = r.u32().ok_or_else(|| invalid("truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(invalid(&format!("unsupported format version {version}")));
    }
    let parse = |r: &mut Cursor| -> Option<EstimateTables> {
        let digest: [u8; 32] = r.take(32)?.try_into().ok()?;
        let inspection_period = r.f64()?;
        let preventive_threshold = r.f64()?;
        let horizon = r.f64()?;
        let sample_count = r.u64()?;
        let censored_count = r.u64()?;
        let seed = r.u64()?;
        let phases = r.f64s()?;
        let preventive_count = r.u64s()?;
        let corrective_count = r.u64s()?;
        let p_preventive = r.f64s()?;
        let p_corrective = r.f64s()?;
        let downtime_corrective = r.f64s()?;
        let downtime_corrective_sq = r.f64s()?;
        let alive_no_replacement = r.f64s()?;
        let residual_downtime = r.f64s()?;
        let residual_downtime_sq = r.f64s()?;
        let lattice = Lattice::from_phases(inspection_period, horizon, phases).ok()?;
        Some(EstimateTables {
            inspection_period,
            preventive_threshold,
            horizon,
            lattice,
            preventive_count,
            corrective_count,
            p_preventive,
            p_corrective,
            downtime_corrective,
            downtime_corrective_sq,
            alive_no_replacement,
            residual_downtime,
            residual_downtime_sq,
            sample_count,
            censored_count,
            seed,
            digest,
        })
    };
    let tables = parse(&mut r).ok_or_else(|| invalid("truncated or malformed body"))?;
    if r.pos != bytes.len() {
        return Err(invalid("trailing bytes"));
    }
    let k = tables.p_preventive.len();
    let pts = tables.lattice.len();
    let consistent = [
        tables.preventive_count.len(),
        tables.corrective_count.len(),
        tables.p_corrective.len(),
        tables.downtime_corrective.len(),
        tables.downtime_corrective_sq.len(),
    ]
    .iter()
    .all(|&l| l == k)
        && [
            tables.alive_no_replacement.len(),
            tables.residual_downtime.len(),
            tables.residual_downtime_sq.len(),
        ]
        .iter()
        .all(|&l| l == pts);
    if !consistent {
        return Err(invalid("array lengths disagree with the lattice"));
    }
    Ok(tables)
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    buf.extend_from_slice(&(vs.len() as u64).to_le_bytes());
    for &v in vs {
        put_f64(buf, v);
    }
}

fn put_u64s(buf: &mut Vec<u8>, vs: &[u64]) {
    buf.extend_from_slice(&(vs.len() as u64).to_le_bytes());
    for &v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn len(&mut self) -> Option<usize> {
        let n = usize::try_from(self.u64()?).ok()?;
        // each element is 8 bytes; reject lengths the buffer cannot hold
        (n <= (self.bytes.len() - self.pos) / 8).then_some(n)
    }

    fn f64s(&mut self) -> Option<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn u64s(&mut self) -> Option<Vec<u64>> {
        let n = self.len()?;
        (0..n).map(|_| self.u64()).collect()
    }
}
