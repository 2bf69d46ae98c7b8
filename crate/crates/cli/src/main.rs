//! `cbm`: optimize inspection/replacement policies, evaluate cost and
//! performance curves, and run parameter sensitivity tables.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cbm_core::export::{cost_curve_csv, matrix_csv, performance_csv, variation_csv, write_file};
use cbm_core::optimizer::{evaluate_grid, period_seed};
use cbm_core::sensitivity::{sensitivity, FixedAxis, PerturbationScheme, Target};
use cbm_core::simulator::{estimate_table_set, failure_law, strict_monte_carlo, BatchedTables};
use cbm_core::solver::{asymptotic_cost_rate, cost_curve, expected_cost, performance_curve};
use cbm_core::tables::{config_digest, digest_hex, load_tables, persist_tables};
use cbm_core::{EstimateTables, MaintenancePolicy, MeasureKind, PolicyGrid};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tracing::{info, warn};

use config::{Axis, Resolved, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "cbm", version, about = "Condition-based maintenance under degradation and shocks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration (schema 1); the built-in reference system otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo samples per table.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Path step for degradation increments.
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, env = "CBM_OUT_DIR", default_value = "cbm-out")]
    out_dir: PathBuf,
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid search over inspection period and preventive threshold.
    Optimize {
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Both)]
        objective: ObjectiveArg,
        /// Periods as `start:end:count` or `a,b,c`.
        #[arg(long = "grid-T")]
        grid_t: Option<String>,
        /// Thresholds as `start:end:count` or `a,b,c`.
        #[arg(long = "grid-M")]
        grid_m: Option<String>,
    },
    /// Cost, availability, reliability and interval-reliability curves for one policy.
    Curves {
        #[arg(long = "period", short = 'T')]
        period: Option<f64>,
        #[arg(long = "threshold", short = 'M')]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 5.0)]
        interval_length: f64,
        /// Also tabulate E[C(t_f)]/t_f over the threshold grid at this period.
        #[arg(long)]
        sweep: bool,
        /// Add strict chained Monte Carlo estimates for comparison.
        #[arg(long)]
        strict_mc: bool,
        /// Directory for cached estimate tables.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Relative variation of the optimal transient cost under parameter changes.
    Sensitivity {
        #[arg(long, value_enum)]
        target: TargetArg,
        /// `T=<period>` (optimize over thresholds) or `M=<threshold>`.
        #[arg(long, default_value = "T=10")]
        fixed: String,
        /// Variations in percent, comma separated.
        #[arg(long, default_value = "-10,-5,-1,0,1,5,10", allow_hyphen_values = true)]
        variations: String,
    },
    /// Mean breakdown and shock times of the unmaintained system.
    FailureLaw {
        #[arg(long, default_value_t = 2_000.0)]
        cap: f64,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ObjectiveArg {
    Asymptotic,
    Transient,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TargetArg {
    Gamma,
    Shocks,
}

fn init_tracing(global: &Global) {
    let level = match (global.quiet, global.verbose) {
        (true, _) => "error",
        (_, 0) => "warn",
        (_, 1) => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn effective_config(global: &Global) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::reference(),
    };
    if let Some(seed) = global.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(n) = global.samples {
        cfg.simulation.samples = n;
    }
    if let Some(d) = global.delta {
        cfg.simulation.path_step = Some(d);
    }
    if let Some(w) = global.workers {
        cfg.simulation.workers = Some(w);
    }
    Ok(cfg)
}

struct Output {
    dir: PathBuf,
    quiet: bool,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path, quiet: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            quiet,
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_file(&self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn report(&mut self, command: &str, cfg: &RunConfig, results: serde_json::Value) -> Result<()> {
        self.files.push("report.json".into());
        let doc = json!({
            "command": command,
            "config": cfg,
            "results": results,
            "files": self.files,
        });
        write_file(&self.dir.join("report.json"), &serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_tracing(&cli.global);
    let cfg = effective_config(&cli.global)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let resolved = cfg.resolve()?;
    let mut out = Output::new(&cli.global.out_dir, cli.global.quiet)?;
    match cli.command {
        Command::Optimize { objective, grid_t, grid_m } => optimize(&cfg, resolved, objective, grid_t, grid_m, &mut out),
        Command::Curves {
            period,
            threshold,
            interval_length,
            sweep,
            strict_mc,
            cache_dir,
        } => {
            let policy = MaintenancePolicy::new(
                period.unwrap_or(cfg.policy.period),
                threshold.unwrap_or(cfg.policy.threshold),
            )?;
            let opts = CurveOptions {
                interval_length,
                sweep,
                strict_mc,
                cache_dir,
            };
            curves(&cfg, &resolved, policy, &opts, &mut out)
        }
        Command::Sensitivity { target, fixed, variations } => run_sensitivity(&cfg, &resolved, target, &fixed, &variations, &mut out),
        Command::FailureLaw { cap } => run_failure_law(&cfg, &resolved, cap, &mut out),
        Command::ShowConfig => unreachable!(),
    }
}

fn optimize(
    cfg: &RunConfig,
    mut r: Resolved,
    objective: ObjectiveArg,
    grid_t: Option<String>,
    grid_m: Option<String>,
    out: &mut Output,
) -> Result<()> {
    if grid_t.is_some() || grid_m.is_some() {
        let periods = grid_t.map(|s| Axis::parse(&s)).transpose()?.map(|a| a.values()).unwrap_or(r.grid.periods);
        let thresholds = grid_m
            .map(|s| Axis::parse(&s))
            .transpose()?
            .map(|a| a.values())
            .unwrap_or(r.grid.thresholds);
        r.grid = PolicyGrid::new(periods, thresholds)?;
        r.grid.check_against(&r.model)?;
    }
    info!(cells = r.grid.periods.len() * r.grid.thresholds.len(), "evaluating grid");
    let eval = evaluate_grid(&r.model, &r.costs, &r.life, &r.grid, &r.simulation)?;
    let mut results = serde_json::Map::new();
    for (name, res, wanted) in [
        ("asymptotic", &eval.asymptotic, objective != ObjectiveArg::Transient),
        ("transient", &eval.transient, objective != ObjectiveArg::Asymptotic),
    ] {
        if !wanted {
            continue;
        }
        let (i, j) = res.argmin_index;
        out.write(&format!("{name}.csv"), &matrix_csv(res))?;
        out.say(format!(
            "{name}: T = {}, M = {}, rate = {:.4} (se {:.4})",
            res.argmin.0, res.argmin.1, res.minimum, res.stderr[i][j]
        ));
        if !res.warnings.is_empty() {
            warn!("{name}: {} cells flagged, see report.json", res.warnings.len());
        }
        results.insert(
            name.into(),
            json!({
                "period": res.argmin.0,
                "threshold": res.argmin.1,
                "rate": res.minimum,
                "stderr": res.stderr[i][j],
                "warnings": res.warnings,
            }),
        );
    }
    out.report("optimize", cfg, results.into())
}

struct CurveOptions {
    interval_length: f64,
    sweep: bool,
    strict_mc: bool,
    cache_dir: Option<PathBuf>,
}

/// Tables for one policy, through the cache when a directory is given. The
/// seed matches the optimizer's cell for the same period.
fn policy_tables(r: &Resolved, policy: &MaintenancePolicy, cache: Option<&Path>) -> Result<BatchedTables> {
    let period = policy.inspection_period();
    let threshold = policy.preventive_threshold();
    let seed = period_seed(r.simulation.master_seed, period);
    let digest = config_digest(&r.model, period, threshold, &r.life, &r.simulation, seed);
    let path = cache.map(|d| d.join(format!("{}.tbl", digest_hex(&digest))));
    if let Some(path) = &path {
        // cached tables carry no batches, so standard errors are unavailable
        if path.exists() {
            match load_tables(path, &digest) {
                Ok(t) => {
                    info!(path = %path.display(), "loaded cached tables");
                    return Ok(BatchedTables {
                        pooled: t.clone(),
                        batches: vec![t],
                    });
                }
                Err(e) => warn!("ignoring cache entry: {e}"),
            }
        }
    }
    let tables = estimate_table_set(&r.model, period, &[threshold], &r.life, &r.simulation, seed)?.remove(0);
    if let Some(path) = &path {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        persist_tables(&tables.pooled, path)?;
    }
    Ok(tables)
}

fn rate_at_horizon(t: &EstimateTables, r: &Resolved) -> cbm_core::Result<f64> {
    let h = r.life.horizon();
    expected_cost(t, &r.costs, h).map(|c| c / h)
}

fn curves(cfg: &RunConfig, r: &Resolved, policy: MaintenancePolicy, opts: &CurveOptions, out: &mut Output) -> Result<()> {
    let horizon = r.life.horizon();
    if opts.interval_length > horizon {
        bail!("interval length {} exceeds the life cycle {horizon}", opts.interval_length);
    }
    let tables = policy_tables(r, &policy, opts.cache_dir.as_deref())?;
    let t = &tables.pooled;
    let cost = cost_curve(t, &r.costs)?;
    out.write("cost.csv", &cost_curve_csv(&cost))?;
    let a = performance_curve(t, MeasureKind::Availability)?;
    let rel = performance_curve(t, MeasureKind::Reliability)?;
    let ir = performance_curve(t, MeasureKind::IntervalReliability { length: opts.interval_length })?;
    out.write("availability.csv", &performance_csv(&a))?;
    out.write("reliability.csv", &performance_csv(&rel))?;
    out.write("interval_reliability.csv", &performance_csv(&ir))?;

    let last = cost.times.len() - 1;
    let rate = cost.mean[last] / horizon;
    let asym = asymptotic_cost_rate(t, &r.costs).ok();
    out.say(format!(
        "T = {}, M = {}: E[C({horizon})]/{horizon} = {rate:.4}, S({horizon}) = {:.4}, min A = {:.4}, R({horizon}) = {:.4}",
        policy.inspection_period(),
        policy.preventive_threshold(),
        cost.std_dev[last],
        a.min(),
        rel.values.last().copied().unwrap_or(f64::NAN)
    ));
    let mut results = json!({
        "period": policy.inspection_period(),
        "threshold": policy.preventive_threshold(),
        "transient_rate": rate,
        "transient_rate_stderr": tables.standard_error(|t| rate_at_horizon(t, r)).ok(),
        "std_dev": cost.std_dev[last],
        "asymptotic_rate": asym,
        "availability_min": a.min(),
        "reliability_end": rel.values.last(),
        "interval_reliability_min": if ir.values.is_empty() { None } else { Some(ir.min()) },
        "censored_mass": t.censored_mass(),
    });

    if opts.strict_mc && !opts.sweep {
        let s = strict_monte_carlo(&r.model, &policy, &r.costs, &r.life, &r.simulation)?;
        out.say(format!(
            "strict Monte Carlo: rate {:.4} (se {:.4}), std {:.4}, renewals {:.4}",
            s.mean_rate(),
            s.stderr_cost / horizon,
            s.std_cost,
            s.mean_renewals
        ));
        results["strict"] = serde_json::to_value(&s)?;
    }

    if opts.sweep {
        let period = policy.inspection_period();
        let thresholds = &r.grid.thresholds;
        let seed = period_seed(r.simulation.master_seed, period);
        let set = estimate_table_set(&r.model, period, thresholds, &r.life, &r.simulation, seed)?;
        let mut csv = String::from(if opts.strict_mc {
            "M,recursive,stderr,strict,strict_stderr\n"
        } else {
            "M,recursive,stderr\n"
        });
        let mut rows = Vec::new();
        for (&m, cell) in thresholds.iter().zip(&set) {
            let rec = rate_at_horizon(&cell.pooled, r)?;
            let se = cell.standard_error(|t| rate_at_horizon(t, r))?;
            let mut row = json!({ "threshold": m, "recursive": rec, "stderr": se });
            csv.push_str(&format!("{m:.6},{rec:.6},{se:.6}"));
            if opts.strict_mc {
                let s = strict_monte_carlo(&r.model, &MaintenancePolicy::new(period, m)?, &r.costs, &r.life, &r.simulation)?;
                csv.push_str(&format!(",{:.6},{:.6}", s.mean_rate(), s.stderr_cost / horizon));
                row["strict"] = json!(s.mean_rate());
            }
            csv.push('\n');
            rows.push(row);
        }
        out.write("sweep.csv", &csv)?;
        results["sweep"] = json!(rows);
    }
    out.report("curves", cfg, results)
}

fn parse_fixed(text: &str) -> Result<FixedAxis> {
    let (key, value) = text.split_once('=').context("--fixed expects T=<period> or M=<threshold>")?;
    let value: f64 = value.trim().parse().with_context(|| format!("bad value in --fixed {text:?}"))?;
    match key.trim() {
        "T" => Ok(FixedAxis::Period(value)),
        "M" => Ok(FixedAxis::Threshold(value)),
        other => bail!("--fixed axis must be T or M, got {other:?}"),
    }
}

fn run_sensitivity(
    cfg: &RunConfig,
    r: &Resolved,
    target: TargetArg,
    fixed: &str,
    variations: &str,
    out: &mut Output,
) -> Result<()> {
    let fixed = parse_fixed(fixed)?;
    let free = match fixed {
        FixedAxis::Period(_) => r.grid.thresholds.clone(),
        FixedAxis::Threshold(_) => r.grid.periods.clone(),
    };
    let target = match target {
        TargetArg::Gamma => Target::Gamma,
        TargetArg::Shocks => Target::Shocks,
    };
    let variations = match Axis::parse(variations)? {
        Axis::Values(v) => v,
        Axis::Range { .. } => bail!("--variations expects a comma-separated list"),
    };
    let scheme = PerturbationScheme::new(variations, target)?;
    let table = sensitivity(&r.model, &r.costs, &r.life, fixed, &free, &scheme, &r.simulation)?;
    let name = match target {
        Target::Gamma => "sensitivity_gamma.csv",
        Target::Shocks => "sensitivity_shocks.csv",
    };
    out.write(name, &variation_csv(&table))?;
    let (i, j) = table.argmax();
    out.say(format!(
        "baseline optimum {:.4}; largest variation {:.4}% at ({}%, {}%)",
        table.baseline, table.relative[i][j], table.variations[i], table.variations[j]
    ));
    out.report("sensitivity", cfg, serde_json::to_value(&table)?)
}

fn run_failure_law(cfg: &RunConfig, r: &Resolved, cap: f64, out: &mut Output) -> Result<()> {
    let step = r.simulation.path_step.unwrap_or(0.1);
    let fl = failure_law(&r.model, step, cap, r.simulation.n_samples, r.simulation.master_seed, r.simulation.workers)?;
    out.say(format!(
        "E[sigma_L] = {:.4} (se {:.4}), E[Y] = {:.4} (se {:.4}), shock first in {:.4} of paths",
        fl.mean_breakdown_time, fl.stderr_breakdown_time, fl.mean_shock_time, fl.stderr_shock_time, fl.shock_first
    ));
    out.report("failure-law", cfg, serde_json::to_value(&fl)?)
}
