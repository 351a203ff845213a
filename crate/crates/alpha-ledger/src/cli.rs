//! Command-line entry points. Every batch command writes its outputs plus a
//! `manifest.json` and the fully resolved configuration into `--out`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use alpha_ledger_core::{
    brute_force_oracle, init_wealth, solve_finite_horizon, solve_one_step, HorizonProblem,
    HypothesisSpec, SolverConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::{NRule, PolicySpec, PriorSpec, SimConfig};
use crate::error::{Error, IoContext, Result};
use crate::service::{http, SessionStore};
use crate::simlab::dataset::{self, DatasetConfig, StandInConfig};
use crate::simlab::{curves, run_simulation, tables};

#[derive(Debug, Parser)]
#[command(name = "alpha-ledger", version, about = "Cost-aware α-investing: simulations, solver and session service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation configuration.
    Sim(Common),
    /// Reproduce one of the comparison tables.
    Table {
        #[arg(value_enum)]
        id: TableArg,
        #[command(flatten)]
        common: Common,
    },
    /// Solve for the next test's parameters and print them as JSON.
    Solve(SolveArgs),
    /// Compare cost-aware and fixed-n ERO on a dataset.
    Dataset(DatasetArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Emit plot-ready series.
    Curves {
        #[arg(value_enum)]
        kind: CurveKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    T1,
    T2,
    T4,
    T5,
    T6,
}

impl From<TableArg> for tables::TableId {
    fn from(t: TableArg) -> Self {
        match t {
            TableArg::T1 => tables::TableId::T1,
            TableArg::T2 => tables::TableId::T2,
            TableArg::T4 => tables::TableId::T4,
            TableArg::T5 => tables::TableId::T5,
            TableArg::T6 => tables::TableId::T6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum CurveKind {
    PowerMfdrVsQ,
    OptimalNVsQ,
}

/// Flags shared by the batch commands.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Common {
    /// JSON file mirroring the configuration's field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iterations (permutations for `dataset`).
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Decision rule, e.g. `ero:relative` or `caero`.
    #[arg(long)]
    pub policy: Option<String>,
    /// Fixed prior null probability.
    #[arg(long)]
    pub q: Option<f64>,
    /// Sample-size cap (fixed n for fixed-n rules).
    #[arg(long = "n-cap")]
    pub n_cap: Option<f64>,
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Extra `key=value` overrides; dotted keys reach nested fields and
    /// values are parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// Solver configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Prior null probability; repeat for later steps of a horizon.
    #[arg(long, required = true, num_args = 1..)]
    pub q: Vec<f64>,
    #[arg(long = "theta-bar", default_value_t = 2.0)]
    pub theta_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cost: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.95)]
    pub eta: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub budget: f64,
    #[arg(long = "n-cap")]
    pub n_cap: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    /// Also run the brute-force oracle and report the agreement.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DatasetArgs {
    /// CSV with one row per hypothesis: id, then samples.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Use the built-in synthetic stand-in instead of a file.
    #[arg(long)]
    pub synthetic: bool,
    /// Raw-scale standard deviation used to set θ̄ and x0.
    #[arg(long = "sigma-hat")]
    pub sigma_hat: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    /// Session directory; defaults to $ALPHA_LEDGER_DATA_DIR, then ./data.
    #[arg(long = "data-dir")]
    pub data_dir: Option<PathBuf>,
}

/// Record of how a run was produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub overrides: Vec<String>,
    pub version: &'static str,
    pub args: Vec<String>,
}

/// Sets `key` (dotted path) in `root` to `raw`, parsed as JSON if possible.
pub fn set_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn apply_overrides(root: &mut Value, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        set_override(root, k.trim(), v.trim())?;
    }
    Ok(())
}

/// Defaults, then the config file, then `--set` overrides.
fn layered<T: Serialize + DeserializeOwned>(
    defaults: &T,
    config: Option<&Path>,
    overrides: &[String],
) -> Result<T> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).at(path)?;
        let file: Value = serde_json::from_str(&text)?;
        merge(&mut v, file);
    }
    apply_overrides(&mut v, overrides)?;
    Ok(serde_json::from_value(v)?)
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    // Tagged enums are replaced wholesale so variant fields never mix.
                    Some(slot) if slot.is_object() && !is_tagged(&v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn is_tagged(v: &Value) -> bool {
    v.get("kind").is_some() || v.get("name").is_some()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").at(path)
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).at(out)
}

fn write_manifest<T: Serialize>(
    command: &'static str,
    common: &Common,
    resolved: &T,
) -> Result<()> {
    prepare_out(&common.out)?;
    let manifest = RunManifest {
        command,
        config_path: common.config.clone(),
        out_dir: common.out.clone(),
        overrides: common.overrides.clone(),
        version: env!("CARGO_PKG_VERSION"),
        args: std::env::args().collect(),
    };
    write_json(&common.out.join("manifest.json"), &manifest)?;
    write_json(&common.out.join("resolved_config.json"), resolved)
}

/// Resolves a [`SimConfig`] from defaults, file, shorthand flags and overrides.
pub fn resolve_sim_config(common: &Common) -> Result<SimConfig> {
    let mut cfg: SimConfig = layered(&SimConfig::default(), common.config.as_deref(), &[])?;
    if let Some(p) = &common.policy {
        cfg.policy = PolicySpec::from_name(p)?;
    }
    if let Some(s) = common.seed {
        cfg.seed_base = s;
    }
    if let Some(n) = common.iters {
        cfg.n_iter = n;
    }
    if let Some(q) = common.q {
        cfg.prior = PriorSpec::Fixed { q };
    }
    if let Some(b) = common.budget {
        cfg.budget = b;
    }
    if let Some(n) = common.n_cap {
        cfg.n_rule = match cfg.policy {
            PolicySpec::Caero { .. } => NRule::Cap { n },
            _ => NRule::Fixed { n },
        };
    }
    if let Some(h) = common.horizon {
        match &mut cfg.policy {
            PolicySpec::Caero { horizon, .. } => *horizon = h,
            _ => return Err(Error::Config("--horizon applies to the caero policy only".into())),
        }
    }
    let mut v = serde_json::to_value(&cfg)?;
    apply_overrides(&mut v, &common.overrides)?;
    let cfg: SimConfig = serde_json::from_value(v)?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sim(common: &Common) -> Result<()> {
    let cfg = resolve_sim_config(common)?;
    write_manifest("sim", common, &cfg)?;
    let report = run_simulation(&cfg)?;
    print!("{}", tables::render(std::slice::from_ref(&report)));
    let records = common.out.join("records.csv");
    curves::write_series(&report.records, &records)?;
    write_json(&common.out.join("report.json"), &report)
}

fn cmd_table(id: TableArg, common: &Common) -> Result<()> {
    let mut opts = tables::TableOptions::default();
    if let Some(n) = common.iters {
        opts.n_iter = n;
    }
    if let Some(s) = common.seed {
        opts.seed_base = s;
    }
    if let Some(h) = common.horizon {
        opts.horizons = (1..=h).collect();
    }
    let opts: tables::TableOptions = layered(&opts, common.config.as_deref(), &common.overrides)?;
    write_manifest("table", common, &opts)?;
    let mut reports = tables::run_table(id.into(), &opts)?;
    let text = tables::render(&reports);
    print!("{text}");
    std::fs::write(common.out.join("table.txt"), &text).at(common.out.join("table.txt"))?;
    tables::write_csv(&reports, &common.out.join("table.csv"))?;
    for r in &mut reports {
        r.records.clear();
    }
    write_json(&common.out.join("reports.json"), &reports)
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let mut cfg: SolverConfig =
        layered(&SolverConfig::default(), args.config.as_deref(), &args.overrides)?;
    if args.n_cap.is_some() {
        cfg.n_cap = args.n_cap;
    }
    cfg.validate()?;
    let wealth = init_wealth(args.alpha, args.eta, args.budget)?;
    let specs = args
        .q
        .iter()
        .map(|&q| HypothesisSpec::new(q, args.theta_bar, args.sigma, args.cost))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let out = if args.horizon > 1 {
        if specs.len() < args.horizon {
            return Err(Error::Config(format!(
                "--horizon {} needs {} --q values",
                args.horizon, args.horizon
            )));
        }
        let problem = HorizonProblem {
            specs: specs[..args.horizon].to_vec(),
            wealth,
        };
        serde_json::to_value(solve_finite_horizon(&problem, &cfg)?)?
    } else {
        let sol = solve_one_step(&specs[0], &wealth, &cfg)?;
        if sol.skipped {
            println!("{}", serde_json::to_string_pretty(&sol)?);
            return Err(Error::Validation(
                sol.diagnostic.unwrap_or_else(|| "solver skipped".into()),
            ));
        }
        let mut v = serde_json::to_value(&sol)?;
        v["executed"] = serde_json::to_value(sol.execute(&specs[0], args.alpha, args.budget))?;
        if args.oracle {
            let o = brute_force_oracle(&specs[0], &wealth, &cfg, 2000)?;
            v["oracle_objective"] = o.objective.into();
            v["oracle_relative_gap"] =
                ((sol.objective - o.objective) / o.objective.abs().max(f64::MIN_POSITIVE)).into();
        }
        v
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_dataset(args: &DatasetArgs) -> Result<()> {
    let common = &args.common;
    let mut base = DatasetConfig::default();
    if let Some(s) = args.sigma_hat {
        base = base.with_raw_scale(s);
    } else if args.synthetic {
        base = base.with_raw_scale(STAND_IN_SIGMA_HAT);
    }
    let mut cfg: DatasetConfig = layered(&base, common.config.as_deref(), &common.overrides)?;
    if let Some(p) = &args.data {
        cfg.data_path = p.clone();
    }
    if let Some(n) = common.iters {
        cfg.permutations = n;
    }
    if let Some(s) = common.seed {
        cfg.seed_base = s;
    }
    if let Some(b) = common.budget {
        cfg.budget = b;
    }
    if let Some(n) = common.n_cap {
        cfg.n_cap_exec = n as usize;
    }
    cfg.validate()?;
    let data = if args.synthetic {
        dataset::synthetic_dataset(&StandInConfig {
            seed: cfg.seed_base,
            ..StandInConfig::default()
        })
    } else if cfg.data_path.as_os_str().is_empty() {
        return Err(Error::Config("give --data PATH or --synthetic".into()));
    } else {
        dataset::read_dataset_csv(&cfg.data_path)?
    };
    write_manifest("dataset", common, &cfg)?;
    let mut reports = dataset::compare_methods(&cfg, &data)?;
    for r in &reports {
        println!(
            "{:<6} tests {:>7.2}  rejections {:>6.2}  spent {:>9.1}  samples/test {:>6.1}",
            r.label, r.mean_tests, r.mean_rejections, r.mean_spent, r.mean_samples_per_test
        );
    }
    for r in &mut reports {
        r.records.clear();
    }
    write_json(&common.out.join("reports.json"), &reports)
}

/// Raw-scale spread assumed by the synthetic stand-in (θ̄ ≈ 1, x0 ≈ 2).
pub const STAND_IN_SIGMA_HAT: f64 = 0.3;

fn cmd_curves(kind: CurveKind, common: &Common) -> Result<()> {
    match kind {
        CurveKind::PowerMfdrVsQ => {
            let mut base = SimConfig {
                n_iter: 200,
                budget: 1e8,
                ..SimConfig::default()
            };
            if let Some(n) = common.iters {
                base.n_iter = n;
            }
            if let Some(s) = common.seed {
                base.seed_base = s;
            }
            if let Some(b) = common.budget {
                base.budget = b;
            }
            let base: SimConfig = layered(&base, common.config.as_deref(), &common.overrides)?;
            write_manifest("curves", common, &base)?;
            let pts = curves::power_mfdr_vs_q(&curves::default_sweep_methods(&base))?;
            curves::write_series(&pts, &common.out.join("power_mfdr_vs_q.csv"))?;
            println!("{} points written", pts.len());
        }
        CurveKind::OptimalNVsQ => {
            write_manifest("curves", common, &curves::OPTIMAL_N_GRID)?;
            let pts = curves::optimal_n_vs_q(&curves::OPTIMAL_N_GRID, 2.0, 1.0)?;
            for p in &pts {
                println!("q {:>5.2}  n {:>9.3}", p.q, p.n);
            }
            curves::write_series(&pts, &common.out.join("optimal_n_vs_q.csv"))?;
        }
    }
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let store = match &args.data_dir {
        Some(d) => SessionStore::open(d)?,
        None => SessionStore::from_env("data")?,
    };
    eprintln!(
        "serving on http://{} (sessions in {})",
        args.addr,
        store.dir().display()
    );
    let rt = tokio::runtime::Runtime::new().map_err(|source| Error::Io {
        path: "<runtime>".into(),
        source,
    })?;
    rt.block_on(http::serve(Arc::new(store), args.addr))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Sim(c) => cmd_sim(c),
        Command::Table { id, common } => cmd_table(*id, common),
        Command::Solve(a) => cmd_solve(a),
        Command::Dataset(a) => cmd_dataset(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Curves { kind, common } => cmd_curves(*kind, common),
    }
}
