//! Plot-ready series: power and mFDR against the mean prior, and the
//! optimal sample size against q.

use std::path::Path;

use alpha_ledger_core::{
    init_wealth, solve_one_step, Binding, HypothesisSpec, Selection, SolverConfig, WealthState,
};
use serde::{Deserialize, Serialize};

use crate::config::{NRule, PolicySpec, PriorSpec, SimConfig};
use crate::error::{IoContext, Result};
use crate::simlab::run_simulation;

/// One (method, mean prior) point of the power/mFDR sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub method: String,
    pub mean_q: f64,
    pub power: f64,
    pub mfdr: f64,
    pub samples_per_test: f64,
    pub mean_tests: f64,
}

/// Beta(a, 100 − a) parameters of the sweep: mean prior 0.1, 0.2, ..., 0.9.
pub const BETA_GRID: [f64; 9] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];

/// The default methods of the sweep with an ample budget.
pub fn default_sweep_methods(base: &SimConfig) -> Vec<SimConfig> {
    let caero = |cap: NRule| SimConfig {
        policy: PolicySpec::Caero {
            solver: SolverConfig {
                init_rho: 1.0,
                ..SolverConfig::default()
            },
            horizon: 1,
            skip_above_n: None,
        },
        n_rule: cap,
        ..base.clone()
    };
    vec![
        SimConfig {
            policy: PolicySpec::from_name("ero:constant").expect("known policy"),
            n_rule: NRule::Fixed { n: 1.0 },
            ..base.clone()
        },
        SimConfig {
            policy: PolicySpec::from_name("ero:relative").expect("known policy"),
            n_rule: NRule::Fixed { n: 1.0 },
            ..base.clone()
        },
        caero(NRule::Cap { n: 10.0 }),
    ]
}

/// Runs every method at every Beta grid point.
pub fn power_mfdr_vs_q(methods: &[SimConfig]) -> Result<Vec<PowerPoint>> {
    let mut out = Vec::with_capacity(methods.len() * BETA_GRID.len());
    for m in methods {
        for &a in &BETA_GRID {
            let cfg = SimConfig {
                prior: PriorSpec::Beta { a },
                ..m.clone()
            };
            let r = run_simulation(&cfg)?;
            out.push(PowerPoint {
                method: m.policy.label(),
                mean_q: cfg.prior.mean(),
                power: r.power,
                mfdr: r.mfdr,
                samples_per_test: r.mean_samples_per_test,
                mean_tests: r.mean_tests,
            });
        }
    }
    Ok(out)
}

/// The optimal first-test sample size at one prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalNPoint {
    pub q: f64,
    pub n: f64,
    pub phi: f64,
    pub alpha_j: f64,
    pub rho: f64,
    pub binding: Option<Binding>,
    pub skipped: bool,
}

/// Priors of the optimal-n series.
pub const OPTIMAL_N_GRID: [f64; 8] = [0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99];

/// Solves the first test at each q with the whole α-wealth as the ante cap
/// and an unlimited budget.
pub fn optimal_n_vs_q(qs: &[f64], theta_bar: f64, sigma: f64) -> Result<Vec<OptimalNPoint>> {
    let wealth: WealthState = init_wealth(0.05, 0.95, 1e12)?;
    let cfg = SolverConfig {
        ante_fraction: 1.0,
        init_rho: 1.0,
        selection: Selection::Intersection,
        n_cap: None,
        ..SolverConfig::default()
    };
    qs.iter()
        .map(|&q| {
            let spec = HypothesisSpec::new(q, theta_bar, sigma, 1.0)?;
            let s = solve_one_step(&spec, &wealth, &cfg)?;
            Ok(OptimalNPoint {
                q,
                n: s.params.n,
                phi: s.params.phi,
                alpha_j: s.params.alpha_j,
                rho: s.params.rho,
                binding: s.binding,
                skipped: s.skipped,
            })
        })
        .collect()
}

/// Writes any serializable rows as CSV with a header.
pub fn write_series<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().at(path)?;
    Ok(())
}
