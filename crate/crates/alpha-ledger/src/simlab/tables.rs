//! Configurations of the synthetic comparison tables and their rendering.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use alpha_ledger_core::{SchemeKind, Selection, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::config::{table_solver, NRule, PolicySpec, PriorSpec, SimConfig};
use crate::error::{Error, IoContext, Result};
use crate::simlab::{run_simulation, AggregateReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableId {
    /// Method comparison at q = 0.9.
    T1,
    /// Planning-horizon sweep with Beta(90, 10) priors.
    T2,
    /// Method comparison at q = 0.1.
    T4,
    /// Misspecified prior: truth at q = 0.9, decisions from other values.
    T5,
    /// Fixed n = 10 for the fixed-sample rules.
    T6,
}

impl FromStr for TableId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t1" => Ok(TableId::T1),
            "t2" => Ok(TableId::T2),
            "t4" => Ok(TableId::T4),
            "t5" => Ok(TableId::T5),
            "t6" => Ok(TableId::T6),
            other => Err(Error::Config(format!(
                "unknown table `{other}` (expected t1, t2, t4, t5 or t6)"
            ))),
        }
    }
}

/// Knobs shared by every row of a table run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub n_iter: usize,
    pub seed_base: u64,
    /// Horizons for the sweep table.
    pub horizons: Vec<usize>,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            n_iter: 500,
            seed_base: 0,
            horizons: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub config: SimConfig,
}

/// The sensitivity table's specified priors.
pub const SPECIFIED_Q: [f64; 6] = [0.5, 0.7, 0.8, 0.85, 0.89, 0.9];

fn scheme_rows(base: &SimConfig, n: f64) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for (scheme, name) in [
        (SchemeKind::Constant, "constant"),
        (SchemeKind::Relative, "relative"),
    ] {
        for (policy, method) in [
            (PolicySpec::AlphaSpending { scheme }, "alpha-spending"),
            (PolicySpec::AlphaInvesting { scheme }, "alpha-investing"),
            (PolicySpec::Ero { scheme }, "ERO investing"),
        ] {
            rows.push(TableRow {
                label: format!("{name} / {method}"),
                config: SimConfig {
                    policy,
                    n_rule: NRule::Fixed { n },
                    ..base.clone()
                },
            });
        }
    }
    rows
}

fn caero_row(base: &SimConfig, label: &str, a: f64, init_rho: f64, n_rule: NRule) -> TableRow {
    TableRow {
        label: format!("cost-aware / {label}"),
        config: SimConfig {
            policy: PolicySpec::Caero {
                solver: table_solver(a, init_rho),
                horizon: 1,
                skip_above_n: None,
            },
            n_rule,
            ..base.clone()
        },
    }
}

/// Row configurations of `id`.
pub fn table_rows(id: TableId, opts: &TableOptions) -> Vec<TableRow> {
    let base = SimConfig {
        n_iter: opts.n_iter,
        seed_base: opts.seed_base,
        ..SimConfig::default()
    };
    match id {
        TableId::T1 => {
            let mut rows = scheme_rows(&base, 1.0);
            rows.push(caero_row(&base, "ERO n = 1", 0.1, 0.9, NRule::Cap { n: 1.0 }));
            rows.push(caero_row(&base, "ERO n <= 10", 0.1, 0.9, NRule::Cap { n: 10.0 }));
            rows.push(caero_row(&base, "ERO n <= 100", 0.1, 0.9, NRule::Cap { n: 100.0 }));
            rows.push(caero_row(&base, "ERO n*", 0.1, 0.9, NRule::Unbounded));
            rows
        }
        TableId::T4 => {
            let base = SimConfig {
                prior: PriorSpec::Fixed { q: 0.1 },
                ..base
            };
            let mut rows = scheme_rows(&base, 1.0);
            rows.push(caero_row(&base, "ERO n = 1", 1.0, 1.0, NRule::Cap { n: 1.0 }));
            rows.push(caero_row(&base, "ERO n <= 10", 1.0, 1.0, NRule::Cap { n: 10.0 }));
            rows.push(caero_row(&base, "ERO n*", 1.0, 1.0, NRule::Unbounded));
            rows
        }
        TableId::T5 => SPECIFIED_Q
            .iter()
            .map(|&q| {
                let mut row = caero_row(&base, "ERO n = 1", 1.0, 0.9, NRule::Cap { n: 1.0 });
                row.label = format!("specified q = {q:.2}");
                row.config.specified_q_override = Some(q);
                row
            })
            .collect(),
        TableId::T6 => scheme_rows(&base, 10.0),
        TableId::T2 => {
            let base = SimConfig {
                prior: PriorSpec::Beta { a: 90.0 },
                budget: 1e8,
                ..base
            };
            opts.horizons
                .iter()
                .map(|&h| TableRow {
                    label: format!("horizon {h}"),
                    config: SimConfig {
                        policy: PolicySpec::Caero {
                            solver: SolverConfig {
                                ante_fraction: 1.0,
                                init_rho: 1.0,
                                selection: Selection::Intersection,
                                ..SolverConfig::default()
                            },
                            horizon: h,
                            skip_above_n: None,
                        },
                        n_rule: NRule::Cap { n: 10.0 },
                        ..base.clone()
                    },
                })
                .collect()
        }
    }
}

/// Runs every row of `id`.
pub fn run_table(id: TableId, opts: &TableOptions) -> Result<Vec<AggregateReport>> {
    table_rows(id, opts)
        .into_iter()
        .map(|row| {
            let mut r = run_simulation(&row.config)?;
            r.label = row.label;
            Ok(r)
        })
        .collect()
}

/// Plain-text table in the column order Tests, True Rejects, False Rejects, mFDR.
pub fn render(reports: &[AggregateReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>12}  {:>13}  {:>6}",
        "", "Tests", "True Rejects", "False Rejects", "mFDR"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.1}  {:>12.2}  {:>13.2}  {:>6.3}",
            r.label, r.mean_tests, r.mean_true_rejects, r.mean_false_rejects, r.mfdr
        );
    }
    out
}

/// Writes one CSV row per report.
pub fn write_csv(reports: &[AggregateReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "label",
        "n_iter",
        "tests",
        "true_rejects",
        "false_rejects",
        "mfdr",
        "se_tests",
        "se_true_rejects",
        "mean_skipped",
        "samples_per_test",
        "power",
    ])?;
    for r in reports {
        w.write_record([
            r.label.clone(),
            r.n_iter.to_string(),
            r.mean_tests.to_string(),
            r.mean_true_rejects.to_string(),
            r.mean_false_rejects.to_string(),
            r.mfdr.to_string(),
            r.se_tests.to_string(),
            r.se_true_rejects.to_string(),
            r.mean_skipped.to_string(),
            r.mean_samples_per_test.to_string(),
            r.power.to_string(),
        ])?;
    }
    w.flush().at(path)?;
    Ok(())
}
