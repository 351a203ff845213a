//! Dataset runner: per-hypothesis sample matrices from CSV, logistic prior
//! estimation from reserved samples, and permuted testing passes.

use std::path::{Path, PathBuf};

use alpha_ledger_core::{
    init_wealth, AnteRule, CaeroPolicy, HypothesisSpec, InvestingRule, Policy, SchemeKind,
    SchemePolicy, Selection, SolverConfig, SpendingScheme,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::simlab::{aggregate, run_policy_on_stream, AggregateReport, Hypothesis, LoopLimits};

/// Settings of a dataset run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub data_path: PathBuf,
    /// Leading sample columns used only to standardize each row (control
    /// samples); 0 when the file is already standardized.
    pub reference_k: usize,
    /// Sample columns (after the reference columns) reserved for the prior.
    pub prior_k: usize,
    pub beta_slope: f64,
    pub x0: f64,
    /// Alternative mean used for power calculations (standardized units).
    pub theta_bar: f64,
    pub sigma: f64,
    /// Fixed n of the ERO comparator and skip threshold of cost-aware ERO.
    pub n_cap_exec: usize,
    pub permutations: usize,
    pub budget: f64,
    pub cost: f64,
    pub alpha_global: f64,
    pub eta: f64,
    pub seed_base: u64,
    pub eps_alpha: f64,
    /// Cost-aware ante cap φ ≤ ante_scale·(1 − q)·W_α.
    pub ante_scale: f64,
    pub init_rho: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            data_path: PathBuf::new(),
            reference_k: 0,
            prior_k: 2,
            beta_slope: 2.0,
            x0: 4f64.log10(),
            theta_bar: 2f64.log10(),
            sigma: 1.0,
            n_cap_exec: 50,
            permutations: 50,
            budget: 1000.0,
            cost: 1.0,
            alpha_global: 0.05,
            eta: 0.95,
            seed_base: 0,
            eps_alpha: 1e-6,
            ante_scale: 0.5,
            init_rho: 0.9,
        }
    }
}

impl DatasetConfig {
    /// Effect size and logistic midpoint for data standardized by a raw-scale
    /// standard deviation `sigma_hat`: θ̄ = log10(2)/σ̂ and x0 = log10(4)/σ̂.
    pub fn with_raw_scale(self, sigma_hat: f64) -> Self {
        DatasetConfig {
            theta_bar: 2f64.log10() / sigma_hat,
            x0: 4f64.log10() / sigma_hat,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.prior_k == 0 || self.permutations == 0 || self.n_cap_exec == 0 {
            return bad("prior_k, permutations and n_cap_exec must be positive");
        }
        if !(self.sigma > 0.0 && self.cost > 0.0 && self.budget >= 0.0) {
            return bad("sigma and cost must be positive and the budget nonnegative");
        }
        if !(self.theta_bar > 0.0) || !self.beta_slope.is_finite() || !self.x0.is_finite() {
            return bad("theta_bar must be positive; beta_slope and x0 finite");
        }
        if !(self.ante_scale > 0.0 && self.ante_scale <= 1.0) {
            return bad("ante_scale must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Per-hypothesis sample rows, optionally with known truths (synthetic data).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub null_true: Option<Vec<bool>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads `id, x1, x2, ...` rows. A first row whose second field is not
/// numeric is taken as a header.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).at(path)?;
    read_dataset(file)
}

/// [`read_dataset_csv`] over any reader.
pub fn read_dataset(reader: impl std::io::Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Dataset {
            row,
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && rec.get(1).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() < 2 {
            return Err(Error::Dataset {
                row,
                message: "expected an identifier followed by at least one sample".into(),
            });
        }
        let samples = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, f)| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(Error::Dataset {
                    row,
                    message: format!("column {}: `{f}` is not a finite number", c + 2),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        ids.push(rec[0].to_string());
        rows.push(samples);
    }
    if rows.is_empty() {
        return Err(Error::Dataset {
            row: 0,
            message: "no data rows".into(),
        });
    }
    Ok(Dataset {
        ids,
        rows,
        null_true: None,
    })
}

/// Writes `id, x1, x2, ...` rows (truths are not written).
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    for (id, row) in data.ids.iter().zip(&data.rows) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().at(path)?;
    Ok(())
}

/// q = 1 − (1 + exp(−β(mean − x0)))⁻¹, the prior null probability implied
/// by the mean of the reserved samples.
pub fn estimate_prior_logistic(prior_samples: &[f64], beta_slope: f64, x0: f64) -> Result<f64> {
    if prior_samples.is_empty() {
        return Err(Error::Validation("no prior samples".into()));
    }
    let mean = prior_samples.iter().sum::<f64>() / prior_samples.len() as f64;
    // 1 − 1/(1 + e^{−z}) = 1/(1 + e^{z}).
    Ok(1.0 / (1.0 + (beta_slope * (mean - x0)).exp()))
}

/// Splits each row into (prior samples, testing samples), standardizing by
/// the reference columns first when `reference_k > 0`.
fn prepare(cfg: &DatasetConfig, data: &Dataset) -> Result<Vec<(f64, Vec<f64>)>> {
    let need = cfg.reference_k + cfg.prior_k + 1;
    data.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() < need {
                return Err(Error::Dataset {
                    row: i + 1,
                    message: format!("{} samples; at least {need} required", row.len()),
                });
            }
            let (reference, rest) = row.split_at(cfg.reference_k);
            let standardized: Vec<f64> = if reference.is_empty() {
                rest.to_vec()
            } else {
                let k = reference.len() as f64;
                let mu = reference.iter().sum::<f64>() / k;
                let var = reference.iter().map(|x| (x - mu).powi(2)).sum::<f64>()
                    / (k - 1.0).max(1.0);
                let sd = var.sqrt();
                if !(sd > 0.0) {
                    return Err(Error::Dataset {
                        row: i + 1,
                        message: "reference samples have zero spread".into(),
                    });
                }
                rest.iter().map(|x| (x - mu) / sd).collect()
            };
            let (prior, testing) = standardized.split_at(cfg.prior_k);
            let q = estimate_prior_logistic(prior, cfg.beta_slope, cfg.x0)?;
            Ok((q, testing.to_vec()))
        })
        .collect()
}

/// The two compared rules: cost-aware ERO (ante ≤ scale·(1 − q)·W_α, skip
/// when the optimal n exceeds the sample cap) and ERO investing at the cap.
pub fn dataset_policies(cfg: &DatasetConfig, n_exec: usize) -> Vec<(String, Box<dyn Policy>)> {
    let solver = SolverConfig {
        init_rho: cfg.init_rho,
        selection: Selection::TargetPower,
        ante_fraction_rule: Some(AnteRule::NullComplement {
            scale: cfg.ante_scale,
        }),
        n_cap: None,
        ..SolverConfig::default()
    };
    vec![
        (
            "ERO".to_string(),
            Box::new(SchemePolicy {
                scheme: SpendingScheme::new(SchemeKind::Relative),
                rule: InvestingRule::Ero,
                n: n_exec as f64,
            }),
        ),
        (
            "CAERO".to_string(),
            Box::new(CaeroPolicy {
                config: solver,
                horizon: 1,
                skip_above_n: Some(n_exec as f64),
            }),
        ),
    ]
}

/// Runs `policy` over `cfg.permutations` shuffles of `data`.
pub fn run_dataset(
    cfg: &DatasetConfig,
    data: &Dataset,
    policy: &dyn Policy,
    label: &str,
) -> Result<AggregateReport> {
    cfg.validate()?;
    let prepared = prepare(cfg, data)?;
    let limits = LoopLimits {
        eps_alpha: cfg.eps_alpha,
        min_dollar: cfg.cost,
    };
    let hypotheses: Vec<Hypothesis> = prepared
        .into_iter()
        .enumerate()
        .map(|(i, (q, samples))| -> Result<Hypothesis> {
            Ok(Hypothesis {
                spec: HypothesisSpec {
                    q,
                    theta_bar: cfg.theta_bar,
                    sigma: cfg.sigma,
                    cost: cfg.cost,
                    mu0: 0.0,
                },
                true_q: q,
                null_true: data.null_true.as_ref().map(|t| t[i]),
                samples,
            })
        })
        .collect::<Result<_>>()?;
    let records = (0..cfg.permutations as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed_base.wrapping_add(p));
            let mut order: Vec<usize> = (0..hypotheses.len()).collect();
            order.shuffle(&mut rng);
            let stream: Vec<Hypothesis> = order.iter().map(|&i| hypotheses[i].clone()).collect();
            let wealth = init_wealth(cfg.alpha_global, cfg.eta, cfg.budget)?;
            run_policy_on_stream(policy, &stream, wealth, limits, p).map(|(r, _)| r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(label, records, cfg.eta))
}

/// Runs both [`dataset_policies`] on the same permutations.
pub fn compare_methods(cfg: &DatasetConfig, data: &Dataset) -> Result<Vec<AggregateReport>> {
    let shortest = data
        .rows
        .iter()
        .map(Vec::len)
        .min()
        .unwrap_or(0)
        .saturating_sub(cfg.reference_k + cfg.prior_k);
    if shortest == 0 {
        return Err(Error::Config("rows leave no testing samples".into()));
    }
    let n_exec = cfg.n_cap_exec.min(shortest);
    dataset_policies(cfg, n_exec)
        .into_iter()
        .map(|(label, policy)| run_dataset(cfg, data, policy.as_ref(), &label))
        .collect()
}

/// Shape of the synthetic stand-in for a gene-expression study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StandInConfig {
    pub m: usize,
    /// Samples per row (reserved prior samples included).
    pub samples: usize,
    pub alt_fraction: f64,
    /// Standardized mean of alternative rows.
    pub alt_shift: f64,
    pub seed: u64,
}

impl Default for StandInConfig {
    fn default() -> Self {
        StandInConfig {
            m: 6033,
            samples: 52,
            alt_fraction: 0.05,
            alt_shift: 1.0,
            seed: 0,
        }
    }
}

/// Standardized rows: N(0, 1) for nulls and N(alt_shift, 1) for alternatives.
pub fn synthetic_dataset(cfg: &StandInConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ids = Vec::with_capacity(cfg.m);
    let mut rows = Vec::with_capacity(cfg.m);
    let mut truth = Vec::with_capacity(cfg.m);
    for j in 0..cfg.m {
        let null = rng.random::<f64>() >= cfg.alt_fraction;
        let mean = if null { 0.0 } else { cfg.alt_shift };
        let row = (0..cfg.samples)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mean + z
            })
            .collect();
        ids.push(format!("g{j}"));
        rows.push(row);
        truth.push(null);
    }
    Dataset {
        ids,
        rows,
        null_true: Some(truth),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_prior_values() {
        let x0 = 4f64.log10();
        assert!((estimate_prior_logistic(&[x0, x0], 2.0, x0).unwrap() - 0.5).abs() < 1e-15);
        assert!(estimate_prior_logistic(&[1e6], 2.0, x0).unwrap() < 1e-300);
        // Direct evaluation: 1 − 1/(1 + e^{2·log10 4}).
        let oracle = 1.0 - 1.0 / (1.0 + (2.0 * 4f64.log10()).exp());
        let q = estimate_prior_logistic(&[-0.5, 0.5], 2.0, x0).unwrap();
        assert!((q - oracle).abs() < 1e-15);
        assert!((q - 0.769_256_894_526).abs() < 1e-11);
        assert!(estimate_prior_logistic(&[], 2.0, x0).is_err());
    }

    #[test]
    fn csv_round_trip_and_diagnostics() {
        let data = synthetic_dataset(&StandInConfig {
            m: 20,
            samples: 5,
            ..StandInConfig::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&data, &path).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back.ids, data.ids);
        assert_eq!(back.rows, data.rows);

        let with_header = "gene,s1,s2\na,1.0,2.0\nb,0.5,-1\n";
        let d = read_dataset(with_header.as_bytes()).unwrap();
        assert_eq!(d.ids, vec!["a", "b"]);
        let bad = "a,1.0,2.0\nb,0.5,oops\n";
        match read_dataset(bad.as_bytes()) {
            Err(Error::Dataset { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("column 3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prior_columns_are_removed() {
        let cfg = DatasetConfig::default();
        let data = Dataset {
            ids: vec!["a".into()],
            rows: vec![vec![0.0, 0.0, 1.0, 2.0, 3.0]],
            null_true: None,
        };
        let p = prepare(&cfg, &data).unwrap();
        assert_eq!(p[0].1, vec![1.0, 2.0, 3.0]);
        let short = Dataset {
            rows: vec![vec![0.0, 0.0]],
            ..data
        };
        assert!(matches!(prepare(&cfg, &short), Err(Error::Dataset { row: 1, .. })));
    }

    #[test]
    fn reference_columns_standardize() {
        let cfg = DatasetConfig {
            reference_k: 3,
            prior_k: 1,
            ..DatasetConfig::default()
        };
        let data = Dataset {
            ids: vec!["a".into()],
            rows: vec![vec![1.0, 2.0, 3.0, 2.0, 4.0]],
            null_true: None,
        };
        let p = prepare(&cfg, &data).unwrap();
        assert_eq!(p[0].1, vec![2.0]);
    }

    #[test]
    fn permutations_are_deterministic() {
        let data = synthetic_dataset(&StandInConfig {
            m: 300,
            ..StandInConfig::default()
        });
        let cfg = DatasetConfig {
            permutations: 3,
            ..DatasetConfig::default()
        };
        let a = compare_methods(&cfg, &data).unwrap();
        let b = compare_methods(&cfg, &data).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.mean_spent <= cfg.budget);
        }
    }
}
