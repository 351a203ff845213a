//! Synthetic-stream experiments: stream generation, the testing loop and
//! across-iteration aggregation.

pub mod curves;
pub mod dataset;
pub mod tables;

use std::collections::VecDeque;

use alpha_ledger_core::caero::MAX_HORIZON;
use alpha_ledger_core::{
    init_wealth, mfdr_estimate, z_test_one_sided, Decision, HypothesisSpec, Outcome, Policy,
    WealthState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PriorSpec, SimConfig};
use crate::error::{Error, Result};

/// One synthetic hypothesis with its latent truth and pre-generated data.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// What the decision rule sees (q may be a misspecified value).
    pub spec: HypothesisSpec,
    /// The prior the truth was drawn from.
    pub true_q: f64,
    /// Latent truth; unknown for real data.
    pub null_true: Option<bool>,
    pub samples: Vec<f64>,
}

/// Lazily draws the hypotheses of one stream in order; collecting it gives
/// exactly [`generate_stream`].
pub struct StreamGen<'a> {
    config: &'a SimConfig,
    rng: ChaCha8Rng,
    beta: Option<Beta<f64>>,
    null: Normal<f64>,
    alt: Normal<f64>,
    remaining: usize,
}

impl<'a> StreamGen<'a> {
    /// The stream for `iteration`, seeded with `seed_base + iteration`.
    pub fn new(config: &'a SimConfig, iteration: u64) -> Result<Self> {
        config.validate()?;
        let beta = match config.prior {
            PriorSpec::Beta { a } => Some(
                Beta::new(a, 100.0 - a).map_err(|e| Error::Config(format!("beta prior: {e}")))?,
            ),
            PriorSpec::Fixed { .. } => None,
        };
        let normal = |mean: f64| {
            Normal::new(mean, config.sigma).map_err(|e| Error::Config(format!("normal: {e}")))
        };
        Ok(StreamGen {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed_base.wrapping_add(iteration)),
            beta,
            null: normal(0.0)?,
            alt: normal(config.theta_alt)?,
            remaining: config.m,
        })
    }
}

impl Iterator for StreamGen<'_> {
    type Item = Hypothesis;

    fn next(&mut self) -> Option<Hypothesis> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let config = self.config;
        let q = match (&config.prior, &self.beta) {
            (PriorSpec::Fixed { q }, _) => *q,
            (_, Some(b)) => b.sample(&mut self.rng),
            _ => unreachable!("beta prior without a distribution"),
        };
        let null_true = self.rng.random::<f64>() < q;
        let dist = if null_true { &self.null } else { &self.alt };
        let samples = (0..config.samples_per_hypothesis)
            .map(|_| dist.sample(&mut self.rng))
            .collect();
        Some(Hypothesis {
            spec: HypothesisSpec {
                q: config.specified_q_override.unwrap_or(q),
                theta_bar: config.theta_alt,
                sigma: config.sigma,
                cost: config.cost,
                mu0: 0.0,
            },
            true_q: q,
            null_true: Some(null_true),
            samples,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// The whole stream for `iteration`, seeded with `seed_base + iteration`.
pub fn generate_stream(config: &SimConfig, iteration: u64) -> Result<Vec<Hypothesis>> {
    Ok(StreamGen::new(config, iteration)?.collect())
}

/// Counts from one pass of a policy over one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub tests: u64,
    pub rejections: u64,
    /// True and false rejections are counted only when the truth is known.
    pub true_rejects: u64,
    pub false_rejects: u64,
    /// Hypotheses the policy passed on (solver skips included).
    pub skipped: u64,
    pub samples_used: f64,
    pub spent: f64,
    pub final_w_alpha: f64,
    pub final_w_dollar: f64,
    /// Number of alternatives in the hypotheses the loop reached.
    pub alternatives_seen: u64,
    /// Spent plus remaining budget equals the initial budget exactly.
    pub budget_conserved: bool,
}

/// Stopping thresholds of the testing loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopLimits {
    pub eps_alpha: f64,
    /// Dollar-wealth below this ends the loop (the price of one sample).
    pub min_dollar: f64,
}

/// Runs `policy` over `stream` until the stream, the α-wealth or the budget
/// runs out. Each conducted test uses the first n pre-generated samples.
pub fn run_policy_on_stream(
    policy: &dyn Policy,
    stream: &[Hypothesis],
    wealth: WealthState,
    limits: LoopLimits,
    iteration: u64,
) -> Result<(IterationRecord, WealthState)> {
    run_policy_on_iter(policy, stream.iter().cloned(), wealth, limits, iteration)
}

/// [`run_policy_on_stream`] over hypotheses produced on demand. The policy
/// sees at most [`MAX_HORIZON`] upcoming hypotheses, so only that many are
/// drawn ahead of the current one.
pub fn run_policy_on_iter(
    policy: &dyn Policy,
    stream: impl Iterator<Item = Hypothesis>,
    mut wealth: WealthState,
    limits: LoopLimits,
    iteration: u64,
) -> Result<(IterationRecord, WealthState)> {
    let mut stream = stream.fuse();
    let mut window: VecDeque<Hypothesis> = VecDeque::with_capacity(MAX_HORIZON);
    let mut specs: Vec<HypothesisSpec> = Vec::with_capacity(MAX_HORIZON);
    let budget = wealth.w_dollar();
    let mut rec = IterationRecord {
        iteration,
        tests: 0,
        rejections: 0,
        true_rejects: 0,
        false_rejects: 0,
        skipped: 0,
        samples_used: 0.0,
        spent: 0.0,
        final_w_alpha: 0.0,
        final_w_dollar: 0.0,
        alternatives_seen: 0,
        budget_conserved: true,
    };
    loop {
        if !wealth.can_continue(limits.eps_alpha, limits.min_dollar) {
            break;
        }
        while window.len() < MAX_HORIZON {
            match stream.next() {
                Some(h) => window.push_back(h),
                None => break,
            }
        }
        let Some(h) = window.front() else {
            break;
        };
        specs.clear();
        specs.extend(window.iter().map(|h| h.spec));
        rec.alternatives_seen += u64::from(h.null_true == Some(false));
        match policy.decide(&wealth, &specs) {
            Decision::Stop => break,
            Decision::Skip(_) => rec.skipped += 1,
            Decision::Test(params) => {
                let n = params.n as usize;
                if n == 0 || n > h.samples.len() || n as f64 != params.n {
                    return Err(Error::Config(format!(
                        "policy requested {} samples; {} pre-generated",
                        params.n,
                        h.samples.len()
                    )));
                }
                let z = z_test_one_sided(&h.samples[..n], h.spec.mu0, h.spec.sigma)?;
                let mut outcome = Outcome::from_p_value(z.p, params.alpha_j);
                if let Some(t) = h.null_true {
                    outcome = outcome.with_truth(t);
                }
                wealth.apply_outcome(&h.spec, &params, &outcome)?;
                rec.tests += 1;
                rec.samples_used += params.n;
                rec.spent += params.n * h.spec.cost;
                if outcome.rejected {
                    rec.rejections += 1;
                    match h.null_true {
                        Some(true) => rec.false_rejects += 1,
                        Some(false) => rec.true_rejects += 1,
                        None => {}
                    }
                }
            }
        }
        window.pop_front();
    }
    rec.final_w_alpha = wealth.w_alpha();
    rec.final_w_dollar = wealth.w_dollar();
    rec.budget_conserved = rec.spent + rec.final_w_dollar == budget;
    Ok((rec, wealth))
}

/// Across-iteration means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub label: String,
    pub n_iter: usize,
    pub mean_tests: f64,
    pub mean_true_rejects: f64,
    pub mean_false_rejects: f64,
    pub mean_rejections: f64,
    pub mean_spent: f64,
    /// mean(V) / (mean(R) + η).
    pub mfdr: f64,
    pub se_tests: f64,
    pub se_true_rejects: f64,
    pub mean_skipped: f64,
    pub mean_samples_per_test: f64,
    /// True rejections over alternatives reached.
    pub power: f64,
    /// Iterations in which the budget did not balance exactly (expected 0).
    pub discarded_iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub records: Vec<IterationRecord>,
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates iteration records; keeps the records in the report.
pub fn aggregate(label: &str, records: Vec<IterationRecord>, eta: f64) -> AggregateReport {
    assert!(!records.is_empty(), "aggregate needs at least one record");
    let (mean_tests, se_tests) = mean_se(records.iter().map(|r| r.tests as f64));
    let (mean_tr, se_tr) = mean_se(records.iter().map(|r| r.true_rejects as f64));
    let (mean_fr, _) = mean_se(records.iter().map(|r| r.false_rejects as f64));
    let (mean_rejections, _) = mean_se(records.iter().map(|r| r.rejections as f64));
    let (mean_spent, _) = mean_se(records.iter().map(|r| r.spent));
    let (mean_skipped, _) = mean_se(records.iter().map(|r| r.skipped as f64));
    let samples: f64 = records.iter().map(|r| r.samples_used).sum();
    let tests: f64 = records.iter().map(|r| r.tests as f64).sum();
    let alts: f64 = records.iter().map(|r| r.alternatives_seen as f64).sum();
    let trs: f64 = records.iter().map(|r| r.true_rejects as f64).sum();
    AggregateReport {
        label: label.to_string(),
        n_iter: records.len(),
        mean_tests,
        mean_true_rejects: mean_tr,
        mean_false_rejects: mean_fr,
        mean_rejections,
        mean_spent,
        mfdr: mfdr_estimate(mean_fr, mean_tr + mean_fr, eta),
        se_tests,
        se_true_rejects: se_tr,
        mean_skipped,
        mean_samples_per_test: if tests > 0.0 { samples / tests } else { 0.0 },
        power: if alts > 0.0 { trs / alts } else { 0.0 },
        discarded_iterations: records.iter().filter(|r| !r.budget_conserved).count(),
        records,
    }
}

/// Runs `config.n_iter` independent iterations in parallel.
pub fn run_simulation(config: &SimConfig) -> Result<AggregateReport> {
    let policy = config.build_policy()?;
    let limits = LoopLimits {
        eps_alpha: config.eps_alpha,
        min_dollar: config.cost,
    };
    let records = (0..config.n_iter as u64)
        .into_par_iter()
        .map(|i| {
            let stream = StreamGen::new(config, i)?;
            let wealth = init_wealth(config.alpha_global, config.eta, config.budget)?;
            run_policy_on_iter(policy.as_ref(), stream, wealth, limits, i).map(|(r, _)| r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&config.policy.label(), records, config.eta))
}

/// The misspecified-prior study: truths from `config.prior`, decisions from
/// each value in `specified`.
pub fn sensitivity_run(config: &SimConfig, specified: &[f64]) -> Result<Vec<AggregateReport>> {
    specified
        .iter()
        .map(|&q| {
            let cfg = SimConfig {
                specified_q_override: Some(q),
                ..config.clone()
            };
            let mut r = run_simulation(&cfg)?;
            r.label = format!("specified q = {q}");
            Ok(r)
        })
        .collect()
}
