//! Run configuration for simulations, mirroring the JSON accepted by `--config`.

use alpha_ledger_core::{
    CaeroPolicy, InvestingRule, Policy, SchemeKind, SchemePolicy, Selection, SolverConfig,
    SpendingScheme,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the prior null probability of each synthetic hypothesis is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    Fixed { q: f64 },
    /// q_j ~ Beta(a, 100 − a).
    Beta { a: f64 },
}

impl PriorSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            PriorSpec::Fixed { q } => q,
            PriorSpec::Beta { a } => a / 100.0,
        }
    }
}

/// Sample-size rule: a fixed n for fixed-n rules, or a cap on the optimized n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NRule {
    Fixed { n: f64 },
    Cap { n: f64 },
    Unbounded,
}

/// A named decision rule with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PolicySpec {
    AlphaSpending {
        scheme: SchemeKind,
    },
    AlphaInvesting {
        scheme: SchemeKind,
    },
    Ero {
        scheme: SchemeKind,
    },
    Caero {
        #[serde(default)]
        solver: SolverConfig,
        #[serde(default = "one")]
        horizon: usize,
        #[serde(default)]
        skip_above_n: Option<f64>,
    },
}

fn one() -> usize {
    1
}

impl PolicySpec {
    /// Parses a policy name as used by `--policy`.
    pub fn from_name(name: &str) -> Result<Self> {
        let (rule, scheme) = match name.split_once(':') {
            Some((r, s)) => (r, Some(s)),
            None => (name, None),
        };
        let scheme = match scheme {
            None | Some("constant") => SchemeKind::Constant,
            Some("relative") => SchemeKind::Relative,
            Some("relative200") => SchemeKind::Relative200,
            Some(other) => return Err(Error::Config(format!("unknown scheme `{other}`"))),
        };
        Ok(match rule {
            "alpha_spending" => PolicySpec::AlphaSpending { scheme },
            "alpha_investing" => PolicySpec::AlphaInvesting { scheme },
            "ero" => PolicySpec::Ero { scheme },
            "caero" => PolicySpec::Caero {
                solver: SolverConfig::default(),
                horizon: 1,
                skip_above_n: None,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown policy `{other}` (expected alpha_spending, alpha_investing, ero or caero, optionally suffixed with :constant, :relative or :relative200)"
                )))
            }
        })
    }

    pub fn label(&self) -> String {
        let scheme = |s: &SchemeKind| match s {
            SchemeKind::Constant => "constant",
            SchemeKind::Relative => "relative",
            SchemeKind::Relative200 => "relative200",
        };
        match self {
            PolicySpec::AlphaSpending { scheme: s } => format!("{} alpha-spending", scheme(s)),
            PolicySpec::AlphaInvesting { scheme: s } => format!("{} alpha-investing", scheme(s)),
            PolicySpec::Ero { scheme: s } => format!("{} ERO investing", scheme(s)),
            PolicySpec::Caero { horizon, .. } if *horizon > 1 => {
                format!("cost-aware ERO, horizon {horizon}")
            }
            PolicySpec::Caero { .. } => "cost-aware ERO".to_string(),
        }
    }
}

/// Synthetic-stream simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Maximum tests (hypotheses in the stream) per iteration.
    pub m: usize,
    pub n_iter: usize,
    pub prior: PriorSpec,
    pub theta_alt: f64,
    pub sigma: f64,
    pub cost: f64,
    pub alpha_global: f64,
    pub eta: f64,
    pub budget: f64,
    pub policy: PolicySpec,
    pub n_rule: NRule,
    /// Prior handed to the decision rule in place of the true one.
    pub specified_q_override: Option<f64>,
    pub seed_base: u64,
    /// Pre-generated samples per hypothesis.
    pub samples_per_hypothesis: usize,
    /// Testing stops once α-wealth is at or below this.
    pub eps_alpha: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            m: 1000,
            n_iter: 10_000,
            prior: PriorSpec::Fixed { q: 0.9 },
            theta_alt: 2.0,
            sigma: 1.0,
            cost: 1.0,
            alpha_global: 0.05,
            eta: 0.95,
            budget: 1000.0,
            policy: PolicySpec::Ero {
                scheme: SchemeKind::Constant,
            },
            n_rule: NRule::Fixed { n: 1.0 },
            specified_q_override: None,
            seed_base: 0,
            samples_per_hypothesis: 1000,
            eps_alpha: 1e-6,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.m == 0 || self.n_iter == 0 {
            return bad("m and n_iter must be positive");
        }
        match self.prior {
            PriorSpec::Fixed { q } if !(0.0..=1.0).contains(&q) => {
                return bad("fixed prior must lie in [0, 1]")
            }
            PriorSpec::Beta { a } if !(a > 0.0 && a < 100.0) => {
                return bad("beta prior parameter must lie in (0, 100)")
            }
            _ => {}
        }
        if let Some(q) = self.specified_q_override {
            if !(0.0..=1.0).contains(&q) {
                return bad("specified prior must lie in [0, 1]");
            }
        }
        if !(self.sigma > 0.0) || !(self.cost > 0.0) || !(self.budget >= 0.0) {
            return bad("sigma and cost must be positive and the budget nonnegative");
        }
        if !(self.eps_alpha >= 0.0) {
            return bad("eps_alpha must be nonnegative");
        }
        if self.samples_per_hypothesis == 0 {
            return bad("samples_per_hypothesis must be positive");
        }
        match (&self.policy, self.n_rule) {
            (PolicySpec::Caero { .. }, _) => {}
            (_, NRule::Unbounded) => return bad("fixed-n rules need a fixed sample size"),
            (_, NRule::Fixed { n } | NRule::Cap { n }) => {
                if !(n >= 1.0) || n > self.samples_per_hypothesis as f64 {
                    return bad("fixed sample size must lie in [1, samples_per_hypothesis]");
                }
            }
        }
        if let PolicySpec::Caero { solver, horizon, .. } = &self.policy {
            solver.validate()?;
            if *horizon == 0 || *horizon > alpha_ledger_core::caero::MAX_HORIZON {
                return bad("horizon must lie in 1..=5");
            }
        }
        Ok(())
    }

    /// Instantiates the configured decision rule.
    pub fn build_policy(&self) -> Result<Box<dyn Policy>> {
        self.validate()?;
        let n_fixed = match self.n_rule {
            NRule::Fixed { n } | NRule::Cap { n } => n,
            NRule::Unbounded => 0.0,
        };
        let scheme_policy = |scheme: SchemeKind, rule| -> Box<dyn Policy> {
            Box::new(SchemePolicy {
                scheme: SpendingScheme::new(scheme),
                rule,
                n: n_fixed,
            })
        };
        Ok(match &self.policy {
            PolicySpec::AlphaSpending { scheme } => {
                scheme_policy(*scheme, InvestingRule::AlphaSpending)
            }
            PolicySpec::AlphaInvesting { scheme } => {
                scheme_policy(*scheme, InvestingRule::AlphaInvesting)
            }
            PolicySpec::Ero { scheme } => scheme_policy(*scheme, InvestingRule::Ero),
            PolicySpec::Caero {
                solver,
                horizon,
                skip_above_n,
            } => {
                let mut solver = *solver;
                // Never plan more samples than a hypothesis carries.
                let available = self.samples_per_hypothesis as f64;
                let cap = match self.n_rule {
                    NRule::Fixed { n } | NRule::Cap { n } => n.min(available),
                    NRule::Unbounded => solver.n_cap.unwrap_or(available).min(available),
                };
                solver.n_cap = Some(cap);
                Box::new(CaeroPolicy {
                    config: solver,
                    horizon: *horizon,
                    skip_above_n: *skip_above_n,
                })
            }
        })
    }
}

/// The solver settings used by the synthetic table reproductions: power
/// targeted from `init_rho` within the optimal range.
pub fn table_solver(ante_fraction: f64, init_rho: f64) -> SolverConfig {
    SolverConfig {
        ante_fraction,
        init_rho,
        selection: Selection::TargetPower,
        ..SolverConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_parse() {
        assert!(matches!(
            PolicySpec::from_name("ero:relative").unwrap(),
            PolicySpec::Ero {
                scheme: SchemeKind::Relative
            }
        ));
        assert!(PolicySpec::from_name("lord").is_err());
        assert!(PolicySpec::from_name("ero:weekly").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = SimConfig {
            policy: PolicySpec::Caero {
                solver: table_solver(0.1, 0.9),
                horizon: 2,
                skip_above_n: None,
            },
            n_rule: NRule::Cap { n: 10.0 },
            prior: PriorSpec::Beta { a: 90.0 },
            ..SimConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SimConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: SimConfig = serde_json::from_str(r#"{"n_iter": 5}"#).unwrap();
        assert_eq!(partial.n_iter, 5);
        assert_eq!(partial.m, 1000);
    }

    #[test]
    fn fixed_n_rules_reject_unbounded() {
        let cfg = SimConfig {
            n_rule: NRule::Unbounded,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
