//! The (α, $) wealth ledger.
//!
//! α-wealth starts at `alpha_global · eta` and moves by `−φ + R·ψ` per test;
//! dollar-wealth starts at the budget and moves by `−n·c`. The history is
//! append-only and replaying it from the initial state reproduces the current
//! balances bit for bit.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One candidate hypothesis as the investigator sees it before testing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisSpec {
    /// Prior probability that the null is true.
    pub q: f64,
    /// Upper bound of the alternative region, in data units.
    pub theta_bar: f64,
    pub sigma: f64,
    /// Currency per sample.
    pub cost: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub mu0: f64,
}

impl HypothesisSpec {
    pub fn new(q: f64, theta_bar: f64, sigma: f64, cost: f64) -> Result<Self> {
        let spec = HypothesisSpec {
            q,
            theta_bar,
            sigma,
            cost,
            mu0: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mu0(mut self, mu0: f64) -> Self {
        self.mu0 = mu0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Domain("prior null probability must lie in [0, 1]"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain("sigma must be positive"));
        }
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return Err(Error::Domain("per-sample cost must be positive"));
        }
        if !(self.theta_bar >= 0.0 && self.theta_bar.is_finite()) {
            return Err(Error::Domain("effect bound must be nonnegative"));
        }
        if !self.mu0.is_finite() {
            return Err(Error::Domain("null mean must be finite"));
        }
        Ok(())
    }
}

/// A decision-rule output: ante, level, reward, power and sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestParams {
    pub phi: f64,
    pub alpha_j: f64,
    pub psi: f64,
    pub rho: f64,
    pub n: f64,
}

impl TestParams {
    /// The two mFDR reward caps `(φ/ρ + α, φ/α_j + α − 1)`.
    pub fn reward_caps(&self, alpha_global: f64) -> (f64, f64) {
        (
            self.phi / self.rho + alpha_global,
            self.phi / self.alpha_j + alpha_global - 1.0,
        )
    }

    pub fn reward_cap(&self, alpha_global: f64) -> f64 {
        let (a, b) = self.reward_caps(alpha_global);
        a.min(b)
    }

    /// Checks ψ against both caps with an absolute `slack`.
    pub fn check_caps(&self, alpha_global: f64, slack: f64) -> Result<()> {
        let cap = self.reward_cap(alpha_global);
        if self.psi > cap + slack {
            return Err(Error::CapViolation {
                psi: self.psi,
                cap,
            });
        }
        Ok(())
    }

    /// Pr[R = 1] = α_j·q + ρ·(1 − q).
    pub fn rejection_probability(&self, q: f64) -> f64 {
        self.alpha_j * q + self.rho * (1.0 - q)
    }
}

/// Result of a conducted test.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Outcome {
    /// Absent when the investigator reports a pre-decided rejection flag.
    pub p_value: Option<f64>,
    pub rejected: bool,
    /// Whether the null was actually true; only known in simulation.
    #[cfg_attr(feature = "serde", serde(default))]
    pub truth: Option<bool>,
}

impl Outcome {
    /// Rejects iff `p ≤ α_j` (boundary inclusive).
    pub fn from_p_value(p_value: f64, alpha_j: f64) -> Self {
        Outcome {
            p_value: Some(p_value),
            rejected: p_value <= alpha_j,
            truth: None,
        }
    }

    pub fn decided(rejected: bool) -> Self {
        Outcome {
            p_value: None,
            rejected,
            truth: None,
        }
    }

    pub fn with_truth(mut self, null_is_true: bool) -> Self {
        self.truth = Some(null_is_true);
        self
    }

    pub fn is_false_rejection(&self) -> bool {
        self.rejected && self.truth == Some(true)
    }
}

/// One applied test together with the balances right after it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryEntry {
    pub spec: HypothesisSpec,
    pub params: TestParams,
    pub outcome: Outcome,
    pub w_alpha: f64,
    pub w_dollar: f64,
}

/// α- and dollar-wealth with the full test history.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WealthState {
    j: u64,
    w_alpha: f64,
    w_dollar: f64,
    alpha_global: f64,
    eta: f64,
    w_alpha0: f64,
    w_dollar0: f64,
    history: Vec<HistoryEntry>,
}

/// Initial ledger: W_α(0) = α·η and W_$(0) = budget.
pub fn init_wealth(alpha_global: f64, eta: f64, budget: f64) -> Result<WealthState> {
    if !(alpha_global > 0.0 && alpha_global < 1.0) {
        return Err(Error::Domain("target mFDR level must lie in (0, 1)"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain("eta must be positive"));
    }
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::Domain("budget must be nonnegative"));
    }
    let w_alpha0 = alpha_global * eta;
    Ok(WealthState {
        j: 0,
        w_alpha: w_alpha0,
        w_dollar: budget,
        alpha_global,
        eta,
        w_alpha0,
        w_dollar0: budget,
        history: Vec::new(),
    })
}

impl WealthState {
    pub fn j(&self) -> u64 {
        self.j
    }
    pub fn w_alpha(&self) -> f64 {
        self.w_alpha
    }
    pub fn w_dollar(&self) -> f64 {
        self.w_dollar
    }
    pub fn alpha_global(&self) -> f64 {
        self.alpha_global
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn initial_alpha_wealth(&self) -> f64 {
        self.w_alpha0
    }
    pub fn initial_budget(&self) -> f64 {
        self.w_dollar0
    }
    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Algorithm loop guard: keep testing while α-wealth exceeds `eps_alpha`
    /// and at least `min_cost` of budget remains.
    pub fn can_continue(&self, eps_alpha: f64, min_cost: f64) -> bool {
        self.w_alpha > eps_alpha && self.w_dollar >= min_cost && self.w_dollar > 0.0
    }

    /// Applies one conducted test. Nothing is mutated on error.
    pub fn apply_outcome(
        &mut self,
        spec: &HypothesisSpec,
        params: &TestParams,
        outcome: &Outcome,
    ) -> Result<()> {
        let next = self.next_balances(spec, params, outcome)?;
        self.w_alpha = next.0;
        self.w_dollar = next.1;
        self.j += 1;
        self.history.push(HistoryEntry {
            spec: *spec,
            params: *params,
            outcome: *outcome,
            w_alpha: next.0,
            w_dollar: next.1,
        });
        Ok(())
    }

    /// Value-style variant of [`WealthState::apply_outcome`].
    pub fn applied(
        mut self,
        spec: &HypothesisSpec,
        params: &TestParams,
        outcome: &Outcome,
    ) -> Result<Self> {
        self.apply_outcome(spec, params, outcome)?;
        Ok(self)
    }

    fn next_balances(
        &self,
        spec: &HypothesisSpec,
        params: &TestParams,
        outcome: &Outcome,
    ) -> Result<(f64, f64)> {
        if !(params.phi >= 0.0) || !(params.psi >= 0.0) || !(params.n >= 0.0) {
            return Err(Error::Domain("ante, reward and sample size must be nonnegative"));
        }
        if params.phi > self.w_alpha {
            return Err(Error::InsufficientWealth {
                what: "alpha-wealth",
                requested: params.phi,
                available: self.w_alpha,
            });
        }
        let spend = params.n * spec.cost;
        if spend > self.w_dollar {
            return Err(Error::InsufficientWealth {
                what: "dollar-wealth",
                requested: spend,
                available: self.w_dollar,
            });
        }
        if let Some(p) = outcome.p_value {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain("p-value must lie in [0, 1]"));
            }
            if outcome.rejected != (p <= params.alpha_j) {
                return Err(Error::Domain("rejection flag disagrees with p ≤ α_j"));
            }
        }
        let mut w_alpha = self.w_alpha - params.phi;
        if outcome.rejected {
            w_alpha += params.psi;
        }
        Ok((w_alpha, self.w_dollar - spend))
    }

    /// Rebuilds a ledger by folding `entries` over a fresh initial state.
    pub fn replay<'a, I>(alpha_global: f64, eta: f64, budget: f64, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a HistoryEntry>,
    {
        let mut state = init_wealth(alpha_global, eta, budget)?;
        for e in entries {
            state.apply_outcome(&e.spec, &e.params, &e.outcome)?;
        }
        Ok(state)
    }

    /// True when replaying the history reproduces the cached balances exactly.
    pub fn verify_replay(&self) -> bool {
        match Self::replay(self.alpha_global, self.eta, self.w_dollar0, &self.history) {
            Ok(r) => {
                r.w_alpha.to_bits() == self.w_alpha.to_bits()
                    && r.w_dollar.to_bits() == self.w_dollar.to_bits()
                    && r.j == self.j
                    && r.history
                        .iter()
                        .zip(&self.history)
                        .all(|(a, b)| a.w_alpha.to_bits() == b.w_alpha.to_bits())
            }
            Err(_) => false,
        }
    }

    /// Total rejections and false rejections (where the truth is known).
    pub fn rejection_counts(&self) -> (u64, u64) {
        self.history.iter().fold((0, 0), |(r, v), e| {
            (
                r + u64::from(e.outcome.rejected),
                v + u64::from(e.outcome.is_false_rejection()),
            )
        })
    }
}

/// mFDR_η estimate from across-iteration means: mean(V) / (mean(R) + η).
pub fn mfdr_estimate(mean_false_rejects: f64, mean_rejects: f64, eta: f64) -> f64 {
    if mean_false_rejects <= 0.0 {
        return 0.0;
    }
    mean_false_rejects / (mean_rejects + eta)
}

/// E[ΔW_α] = (−φ + ψ)·Pr[R=1] + (−φ)·Pr[R=0].
pub fn expected_increment(params: &TestParams, q: f64) -> f64 {
    // Algebraically (−φ + ψ)·P1 − φ·(1 − P1); this form avoids cancellation.
    params.psi * params.rejection_probability(q) - params.phi
}

/// Long-run behavior of the α-wealth sequence under a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Regime {
    Submartingale,
    Supermartingale,
    Martingale,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub regime: Regime,
    pub note: Option<&'static str>,
}

const MARTINGALE_TOL: f64 = 1e-9;

/// Classifies a decision, first match wins:
///
/// 1. martingale if ρ = (φ/ψ − q·α_j)/(1 − q) within 1e-9;
/// 2. submartingale if ρ(1 − q) ≥ c, with c = φ_fs/(α + φ_fs) and the
///    Foster-Stine ante φ_fs = α_j/(1 − α_j);
/// 3. supermartingale if ρ(1 − q) ≤ c − q·φ_fs;
/// 4. indeterminate otherwise.
///
/// Conditions 2 and 3 are the Foster-Stine sufficient conditions written
/// without the division by 1 − q, so they stay usable as q → 1.
pub fn classify_regime(params: &TestParams, q: f64, alpha_global: f64) -> RegimeReport {
    if q >= 1.0 {
        return RegimeReport {
            regime: Regime::Indeterminate,
            note: Some("q = 1: the martingale condition divides by 1 − q"),
        };
    }
    let rho = params.rho;
    if params.psi > 0.0 {
        let target = (params.phi / params.psi - q * params.alpha_j) / (1.0 - q);
        if (rho - target).abs() <= MARTINGALE_TOL {
            return RegimeReport {
                regime: Regime::Martingale,
                note: None,
            };
        }
    }
    let fs = params.alpha_j / (1.0 - params.alpha_j);
    let c = fs / (alpha_global + fs);
    let lhs = rho * (1.0 - q);
    let regime = if lhs >= c {
        Regime::Submartingale
    } else if lhs <= c - q * fs {
        Regime::Supermartingale
    } else {
        Regime::Indeterminate
    };
    RegimeReport {
        regime,
        note: if regime == Regime::Indeterminate {
            Some("neither Foster-Stine sufficient condition holds")
        } else {
            None
        },
    }
}

/// Expected one-step α-wealth increment of Foster-Stine investing,
/// −φ_fs + [ρ − (ρ − α_j)q]·(α + φ_fs); exact for a simple null and alternative.
pub fn lemma1_bound(params: &TestParams, q: f64, alpha_global: f64) -> f64 {
    let fs = params.alpha_j / (1.0 - params.alpha_j);
    -fs + (params.rho - (params.rho - params.alpha_j) * q) * (alpha_global + fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> HypothesisSpec {
        HypothesisSpec::new(0.9, 2.0, 1.0, 1.0).unwrap()
    }

    fn params(phi: f64, psi: f64, n: f64) -> TestParams {
        TestParams {
            phi,
            alpha_j: 0.009,
            psi,
            rho: 0.5,
            n,
        }
    }

    #[test]
    fn init_matches_defaults() {
        let s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        assert!((s.w_alpha() - 0.0475).abs() < 1e-15);
        assert_eq!(s.w_dollar(), 1000.0);
        assert_eq!(s.j(), 0);
        assert_eq!(init_wealth(0.05, 1.0, 10.0).unwrap().w_alpha(), 0.05);
        assert!(init_wealth(0.0, 0.95, 1.0).is_err());
        assert!(init_wealth(0.05, 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_budget_blocks_any_purchase() {
        let mut s = init_wealth(0.05, 0.95, 0.0).unwrap();
        let err = s
            .apply_outcome(&spec(), &params(0.001, 0.0, 1.0), &Outcome::decided(false))
            .unwrap_err();
        assert!(matches!(err, Error::InsufficientWealth { .. }));
        assert_eq!(s.j(), 0);
    }

    #[test]
    fn reward_and_loss_arithmetic() {
        let mut s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        let before = s.w_alpha();
        s.apply_outcome(&spec(), &params(0.01, 0.06, 10.0), &Outcome::decided(true))
            .unwrap();
        assert!((s.w_alpha() - before - 0.05).abs() < 1e-15);
        assert_eq!(s.w_dollar(), 990.0);
        let before = s.w_alpha();
        s.apply_outcome(&spec(), &params(0.01, 0.06, 0.0), &Outcome::decided(false))
            .unwrap();
        assert!((s.w_alpha() - before + 0.01).abs() < 1e-15);
        assert_eq!(s.j(), 2);
        assert!(s.verify_replay());
    }

    #[test]
    fn overdraft_does_not_mutate() {
        let mut s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        let snapshot = s.clone();
        assert!(s
            .apply_outcome(&spec(), &params(1.0, 0.0, 1.0), &Outcome::decided(false))
            .is_err());
        assert!(s
            .apply_outcome(&spec(), &params(0.001, 0.0, 2000.0), &Outcome::decided(false))
            .is_err());
        assert_eq!(s, snapshot);
    }

    #[test]
    fn p_value_must_agree_with_flag() {
        let mut s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        let bad = Outcome {
            p_value: Some(0.5),
            rejected: true,
            truth: None,
        };
        assert!(s.apply_outcome(&spec(), &params(0.001, 0.0, 1.0), &bad).is_err());
        let boundary = Outcome::from_p_value(0.009, 0.009);
        assert!(boundary.rejected);
    }

    #[test]
    fn mfdr_examples() {
        assert_eq!(mfdr_estimate(0.0, 3.0, 0.95), 0.0);
        let v = mfdr_estimate(0.22, 4.26 + 0.22, 0.95);
        assert!((v - 0.22 / 5.43).abs() < 1e-15);
        assert!((v - 0.040).abs() < 0.001);
    }

    #[test]
    fn increment_identities() {
        let mut p = params(0.004, 0.0, 3.0);
        let q = 0.9;
        p.psi = p.phi / p.rejection_probability(q);
        assert!(expected_increment(&p, q).abs() < 1e-18);
        p.psi = 0.0;
        assert_eq!(expected_increment(&p, 1.0), -p.phi);
    }

    #[test]
    fn regime_limits() {
        let strong = TestParams {
            phi: 0.01,
            alpha_j: 0.01,
            psi: 0.0,
            rho: 0.999,
            n: 50.0,
        };
        assert_eq!(
            classify_regime(&strong, 0.01, 0.05).regime,
            Regime::Submartingale
        );
        let weak = TestParams {
            rho: 0.011,
            ..strong
        };
        assert_eq!(
            classify_regime(&weak, 0.999, 0.05).regime,
            Regime::Supermartingale
        );
        let r = classify_regime(&weak, 1.0, 0.05);
        assert_eq!(r.regime, Regime::Indeterminate);
        assert!(r.note.is_some());
    }

    #[test]
    fn lemma1_substitutions() {
        let p = TestParams {
            phi: 0.0,
            alpha_j: 0.02,
            psi: 0.0,
            rho: 0.7,
            n: 1.0,
        };
        let fs = 0.02 / 0.98;
        let at_q1 = -fs + 0.02 * (0.05 + fs);
        assert!((lemma1_bound(&p, 1.0, 0.05) - at_q1).abs() < 1e-15);
        let flat = TestParams { rho: 0.02, ..p };
        let a = lemma1_bound(&flat, 0.1, 0.05);
        let b = lemma1_bound(&flat, 0.8, 0.05);
        assert!((a - b).abs() < 1e-15);
        assert!((a - at_q1).abs() < 1e-15);
    }
}
