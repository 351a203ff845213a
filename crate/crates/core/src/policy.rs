//! Spending schemes and the baseline (fixed sample size) investing rules.

use alloc::string::{String, ToString};

use libm::exp;

use crate::error::{Error, Result};
use crate::gauss::{self, upper_z};
use crate::ledger::{HypothesisSpec, TestParams, WealthState};

/// How the ante is allocated from the remaining α-wealth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SchemeKind {
    /// φ_j = min(fraction·W_α(0), W_α(j−1)).
    Constant,
    /// φ_j = fraction·W_α(j−1); stop once W_α < stop_fraction·W_α(0).
    Relative,
    /// Relative allocation with a fixed horizon of 200 tests.
    Relative200,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpendingScheme {
    pub kind: SchemeKind,
    #[cfg_attr(feature = "serde", serde(default = "default_fraction"))]
    pub fraction: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_stop_fraction"))]
    pub stop_fraction: f64,
}

#[cfg(feature = "serde")]
fn default_fraction() -> f64 {
    0.1
}
#[cfg(feature = "serde")]
fn default_stop_fraction() -> f64 {
    1e-3
}

/// Test count of the [`SchemeKind::Relative200`] scheme.
pub const RELATIVE_HORIZON: u64 = 200;

impl SpendingScheme {
    pub fn new(kind: SchemeKind) -> Self {
        SpendingScheme {
            kind,
            fraction: 0.1,
            stop_fraction: 1e-3,
        }
    }
}

/// The ante prescribed by `scheme`, or `None` when the scheme stops.
pub fn scheme_phi(scheme: &SpendingScheme, state: &WealthState) -> Option<f64> {
    let w = state.w_alpha();
    if !(w > 0.0) {
        return None;
    }
    match scheme.kind {
        SchemeKind::Constant => Some((scheme.fraction * state.initial_alpha_wealth()).min(w)),
        SchemeKind::Relative => {
            if w < scheme.stop_fraction * state.initial_alpha_wealth() {
                None
            } else {
                Some(scheme.fraction * w)
            }
        }
        SchemeKind::Relative200 => {
            if state.j() >= RELATIVE_HORIZON {
                None
            } else {
                Some(scheme.fraction * w)
            }
        }
    }
}

fn check_ante(state: &WealthState, phi: f64) -> Result<()> {
    if !(phi > 0.0) {
        return Err(Error::Domain("ante must be positive"));
    }
    if phi >= 1.0 {
        return Err(Error::Domain("ante must be below 1"));
    }
    if phi > state.w_alpha() {
        return Err(Error::InsufficientWealth {
            what: "alpha-wealth",
            requested: phi,
            available: state.w_alpha(),
        });
    }
    Ok(())
}

fn fixed_power(spec: &HypothesisSpec, alpha_j: f64, n: f64) -> Result<f64> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain("sample size must be positive"));
    }
    Ok(gauss::power(
        alpha_j,
        gauss::shift(spec.theta_bar, spec.sigma, n),
    ))
}

/// Tukey-style α-spending: α_j = φ, no reward.
pub fn alpha_spending_step(
    state: &WealthState,
    phi: f64,
    spec: &HypothesisSpec,
    n: f64,
) -> Result<TestParams> {
    check_ante(state, phi)?;
    let rho = fixed_power(spec, phi, n)?;
    Ok(TestParams {
        phi,
        alpha_j: phi,
        psi: 0.0,
        rho,
        n,
    })
}

/// Foster-Stine α-investing: φ = α_j/(1 − α_j) and ψ = φ + α, so a rejection
/// nets +α and a non-rejection costs φ.
pub fn alpha_investing_step(
    state: &WealthState,
    phi: f64,
    spec: &HypothesisSpec,
    n: f64,
) -> Result<TestParams> {
    check_ante(state, phi)?;
    let alpha_j = phi / (1.0 + phi);
    let rho = fixed_power(spec, alpha_j, n)?;
    let params = TestParams {
        phi,
        alpha_j,
        psi: phi + state.alpha_global(),
        rho,
        n,
    };
    params.check_caps(state.alpha_global(), 1e-12)?;
    Ok(params)
}

/// ERO investing at a fixed sample size: α_j solves φ/ρ(α_j) = φ/α_j − 1 and
/// ψ sits at the intersection of the two reward caps.
pub fn ero_step(
    state: &WealthState,
    phi: f64,
    spec: &HypothesisSpec,
    n: f64,
) -> Result<TestParams> {
    check_ante(state, phi)?;
    spec.validate()?;
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain("sample size must be positive"));
    }
    let alpha_j = ero_level(phi, gauss::shift(spec.theta_bar, spec.sigma, n))?;
    let rho = gauss::power(alpha_j, gauss::shift(spec.theta_bar, spec.sigma, n));
    let a = state.alpha_global();
    let mut params = TestParams {
        phi,
        alpha_j,
        psi: 0.0,
        rho,
        n,
    };
    params.psi = params.reward_cap(a);
    Ok(params)
}

/// Root of g(α) = φ/ρ(α) − φ/α + 1 on (1e-12, min(φ, 1 − 1e-12)) for a
/// standardized shift `delta`: bisection to 1e-12, then one Newton polish.
pub fn ero_level(phi: f64, delta: f64) -> Result<f64> {
    let g = |alpha: f64| phi / gauss::power(alpha, delta) - phi / alpha + 1.0;
    let mut lo = 1e-12;
    let mut hi = phi.min(1.0 - 1e-12);
    let (glo, ghi) = (g(lo), g(hi));
    // g → −∞ as α → 0 and g(φ) = φ/ρ(φ) > 0, so a sign change brackets the root.
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::Infeasible("no ERO level in the search interval"));
    }
    while hi - lo > 1e-12 * hi.max(1e-300) && hi - lo > 1e-300 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    // g'(α) = −φ·ρ'(α)/ρ² + φ/α², with ρ'(α) = pdf(z − δ)/pdf(z).
    let z = upper_z(x);
    let rho = gauss::power(x, delta);
    let drho = exp(z * delta - 0.5 * delta * delta);
    let dg = -phi * drho / (rho * rho) + phi / (x * x);
    let polished = x - g(x) / dg;
    let out = if polished > lo && polished < hi && g(polished).abs() <= g(x).abs() {
        polished
    } else {
        x
    };
    Ok(out)
}

/// Which fixed-n investing rule a [`SchemePolicy`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InvestingRule {
    AlphaSpending,
    AlphaInvesting,
    Ero,
}

/// What a policy wants to do with the next hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Test(TestParams),
    /// Pass on this hypothesis without spending anything.
    Skip(String),
    /// End the stream.
    Stop,
}

/// A decision rule: maps the ledger and the upcoming hypotheses (the first one
/// is the hypothesis to decide; the rest are lookahead) to a decision.
pub trait Policy: Send + Sync {
    fn decide(&self, state: &WealthState, upcoming: &[HypothesisSpec]) -> Decision;

    fn name(&self) -> &str;
}

/// A spending scheme paired with a fixed-sample-size investing rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemePolicy {
    pub scheme: SpendingScheme,
    pub rule: InvestingRule,
    pub n: f64,
}

impl Policy for SchemePolicy {
    fn decide(&self, state: &WealthState, upcoming: &[HypothesisSpec]) -> Decision {
        let Some(spec) = upcoming.first() else {
            return Decision::Stop;
        };
        let Some(phi) = scheme_phi(&self.scheme, state) else {
            return Decision::Stop;
        };
        if self.n * spec.cost > state.w_dollar() {
            return Decision::Stop;
        }
        let step = match self.rule {
            InvestingRule::AlphaSpending => alpha_spending_step,
            InvestingRule::AlphaInvesting => alpha_investing_step,
            InvestingRule::Ero => ero_step,
        };
        match step(state, phi, spec, self.n) {
            Ok(p) => Decision::Test(p),
            Err(Error::InsufficientWealth { .. }) => Decision::Stop,
            Err(e) => Decision::Skip(e.to_string()),
        }
    }

    fn name(&self) -> &str {
        match self.rule {
            InvestingRule::AlphaSpending => "alpha_spending",
            InvestingRule::AlphaInvesting => "alpha_investing",
            InvestingRule::Ero => "ero",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::init_wealth;

    fn spec() -> HypothesisSpec {
        HypothesisSpec::new(0.9, 2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn scheme_examples() {
        let s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        let c = SpendingScheme::new(SchemeKind::Constant);
        assert!((scheme_phi(&c, &s).unwrap() - 0.00475).abs() < 1e-15);
        let r = SpendingScheme::new(SchemeKind::Relative);
        assert!((scheme_phi(&r, &s).unwrap() - 0.00475).abs() < 1e-15);
    }

    #[test]
    fn spending_has_no_reward() {
        let s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        let p = alpha_spending_step(&s, 0.00475, &spec(), 1.0).unwrap();
        assert_eq!(p.alpha_j, 0.00475);
        assert_eq!(p.psi, 0.0);
        assert!(p.check_caps(0.05, 0.0).is_ok());
        let big = init_wealth(0.99, 1.5, 1.0).unwrap();
        assert!(matches!(
            alpha_spending_step(&big, 1.0, &spec(), 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn investing_nets_alpha() {
        let s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        let p = alpha_investing_step(&s, 0.00475, &spec(), 1.0).unwrap();
        assert!((p.alpha_j - 0.00475 / 1.00475).abs() < 1e-18);
        assert!((p.psi - p.phi - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ero_hits_both_caps() {
        let s = init_wealth(0.05, 0.95, 1000.0).unwrap();
        for &n in &[1.0, 3.0, 10.0] {
            let p = ero_step(&s, 0.00475, &spec(), n).unwrap();
            let (c1, c2) = p.reward_caps(0.05);
            assert!((c1 - c2).abs() < 1e-9, "{c1} {c2}");
            assert!((p.phi / p.rho - p.phi / p.alpha_j + 1.0).abs() < 1e-9);
            assert!(p.check_caps(0.05, 1e-12).is_ok());
        }
    }
}
