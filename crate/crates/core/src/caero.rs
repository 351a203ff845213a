//! Cost-aware ERO: choose (φ, α_j, ψ, ρ, n) jointly so that nature's choice
//! between a true and a false null leaves the expected α-wealth unchanged.
//!
//! # Reduction
//!
//! With the equalizing constraint E[R]ψ = φ, the expected reward equals the
//! ante, so the objective is φ itself. Writing κ = q(1 − α)/((1 − q)α), the
//! equalizing reward φ/Pr[R=1] fits under both mFDR caps iff ρ ≥ κ·α_j, and
//! it sits exactly on the cap intersection iff ρ = κ·α_j. On that curve
//!
//! ```text
//! φ = κα_j/(κ − 1),   ψ = 1/(κ − 1) + α,   sup φ = 1/(κ − 1)
//! ```
//!
//! so φ grows with n along the curve towards the supremum. The optimum is
//! therefore either the ante cap (α-wealth binding, closed form) or the largest
//! φ reachable at the sample-size bound (a one-dimensional root in α_j).
//!
//! Only when the optimum is the ante cap is there a range of sample sizes that
//! attain it; [`Selection`] picks a point from that range.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, exp, floor, log, sqrt};

use crate::error::{Error, Result};
use crate::gauss::{self, inv_cdf, ln_sf, upper_z};
use crate::ledger::{HypothesisSpec, TestParams, WealthState};
use crate::policy::{Decision, Policy};

/// Which optimal point to return when the ante cap binds and a range of
/// sample sizes attains it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Selection {
    /// Reward on both caps (the ERO intersection); the smallest such n.
    #[default]
    Intersection,
    /// Power as close to `init_rho` as the feasible range allows; reward is
    /// the equalizing value φ/Pr[R=1], at or below the caps.
    TargetPower,
}

/// Replacement for the `a·W_α` ante cap.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AnteRule {
    /// φ ≤ scale·(1 − q)·W_α.
    NullComplement { scale: f64 },
}

impl AnteRule {
    fn cap(&self, q: f64, w_alpha: f64) -> f64 {
        match *self {
            AnteRule::NullComplement { scale } => scale * (1.0 - q) * w_alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SolverConfig {
    /// Proportion of α-wealth the ante may use.
    #[cfg_attr(feature = "serde", serde(alias = "a"))]
    pub ante_fraction: f64,
    pub n_cap: Option<f64>,
    /// Starting level for the sample-bound root search.
    pub init_alpha: f64,
    /// Target power for [`Selection::TargetPower`].
    pub init_rho: f64,
    pub residual_tol: f64,
    pub max_restarts: u32,
    pub ante_fraction_rule: Option<AnteRule>,
    pub selection: Selection,
    /// Priors outside [band, 1 − band] are skipped rather than solved.
    pub prior_band: f64,
    /// With an effectively unbounded n, φ only approaches its supremum; the
    /// solver stops at the smallest n within this relative gap of it.
    pub sup_rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            ante_fraction: 0.1,
            n_cap: None,
            init_alpha: 1e-3,
            init_rho: 0.9,
            residual_tol: 1e-10,
            max_restarts: 10,
            ante_fraction_rule: None,
            selection: Selection::Intersection,
            prior_band: 1e-6,
            sup_rel_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ante_fraction > 0.0 && self.ante_fraction <= 1.0) {
            return Err(Error::Domain("ante fraction must lie in (0, 1]"));
        }
        if let Some(cap) = self.n_cap {
            if !(cap > 0.0) {
                return Err(Error::Domain("sample-size cap must be positive"));
            }
        }
        if !(self.init_alpha > 0.0 && self.init_alpha < 1.0) {
            return Err(Error::Domain("initial level must lie in (0, 1)"));
        }
        if !(self.init_rho > 0.0 && self.init_rho <= 1.0) {
            return Err(Error::Domain("initial power must lie in (0, 1]"));
        }
        if !(self.residual_tol > 0.0) || !(self.sup_rel_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive"));
        }
        if !(self.prior_band > 0.0 && self.prior_band < 0.5) {
            return Err(Error::Domain("prior band must lie in (0, 0.5)"));
        }
        if let Some(AnteRule::NullComplement { scale }) = self.ante_fraction_rule {
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(Error::Domain("ante rule scale must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// The ante cap for a hypothesis with prior `q` at α-wealth `w_alpha`.
    pub fn ante_cap(&self, q: f64, w_alpha: f64) -> f64 {
        match &self.ante_fraction_rule {
            Some(rule) => rule.cap(q, w_alpha),
            None => self.ante_fraction * w_alpha,
        }
    }
}

/// The constraint that limited φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Binding {
    /// φ equals the ante cap.
    AlphaWealth,
    /// n sits at the configured sample-size cap.
    SampleCap,
    /// n sits at what the dollar budget (or its horizon allocation) affords.
    DollarBudget,
    /// n is effectively unbounded and φ is within `sup_rel_tol` of 1/(κ − 1).
    Supremum,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaeroSolution {
    pub params: TestParams,
    /// Expected reward Pr[R=1]·ψ.
    pub objective: f64,
    pub binding: Option<Binding>,
    pub skipped: bool,
    pub diagnostic: Option<String>,
    /// Jittered restarts used by the sample-bound root search.
    pub restarts: u32,
}

impl CaeroSolution {
    fn skip(reason: impl Into<String>) -> Self {
        CaeroSolution {
            params: TestParams {
                phi: 0.0,
                alpha_j: 0.0,
                psi: 0.0,
                rho: 0.0,
                n: 0.0,
            },
            objective: 0.0,
            binding: None,
            skipped: true,
            diagnostic: Some(reason.into()),
            restarts: 0,
        }
    }

    /// Parameters for data collection: n is rounded up (down if the budget
    /// cannot cover the extra sample), ρ is recomputed at the integer n and
    /// ψ re-derived so it stays under both caps and the expected α-wealth
    /// change stays at or below zero. `None` if not even one sample is affordable.
    pub fn execute(
        &self,
        spec: &HypothesisSpec,
        alpha_global: f64,
        w_dollar: f64,
    ) -> Option<TestParams> {
        if self.skipped {
            return None;
        }
        let mut n = ceil(self.params.n * (1.0 - 1e-12)).max(1.0);
        if n * spec.cost > w_dollar {
            n = floor(w_dollar / spec.cost);
        }
        if n < 1.0 {
            return None;
        }
        Some(execute_at(&self.params, spec, alpha_global, spec.q, n))
    }
}

/// Re-evaluates `params` at sample size `n`, keeping φ and α_j: ρ from the
/// power function, ψ = min(φ/ρ + α, φ/α_j + α − 1, φ/Pr[R=1]).
pub fn execute_at(
    params: &TestParams,
    spec: &HypothesisSpec,
    alpha_global: f64,
    q: f64,
    n: f64,
) -> TestParams {
    let rho = gauss::power(params.alpha_j, gauss::shift(spec.theta_bar, spec.sigma, n));
    let mut out = TestParams { rho, n, ..*params };
    let p1 = out.rejection_probability(q);
    out.psi = out.reward_cap(alpha_global).min(out.phi / p1).max(0.0);
    out
}

/// κ = q(1 − α)/((1 − q)α): the power-to-level ratio at which the equalizing
/// reward meets the caps.
pub fn kappa(q: f64, alpha_global: f64) -> f64 {
    q * (1.0 - alpha_global) / ((1.0 - q) * alpha_global)
}

/// Continuous n at which level `a` reaches power `rho` for unit-sample shift `d1`.
fn n_for(a: f64, rho: f64, d1: f64) -> f64 {
    let d = (upper_z(a) + inv_cdf(rho)) / d1;
    d * d
}

/// splitmix64, used to jitter restart points deterministically.
fn jitter(seed: u64) -> f64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

const LN_ALPHA_FLOOR: f64 = -690.0;

/// Solves ρ(α_j, δ) = κ·α_j for α_j ∈ (e^-690, 1/κ] by safeguarded Newton in
/// t = ln α_j. Returns the root and the number of restarts used.
fn cap_intersection_level(
    kappa: f64,
    delta: f64,
    init_alpha: f64,
    max_restarts: u32,
) -> Option<(f64, u32)> {
    let ln_k = log(kappa);
    let f = |t: f64| -> f64 {
        let z = upper_z(exp(t));
        ln_sf(z - delta) - ln_k - t
    };
    let t_top = -ln_k;
    let f_top = f(t_top);
    if f_top >= 0.0 {
        return Some((1.0 / kappa, 0));
    }
    if !(f(LN_ALPHA_FLOOR) > 0.0) {
        return None;
    }
    for restart in 0..=max_restarts {
        let mut t0 = log(init_alpha);
        if restart > 0 {
            let u = jitter(u64::from(restart));
            t0 = LN_ALPHA_FLOOR + u * (t_top - LN_ALPHA_FLOOR);
        }
        let (mut lo, mut hi) = (LN_ALPHA_FLOOR, t_top);
        let mut t = t0.clamp(lo, hi);
        let mut converged = false;
        for _ in 0..400 {
            let ft = f(t);
            if !ft.is_finite() {
                break;
            }
            if ft.abs() <= 1e-14 {
                converged = true;
                break;
            }
            if ft > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
                converged = true;
                break;
            }
            let z = upper_z(exp(t));
            let ln_rho = ln_sf(z - delta);
            let slope = exp(t + z * delta - 0.5 * delta * delta - ln_rho) - 1.0;
            let newton = t - ft / slope;
            t = if slope < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        if converged {
            return Some((exp(t), restart));
        }
    }
    None
}

/// Largest equalizing ante reachable at sample size `n` with the reward on
/// both caps, with its level.
fn intersection_at_n(kappa: f64, d1: f64, n: f64, cfg: &SolverConfig) -> Option<(f64, f64, u32)> {
    let (a, r) = cap_intersection_level(kappa, d1 * sqrt(n), cfg.init_alpha, cfg.max_restarts)?;
    Some((a, kappa * a / (kappa - 1.0), r))
}

struct Core {
    solution: CaeroSolution,
    /// Smallest n that attains the solution's φ.
    n_min: f64,
}

/// Shared one-step solver; `n_limit` is an extra allocation bound from a horizon plan.
fn solve_core(
    spec: &HypothesisSpec,
    w_alpha: f64,
    w_dollar: f64,
    alpha: f64,
    cfg: &SolverConfig,
    n_limit: Option<f64>,
) -> Result<Core> {
    spec.validate()?;
    cfg.validate()?;
    let q = spec.q;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DegeneratePrior(q));
    }
    let skip = |msg: &str| -> Result<Core> {
        Ok(Core {
            solution: CaeroSolution::skip(msg),
            n_min: 0.0,
        })
    };
    if q < cfg.prior_band || q > 1.0 - cfg.prior_band {
        return skip("prior outside the solvable band; clamped to a skip");
    }
    if !(w_alpha > 0.0) {
        return skip("no alpha-wealth left");
    }
    if !(spec.theta_bar > 0.0) {
        return skip("zero effect bound: power cannot exceed the level");
    }
    let phi_cap = cfg.ante_cap(q, w_alpha).min(w_alpha);
    if !(phi_cap > 0.0) {
        return skip("ante cap is zero");
    }
    let d1 = spec.theta_bar / spec.sigma;
    let affordable = w_dollar / spec.cost;
    let (mut n_max, mut n_bind) = match cfg.n_cap {
        Some(cap) if cap <= affordable => (cap, Binding::SampleCap),
        _ => (affordable, Binding::DollarBudget),
    };
    if let Some(l) = n_limit {
        if l < n_max {
            n_max = l;
            n_bind = Binding::DollarBudget;
        }
    }
    if !(n_max > 0.0) {
        return skip("no sample can be afforded");
    }
    let k = kappa(q, alpha);

    // Locate the optimal φ and the smallest n attaining it.
    let mut restarts = 0;
    let (phi, binding, intersection) = if k > 1.0 {
        let phi_sup = 1.0 / (k - 1.0);
        let mut branch_a = None;
        if phi_cap < phi_sup {
            let a = phi_cap * (k - 1.0) / k;
            let rho = k * a;
            let n = n_for(a, rho, d1);
            if n <= n_max {
                branch_a = Some((a, rho, n));
            }
        }
        match branch_a {
            Some(point) => (phi_cap, Binding::AlphaWealth, Some(point)),
            None => {
                let Some((mut a, mut phi, r)) = intersection_at_n(k, d1, n_max, cfg) else {
                    return skip("sample-bound root search failed on every restart");
                };
                restarts = r;
                let mut n = n_max;
                let mut binding = n_bind;
                if phi >= (1.0 - cfg.sup_rel_tol) * phi_sup {
                    // Trim n to the smallest value within the tolerance of the supremum.
                    let target = (1.0 - cfg.sup_rel_tol) * phi_sup;
                    let (mut lo, mut hi) = (log(1e-12_f64.max(n_max * 1e-300)), log(n_max));
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        match intersection_at_n(k, d1, exp(mid), cfg) {
                            Some((_, p, _)) if p >= target => hi = mid,
                            _ => lo = mid,
                        }
                        if hi - lo < 1e-13 {
                            break;
                        }
                    }
                    if let Some((a2, p2, _)) = intersection_at_n(k, d1, exp(hi), cfg) {
                        a = a2;
                        phi = p2;
                        n = exp(hi);
                        binding = Binding::Supremum;
                    }
                }
                if phi > phi_cap {
                    // Rounding at the branch boundary: fall back to the closed form.
                    phi = phi_cap;
                    a = phi * (k - 1.0) / k;
                    n = n_for(a, k * a, d1).min(n_max);
                    binding = Binding::AlphaWealth;
                }
                if !(phi > 0.0) || !(a > 0.0) {
                    return skip("equalizing ante is negligible at the sample bound");
                }
                (phi, binding, Some((a, k * a, n)))
            }
        }
    } else {
        // q ≤ α: the equalizing reward is below the caps for every level, so
        // any ante up to the cap is attainable with some sample size.
        (phi_cap, Binding::AlphaWealth, None)
    };

    let (params, n_min) = match (cfg.selection, intersection) {
        (Selection::Intersection, Some((a, rho, n))) => {
            let mut p = TestParams {
                phi,
                alpha_j: a,
                psi: 0.0,
                rho,
                n,
            };
            p.psi = p.reward_cap(alpha);
            (p, n)
        }
        (Selection::Intersection, None) => {
            return skip("prior null probability at or below the target level: the reward caps cannot be equalized at their intersection");
        }
        (Selection::TargetPower, point) => {
            let rho_lo = point.map_or(1e-12, |(_, r, _)| r);
            let n_min = point.map_or(0.0, |(_, _, n)| n);
            let along = |rho: f64| -> (f64, f64) {
                let a = phi * rho / (phi + rho);
                (a, n_for(a, rho, d1))
            };
            let unique = binding != Binding::AlphaWealth;
            let rho = if unique {
                rho_lo
            } else {
                let top = 1.0 - 1e-12;
                let rho_hi = if along(top).1 <= n_max {
                    top
                } else {
                    let (mut lo, mut hi) = (rho_lo, top);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if along(mid).1 <= n_max {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                };
                cfg.init_rho.min(top).clamp(rho_lo, rho_hi.max(rho_lo))
            };
            match point {
                Some((a, r, n)) if rho == r => {
                    let mut p = TestParams {
                        phi,
                        alpha_j: a,
                        psi: 0.0,
                        rho: r,
                        n,
                    };
                    p.psi = p.reward_cap(alpha);
                    (p, n_min)
                }
                _ => {
                    let (a, n) = along(rho);
                    let mut p = TestParams {
                        phi,
                        alpha_j: a,
                        psi: 0.0,
                        rho,
                        n,
                    };
                    p.psi = phi / p.rejection_probability(q);
                    p.psi = p.psi.min(p.reward_cap(alpha));
                    (p, n_min)
                }
            }
        }
    };

    if let Err(why) = verify(&params, spec, alpha, phi_cap, n_max, cfg.residual_tol) {
        return skip(&format!("solution failed verification: {why}"));
    }
    Ok(Core {
        solution: CaeroSolution {
            objective: params.rejection_probability(q) * params.psi,
            params,
            binding: Some(binding),
            skipped: false,
            diagnostic: None,
            restarts,
        },
        n_min,
    })
}

fn verify(
    p: &TestParams,
    spec: &HypothesisSpec,
    alpha: f64,
    phi_cap: f64,
    n_max: f64,
    tol: f64,
) -> core::result::Result<(), &'static str> {
    let finite = [p.phi, p.alpha_j, p.psi, p.rho, p.n]
        .iter()
        .all(|v| v.is_finite());
    if !finite || !(p.alpha_j > 0.0) || !(p.n > 0.0) {
        return Err("non-finite or non-positive parameters");
    }
    if (p.phi / p.rho - p.phi / p.alpha_j + 1.0).abs() > tol * (p.phi / p.alpha_j).max(1.0) {
        return Err("ERO equality residual");
    }
    let power = gauss::power(p.alpha_j, gauss::shift(spec.theta_bar, spec.sigma, p.n));
    if (p.rho - power).abs() > tol {
        return Err("power residual");
    }
    let inc = p.rejection_probability(spec.q) * p.psi - p.phi;
    if inc.abs() > tol * p.phi.max(1.0) {
        return Err("equalizing residual");
    }
    if p.psi > p.reward_cap(alpha) + tol {
        return Err("reward above the mFDR caps");
    }
    if p.phi > phi_cap * (1.0 + 1e-12) {
        return Err("ante above its cap");
    }
    if p.n > n_max * (1.0 + 1e-12) {
        return Err("sample size above its bound");
    }
    Ok(())
}

/// Solves the one-step cost-aware ERO program for `spec` at the current ledger.
pub fn solve_one_step(
    spec: &HypothesisSpec,
    wealth: &WealthState,
    config: &SolverConfig,
) -> Result<CaeroSolution> {
    solve_core(
        spec,
        wealth.w_alpha(),
        wealth.w_dollar(),
        wealth.alpha_global(),
        config,
        None,
    )
    .map(|c| c.solution)
}

/// Upcoming hypotheses planned jointly from the current ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonProblem {
    pub specs: Vec<HypothesisSpec>,
    pub wealth: WealthState,
}

/// Longest supported planning horizon.
pub const MAX_HORIZON: usize = 5;

/// Plans the next H = `specs.len()` tests.
///
/// Each step is individually equalizing, so every pure strategy of nature has
/// zero expected α-wealth change and the expected total reward is Σφ_i; later
/// steps are solved at the expected α-wealth after the earlier ones. Steps
/// couple only through the shared dollar budget: if every step's smallest
/// optimal n fits, each gets it; otherwise samples are water-filled across
/// steps (Lagrangian bisection on the price of a dollar).
pub fn solve_finite_horizon(
    problem: &HorizonProblem,
    config: &SolverConfig,
) -> Result<Vec<CaeroSolution>> {
    let h = problem.specs.len();
    if h == 0 || h > MAX_HORIZON {
        return Err(Error::Domain("horizon must lie in 1..=5"));
    }
    for s in &problem.specs {
        s.validate()?;
        if !(s.q > 0.0 && s.q < 1.0) {
            return Err(Error::DegeneratePrior(s.q));
        }
    }
    let w = &problem.wealth;
    if h == 1 {
        return Ok(vec![solve_one_step(&problem.specs[0], w, config)?]);
    }
    let alpha = w.alpha_global();
    let budget = w.w_dollar();

    // Unconstrained per-step solutions at expected wealth.
    let mut free = Vec::with_capacity(h);
    let mut w_exp = w.w_alpha();
    for s in &problem.specs {
        let c = solve_core(s, w_exp, budget, alpha, config, None)?;
        if !c.solution.skipped {
            let p = &c.solution.params;
            w_exp += p.rejection_probability(s.q) * p.psi - p.phi;
        }
        free.push(c);
    }
    let need: Vec<f64> = free
        .iter()
        .map(|c| if c.solution.skipped { 0.0 } else { c.n_min })
        .collect();
    let spend: f64 = need
        .iter()
        .zip(&problem.specs)
        .map(|(n, s)| n * s.cost)
        .sum();

    let limits: Vec<f64> = if spend <= budget {
        problem
            .specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let others = spend - need[i] * s.cost;
                (budget - others) / s.cost
            })
            .collect()
    } else {
        water_fill(&problem.specs, &free, &need, budget, alpha, config)
    };

    let mut out = Vec::with_capacity(h);
    let mut w_exp = w.w_alpha();
    for (i, s) in problem.specs.iter().enumerate() {
        let c = if limits[i] > 0.0 {
            solve_core(s, w_exp, budget, alpha, config, Some(limits[i]))?.solution
        } else {
            CaeroSolution::skip("no budget allocated to this step")
        };
        if !c.skipped {
            let p = &c.params;
            w_exp += p.rejection_probability(s.q) * p.psi - p.phi;
        }
        out.push(c);
    }
    Ok(out)
}

/// Optimal φ of a step as a function of its sample allocation.
fn step_value(spec: &HypothesisSpec, free: &Core, alpha: f64, cfg: &SolverConfig, n: f64) -> f64 {
    if free.solution.skipped || !(n > 0.0) {
        return 0.0;
    }
    let phi_star = free.solution.params.phi;
    if n >= free.n_min {
        return phi_star;
    }
    let k = kappa(spec.q, alpha);
    if k <= 1.0 {
        return phi_star;
    }
    match intersection_at_n(k, spec.theta_bar / spec.sigma, n, cfg) {
        Some((_, phi, _)) => phi.min(phi_star),
        None => 0.0,
    }
}

fn water_fill(
    specs: &[HypothesisSpec],
    free: &[Core],
    need: &[f64],
    budget: f64,
    alpha: f64,
    cfg: &SolverConfig,
) -> Vec<f64> {
    const GRID: usize = 240;
    // Candidate allocations per step: 0 plus a log grid up to the need.
    let grids: Vec<Vec<(f64, f64)>> = specs
        .iter()
        .zip(free)
        .zip(need)
        .map(|((s, f), &nd)| {
            let mut g = vec![(0.0, 0.0)];
            if nd > 0.0 {
                let lo = log(nd * 1e-6);
                let hi = log(nd);
                for i in 0..=GRID {
                    let n = exp(lo + (hi - lo) * i as f64 / GRID as f64);
                    g.push((n, step_value(s, f, alpha, cfg, n)));
                }
            }
            g
        })
        .collect();
    let best_at = |lambda: f64| -> Vec<f64> {
        grids
            .iter()
            .zip(specs)
            .enumerate()
            .map(|(i, (g, s))| {
                let mut bi = 0;
                let mut bv = f64::NEG_INFINITY;
                for (j, &(n, v)) in g.iter().enumerate() {
                    let score = v - lambda * s.cost * n;
                    if score > bv {
                        bv = score;
                        bi = j;
                    }
                }
                if bi == 0 || g.len() < 3 {
                    return g[bi].0;
                }
                // Golden-section refinement between the neighbouring grid points.
                let (mut a, mut b) = (g[bi - 1].0, g[(bi + 1).min(g.len() - 1)].0);
                let score =
                    |n: f64| step_value(s, &free[i], alpha, cfg, n) - lambda * s.cost * n;
                let gr = 0.618_033_988_749_894_9;
                let mut c = b - gr * (b - a);
                let mut d = a + gr * (b - a);
                let (mut fc, mut fd) = (score(c), score(d));
                for _ in 0..60 {
                    if fc >= fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - gr * (b - a);
                        fc = score(c);
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + gr * (b - a);
                        fd = score(d);
                    }
                }
                let n = 0.5 * (a + b);
                if score(n) >= bv {
                    n
                } else {
                    g[bi].0
                }
            })
            .collect()
    };
    let cost_of = |ns: &[f64]| -> f64 { ns.iter().zip(specs).map(|(n, s)| n * s.cost).sum() };
    let (mut lo, mut hi) = (0.0_f64, 1e-12_f64);
    let mut alloc = best_at(hi);
    while cost_of(&alloc) > budget && hi < 1e300 {
        lo = hi;
        hi *= 4.0;
        alloc = best_at(hi);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let a = best_at(mid);
        if cost_of(&a) <= budget {
            hi = mid;
            alloc = a;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    alloc
}

/// Outcome probabilities over the tested steps of a pure strategy.
///
/// `mask` selects the tested steps, with step 1 as the most significant of
/// `q_seq.len()` bits; outcome index bit i (same ordering) set means the null
/// of that tested step is false.
pub fn path_probabilities(q_seq: &[f64], mask: u32) -> Vec<f64> {
    let h = q_seq.len();
    let tested: Vec<usize> = (0..h).filter(|&i| mask >> (h - 1 - i) & 1 == 1).collect();
    let m = tested.len();
    (0..1u32 << m)
        .map(|outcome| {
            tested
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    if outcome >> (m - 1 - k) & 1 == 1 {
                        1.0 - q_seq[i]
                    } else {
                        q_seq[i]
                    }
                })
                .product()
        })
        .collect()
}

/// Expected α-wealth change under every pure strategy of nature that conducts
/// at least one test, ordered by strategy mask from all-tested downwards
/// (for H = 2: TT, TS, ST).
pub fn equalizing_residuals(params: &[TestParams], q_seq: &[f64]) -> Vec<f64> {
    let h = params.len().min(q_seq.len());
    let full = (1u32 << h) - 1;
    (1..=full)
        .rev()
        .map(|mask| {
            let tested: Vec<usize> = (0..h).filter(|&i| mask >> (h - 1 - i) & 1 == 1).collect();
            let m = tested.len();
            let probs = path_probabilities(&q_seq[..h], mask);
            probs
                .iter()
                .enumerate()
                .map(|(outcome, &pr)| {
                    let payoff: f64 = tested
                        .iter()
                        .enumerate()
                        .map(|(k, &i)| {
                            let p = &params[i];
                            let alt = outcome >> (m - 1 - k) & 1 == 1;
                            let reject = if alt { p.rho } else { p.alpha_j };
                            -p.phi + reject * p.psi
                        })
                        .sum();
                    pr * payoff
                })
                .sum()
        })
        .collect()
}

/// Exhaustive-search solution of the same program, for verification.
///
/// Scans a log-spaced `grid_resolution²` grid over (α_j, n). At each point ρ
/// comes from the power function, φ from the ERO equality and ψ from the
/// equalizing constraint; points violating the reward caps, the ante cap or
/// the sample bound are discarded. The best point is refined by bisection on
/// the feasibility boundary in α_j and golden-section search in n.
pub fn brute_force_oracle(
    spec: &HypothesisSpec,
    wealth: &WealthState,
    config: &SolverConfig,
    grid_resolution: usize,
) -> Result<CaeroSolution> {
    spec.validate()?;
    config.validate()?;
    if grid_resolution < 100 {
        return Err(Error::Domain("grid resolution must be at least 100"));
    }
    let q = spec.q;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DegeneratePrior(q));
    }
    if q < config.prior_band || q > 1.0 - config.prior_band {
        return Ok(CaeroSolution::skip("prior outside the solvable band"));
    }
    let alpha = wealth.alpha_global();
    let phi_cap = config.ante_cap(q, wealth.w_alpha()).min(wealth.w_alpha());
    let affordable = wealth.w_dollar() / spec.cost;
    let n_max = config.n_cap.map_or(affordable, |c| c.min(affordable));
    if !(phi_cap > 0.0) || !(n_max > 0.0) || !(spec.theta_bar > 0.0) {
        return Ok(CaeroSolution::skip("empty feasible set"));
    }
    let d1 = spec.theta_bar / spec.sigma;

    // φ implied at (α_j, n), if the point is feasible.
    let point = |a: f64, n: f64| -> Option<TestParams> {
        let rho = gauss::power(a, d1 * sqrt(n));
        if !(rho > a) {
            return None;
        }
        let phi = a * rho / (rho - a);
        if phi > phi_cap {
            return None;
        }
        let mut p = TestParams {
            phi,
            alpha_j: a,
            psi: 0.0,
            rho,
            n,
        };
        p.psi = phi / p.rejection_probability(q);
        if p.psi > p.reward_cap(alpha) * (1.0 + 1e-12) {
            return None;
        }
        Some(p)
    };

    let res = grid_resolution;
    let (la_lo, la_hi) = (log(1e-14), log(0.999));
    let n_lo = (n_max * 1e-9).min(1e-3);
    let (ln_lo, ln_hi) = (log(n_lo), log(n_max));
    let a_at = |i: usize| exp(la_lo + (la_hi - la_lo) * i as f64 / (res - 1) as f64);
    let n_at = |k: usize| exp(ln_lo + (ln_hi - ln_lo) * k as f64 / (res - 1) as f64);

    let mut best: Option<(usize, TestParams)> = None;
    for k in 0..res {
        let n = n_at(k);
        for i in 0..res {
            if let Some(p) = point(a_at(i), n) {
                if best.as_ref().map_or(true, |(_, b)| p.phi > b.phi) {
                    best = Some((k, p));
                }
            }
        }
    }
    let Some((k_best, grid_best)) = best else {
        return Ok(CaeroSolution::skip("empty feasible set"));
    };

    // Largest feasible φ at fixed n: feasibility is monotone in α_j, so bisect
    // the boundary in log α_j.
    let best_at_n = |n: f64| -> Option<TestParams> {
        let (mut lo, mut hi) = (la_lo, la_hi);
        point(exp(lo), n)?;
        if point(exp(hi), n).is_some() {
            return point(exp(hi), n);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if point(exp(mid), n).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        point(exp(lo), n)
    };
    let phi_at = |ln_n: f64| best_at_n(exp(ln_n)).map_or(f64::NEG_INFINITY, |p| p.phi);

    // The α_j grid is coarse near the boundary, so re-rank the n rows by
    // their refined boundary value.
    let (k_best, grid_best) = (0..res)
        .filter_map(|k| best_at_n(n_at(k)).map(|p| (k, p)))
        .fold((k_best, grid_best), |acc, (k, p)| {
            if p.phi > acc.1.phi {
                (k, p)
            } else {
                acc
            }
        });

    let step = (ln_hi - ln_lo) / (res - 1) as f64;
    let mut a = (log(n_at(k_best)) - step).max(ln_lo);
    let mut b = (log(n_at(k_best)) + step).min(ln_hi);
    let gr = 0.618_033_988_749_894_9;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (phi_at(c), phi_at(d));
    while b - a > 1e-6 * b.abs().max(1.0) {
        // Ties favour the smaller n.
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = phi_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = phi_at(d);
        }
    }
    let mut params = grid_best;
    for cand in [exp(a), exp(b), exp(0.5 * (a + b)), n_at(k_best)] {
        if let Some(p) = best_at_n(cand) {
            if p.phi > params.phi {
                params = p;
            }
        }
    }
    let binding = if params.phi >= phi_cap * (1.0 - 1e-9) {
        Binding::AlphaWealth
    } else if config.n_cap.is_some_and(|c| c <= affordable) {
        Binding::SampleCap
    } else {
        Binding::DollarBudget
    };
    Ok(CaeroSolution {
        objective: params.rejection_probability(q) * params.psi,
        params,
        binding: Some(binding),
        skipped: false,
        diagnostic: None,
        restarts: 0,
    })
}

/// Cost-aware ERO as a streaming policy with a receding horizon: plan the
/// next `horizon` tests, execute the first.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeroPolicy {
    pub config: SolverConfig,
    pub horizon: usize,
    /// Skip hypotheses whose optimal n exceeds this.
    pub skip_above_n: Option<f64>,
}

impl CaeroPolicy {
    pub fn new(config: SolverConfig) -> Self {
        CaeroPolicy {
            config,
            horizon: 1,
            skip_above_n: None,
        }
    }

    /// Plans from `state` and returns the first step's (continuous) solution.
    pub fn plan(&self, state: &WealthState, upcoming: &[HypothesisSpec]) -> Result<CaeroSolution> {
        let Some(first) = upcoming.first() else {
            return Err(Error::Domain("no hypothesis to plan for"));
        };
        let h = self.horizon.clamp(1, MAX_HORIZON).min(upcoming.len());
        if h <= 1 {
            return solve_one_step(first, state, &self.config);
        }
        let problem = HorizonProblem {
            specs: upcoming[..h].to_vec(),
            wealth: state.clone(),
        };
        let mut plan = solve_finite_horizon(&problem, &self.config)?;
        Ok(plan.swap_remove(0))
    }
}

impl Policy for CaeroPolicy {
    fn decide(&self, state: &WealthState, upcoming: &[HypothesisSpec]) -> Decision {
        let Some(spec) = upcoming.first() else {
            return Decision::Stop;
        };
        if state.w_dollar() < spec.cost {
            return Decision::Stop;
        }
        let sol = match self.plan(state, upcoming) {
            Ok(s) => s,
            Err(e) => return Decision::Skip(e.to_string()),
        };
        if sol.skipped {
            return Decision::Skip(sol.diagnostic.unwrap_or_default());
        }
        if let Some(cap) = self.skip_above_n {
            if sol.params.n > cap {
                return Decision::Skip(format!("optimal n {:.3} exceeds {cap}", sol.params.n));
            }
        }
        match sol.execute(spec, state.alpha_global(), state.w_dollar()) {
            Some(p) => Decision::Test(p),
            None => Decision::Stop,
        }
    }

    fn name(&self) -> &str {
        "caero"
    }
}
