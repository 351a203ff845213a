//! α-investing with sampling cost: the no_std engine.
//!
//! This crate is the allocation-only core of `alpha-ledger`. It contains no IO
//! and builds under `#![no_std]` with `alloc`:
//!
//! - [`gauss`]: standard-normal numerics, one-sided z-test power and its
//!   sample-size inversion.
//! - [`ledger`]: the (α, $) wealth state machine, mFDR estimation and the
//!   sub/super/martingale regime diagnostics.
//! - [`policy`]: spending schemes and the baseline investing rules
//!   (α-spending, Foster-Stine α-investing, ERO investing).
//! - [`caero`]: the cost-aware ERO solver, its finite-horizon extension and a
//!   brute-force verification oracle.

#![no_std]

extern crate alloc;

pub mod caero;
pub mod error;
pub mod gauss;
pub mod ledger;
pub mod policy;

pub use caero::{
    brute_force_oracle, equalizing_residuals, solve_finite_horizon, solve_one_step, AnteRule,
    Binding, CaeroPolicy, CaeroSolution, HorizonProblem, Selection, SolverConfig,
};
pub use error::{Error, Result};
pub use gauss::{
    power_one_sided, sample_size_for_power, std_normal_cdf, std_normal_quantile,
    z_test_one_sided, PowerQuery, ZTest,
};
pub use ledger::{
    classify_regime, expected_increment, init_wealth, lemma1_bound, mfdr_estimate, HistoryEntry,
    HypothesisSpec, Outcome, Regime, RegimeReport, TestParams, WealthState,
};
pub use policy::{
    alpha_investing_step, alpha_spending_step, ero_step, scheme_phi, Decision, InvestingRule,
    Policy, SchemeKind, SchemePolicy, SpendingScheme,
};
