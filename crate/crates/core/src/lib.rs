//! Lagrange-method solver and well-posedness diagnostics for the static
//! expected-utility problem
//!
//! ```text
//! maximize E[u(X)]  subject to  E[X ξ] = a,  X ≥ 0
//! ```
//!
//! where `u` is a utility with `u(0) = 0` satisfying the Inada conditions and
//! `ξ > 0` is a pricing kernel.
//!
//! The crate is organised bottom-up:
//!
//! * [`utility`] – utility models (power, square root, series-constructed,
//!   piecewise square-root/log) and their marginal/inverse-marginal maps.
//! * [`kernel`] – pricing-kernel distributions, negative moments and probes.
//! * [`expectation`] – divergence-aware expectations and series sums that
//!   report a certified finite value, certified divergence, or an explicit
//!   inconclusive verdict.
//! * [`solver`] – the budget curve `f(λ) = E[(u')⁻¹(λξ)ξ]`, its finiteness
//!   threshold, multiplier root finding, optimal wealth and unboundedness
//!   witnesses.
//! * [`classifier`] – the decision procedure that labels a
//!   (utility, kernel, budget) triple as ill-posed, attainable,
//!   non-attainable or indeterminate, together with the chain of results
//!   that justifies the label.
//! * [`config`], [`report`], [`selftest`], [`cli`] – the command-line front end.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod error;
pub mod expectation;
pub mod kernel;
pub mod numerics;
pub mod probe;
pub mod report;
pub mod selftest;
pub mod solver;
pub mod utility;

pub use classifier::{check_conditions, classify, classify_model, Classification, ConditionReport, Verdict};
pub use error::{ModelError, SolveError};
pub use expectation::{expect, mc_expect, series_sum, ExtendedValue, IntegrandSpec, Status};
pub use kernel::PricingKernel;
pub use numerics::Numerics;
pub use probe::{Evidence, ProbeOutcome, ProbeVerdict};
pub use solver::{
    estimate_lambda0, f_eval, optimal_solution, solve_multiplier, value_function,
    witness_unboundedness, LagrangeSolution, Lambda0Estimate, ValueOutcome, WitnessSolution,
};
pub use utility::{SeriesCoefficients, Utility};
