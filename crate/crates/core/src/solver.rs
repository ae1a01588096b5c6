//! The Lagrange scheme: `f(λ) = E[(u')⁻¹(λξ)ξ]`, its finiteness threshold
//! `λ₀` and limit `a₀ = f(λ₀+)`, the multiplier solving `f(λ) = a`, the
//! candidate optimum `X* = (u')⁻¹(λξ)` with its value, and constructive
//! witnesses of `V(a) = +∞`.

use serde::Serialize;

use crate::error::{NoMultiplier, SolveError};
use crate::expectation::{
    expect, expect_truncated, series_sum_ln, DivergenceEvidence, ExtendedValue, IntegrandSpec, SingularityHint,
};
use crate::kernel::PricingKernel;
use crate::numerics::Numerics;
use crate::utility::{SeriesCoefficients, Utility};

const LN_LAMBDA_MIN: f64 = -30.0 * std::f64::consts::LN_2;
const LN_LAMBDA_MAX: f64 = 30.0 * std::f64::consts::LN_2;
const MAX_BISECTIONS: usize = 200;

/// Which sum or integral produced a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Series,
    Quadrature,
    Exact,
}

/// `Σ aₙ λ^{-(n-shift)} E[ξ^{-(n-1)}] / w(n)` for a series utility, or `None`
/// when the fast path does not apply.
fn moment_series(
    utility: &Utility,
    kernel: &PricingKernel,
    lambda: f64,
    shift: f64,
    ln_weight: impl Fn(f64) -> f64,
    numerics: &Numerics,
) -> Option<ExtendedValue> {
    let coefficients = utility.series_coefficients()?;
    if !kernel.has_density() {
        return None;
    }
    let ln_lambda = lambda.ln();
    // coefficients matched to this kernel give aₙ M_{n-1} = 1/n² without cancellation
    let matched = matches!(coefficients, SeriesCoefficients::KernelMatched { kernel: k } if k == kernel);
    let ln_term = |n: u64| {
        let nf = n as f64;
        let ln_am = if matched {
            -2.0 * nf.ln()
        } else {
            let ln_a = coefficients.ln_coefficient(n);
            if ln_a == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            ln_a + kernel.ln_negative_moment_closed(nf - 1.0).unwrap_or(f64::NAN)
        };
        ln_am - (nf - shift) * ln_lambda - ln_weight(nf)
    };
    // a positive coefficient against an infinite moment
    for n in 2..=64u64 {
        if ln_term(n) == f64::INFINITY {
            return Some(ExtendedValue::diverged_analytic(format!(
                "a_{n} > 0 while E[ξ^-{}] = +∞",
                n - 1
            )));
        }
    }
    let last = match coefficients {
        SeriesCoefficients::Explicit { values } => Some(values.len() as u64 + 1),
        _ => None,
    };
    Some(series_sum_ln(ln_term, 2, last, numerics))
}

/// `f(λ)`, by the moment series when the utility is a series model and the
/// kernel has closed-form negative moments, else by quadrature.
pub fn f_eval(utility: &Utility, kernel: &PricingKernel, lambda: f64, numerics: &Numerics) -> ExtendedValue {
    f_eval_with_method(utility, kernel, lambda, numerics).0
}

pub fn f_eval_with_method(
    utility: &Utility,
    kernel: &PricingKernel,
    lambda: f64,
    numerics: &Numerics,
) -> (ExtendedValue, Method) {
    assert!(lambda > 0.0 && lambda.is_finite(), "λ must be positive and finite");
    match moment_series(utility, kernel, lambda, 0.0, |_| 0.0, numerics) {
        Some(v) => (v, Method::Series),
        None => (f_eval_quadrature(utility, kernel, lambda, numerics), method_for(kernel)),
    }
}

/// Method used by [`f_eval`] and [`value_at_multiplier`] for this model.
pub fn evaluation_method(utility: &Utility, kernel: &PricingKernel) -> Method {
    if utility.series_coefficients().is_some() && kernel.has_density() {
        Method::Series
    } else {
        method_for(kernel)
    }
}

fn method_for(kernel: &PricingKernel) -> Method {
    if kernel.has_density() {
        Method::Quadrature
    } else {
        Method::Exact
    }
}

/// `f(λ)` by the expectation engine regardless of any closed form.
pub fn f_eval_quadrature(utility: &Utility, kernel: &PricingKernel, lambda: f64, numerics: &Numerics) -> ExtendedValue {
    expect(kernel, &budget_integrand(utility, lambda), numerics)
}

/// `x ↦ (u')⁻¹(λx)·x`.
pub fn budget_integrand<'a>(utility: &'a Utility, lambda: f64) -> IntegrandSpec<'a> {
    let ln_lambda = lambda.ln();
    IntegrandSpec::from_ln(move |s: f64| utility.ln_inverse_marginal(ln_lambda + s) + s)
        .with_breakpoints(utility.marginal_breakpoints().into_iter().map(move |y| y / lambda))
        .with_singularity(SingularityHint::AtZero)
}

/// `x ↦ u((u')⁻¹(λx))`.
pub fn value_integrand<'a>(utility: &'a Utility, lambda: f64) -> IntegrandSpec<'a> {
    let ln_lambda = lambda.ln();
    IntegrandSpec::from_ln(move |s: f64| utility.ln_value_at_inverse_marginal(ln_lambda + s))
        .with_breakpoints(utility.marginal_breakpoints().into_iter().map(move |y| y / lambda))
        .with_singularity(SingularityHint::AtZero)
}

/// `E[u((u')⁻¹(λξ))]`.
pub fn value_at_multiplier(utility: &Utility, kernel: &PricingKernel, lambda: f64, numerics: &Numerics) -> ExtendedValue {
    // u(g(y)) = y g(y) + Σ aₙ y^{-(n-1)}/(n-1), so V = λ f(λ) + Σ aₙ λ^{-(n-1)} M_{n-1}/(n-1)
    if let Some(tail) = moment_series(utility, kernel, lambda, 1.0, |n| (n - 1.0).ln(), numerics) {
        let f = f_eval(utility, kernel, lambda, numerics);
        return f.scaled(lambda).plus(&tail);
    }
    expect(kernel, &value_integrand(utility, lambda), numerics)
}

/// Point of an f-curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FCurvePoint {
    pub lambda: f64,
    pub method: Method,
    pub f: ExtendedValue,
}

pub fn f_curve(utility: &Utility, kernel: &PricingKernel, lambdas: &[f64], numerics: &Numerics) -> Vec<FCurvePoint> {
    lambdas
        .iter()
        .map(|&lambda| {
            let (f, method) = f_eval_with_method(utility, kernel, lambda, numerics);
            FCurvePoint { lambda, method, f }
        })
        .collect()
}

/// `λ₀ = inf{λ : f(λ) < ∞}` and `a₀ = f(λ₀+)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lambda0Estimate {
    /// `0`, `+∞` or the upper end of the final bracket.
    #[serde(serialize_with = "crate::numerics::ser_extended_f64")]
    pub lambda0: f64,
    /// `f` is not finite below `bracket.0` (or is undecided there) and finite at `bracket.1`.
    pub bracket: (f64, f64),
    /// `Diverged` encodes `a₀ = +∞`.
    pub a0: ExtendedValue,
    /// Some evaluation near the boundary was inconclusive.
    pub approximate: bool,
}

impl Lambda0Estimate {
    pub fn a0_value(&self) -> Option<f64> {
        if self.a0.is_diverged() {
            Some(f64::INFINITY)
        } else {
            self.a0.value()
        }
    }
}

/// Finite / not finite, ignoring the divergence cap.
fn f_finite(utility: &Utility, kernel: &PricingKernel, ln_lambda: f64, numerics: &Numerics) -> Option<bool> {
    if let Some(atoms) = kernel.atoms() {
        // a finite sum is finite exactly when every term is
        let ok = atoms.iter().all(|(x, _)| utility.ln_inverse_marginal(ln_lambda + x.ln()) < f64::INFINITY);
        return Some(ok);
    }
    let v = f_eval(utility, kernel, ln_lambda.exp(), numerics);
    if v.is_finite() {
        Some(true)
    } else if v.is_diverged() {
        Some(false)
    } else {
        None
    }
}

/// Locate `λ₀` by bisection in `ln λ` over `[2^-30, 2^30]` on the
/// finite/divergent boundary of `f`, then `a₀` by right continuity.
pub fn estimate_lambda0(utility: &Utility, kernel: &PricingKernel, numerics: &Numerics) -> Lambda0Estimate {
    let structural = numerics.uncapped();
    let lo_min = LN_LAMBDA_MIN.exp();
    let hi_max = LN_LAMBDA_MAX.exp();
    if f_finite(utility, kernel, LN_LAMBDA_MIN, &structural) == Some(true) {
        return Lambda0Estimate {
            lambda0: 0.0,
            bracket: (0.0, lo_min),
            a0: ExtendedValue::diverged_analytic("λ₀ = 0 and f(λ) → +∞ as λ → 0⁺ by the Inada condition at 0"),
            approximate: false,
        };
    }
    match f_finite(utility, kernel, LN_LAMBDA_MAX, &structural) {
        Some(true) => {}
        Some(false) => {
            return Lambda0Estimate {
                lambda0: f64::INFINITY,
                bracket: (hi_max, f64::INFINITY),
                a0: ExtendedValue::inconclusive("a₀ is undefined when f ≡ +∞"),
                approximate: false,
            }
        }
        None => {
            return Lambda0Estimate {
                lambda0: f64::INFINITY,
                bracket: (hi_max, f64::INFINITY),
                a0: ExtendedValue::inconclusive("f undecided at the largest probe"),
                approximate: true,
            }
        }
    }
    let (mut lo, mut hi) = (LN_LAMBDA_MIN, LN_LAMBDA_MAX);
    let mut approximate = false;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 1e-10 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match f_finite(utility, kernel, mid, &structural) {
            Some(true) => hi = mid,
            Some(false) => lo = mid,
            None => {
                // keep the finite end certified
                approximate = true;
                lo = mid;
            }
        }
    }
    let lambda0 = hi.exp();
    let a0 = f_eval(utility, kernel, lambda0, numerics);
    Lambda0Estimate { lambda0, bracket: (lo.exp(), lambda0), a0, approximate }
}

/// Solve `f(λ) = a` by bisection in `ln λ`.
pub fn solve_multiplier(utility: &Utility, kernel: &PricingKernel, a: f64, numerics: &Numerics) -> Result<f64, SolveError> {
    let est = estimate_lambda0(utility, kernel, numerics);
    solve_multiplier_from(utility, kernel, a, &est, numerics)
}

/// As [`solve_multiplier`], reusing a `λ₀` estimate.
pub fn solve_multiplier_from(
    utility: &Utility,
    kernel: &PricingKernel,
    a: f64,
    est: &Lambda0Estimate,
    numerics: &Numerics,
) -> Result<f64, SolveError> {
    if !(a.is_finite() && a > 0.0) {
        return Err(SolveError::InvalidBudget(a));
    }
    if est.lambda0 == f64::INFINITY {
        return Err(SolveError::NoMultiplier(NoMultiplier::EverywhereInfinite));
    }
    let f = |ln_l: f64| f_eval(utility, kernel, ln_l.exp(), numerics);
    // lo: f(lo) ≥ a; hi: f(hi) ≤ a
    let mut lo: f64;
    if est.lambda0 > 0.0 {
        let a0 = match est.a0_value() {
            Some(v) => v,
            None => {
                return Err(SolveError::Inconclusive {
                    lo: est.bracket.0,
                    hi: est.bracket.1,
                    detail: "a₀ could not be evaluated".into(),
                })
            }
        };
        if a > a0 * (1.0 + numerics.budget_tol) {
            return Err(SolveError::NoMultiplier(NoMultiplier::BudgetAboveA0 { a, a0 }));
        }
        if a >= a0 {
            return Ok(est.lambda0);
        }
        lo = est.lambda0.ln();
    } else {
        lo = LN_LAMBDA_MIN;
        while let Some(v) = f(lo).value() {
            if v >= a {
                break;
            }
            lo *= 2.0;
            if lo < -700.0 {
                return Err(SolveError::BracketExhausted(format!("f stays below a = {a} for all λ probed")));
            }
        }
    }
    let mut step = 1.0;
    let mut hi = lo.max(0.0) + step;
    loop {
        let v = f(hi);
        match v.value() {
            Some(fv) if fv <= a => break,
            _ if v.is_inconclusive() => {
                return Err(SolveError::Inconclusive { lo: lo.exp(), hi: hi.exp(), detail: "f while expanding".into() })
            }
            _ => {}
        }
        lo = hi;
        step *= 2.0;
        hi += step;
        if hi > 700.0 {
            return Err(SolveError::BracketExhausted(format!("f stays above a = {a} for all λ probed")));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 || mid == lo || mid == hi {
            break;
        }
        let v = f(mid);
        match v.value() {
            Some(fv) if fv > a => lo = mid,
            Some(_) => hi = mid,
            None if v.is_diverged() => lo = mid,
            None => {
                return Err(SolveError::Inconclusive {
                    lo: lo.exp(),
                    hi: hi.exp(),
                    detail: format!("f inconclusive at λ = {}", mid.exp()),
                })
            }
        }
    }
    let lambda = (0.5 * (lo + hi)).exp();
    match f(lambda.ln()).value() {
        Some(fv) if (fv - a).abs() <= numerics.budget_tol * a => Ok(lambda),
        other => Err(SolveError::Inconclusive {
            lo: lo.exp(),
            hi: hi.exp(),
            detail: format!("f(λ) = {other:?} does not meet the budget {a} within tolerance"),
        }),
    }
}

/// The candidate optimum `X* = (u')⁻¹(λξ)` with its budget check and value.
#[derive(Debug, Clone, Serialize)]
pub struct LagrangeSolution {
    pub budget: f64,
    pub lambda: f64,
    /// Achieved `E[X*ξ]`.
    pub budget_check: ExtendedValue,
    /// `V(a) = E[u(X*)]`.
    pub value: ExtendedValue,
    #[serde(skip)]
    utility: Utility,
}

impl LagrangeSolution {
    /// Optimal terminal wealth for kernel realization `x`.
    pub fn wealth(&self, x: f64) -> f64 {
        self.utility.ln_inverse_marginal(self.lambda.ln() + x.ln()).exp()
    }
}

pub fn optimal_solution(
    utility: &Utility,
    kernel: &PricingKernel,
    a: f64,
    numerics: &Numerics,
) -> Result<LagrangeSolution, SolveError> {
    let est = estimate_lambda0(utility, kernel, numerics);
    optimal_solution_from(utility, kernel, a, &est, numerics)
}

pub fn optimal_solution_from(
    utility: &Utility,
    kernel: &PricingKernel,
    a: f64,
    est: &Lambda0Estimate,
    numerics: &Numerics,
) -> Result<LagrangeSolution, SolveError> {
    let lambda = solve_multiplier_from(utility, kernel, a, est, numerics)?;
    let budget_check = f_eval(utility, kernel, lambda, numerics);
    match budget_check.value() {
        Some(v) if (v - a).abs() <= numerics.budget_tol * a => {}
        _ => {
            return Err(SolveError::Inconclusive {
                lo: lambda,
                hi: lambda,
                detail: format!("budget check failed: {budget_check:?}"),
            })
        }
    }
    let value = value_at_multiplier(utility, kernel, lambda, numerics);
    if value.is_diverged() {
        return Err(SolveError::ValueDiverged { lambda });
    }
    if !value.is_finite() {
        return Err(SolveError::Inconclusive { lo: lambda, hi: lambda, detail: format!("value: {}", value.tag()) });
    }
    Ok(LagrangeSolution { budget: a, lambda, budget_check, value, utility: utility.clone() })
}

/// What is known about `V(a)`.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueOutcome {
    /// Attained by `X*`.
    Attained { value: ExtendedValue, lambda: f64 },
    /// Finite but not attained; `V(a) ≤ (a/b)·V(b)` for a reference budget `b < a`.
    UpperBounded { upper: f64, reference_budget: f64, reference_value: f64 },
    /// `V(a) = +∞`.
    Infinite { reason: String },
    Unknown { reason: String },
}

/// `V(a)`: attained value, a scaling bound, `+∞`, or unknown.
pub fn value_function(utility: &Utility, kernel: &PricingKernel, a: f64, numerics: &Numerics) -> ValueOutcome {
    let est = estimate_lambda0(utility, kernel, numerics);
    match optimal_solution_from(utility, kernel, a, &est, numerics) {
        Ok(sol) => ValueOutcome::Attained { value: sol.value, lambda: sol.lambda },
        Err(SolveError::ValueDiverged { lambda }) => ValueOutcome::Infinite {
            reason: format!("the budget-feasible X* at λ = {lambda} has E[u(X*)] = +∞"),
        },
        Err(SolveError::NoMultiplier(NoMultiplier::EverywhereInfinite)) => ValueOutcome::Infinite {
            reason: "f(λ) = +∞ for every λ > 0, hence V(a) = +∞ for every a > 0".into(),
        },
        Err(SolveError::NoMultiplier(NoMultiplier::BudgetAboveA0 { .. })) => {
            // reference at λ₀ (largest attainable budget), else at 2λ₀
            for lambda in [est.lambda0, 2.0 * est.lambda0] {
                let b = f_eval(utility, kernel, lambda, numerics);
                let v = value_at_multiplier(utility, kernel, lambda, numerics);
                if let (Some(b), Some(v)) = (b.value(), v.value()) {
                    if b > 0.0 && b <= a {
                        return ValueOutcome::UpperBounded {
                            upper: a / b * v,
                            reference_budget: b,
                            reference_value: v,
                        };
                    }
                }
            }
            ValueOutcome::Unknown { reason: "no finite reference value below the budget".into() }
        }
        Err(e) => ValueOutcome::Unknown { reason: e.to_string() },
    }
}

/// A budget-feasible wealth with expected utility above `m·a`.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessSolution {
    pub budget: f64,
    pub multiple: f64,
    /// Truncation `{α < ξ < β}` in log form; `α = e^{ln_alpha}` may underflow.
    pub ln_alpha: f64,
    pub ln_beta: f64,
    pub lambda1: f64,
    /// `E[X ξ]`.
    pub achieved_budget: ExtendedValue,
    /// `λ₁·a`, a lower bound on `E[u(X)]` because `u(x) ≥ x u'(x)`.
    pub achieved_utility_lower_bound: f64,
    /// `E[u(X)]` by quadrature.
    pub verified_utility: ExtendedValue,
}

impl WitnessSolution {
    pub fn alpha(&self) -> f64 {
        self.ln_alpha.exp()
    }

    pub fn beta(&self) -> f64 {
        self.ln_beta.exp()
    }
}

/// Build `X = (u')⁻¹(λ₁ξ)·1{α<ξ<β}` with `E[Xξ] = a` and `λ₁ > m`, which
/// forces `E[u(X)] ≥ λ₁ a > m a`. Requires `f(m) = +∞`.
pub fn witness_unboundedness(
    utility: &Utility,
    kernel: &PricingKernel,
    a: f64,
    multiple: f64,
    numerics: &Numerics,
) -> Result<WitnessSolution, SolveError> {
    if !(a.is_finite() && a > 0.0) {
        return Err(SolveError::InvalidBudget(a));
    }
    if !(multiple.is_finite() && multiple > 0.0) {
        return Err(SolveError::Precondition(format!("multiple must be positive, got {multiple}")));
    }
    let fm = f_eval(utility, kernel, multiple, &numerics.uncapped());
    if !fm.is_diverged() {
        return Err(SolveError::Precondition(format!(
            "f({multiple}) is {} rather than +∞; no witness exists at this multiple",
            fm.tag()
        )));
    }
    let truncated = |lambda: f64, ln_lo: f64, ln_hi: f64| {
        expect_truncated(kernel, &budget_integrand(utility, lambda), ln_lo, ln_hi, numerics)
    };
    // widen the truncation until the budget at λ = m exceeds a
    let mut window = None;
    for j in 0..=24 {
        let w = 2f64.powi(j);
        match truncated(multiple, -w, w).value() {
            Some(v) if v > a => {
                window = Some((-w, w));
                break;
            }
            Some(_) => {}
            None => {
                return Err(SolveError::Precondition(format!(
                    "truncated budget at λ = {multiple} is not finite on |ln ξ| < {w}"
                )))
            }
        }
    }
    let (ln_lo, ln_hi) = window.ok_or_else(|| {
        SolveError::BracketExhausted(format!("truncated budget at λ = {multiple} never exceeds a = {a}"))
    })?;
    // bisect λ₁ > m with truncated budget = a; it decreases in λ
    let (mut lo, mut hi) = (multiple.ln(), multiple.ln() + 1.0);
    loop {
        match truncated(hi.exp(), ln_lo, ln_hi).value() {
            Some(v) if v <= a => break,
            Some(_) => {
                lo = hi;
                hi += 2.0 * (hi - multiple.ln());
            }
            None => return Err(SolveError::Inconclusive { lo: lo.exp(), hi: hi.exp(), detail: "truncated budget".into() }),
        }
        if hi > 700.0 {
            return Err(SolveError::BracketExhausted("λ₁ search".into()));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 * mid.abs().max(1.0) || mid == lo || mid == hi {
            break;
        }
        match truncated(mid.exp(), ln_lo, ln_hi).value() {
            Some(v) if v > a => lo = mid,
            Some(_) => hi = mid,
            None => return Err(SolveError::Inconclusive { lo: lo.exp(), hi: hi.exp(), detail: "truncated budget".into() }),
        }
    }
    let lambda1 = (0.5 * (lo + hi)).exp();
    let achieved_budget = truncated(lambda1, ln_lo, ln_hi);
    match achieved_budget.value() {
        Some(v) if (v - a).abs() <= numerics.budget_tol * a => {}
        _ => {
            return Err(SolveError::Inconclusive {
                lo: lambda1,
                hi: lambda1,
                detail: format!("witness budget {achieved_budget:?} misses a = {a}"),
            })
        }
    }
    let verified_utility = expect_truncated(kernel, &value_integrand(utility, lambda1), ln_lo, ln_hi, numerics);
    Ok(WitnessSolution {
        budget: a,
        multiple,
        ln_alpha: ln_lo,
        ln_beta: ln_hi,
        lambda1,
        achieved_budget,
        achieved_utility_lower_bound: lambda1 * a,
        verified_utility,
    })
}

/// Divergence evidence of a value, if any (for reports).
pub fn divergence_evidence(v: &ExtendedValue) -> Option<&DivergenceEvidence> {
    match &v.status {
        crate::expectation::Status::Diverged { evidence } => Some(evidence),
        _ => None,
    }
}
