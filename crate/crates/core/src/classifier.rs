//! Well-posedness and attainability verdicts with the chain of results that
//! justifies them.
//!
//! Analytic certificates are tried before numeric probes: a positive
//! essential infimum, an everywhere-infinite budget map, a positive lower
//! bound on risk aversion, a positive lower bound on `x F'(x)/F(x)` near
//! zero, and finally the threshold test at `λ₀`. A step whose probe is
//! inconclusive is skipped and recorded; nothing defaults silently.

use serde::Serialize;

use crate::error::{NoMultiplier, SolveError};
use crate::expectation::ExtendedValue;
use crate::kernel::PricingKernel;
use crate::numerics::Numerics;
use crate::probe::{ProbeOutcome, ProbeVerdict};
use crate::solver::{
    estimate_lambda0, f_eval, optimal_solution_from, value_at_multiplier, LagrangeSolution, Lambda0Estimate,
};
use crate::utility::Utility;

/// Orders at which `E[ξ^{-α}]` is tested.
pub const NEGATIVE_MOMENT_ORDERS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MomentVerdict {
    AllFinite,
    SomeInfinite { alpha: f64 },
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct NegativeMoments {
    #[serde(flatten)]
    pub verdict: MomentVerdict,
    pub moments: Vec<(f64, ExtendedValue)>,
}

/// Every condition the decision procedure consults.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub essinf: f64,
    pub essinf_positive: bool,
    /// `liminf_{x→∞} R(x) > 0`?
    pub asymptotic_risk_aversion: ProbeOutcome,
    /// `limsup_{x→∞} u'(2x)/u'(x) < 1`?
    pub marginal_ratio: ProbeOutcome,
    /// `liminf_{x→0} x F'(x)/F(x) > 0`?
    pub density_ratio: ProbeOutcome,
    /// `E[u((u')⁻¹(ξ))]`.
    pub value_integral_at_1: ExtendedValue,
    pub negative_moments: NegativeMoments,
    /// `E[ln(1/ξ)]`.
    pub log_reciprocal_moment: ExtendedValue,
    pub lambda0: Lambda0Estimate,
}

/// Gather all probes and integrals for a model.
pub fn check_conditions(utility: &Utility, kernel: &PricingKernel, numerics: &Numerics) -> ConditionReport {
    let essinf = kernel.essential_infimum();
    let moments: Vec<(f64, ExtendedValue)> =
        NEGATIVE_MOMENT_ORDERS.iter().map(|&a| (a, kernel.negative_moment(a, numerics))).collect();
    let verdict = if let Some((a, _)) = moments.iter().find(|(_, m)| m.is_diverged()) {
        MomentVerdict::SomeInfinite { alpha: *a }
    } else if moments.iter().all(|(_, m)| m.is_finite()) {
        MomentVerdict::AllFinite
    } else {
        MomentVerdict::Inconclusive
    };
    ConditionReport {
        essinf,
        essinf_positive: essinf > 0.0,
        asymptotic_risk_aversion: utility.probe_asymptotic_risk_aversion(numerics),
        marginal_ratio: utility.probe_marginal_ratio(2.0, numerics),
        density_ratio: kernel.probe_density_ratio(numerics),
        value_integral_at_1: value_at_multiplier(utility, kernel, 1.0, numerics),
        negative_moments: NegativeMoments { verdict, moments },
        log_reciprocal_moment: kernel.log_reciprocal_moment(numerics),
        lambda0: estimate_lambda0(utility, kernel, numerics),
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    /// `V(a) = +∞` for every `a > 0`.
    IllPosedAll,
    WellPosedAttainable { solution: LagrangeSolution },
    /// Finite value, no optimum: the budget exceeds `a₀`.
    WellPosedNonAttainable { a0: f64 },
    /// Model-level: an optimum exists exactly for `0 < a ≤ a₀` (`a₀` may be `+∞`).
    AttainableUpTo {
        #[serde(serialize_with = "crate::numerics::ser_extended_f64")]
        a0: f64,
    },
    Indeterminate { blocking: Vec<String> },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::IllPosedAll => "IllPosedAll",
            Verdict::WellPosedAttainable { .. } => "WellPosedAttainable",
            Verdict::WellPosedNonAttainable { .. } => "WellPosedNonAttainable",
            Verdict::AttainableUpTo { .. } => "AttainableUpTo",
            Verdict::Indeterminate { .. } => "Indeterminate",
        }
    }

    /// `Some(true)` well-posed, `Some(false)` ill-posed, `None` undecided.
    pub fn well_posed(&self) -> Option<bool> {
        match self {
            Verdict::IllPosedAll => Some(false),
            Verdict::Indeterminate { .. } => None,
            _ => Some(true),
        }
    }
}

/// One applied result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStep {
    pub rule: &'static str,
    pub statement: &'static str,
    pub evidence: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    /// `None` for a budget-free model classification.
    pub budget: Option<f64>,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub theorem_chain: Vec<ChainStep>,
    pub conditions: ConditionReport,
}

struct Chain(Vec<ChainStep>);

impl Chain {
    fn push(&mut self, rule: &'static str, statement: &'static str, evidence: impl Into<String>) {
        self.0.push(ChainStep { rule, statement, evidence: evidence.into() });
    }

    fn skip(&mut self, what: &str, outcome: &ProbeOutcome) {
        self.push("skipped", "condition not certified; the dependent step is not applied", format!("{what}: {:?}", outcome.verdict));
    }
}

const ESSINF: &str = "a positive essential infimum of the kernel bounds V(a) ≤ u(a/ε) and makes f finite everywhere, so X* = (u')⁻¹(λξ) is the unique optimum for every budget";
const EVERYWHERE_INFINITE: &str = "if f(λ) = +∞ for every λ > 0, truncations of (u')⁻¹(λξ) give feasible wealths with utility above any multiple of the budget, so V ≡ +∞";
const RISK_AVERSION: &str = "with risk aversion bounded away from zero at infinity, a multiplier exists for every budget iff λ₀ < ∞, and the problem is solvable for every budget iff E[u((u')⁻¹(ξ))] < ∞";
const MARGINAL_RATIO: &str = "limsup u'(kx)/u'(x) < 1 for some k > 1 gives the same multiplier and solvability equivalences as bounded risk aversion";
const VALUE_AT_ONE: &str = "E[u((u')⁻¹(ξ))] decides solvability for every budget under the preceding growth condition";
const DENSITY_RATIO: &str = "liminf x F'(x)/F(x) > 0 near zero makes every budget with a multiplier solvable, and λ₀ < ∞ makes the problem well-posed for every budget; an optimum exists iff a ≤ a₀";
const THRESHOLD: &str = "with λ₀ < ∞ and a₀ < ∞, an optimum exists iff E[u((u')⁻¹(λ₀ξ))] < ∞ and a ≤ a₀; with a₀ = +∞, for every budget iff E[u((u')⁻¹(ξ))] < ∞";
const FINITE_VALUE: &str = "a multiplier with E[u(X*)] < ∞ makes X* = (u')⁻¹(λξ) the unique optimum";
const INFINITE_VALUE: &str = "a multiplier whose X* is budget-feasible yet has E[u(X*)] = +∞ shows V = +∞ at that budget, and value scaling V(b) ≤ (b/a)V(a) spreads this to every budget";
const NO_MULTIPLIER: &str = "an optimum forces a multiplier; budgets above a₀ have none, while value scaling keeps V finite";

/// Model-level verdict: `IllPosedAll`, `AttainableUpTo(a₀)` or `Indeterminate`.
pub fn classify_model(utility: &Utility, kernel: &PricingKernel, numerics: &Numerics) -> Classification {
    let conditions = check_conditions(utility, kernel, numerics);
    let mut chain = Chain(Vec::new());
    let verdict = model_verdict(utility, kernel, &conditions, &mut chain, numerics);
    Classification { budget: None, verdict, theorem_chain: chain.0, conditions }
}

fn model_verdict(
    utility: &Utility,
    kernel: &PricingKernel,
    c: &ConditionReport,
    chain: &mut Chain,
    numerics: &Numerics,
) -> Verdict {
    if c.essinf_positive {
        chain.push("positive_essential_infimum", ESSINF, format!("essinf ξ = {}", c.essinf));
        return Verdict::AttainableUpTo { a0: f64::INFINITY };
    }
    let est = &c.lambda0;
    if est.lambda0 == f64::INFINITY {
        if est.approximate {
            return Verdict::Indeterminate { blocking: vec!["f undecided at the largest probe λ = 2^30".into()] };
        }
        chain.push(
            "everywhere_infinite_budget_map",
            EVERYWHERE_INFINITE,
            format!("f(λ) diverges up to λ = {}", est.bracket.0),
        );
        return Verdict::IllPosedAll;
    }
    let growth = match (&c.asymptotic_risk_aversion.verdict, &c.marginal_ratio.verdict) {
        (ProbeVerdict::PositiveLiminf, _) => {
            Some(("risk_aversion_bounded_below", RISK_AVERSION, format!("{:?}", c.asymptotic_risk_aversion.evidence)))
        }
        (_, ProbeVerdict::RatioBelowOne { bound }) => {
            Some(("marginal_ratio_below_one", MARGINAL_RATIO, format!("limsup u'(2x)/u'(x) ≤ {bound}")))
        }
        _ => None,
    };
    match growth {
        Some((rule, statement, evidence)) => {
            let v1 = &c.value_integral_at_1;
            if v1.is_finite() {
                chain.push(rule, statement, evidence);
                chain.push("value_integral_at_unit_multiplier", VALUE_AT_ONE, format!("E[u((u')⁻¹(ξ))] = {:?}", v1.status));
                return Verdict::AttainableUpTo { a0: f64::INFINITY };
            }
            if v1.is_diverged() {
                chain.push(rule, statement, evidence);
                chain.push("value_integral_at_unit_multiplier", VALUE_AT_ONE, format!("E[u((u')⁻¹(ξ))] = +∞: {:?}", v1.status));
                if let Some(step) = infinite_value_certificate(utility, kernel, est, numerics) {
                    chain.0.push(step);
                }
                return Verdict::IllPosedAll;
            }
            chain.push("skipped", "value integral at λ = 1 undecided", format!("{:?}", v1.status));
        }
        None => {
            chain.skip("asymptotic risk aversion", &c.asymptotic_risk_aversion);
            chain.skip("marginal ratio u'(2x)/u'(x)", &c.marginal_ratio);
        }
    }
    if c.density_ratio.verdict == ProbeVerdict::PositiveLiminf {
        chain.push("density_ratio_bounded_below", DENSITY_RATIO, format!("{:?}", c.density_ratio.evidence));
        return match est.a0_value() {
            Some(a0) => Verdict::AttainableUpTo { a0 },
            None => Verdict::Indeterminate { blocking: vec![format!("a₀ undecided: {:?}", est.a0.status)] },
        };
    }
    chain.skip("density ratio x F'(x)/F(x)", &c.density_ratio);
    // threshold test at λ₀
    let a0 = est.a0_value();
    match a0 {
        Some(a0) if a0.is_finite() => {
            let v = value_at_multiplier(utility, kernel, est.lambda0, numerics);
            if v.is_finite() {
                chain.push("threshold_value_integral", THRESHOLD, format!("λ₀ = {}, a₀ = {a0}, E[u((u')⁻¹(λ₀ξ))] = {:?}", est.lambda0, v.status));
                return Verdict::AttainableUpTo { a0 };
            }
            if v.is_diverged() {
                chain.push("threshold_value_integral", THRESHOLD, format!("E[u((u')⁻¹(λ₀ξ))] = +∞ at λ₀ = {}", est.lambda0));
                chain.push("infinite_value_at_multiplier", INFINITE_VALUE, format!("X* at λ₀ costs a₀ = {a0}"));
                return Verdict::IllPosedAll;
            }
            Verdict::Indeterminate { blocking: vec![format!("E[u((u')⁻¹(λ₀ξ))] undecided: {:?}", v.status)] }
        }
        Some(_) if est.lambda0 < 1.0 => {
            let v1 = &c.value_integral_at_1;
            if v1.is_finite() {
                chain.push("threshold_value_integral", THRESHOLD, format!("a₀ = +∞, E[u((u')⁻¹(ξ))] = {:?}", v1.status));
                return Verdict::AttainableUpTo { a0: f64::INFINITY };
            }
            if v1.is_diverged() {
                chain.push("threshold_value_integral", THRESHOLD, "a₀ = +∞, E[u((u')⁻¹(ξ))] = +∞");
                if let Some(step) = infinite_value_certificate(utility, kernel, est, numerics) {
                    chain.0.push(step);
                }
                return Verdict::IllPosedAll;
            }
            Verdict::Indeterminate { blocking: vec![format!("value integral at λ = 1 undecided: {:?}", v1.status)] }
        }
        _ => Verdict::Indeterminate {
            blocking: vec![
                "no growth condition on u certified".into(),
                "no density-ratio condition on ξ certified".into(),
                format!("threshold test unavailable: λ₀ = {}, a₀ = {:?}", est.lambda0, est.a0.status),
            ],
        },
    }
}

/// Constructive certificate: a budget-feasible `X*` with infinite utility.
fn infinite_value_certificate(
    utility: &Utility,
    kernel: &PricingKernel,
    est: &Lambda0Estimate,
    numerics: &Numerics,
) -> Option<ChainStep> {
    let lambda = if est.lambda0 > 0.0 { est.lambda0.max(1.0) } else { 1.0 };
    let budget = f_eval(utility, kernel, lambda, numerics);
    let value = value_at_multiplier(utility, kernel, lambda, numerics);
    (budget.is_finite() && value.is_diverged()).then(|| ChainStep {
        rule: "infinite_value_at_multiplier",
        statement: INFINITE_VALUE,
        evidence: format!(
            "at λ = {lambda}: E[X*ξ] = {} (finite) while E[u(X*)] = +∞",
            budget.value().unwrap()
        ),
    })
}

/// Verdict for budget `a`.
pub fn classify(utility: &Utility, kernel: &PricingKernel, a: f64, numerics: &Numerics) -> Classification {
    let conditions = check_conditions(utility, kernel, numerics);
    let mut chain = Chain(Vec::new());
    let model = model_verdict(utility, kernel, &conditions, &mut chain, numerics);
    let est = &conditions.lambda0;
    let verdict = match model {
        Verdict::IllPosedAll => Verdict::IllPosedAll,
        Verdict::AttainableUpTo { a0 } if a > a0 * (1.0 + numerics.budget_tol) => {
            chain.push("no_multiplier_no_optimum", NO_MULTIPLIER, format!("a = {a} > a₀ = {a0}"));
            Verdict::WellPosedNonAttainable { a0 }
        }
        Verdict::AttainableUpTo { .. } => attach_solution(utility, kernel, a, est, &mut chain, numerics),
        Verdict::Indeterminate { blocking } => {
            // a solvable instance still certifies this budget
            match optimal_solution_from(utility, kernel, a, est, numerics) {
                Ok(solution) => {
                    chain.push("multiplier_with_finite_value", FINITE_VALUE, solution_evidence(&solution));
                    Verdict::WellPosedAttainable { solution }
                }
                Err(SolveError::ValueDiverged { lambda }) => {
                    chain.push("infinite_value_at_multiplier", INFINITE_VALUE, format!("λ = {lambda}, budget {a}"));
                    Verdict::IllPosedAll
                }
                Err(e) => {
                    let mut blocking = blocking;
                    blocking.push(format!("direct solve for a = {a}: {e}"));
                    Verdict::Indeterminate { blocking }
                }
            }
        }
        other => other,
    };
    Classification { budget: Some(a), verdict, theorem_chain: chain.0, conditions }
}

fn attach_solution(
    utility: &Utility,
    kernel: &PricingKernel,
    a: f64,
    est: &Lambda0Estimate,
    chain: &mut Chain,
    numerics: &Numerics,
) -> Verdict {
    match optimal_solution_from(utility, kernel, a, est, numerics) {
        Ok(solution) => {
            chain.push("multiplier_with_finite_value", FINITE_VALUE, solution_evidence(&solution));
            Verdict::WellPosedAttainable { solution }
        }
        Err(SolveError::NoMultiplier(NoMultiplier::BudgetAboveA0 { a0, .. })) => {
            chain.push("no_multiplier_no_optimum", NO_MULTIPLIER, format!("a = {a} > a₀ = {a0}"));
            Verdict::WellPosedNonAttainable { a0 }
        }
        Err(e) => Verdict::Indeterminate { blocking: vec![format!("solving for a = {a} failed: {e}")] },
    }
}

fn solution_evidence(s: &LagrangeSolution) -> String {
    format!(
        "λ = {}, E[X*ξ] = {}, E[u(X*)] = {}",
        s.lambda,
        s.budget_check.value().unwrap_or(f64::NAN),
        s.value.value().unwrap_or(f64::NAN)
    )
}
