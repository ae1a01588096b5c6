//! Reports: a JSON machine format, an aligned human table, and f-curve CSV.
//!
//! Every number carries a status, an error bound and the method that
//! produced it. The machine format contains no timings, so identical
//! inputs give byte-identical output.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;

use crate::classifier::{ChainStep, Classification, ConditionReport, MomentVerdict, Verdict};
use crate::error::{NoMultiplier, SolveError};
use crate::expectation::{ExtendedValue, Status};
use crate::kernel::PricingKernel;
use crate::numerics::ser_extended_f64;
use crate::probe::{Evidence, ProbeOutcome, ProbeVerdict};
use crate::solver::{evaluation_method, FCurvePoint, LagrangeSolution, Lambda0Estimate, Method, WitnessSolution};
use crate::utility::Utility;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ILL_POSED: i32 = 2;
pub const EXIT_NO_OPTIMUM: i32 = 3;
pub const EXIT_INDETERMINATE: i32 = 4;
pub const EXIT_SELFTEST_FAILED: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Series,
    Quadrature,
    MonteCarlo,
    Analytic,
    Exact,
    Bisection,
    Probe,
}

impl From<Method> for Provenance {
    fn from(m: Method) -> Self {
        match m {
            Method::Series => Provenance::Series,
            Method::Quadrature => Provenance::Quadrature,
            Method::Exact => Provenance::Exact,
        }
    }
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Series => "series",
            Provenance::Quadrature => "quadrature",
            Provenance::MonteCarlo => "monte-carlo",
            Provenance::Analytic => "analytic",
            Provenance::Exact => "exact",
            Provenance::Bisection => "bisection",
            Provenance::Probe => "probe",
        }
    }
}

fn ser_bound<S: serde::Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_extended_f64(v, s),
        None => s.serialize_none(),
    }
}

/// One reported number. Diverged values are `+∞`, undecided ones NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub name: String,
    pub status: String,
    #[serde(serialize_with = "ser_extended_f64")]
    pub value: f64,
    #[serde(serialize_with = "ser_bound")]
    pub error_bound: Option<f64>,
    pub method: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Quantity {
    pub fn number(name: impl Into<String>, value: f64, error_bound: f64, method: Provenance) -> Self {
        Quantity {
            name: name.into(),
            status: "finite".into(),
            value,
            error_bound: Some(error_bound),
            method,
            note: None,
        }
    }

    pub fn extended(name: impl Into<String>, v: &ExtendedValue, method: Provenance) -> Self {
        let (value, error_bound, note) = match &v.status {
            Status::Finite { value, error_bound } => (*value, Some(*error_bound), None),
            Status::Diverged { evidence } => (f64::INFINITY, None, Some(format!("{evidence:?}"))),
            Status::Inconclusive { reason } => (f64::NAN, None, Some(reason.clone())),
        };
        Quantity { name: name.into(), status: v.tag().into(), value, error_bound, method, note }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub utility: serde_json::Value,
    pub kernel: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    pub verdict: String,
    pub exit_code: i32,
    pub theorem_chain: Vec<ChainStep>,
    pub numbers: Vec<Quantity>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn describe<T: Serialize>(x: &T, fallback: &str) -> serde_json::Value {
    serde_json::to_value(x).unwrap_or_else(|_| serde_json::Value::String(fallback.into()))
}

impl Report {
    pub fn new(command: &str, utility: &Utility, kernel: &PricingKernel, budget: Option<f64>) -> Self {
        Report {
            command: command.into(),
            utility: describe(utility, utility.kind_name()),
            kernel: describe(kernel, kernel.kind_name()),
            budget,
            verdict: String::new(),
            exit_code: EXIT_OK,
            theorem_chain: Vec::new(),
            numbers: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_human(&self) -> String {
        let mut out = String::new();
        let header = [
            ("command", self.command.clone()),
            ("utility", self.utility.to_string()),
            ("kernel", self.kernel.to_string()),
            ("budget", self.budget.map_or("-".into(), |a| a.to_string())),
            ("verdict", self.verdict.clone()),
            ("exit code", self.exit_code.to_string()),
        ];
        for (k, v) in header {
            let _ = writeln!(out, "{k:<10} {v}");
        }
        if !self.numbers.is_empty() {
            let w = self.numbers.iter().map(|q| q.name.chars().count()).max().unwrap_or(8).max(8);
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<w$}  {:>24}  {:>10}  {:<12}  {:<11}", "quantity", "value", "± bound", "status", "method");
            for q in &self.numbers {
                let bound = q.error_bound.map_or("-".into(), |b| format!("{b:.1e}"));
                let _ = writeln!(
                    out,
                    "{:<w$}  {:>24}  {:>10}  {:<12}  {:<11}",
                    q.name,
                    fmt_value(q.value),
                    bound,
                    q.status,
                    q.method.as_str()
                );
                if let Some(note) = &q.note {
                    let _ = writeln!(out, "{:<w$}    {note}", "");
                }
            }
        }
        if !self.theorem_chain.is_empty() {
            let _ = writeln!(out, "\nreasoning chain:");
            for (i, step) in self.theorem_chain.iter().enumerate() {
                let _ = writeln!(out, "  {}. [{}] {}", i + 1, step.rule, step.statement);
                let _ = writeln!(out, "     evidence: {}", step.evidence);
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v.is_infinite() {
        "+inf".into()
    } else {
        format!("{v:.12e}")
    }
}

pub fn verdict_exit_code(v: &Verdict) -> i32 {
    match v {
        Verdict::IllPosedAll => EXIT_ILL_POSED,
        Verdict::WellPosedAttainable { .. } | Verdict::AttainableUpTo { .. } => EXIT_OK,
        Verdict::WellPosedNonAttainable { .. } => EXIT_NO_OPTIMUM,
        Verdict::Indeterminate { .. } => EXIT_INDETERMINATE,
    }
}

pub fn solve_exit_code(r: &Result<LagrangeSolution, SolveError>) -> i32 {
    match r {
        Ok(_) => EXIT_OK,
        Err(SolveError::InvalidBudget(_)) => EXIT_USAGE,
        Err(SolveError::NoMultiplier(NoMultiplier::EverywhereInfinite)) | Err(SolveError::ValueDiverged { .. }) => {
            EXIT_ILL_POSED
        }
        Err(SolveError::NoMultiplier(_)) => EXIT_NO_OPTIMUM,
        Err(_) => EXIT_INDETERMINATE,
    }
}

fn lambda0_rows(est: &Lambda0Estimate, method: Method) -> Vec<Quantity> {
    let (lo, hi) = est.bracket;
    let bound = if est.lambda0.is_finite() && est.lambda0 > 0.0 { hi - lo } else { 0.0 };
    let mut l0 = Quantity::number("lambda0", est.lambda0, bound, Provenance::Bisection);
    if est.lambda0.is_infinite() {
        l0.status = "diverged".into();
        l0.error_bound = None;
        l0 = l0.with_note(format!("f(λ) = +∞ up to λ = {lo}"));
    }
    if est.approximate {
        l0 = l0.with_note("boundary approximate: an evaluation near it was inconclusive");
    }
    let a0 = Quantity::extended("a0", &est.a0, method.into());
    vec![l0, a0]
}

fn probe_row(name: &str, p: &ProbeOutcome) -> Quantity {
    let method = match p.evidence {
        Evidence::Analytic { .. } => Provenance::Analytic,
        _ => Provenance::Probe,
    };
    let value = match (&p.verdict, &p.evidence) {
        (ProbeVerdict::RatioBelowOne { bound }, _) => *bound,
        (_, Evidence::Grid { values, .. }) => values.iter().cloned().fold(f64::INFINITY, f64::min),
        _ => f64::NAN,
    };
    let status = match p.verdict {
        ProbeVerdict::PositiveLiminf => "positive",
        ProbeVerdict::ZeroLiminf => "zero",
        ProbeVerdict::RatioBelowOne { .. } => "below_one",
        ProbeVerdict::RatioAtOne => "at_one",
        ProbeVerdict::Inconclusive => "inconclusive",
    };
    let note = match &p.evidence {
        Evidence::Analytic { statement } => statement.clone(),
        Evidence::Grid { arguments, threshold, .. } => format!(
            "grid minimum over {} points in [{:e}, {:e}], threshold {threshold}",
            arguments.len(),
            arguments.first().copied().unwrap_or(f64::NAN),
            arguments.last().copied().unwrap_or(f64::NAN)
        ),
        Evidence::Unavailable { reason } => reason.clone(),
    };
    Quantity { name: name.into(), status: status.into(), value, error_bound: None, method, note: Some(note) }
}

/// Numbers behind every condition the classifier consulted.
pub fn condition_rows(c: &ConditionReport, utility: &Utility, kernel: &PricingKernel) -> Vec<Quantity> {
    let method = evaluation_method(utility, kernel);
    let mut rows = vec![Quantity::number("essinf xi", c.essinf, 0.0, Provenance::Analytic)];
    rows.extend(lambda0_rows(&c.lambda0, method));
    rows.push(Quantity::extended("E[u((u')^-1(xi))]", &c.value_integral_at_1, method.into()));
    rows.push(probe_row("liminf R(x), x->inf", &c.asymptotic_risk_aversion));
    rows.push(probe_row("limsup u'(2x)/u'(x)", &c.marginal_ratio));
    rows.push(probe_row("liminf x F'(x)/F(x), x->0", &c.density_ratio));
    for (alpha, m) in &c.negative_moments.moments {
        let method = if kernel.ln_negative_moment_closed(*alpha).is_some() || kernel.atoms().is_some() {
            Provenance::Analytic
        } else {
            Provenance::Quadrature
        };
        rows.push(Quantity::extended(format!("E[xi^-{alpha}]"), m, method));
    }
    if let MomentVerdict::Inconclusive = c.negative_moments.verdict {
        if let Some(last) = rows.last_mut() {
            last.note.get_or_insert_with(|| "negative-moment verdict inconclusive".into());
        }
    }
    let method = match kernel {
        PricingKernel::HeavyLog => Provenance::Quadrature,
        _ => Provenance::Analytic,
    };
    rows.push(Quantity::extended("E[ln(1/xi)]", &c.log_reciprocal_moment, method));
    rows
}

/// Width of the final multiplier bracket: bisection in `ln λ` to `1e-14·max(|ln λ|, 1)`.
fn bisection_bound(lambda: f64) -> f64 {
    lambda * 1e-14 * lambda.ln().abs().max(1.0)
}

fn solution_rows(s: &LagrangeSolution, method: Method) -> Vec<Quantity> {
    vec![
        Quantity::number("lambda(a)", s.lambda, bisection_bound(s.lambda), Provenance::Bisection),
        Quantity::extended("E[X* xi]", &s.budget_check, method.into()),
        Quantity::extended("V(a)", &s.value, method.into()),
    ]
}

pub fn classification_report(c: &Classification, utility: &Utility, kernel: &PricingKernel) -> Report {
    let method = evaluation_method(utility, kernel);
    let mut r = Report::new("classify", utility, kernel, c.budget);
    r.verdict = c.verdict.name().into();
    r.exit_code = verdict_exit_code(&c.verdict);
    r.theorem_chain = c.theorem_chain.clone();
    r.numbers = condition_rows(&c.conditions, utility, kernel);
    match &c.verdict {
        Verdict::WellPosedAttainable { solution } => r.numbers.extend(solution_rows(solution, method)),
        Verdict::AttainableUpTo { a0 } | Verdict::WellPosedNonAttainable { a0 } => {
            r.notes.push(format!("an optimum exists exactly for budgets 0 < a ≤ {a0}"))
        }
        Verdict::Indeterminate { blocking } => r.notes.extend(blocking.iter().map(|b| format!("blocking: {b}"))),
        Verdict::IllPosedAll => {}
    }
    r
}

/// `mc`: Monte Carlo cross-check `(mean, standard error)` of `E[X*ξ]`.
pub fn solve_report(
    result: &Result<LagrangeSolution, SolveError>,
    a: f64,
    est: &Lambda0Estimate,
    mc: Option<(f64, f64)>,
    utility: &Utility,
    kernel: &PricingKernel,
) -> Report {
    let method = evaluation_method(utility, kernel);
    let mut r = Report::new("solve", utility, kernel, Some(a));
    r.exit_code = solve_exit_code(result);
    r.numbers = lambda0_rows(est, method);
    match result {
        Ok(s) => {
            r.verdict = "Solved".into();
            r.numbers.extend(solution_rows(s, method));
            if let Some((mean, se)) = mc {
                r.numbers.push(
                    Quantity::number("E[X* xi] (cross-check)", mean, 3.0 * se, Provenance::MonteCarlo)
                        .with_note("3 standard errors; never used for a verdict"),
                );
            }
        }
        Err(e) => {
            r.verdict = match e {
                SolveError::NoMultiplier(NoMultiplier::EverywhereInfinite) | SolveError::ValueDiverged { .. } => {
                    "IllPosed"
                }
                SolveError::NoMultiplier(_) => "NoMultiplier",
                SolveError::InvalidBudget(_) => "InvalidBudget",
                _ => "Indeterminate",
            }
            .into();
            r.notes.push(e.to_string());
        }
    }
    r
}

pub fn witness_report(
    result: &Result<WitnessSolution, SolveError>,
    a: f64,
    utility: &Utility,
    kernel: &PricingKernel,
) -> Report {
    let mut r = Report::new("witness", utility, kernel, Some(a));
    match result {
        Ok(w) => {
            r.verdict = "Witness".into();
            r.exit_code = EXIT_OK;
            r.numbers = vec![
                Quantity::number("multiple m", w.multiple, 0.0, Provenance::Exact),
                Quantity::number("ln alpha", w.ln_alpha, 0.0, Provenance::Exact),
                Quantity::number("ln beta", w.ln_beta, 0.0, Provenance::Exact),
                Quantity::number("lambda1", w.lambda1, bisection_bound(w.lambda1), Provenance::Bisection),
                Quantity::extended("E[X xi]", &w.achieved_budget, Provenance::Quadrature),
                Quantity::number("lambda1 * a (lower bound on E[u(X)])", w.achieved_utility_lower_bound, 0.0, Provenance::Exact),
                Quantity::extended("E[u(X)]", &w.verified_utility, Provenance::Quadrature),
            ];
            r.notes.push("X = (u')^-1(lambda1 xi) on {alpha < xi < beta}, zero elsewhere".into());
        }
        Err(e) => {
            r.verdict = "NoWitness".into();
            r.exit_code = match e {
                SolveError::InvalidBudget(_) => EXIT_USAGE,
                _ => EXIT_INDETERMINATE,
            };
            r.notes.push(e.to_string());
        }
    }
    r
}

/// CSV with header `lambda,f,status`; `inf` for diverged and `nan` for
/// inconclusive rows. Values use the shortest round-trip decimal form.
pub fn write_curve_csv<W: io::Write>(points: &[FCurvePoint], mut w: W) -> io::Result<()> {
    writeln!(w, "lambda,f,status")?;
    for p in points {
        let f = match &p.f.status {
            Status::Finite { value, .. } => value.to_string(),
            Status::Diverged { .. } => "inf".into(),
            Status::Inconclusive { .. } => "nan".into(),
        };
        writeln!(w, "{},{},{}", p.lambda, f, p.f.tag())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_marks_nonfinite_values() {
        let q = Quantity::extended("x", &ExtendedValue::diverged_analytic("test"), Provenance::Analytic);
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains(r#""value":"inf""#), "{s}");
        assert!(s.contains(r#""method":"analytic""#), "{s}");
        let q = Quantity::number("y", 1.5, 1e-9, Provenance::MonteCarlo);
        assert!(serde_json::to_string(&q).unwrap().contains("monte-carlo"));
    }

    #[test]
    fn csv_format() {
        let pts = vec![
            FCurvePoint { lambda: 0.5, method: Method::Series, f: ExtendedValue::diverged_analytic("x") },
            FCurvePoint { lambda: 1.0, method: Method::Series, f: ExtendedValue::finite(0.1, 1e-12) },
        ];
        let mut buf = Vec::new();
        write_curve_csv(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "lambda,f,status\n0.5,inf,diverged\n1,0.1,finite\n");
    }
}
