//! Divergence-aware expectations `E[φ(ξ)]` and series sums.
//!
//! Every result is an [`ExtendedValue`]: a finite value with an error bound,
//! a certified divergence carrying the evidence that triggered it, or an
//! explicit inconclusive verdict. Nothing here converts a suspicion into a
//! verdict.
//!
//! Integrals against kernels with a density are computed in the log
//! variable `s = ln x`, where `E[φ(ξ)] = ∫ φ(eˢ) ρ(s) ds` and `ρ` is the
//! density of `ln ξ`. The domain `[c − w, c + w]` around the kernel's log
//! centre is widened by doubling `w`; each doubling contributes one
//! increment per side. Working with `ln φ + ln ρ` keeps integrands such as
//! `(u')⁻¹(λx)·x·F'(x)` representable when both factors are astronomically
//! large or small.

mod quadrature;
pub(crate) mod series;

pub use quadrature::{integrate, NonFinite, QuadOutcome};
pub use series::series_sum_ln;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::kernel::PricingKernel;
use crate::numerics::Numerics;

/// Log-density below which a kernel tail is treated as exhausted. Beyond this
/// point `ln φ + ln ρ` would lose more than ~1e-8 to cancellation.
const LN_DENSITY_FLOOR: f64 = -1e8;
/// Ratio spread tolerated when extrapolating a geometric tail.
const RATIO_SPREAD: f64 = 0.1;
const MAX_PANELS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivergenceEvidence {
    /// Partial integral or sum exceeded the divergence cap.
    CapExceeded { partial: f64, after: u64 },
    /// Domain-doubling increments stopped decaying.
    IncrementGrowth { ratio: f64, side: Side },
    /// Series terms still non-decreasing at the term cap.
    TermGrowth { ratio: f64, after: u64 },
    /// Series terms carry a factor `e^{rate·n}` with `rate > 0`.
    ExponentialFactor { rate: f64, after: u64 },
    /// Series terms decay no faster than `n^{-p}`, `p ≤ 1`.
    PowerLawTail { exponent: f64, after: u64 },
    /// The integrand or a term overflowed.
    Overflow { at: f64 },
    /// Known in closed form.
    Analytic { statement: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `x → 0⁺`
    Lower,
    /// `x → ∞`
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Finite { value: f64, error_bound: f64 },
    Diverged { evidence: DivergenceEvidence },
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Domain doublings (integrals) or summed terms (series).
    pub refinements: usize,
    /// Extrapolated tail contribution included in a finite value.
    pub tail_estimate: f64,
    pub evaluations: usize,
}

/// Result of a possibly divergent expectation or series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendedValue {
    #[serde(flatten)]
    pub status: Status,
    pub diagnostics: Diagnostics,
}

impl ExtendedValue {
    pub fn finite(value: f64, error_bound: f64) -> Self {
        debug_assert!(value.is_finite() && error_bound >= 0.0);
        ExtendedValue { status: Status::Finite { value, error_bound }, diagnostics: Diagnostics::default() }
    }

    pub fn exact(value: f64) -> Self {
        Self::finite(value, 0.0)
    }

    pub fn diverged(evidence: DivergenceEvidence) -> Self {
        ExtendedValue { status: Status::Diverged { evidence }, diagnostics: Diagnostics::default() }
    }

    pub fn diverged_analytic(statement: impl Into<String>) -> Self {
        Self::diverged(DivergenceEvidence::Analytic { statement: statement.into() })
    }

    pub fn inconclusive(reason: impl Into<String>) -> Self {
        ExtendedValue { status: Status::Inconclusive { reason: reason.into() }, diagnostics: Diagnostics::default() }
    }

    pub fn with_diagnostics(mut self, diagnostics: Diagnostics) -> Self {
        self.diagnostics = diagnostics;
        self
    }

    pub fn value(&self) -> Option<f64> {
        match self.status {
            Status::Finite { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn error_bound(&self) -> Option<f64> {
        match self.status {
            Status::Finite { error_bound, .. } => Some(error_bound),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.status, Status::Finite { .. })
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self.status, Status::Diverged { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self.status, Status::Inconclusive { .. })
    }

    /// Lower-case status tag: `finite`, `diverged` or `inconclusive`.
    pub fn tag(&self) -> &'static str {
        match self.status {
            Status::Finite { .. } => "finite",
            Status::Diverged { .. } => "diverged",
            Status::Inconclusive { .. } => "inconclusive",
        }
    }

    /// Scale a finite value (and its bound) by `c > 0`; other statuses pass through.
    pub fn scaled(mut self, c: f64) -> Self {
        if let Status::Finite { value, error_bound } = self.status {
            self.status = Status::Finite { value: value * c, error_bound: error_bound * c };
        }
        self
    }

    /// Sum of two nonnegative extended values.
    pub fn plus(&self, other: &ExtendedValue) -> ExtendedValue {
        match (&self.status, &other.status) {
            (Status::Finite { value: a, error_bound: ea }, Status::Finite { value: b, error_bound: eb }) => {
                ExtendedValue::finite(a + b, ea + eb)
            }
            (Status::Diverged { .. }, _) => self.clone(),
            (_, Status::Diverged { .. }) => other.clone(),
            (Status::Inconclusive { .. }, _) => self.clone(),
            _ => other.clone(),
        }
    }
}

/// Monotonicity of an integrand in `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    #[default]
    Unknown,
}

/// Where an integrand may blow up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SingularityHint {
    #[default]
    None,
    AtZero,
    AtInfinity,
    Both,
}

type LnFn<'a> = Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>;

/// A nonnegative integrand `x ↦ φ(x)`, stored as `s ↦ ln φ(eˢ)`.
pub struct IntegrandSpec<'a> {
    ln_phi: LnFn<'a>,
    breakpoints: Vec<f64>,
    pub monotonicity: Monotonicity,
    pub singularity: SingularityHint,
}

impl<'a> IntegrandSpec<'a> {
    /// From a plain function of `x`. Values must be nonnegative.
    pub fn from_fn(phi: impl Fn(f64) -> f64 + Send + Sync + 'a) -> Self {
        Self::from_ln(move |s: f64| phi(s.exp()).ln())
    }

    /// From `s ↦ ln φ(eˢ)`; use this when φ over- or underflows.
    pub fn from_ln(ln_phi: impl Fn(f64) -> f64 + Send + Sync + 'a) -> Self {
        IntegrandSpec {
            ln_phi: Box::new(ln_phi),
            breakpoints: Vec::new(),
            monotonicity: Monotonicity::Unknown,
            singularity: SingularityHint::None,
        }
    }

    /// Points `x > 0` where φ has a kink or jump.
    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(points.into_iter().filter(|p| *p > 0.0 && p.is_finite()));
        self
    }

    pub fn with_monotonicity(mut self, m: Monotonicity) -> Self {
        self.monotonicity = m;
        self
    }

    pub fn with_singularity(mut self, s: SingularityHint) -> Self {
        self.singularity = s;
        self
    }

    /// `ln φ(eˢ)`.
    pub fn ln_at_log(&self, s: f64) -> f64 {
        (self.ln_phi)(s)
    }

    /// `φ(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        (self.ln_phi)(x.ln()).exp()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

/// `E[φ(ξ)]` for a nonnegative integrand.
///
/// Discrete kernels give the exact weighted sum. Kernels with a density are
/// integrated by adaptive Gauss–Kronrod panels on an expanding log-domain.
/// The result is Finite once the (tail-extrapolated) total changes by less
/// than `rel_tol` over three consecutive doublings; Diverged when the partial
/// integral exceeds `divergence_cap`, when the increments on one side fail to
/// decay (every ratio in the last `growth_window` doublings is at least
/// `1 − growth_tol`) or when the integrand overflows; Inconclusive otherwise.
pub fn expect(kernel: &PricingKernel, integrand: &IntegrandSpec<'_>, numerics: &Numerics) -> ExtendedValue {
    if let Some(atoms) = kernel.atoms() {
        return expect_atoms(&atoms, integrand);
    }
    DomainExpansion::new(kernel, integrand, numerics).run()
}

fn expect_atoms(atoms: &[(f64, f64)], integrand: &IntegrandSpec<'_>) -> ExtendedValue {
    let mut sum = 0.0;
    for &(x, p) in atoms {
        let v = integrand.eval(x);
        if v.is_nan() {
            return ExtendedValue::inconclusive(format!("integrand is NaN at atom {x}"));
        }
        if v == f64::INFINITY {
            return ExtendedValue::diverged(DivergenceEvidence::Overflow { at: x });
        }
        sum += p * v;
    }
    ExtendedValue::finite(sum, 4.0 * f64::EPSILON * sum.abs() * atoms.len() as f64)
}

/// `E[φ(ξ) 1{lo < ξ < hi}]` with `lo = e^{ln_lo}`, `hi = e^{ln_hi}`.
///
/// The bounds are given in log form so that truncations far below the
/// smallest positive double remain expressible.
pub fn expect_truncated(
    kernel: &PricingKernel,
    integrand: &IntegrandSpec<'_>,
    ln_lo: f64,
    ln_hi: f64,
    numerics: &Numerics,
) -> ExtendedValue {
    if let Some(atoms) = kernel.atoms() {
        let inside: Vec<(f64, f64)> =
            atoms.into_iter().filter(|(x, _)| x.ln() > ln_lo && x.ln() < ln_hi).collect();
        return expect_atoms(&inside, integrand);
    }
    let run = DomainExpansion::new(kernel, integrand, numerics);
    let tol_abs = 0.0;
    match run.integrate_range(ln_lo, ln_hi, tol_abs) {
        Ok(q) => {
            if q.value > numerics.divergence_cap {
                return ExtendedValue::diverged(DivergenceEvidence::CapExceeded { partial: q.value, after: 1 });
            }
            ExtendedValue::finite(q.value, q.error).with_diagnostics(Diagnostics {
                refinements: q.panels,
                tail_estimate: 0.0,
                evaluations: q.evaluations,
            })
        }
        Err(e) => nonfinite_outcome(e),
    }
}

fn nonfinite_outcome(e: NonFinite) -> ExtendedValue {
    if e.value == f64::INFINITY {
        ExtendedValue::diverged(DivergenceEvidence::Overflow { at: e.at.exp() })
    } else {
        ExtendedValue::inconclusive(format!("integrand not finite ({}) at x = e^{}", e.value, e.at))
    }
}

#[derive(Debug, Default)]
struct SideState {
    increments: Vec<f64>,
    partial: f64,
    exhausted: bool,
}

enum TailEstimate {
    Known(f64),
    Unknown,
}

impl SideState {
    fn ratios(&self, window: usize) -> Option<Vec<f64>> {
        let n = self.increments.len();
        if n < window + 1 {
            return None;
        }
        Some(self.increments[n - window - 1..].windows(2).map(|w| w[1] / w[0]).collect())
    }

    fn growing(&self, numerics: &Numerics) -> Option<f64> {
        let ratios = self.ratios(numerics.growth_window)?;
        let floor = 1.0 - numerics.growth_tol;
        if ratios.iter().all(|r| r.is_finite() && *r >= floor) {
            ratios.last().copied()
        } else {
            None
        }
    }

    fn tail(&self, total: f64, numerics: &Numerics) -> TailEstimate {
        let last = match self.increments.last() {
            Some(v) => *v,
            None => return TailEstimate::Known(0.0),
        };
        if last == 0.0 {
            return TailEstimate::Known(0.0);
        }
        if let Some(ratios) = self.ratios(numerics.growth_window).filter(|r| r.iter().all(|x| x.is_finite())) {
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo > 0.0 && hi <= 1.0 - numerics.growth_tol && hi - lo <= RATIO_SPREAD {
                let r = *ratios.last().unwrap();
                return TailEstimate::Known(last * r / (1.0 - r));
            }
        }
        if last.abs() <= numerics.rel_tol * total.abs() {
            TailEstimate::Known(0.0)
        } else {
            TailEstimate::Unknown
        }
    }
}

struct DomainExpansion<'k, 'i, 'a> {
    kernel: &'k PricingKernel,
    integrand: &'i IntegrandSpec<'a>,
    numerics: &'k Numerics,
    breaks: Vec<f64>,
    evaluations: usize,
    quad_error: f64,
}

impl<'k, 'i, 'a> DomainExpansion<'k, 'i, 'a> {
    fn new(kernel: &'k PricingKernel, integrand: &'i IntegrandSpec<'a>, numerics: &'k Numerics) -> Self {
        let mut breaks: Vec<f64> = kernel
            .log_breakpoints()
            .into_iter()
            .chain(integrand.breakpoints().iter().map(|x| x.ln()))
            .filter(|s| s.is_finite())
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        DomainExpansion { kernel, integrand, numerics, breaks, evaluations: 0, quad_error: 0.0 }
    }

    fn density_integrand(&self) -> impl Fn(f64) -> f64 + '_ {
        move |s: f64| {
            let ln_rho = self.kernel.ln_log_density(s);
            if ln_rho == f64::NEG_INFINITY {
                return 0.0;
            }
            let ln_phi = self.integrand.ln_at_log(s);
            if ln_phi == f64::NEG_INFINITY {
                return 0.0;
            }
            (ln_phi + ln_rho).exp()
        }
    }

    fn integrate_range(&self, a: f64, b: f64, abs_tol: f64) -> Result<QuadOutcome, NonFinite> {
        let f = self.density_integrand();
        let mut cuts = vec![a];
        cuts.extend(self.breaks.iter().cloned().filter(|s| *s > a && *s < b));
        cuts.push(b);
        let mut out = QuadOutcome { value: 0.0, error: 0.0, evaluations: 0, panels: 0 };
        for w in cuts.windows(2) {
            let q = integrate(&f, w[0], w[1], self.numerics.panel_tol, abs_tol, MAX_PANELS)?;
            out.value += q.value;
            out.error += q.error;
            out.evaluations += q.evaluations;
            out.panels += q.panels;
        }
        Ok(out)
    }

    fn slice(&mut self, a: f64, b: f64, scale: f64) -> Result<f64, NonFinite> {
        let abs_tol = self.numerics.panel_tol * scale.abs();
        let q = self.integrate_range(a, b, abs_tol)?;
        self.evaluations += q.evaluations;
        self.quad_error += q.error;
        Ok(q.value)
    }

    fn run(mut self) -> ExtendedValue {
        let c = self.kernel.log_center();
        let w0 = self.kernel.log_scale();
        let numerics = self.numerics;
        let core = match self.slice(c - w0, c + w0, 0.0) {
            Ok(v) => v,
            Err(e) => return nonfinite_outcome(e),
        };
        let mut lower = SideState::default();
        let mut upper = SideState::default();
        let mut history: Vec<f64> = Vec::new();
        let mut last_tail = 0.0;
        for j in 0..numerics.max_doublings {
            let inner = w0 * 2f64.powi(j as i32);
            let outer = 2.0 * inner;
            let scale = core + lower.partial + upper.partial;
            for (side, state) in [(Side::Lower, &mut lower), (Side::Upper, &mut upper)] {
                if state.exhausted {
                    continue;
                }
                let (a, b, edge) = match side {
                    Side::Lower => (c - outer, c - inner, c - inner),
                    Side::Upper => (c + inner, c + outer, c + inner),
                };
                if self.kernel.ln_log_density(edge) <= LN_DENSITY_FLOOR {
                    state.exhausted = true;
                    continue;
                }
                match self.slice(a, b, scale) {
                    Ok(v) => {
                        state.increments.push(v);
                        state.partial += v;
                    }
                    Err(e) => return nonfinite_outcome(e),
                }
            }
            let partial = core + lower.partial + upper.partial;
            let diagnostics = Diagnostics {
                refinements: j as usize + 1,
                tail_estimate: last_tail,
                evaluations: self.evaluations,
            };
            if partial > numerics.divergence_cap {
                return ExtendedValue::diverged(DivergenceEvidence::CapExceeded {
                    partial,
                    after: j as u64 + 1,
                })
                .with_diagnostics(diagnostics);
            }
            for (side, state) in [(Side::Lower, &lower), (Side::Upper, &upper)] {
                if !state.exhausted {
                    if let Some(ratio) = state.growing(numerics) {
                        return ExtendedValue::diverged(DivergenceEvidence::IncrementGrowth { ratio, side })
                            .with_diagnostics(diagnostics);
                    }
                }
            }
            let tails = (lower.tail(partial, numerics), upper.tail(partial, numerics));
            let estimate = match tails {
                (TailEstimate::Known(l), TailEstimate::Known(u)) => {
                    last_tail = l + u;
                    partial + l + u
                }
                _ => {
                    history.clear();
                    if lower.exhausted && upper.exhausted {
                        break;
                    }
                    continue;
                }
            };
            history.push(estimate);
            if lower.exhausted && upper.exhausted {
                // nothing left to refine: the tail extrapolation is final
                let change = history
                    .windows(2)
                    .rev()
                    .map(|w| (w[1] - w[0]).abs())
                    .find(|c| *c > 0.0)
                    .unwrap_or(last_tail.abs());
                return ExtendedValue::finite(estimate, change + self.quad_error).with_diagnostics(Diagnostics {
                    refinements: j as usize + 1,
                    tail_estimate: last_tail,
                    evaluations: self.evaluations,
                });
            }
            if history.len() >= 4 {
                let n = history.len();
                let changes: Vec<f64> = (n - 3..n).map(|i| (history[i] - history[i - 1]).abs()).collect();
                let max_change = changes.iter().cloned().fold(0.0, f64::max);
                if max_change <= numerics.rel_tol * estimate.abs() {
                    return ExtendedValue::finite(estimate, max_change + self.quad_error).with_diagnostics(
                        Diagnostics {
                            refinements: j as usize + 1,
                            tail_estimate: last_tail,
                            evaluations: self.evaluations,
                        },
                    );
                }
            }
        }
        ExtendedValue::inconclusive(format!(
            "no convergence after {} doublings (lower partial {:e}, upper partial {:e})",
            numerics.max_doublings, lower.partial, upper.partial
        ))
        .with_diagnostics(Diagnostics {
            refinements: numerics.max_doublings as usize,
            tail_estimate: last_tail,
            evaluations: self.evaluations,
        })
    }
}

/// `Σ_{n ≥ n0} tₙ` for a nonnegative sequence given by value.
pub fn series_sum(term: impl Fn(u64) -> f64, n0: u64, numerics: &Numerics) -> ExtendedValue {
    series_sum_ln(|n| term(n).ln(), n0, None, numerics)
}

/// Monte Carlo estimate of `E[φ(ξ)]` with its standard error.
pub fn mc_expect(kernel: &PricingKernel, integrand: &IntegrandSpec<'_>, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let x = kernel.draw(&mut rng);
        let v = integrand.eval(x);
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = m2 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num() -> Numerics {
        Numerics::default()
    }

    #[test]
    fn exponential_mean_is_one() {
        let k = PricingKernel::exponential(1.0).unwrap();
        let v = expect(&k, &IntegrandSpec::from_fn(|x| x), &num());
        let value = v.value().expect("finite");
        assert!((value - 1.0).abs() < 1e-8, "{value}");
        assert!(v.error_bound().unwrap() <= 1e-8);
    }

    #[test]
    fn reciprocal_under_exponential_diverges() {
        let k = PricingKernel::exponential(1.0).unwrap();
        for lambda in [0.1, 1.0, 10.0] {
            let phi = IntegrandSpec::from_fn(move |x: f64| 1.0 / (4.0 * lambda * lambda * x));
            let v = expect(&k, &phi, &num());
            assert!(v.is_diverged(), "λ={lambda}: {v:?}");
        }
    }

    #[test]
    fn discrete_is_exact_sum() {
        let k = PricingKernel::discrete(vec![0.5, 2.0, 3.0], vec![0.2, 0.3, 0.5]).unwrap();
        let v = expect(&k, &IntegrandSpec::from_fn(|x| x * x), &num());
        let exact = 0.2 * 0.25 + 0.3 * 4.0 + 0.5 * 9.0;
        assert!((v.value().unwrap() - exact).abs() <= 1e-15 * exact);
    }

    #[test]
    fn series_examples() {
        let n = num();
        let v = series_sum(|k| 1.0 / ((k + 2) as f64 * (k + 1) as f64 * k as f64), 2, &n);
        assert!((v.value().unwrap() - 1.0 / 12.0).abs() < 1e-12);
        let v = series_sum(|k| 1.0 / (k as f64 * k as f64), 2, &n);
        let target = std::f64::consts::PI.powi(2) / 6.0 - 1.0;
        assert!((v.value().unwrap() - target).abs() < 1e-9, "{v:?}");
        let v = series_sum(|k| 1.0 / ((k * k) as f64 * 0.5f64.powi(k as i32)), 2, &n);
        assert!(v.is_diverged());
    }

    #[test]
    fn harmonic_series_diverges() {
        let v = series_sum(|k| 1.0 / k as f64, 1, &num().uncapped());
        assert!(v.is_diverged(), "{v:?}");
    }

    #[test]
    fn mc_degenerate_has_zero_error() {
        let k = PricingKernel::degenerate(1.0).unwrap();
        let (m, se) = mc_expect(&k, &IntegrandSpec::from_fn(|x| x * x), 100, 0);
        assert_eq!((m, se), (1.0, 0.0));
    }
}
