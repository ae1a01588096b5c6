//! Utility functions `u` on `[0, ∞)` with `u(0) = 0`, strictly increasing,
//! strictly concave and satisfying the Inada conditions.

mod series;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::expectation::series::ln_add;
use crate::numerics::Numerics;
use crate::probe::{liminf_from_grid, ratio_from_grid, Evidence, ProbeOutcome, ProbeVerdict};

pub use series::{CoefficientFn, SeriesCoefficients};

/// A user-supplied utility. Only `value` and `marginal` are required;
/// the inverse marginal falls back to bisection and `u''` to finite
/// differences.
pub trait UtilityModel: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn marginal(&self, x: f64) -> f64;
    fn second_derivative(&self, _x: f64) -> Option<f64> {
        None
    }
    fn inverse_marginal(&self, _y: f64) -> Option<f64> {
        None
    }
    /// `liminf_{x→∞} R(x)` if known.
    fn liminf_risk_aversion(&self) -> Option<f64> {
        None
    }
    /// Marginal-utility levels where `(u')⁻¹` has a kink.
    fn marginal_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Clone)]
pub struct CustomUtility(pub Arc<dyn UtilityModel>);

impl fmt::Debug for CustomUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Utility {
    /// `u(x) = x^α`, `0 < α < 1`.
    Power { alpha: f64 },
    /// `u(x) = √x`.
    Sqrt,
    /// `u' = h` with `h⁻¹(y) = Σ aₙ y^{-n}`.
    Series { coefficients: SeriesCoefficients },
    /// `√x` on `[0, 1]`, `1 − ln 2 + ln(1 + x)` beyond.
    PiecewiseSqrtLog,
    #[serde(skip)]
    Custom(CustomUtility),
}

const LN_2: f64 = std::f64::consts::LN_2;

impl Utility {
    pub fn power(alpha: f64) -> Result<Self, ModelError> {
        let u = Utility::Power { alpha };
        u.validate()?;
        Ok(u)
    }

    pub fn sqrt() -> Self {
        Utility::Sqrt
    }

    pub fn piecewise_sqrt_log() -> Self {
        Utility::PiecewiseSqrtLog
    }

    /// Build and validate a series utility.
    pub fn series(coefficients: SeriesCoefficients) -> Result<Self, ModelError> {
        coefficients.validate()?;
        Ok(Utility::Series { coefficients })
    }

    /// A series model without validation, for coefficient families whose
    /// `p(1/y)` is only summable on part of the domain (e.g. `aₙ = 1/n²`).
    pub fn series_unchecked(coefficients: SeriesCoefficients) -> Self {
        Utility::Series { coefficients }
    }

    pub fn custom(model: Arc<dyn UtilityModel>) -> Self {
        Utility::Custom(CustomUtility(model))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Utility::Power { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(ModelError::InvalidParameter {
                        name: "alpha",
                        value: *alpha,
                        reason: "power exponent must lie in (0, 1)",
                    });
                }
                Ok(())
            }
            Utility::Series { coefficients } => coefficients.validate(),
            _ => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Utility::Power { .. } => "power",
            Utility::Sqrt => "sqrt",
            Utility::Series { .. } => "series",
            Utility::PiecewiseSqrtLog => "piecewise_sqrt_log",
            Utility::Custom(_) => "custom",
        }
    }

    pub fn series_coefficients(&self) -> Option<&SeriesCoefficients> {
        match self {
            Utility::Series { coefficients } => Some(coefficients),
            _ => None,
        }
    }

    /// Whether `(u')⁻¹` has a closed form.
    pub fn analytic_inverse_marginal(&self) -> bool {
        matches!(self, Utility::Power { .. } | Utility::Sqrt | Utility::PiecewiseSqrtLog)
    }

    /// `liminf_{x→∞} R(x)` when known in closed form.
    pub fn analytic_liminf_risk_aversion(&self) -> Option<f64> {
        match self {
            Utility::Power { alpha } => Some(1.0 - alpha),
            Utility::Sqrt => Some(0.5),
            Utility::PiecewiseSqrtLog => Some(1.0),
            Utility::Series { .. } => None,
            Utility::Custom(c) => c.0.liminf_risk_aversion(),
        }
    }

    fn alpha(&self) -> Option<f64> {
        match self {
            Utility::Power { alpha } => Some(*alpha),
            Utility::Sqrt => Some(0.5),
            _ => None,
        }
    }

    /// `u(x)`.
    pub fn value(&self, x: f64) -> Result<f64, ModelError> {
        check_arg(x, true)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        Ok(match self {
            Utility::Power { alpha } => x.powf(*alpha),
            Utility::Sqrt => x.sqrt(),
            Utility::PiecewiseSqrtLog => {
                if x <= 1.0 {
                    x.sqrt()
                } else {
                    1.0 - LN_2 + x.ln_1p()
                }
            }
            Utility::Series { coefficients } => {
                let v = coefficients.ln_h(x.ln());
                if !v.is_finite() {
                    return Err(ModelError::Numerical(format!("cannot invert g at x = {x}")));
                }
                x * v.exp() + coefficients.ln_value_tail(v).exp()
            }
            Utility::Custom(c) => c.0.value(x),
        })
    }

    /// `(u'(x), u''(x))`.
    pub fn marginal(&self, x: f64) -> Result<(f64, f64), ModelError> {
        check_arg(x, false)?;
        Ok(match self {
            Utility::Power { .. } | Utility::Sqrt => {
                let a = self.alpha().unwrap();
                (a * x.powf(a - 1.0), a * (a - 1.0) * x.powf(a - 2.0))
            }
            Utility::PiecewiseSqrtLog => {
                if x <= 1.0 {
                    (0.5 / x.sqrt(), -0.25 * x.powf(-1.5))
                } else {
                    (1.0 / (1.0 + x), -1.0 / ((1.0 + x) * (1.0 + x)))
                }
            }
            Utility::Series { coefficients } => {
                let h = |x: f64| coefficients.ln_h(x.ln()).exp();
                let d = x * 1e-5;
                let up = h(x);
                if !up.is_finite() || up <= 0.0 {
                    return Err(ModelError::Numerical(format!("cannot invert g at x = {x}")));
                }
                (up, (h(x + d) - h(x - d)) / (2.0 * d))
            }
            Utility::Custom(c) => {
                let up = c.0.marginal(x);
                let upp = c.0.second_derivative(x).unwrap_or_else(|| {
                    let d = x * 1e-5;
                    (c.0.marginal(x + d) - c.0.marginal(x - d)) / (2.0 * d)
                });
                (up, upp)
            }
        })
    }

    /// `(u')⁻¹(y)`.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64, ModelError> {
        check_arg(y, false)?;
        let v = self.ln_inverse_marginal(y.ln());
        if v == f64::INFINITY {
            Err(ModelError::SeriesDiverged { y })
        } else if v.is_nan() {
            Err(ModelError::Numerical(format!("inverse marginal undefined at y = {y}")))
        } else {
            Ok(v.exp())
        }
    }

    /// `ln (u')⁻¹(e^{ln_y})`; `+∞` where the series for `(u')⁻¹` diverges.
    pub fn ln_inverse_marginal(&self, ln_y: f64) -> f64 {
        match self {
            Utility::Power { .. } | Utility::Sqrt => {
                let a = self.alpha().unwrap();
                (ln_y - a.ln()) / (a - 1.0)
            }
            Utility::PiecewiseSqrtLog => {
                if ln_y >= -LN_2 {
                    -2.0 * LN_2 - 2.0 * ln_y
                } else {
                    (-ln_y.exp()).ln_1p() - ln_y
                }
            }
            Utility::Series { coefficients } => coefficients.ln_g(ln_y),
            Utility::Custom(c) => {
                let y = ln_y.exp();
                match c.0.inverse_marginal(y) {
                    Some(x) => x.ln(),
                    None => ln_bisect_marginal(&*c.0, y),
                }
            }
        }
    }

    /// `ln u((u')⁻¹(e^{ln_y}))`.
    pub fn ln_value_at_inverse_marginal(&self, ln_y: f64) -> f64 {
        match self {
            Utility::Power { .. } | Utility::Sqrt => self.alpha().unwrap() * self.ln_inverse_marginal(ln_y),
            Utility::PiecewiseSqrtLog => {
                if ln_y >= -LN_2 {
                    -LN_2 - ln_y
                } else {
                    (1.0 - LN_2 - ln_y).ln()
                }
            }
            // u(g(y)) = y·g(y) + Σ aₙ y^{-(n-1)}/(n-1)
            Utility::Series { coefficients } => {
                ln_add(ln_y + coefficients.ln_g(ln_y), coefficients.ln_value_tail(ln_y))
            }
            Utility::Custom(c) => {
                let ln_x = self.ln_inverse_marginal(ln_y);
                if ln_x.is_finite() {
                    c.0.value(ln_x.exp()).ln()
                } else {
                    ln_x
                }
            }
        }
    }

    /// Marginal-utility levels `y` where `(u')⁻¹` is not smooth.
    pub fn marginal_breakpoints(&self) -> Vec<f64> {
        match self {
            Utility::PiecewiseSqrtLog => vec![0.5],
            Utility::Custom(c) => c.0.marginal_breakpoints(),
            _ => Vec::new(),
        }
    }

    /// Arrow–Pratt index `R(x) = −x u''(x)/u'(x)`.
    pub fn risk_aversion(&self, x: f64) -> Result<f64, ModelError> {
        match self {
            Utility::Power { .. } | Utility::Sqrt => {
                check_arg(x, false)?;
                Ok(1.0 - self.alpha().unwrap())
            }
            Utility::PiecewiseSqrtLog => {
                check_arg(x, false)?;
                Ok(if x <= 1.0 { 0.5 } else { x / (1.0 + x) })
            }
            _ => {
                let (up, upp) = self.marginal(x)?;
                Ok(-x * upp / up)
            }
        }
    }

    /// Sign of `liminf_{x→∞} R(x)`: analytic when known, else a grid over
    /// `x = 2^k`, `k = 20..=40`.
    pub fn probe_asymptotic_risk_aversion(&self, numerics: &Numerics) -> ProbeOutcome {
        if let Some(r) = self.analytic_liminf_risk_aversion() {
            let verdict = if r > 0.0 { ProbeVerdict::PositiveLiminf } else { ProbeVerdict::ZeroLiminf };
            return ProbeOutcome::analytic(verdict, format!("liminf R(x) = {r} as x → ∞"));
        }
        let arguments: Vec<f64> = (20..=40).map(|k| 2f64.powi(k)).collect();
        let mut values = Vec::with_capacity(arguments.len());
        for &x in &arguments {
            match self.risk_aversion(x) {
                Ok(r) if r.is_finite() => values.push(r),
                _ => return ProbeOutcome::unavailable(format!("risk aversion not computable at x = {x}")),
            }
        }
        let threshold = numerics.risk_aversion_threshold;
        ProbeOutcome {
            verdict: liminf_from_grid(&values, threshold),
            evidence: Evidence::Grid { arguments, values, threshold },
        }
    }

    /// Whether `limsup_{x→∞} u'(kx)/u'(x) < 1`.
    pub fn probe_marginal_ratio(&self, k: f64, numerics: &Numerics) -> ProbeOutcome {
        assert!(k > 1.0, "ratio probe needs k > 1");
        match self {
            Utility::Power { .. } | Utility::Sqrt => {
                let r = k.powf(self.alpha().unwrap() - 1.0);
                return ProbeOutcome::analytic(
                    ProbeVerdict::RatioBelowOne { bound: r },
                    format!("u'(kx)/u'(x) = k^(α-1) = {r} for all x"),
                );
            }
            Utility::PiecewiseSqrtLog => {
                return ProbeOutcome::analytic(
                    ProbeVerdict::RatioBelowOne { bound: 1.0 / k },
                    format!("u'(kx)/u'(x) = (1+x)/(1+kx) → 1/k = {}", 1.0 / k),
                );
            }
            _ => {}
        }
        let arguments: Vec<f64> = (20..=40).map(|j| 2f64.powi(j)).collect();
        let mut values = Vec::with_capacity(arguments.len());
        for &x in &arguments {
            match (self.marginal(k * x), self.marginal(x)) {
                (Ok((a, _)), Ok((b, _))) if a.is_finite() && b > 0.0 => values.push(a / b),
                _ => return ProbeOutcome::unavailable(format!("marginal utility not computable near x = {x}")),
            }
        }
        let threshold = numerics.ratio_margin;
        ProbeOutcome {
            verdict: ratio_from_grid(&values, threshold),
            evidence: Evidence::Grid { arguments, values, threshold },
        }
    }
}

fn check_arg(x: f64, allow_zero: bool) -> Result<(), ModelError> {
    if !x.is_finite() {
        return Err(ModelError::NonFinite(x));
    }
    if x < 0.0 || (!allow_zero && x == 0.0) {
        let domain = if allow_zero { "[0, ∞)" } else { "(0, ∞)" };
        return Err(ModelError::Domain { x, domain });
    }
    Ok(())
}

/// `ln x` with `u'(x) = y`, by bisection on `ln x`.
fn ln_bisect_marginal(model: &dyn UtilityModel, y: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while model.marginal(lo.exp()) < y {
        lo -= 2.0 * (hi - lo);
        if lo < -700.0 {
            return f64::NEG_INFINITY;
        }
    }
    while model.marginal(hi.exp()) > y {
        hi += 2.0 * (hi - lo);
        if hi > 700.0 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
        if model.marginal(mid.exp()) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_MINUS_8_3: f64 = 0.051_615_161_792_378_57;

    fn ex22() -> Utility {
        Utility::series(SeriesCoefficients::ShiftedFactorial { shift: 2 }).unwrap()
    }

    #[test]
    fn values() {
        assert_eq!(Utility::sqrt().value(4.0).unwrap(), 2.0);
        assert_eq!(Utility::piecewise_sqrt_log().value(1.0).unwrap(), 1.0);
        // u(g(1)) = g(1) + Σ 1/((n+2)!(n-1))
        let v = ex22().value(E_MINUS_8_3).unwrap();
        assert!((v - 0.097_966_523_617_637_95).abs() < 1e-10, "{v}");
        assert!(Utility::sqrt().value(-1.0).is_err());
        assert!(Utility::sqrt().value(f64::NAN).is_err());
    }

    #[test]
    fn marginals() {
        assert_eq!(Utility::sqrt().marginal(1.0).unwrap(), (0.5, -0.25));
        assert_eq!(Utility::power(0.5).unwrap().marginal(4.0).unwrap(), (0.25, -0.03125));
        let (up, upp) = ex22().marginal(E_MINUS_8_3).unwrap();
        assert!((up - 1.0).abs() < 1e-10, "{up}");
        assert!(upp < 0.0);
        assert!(Utility::sqrt().marginal(0.0).is_err());
    }

    #[test]
    fn inverse_marginals() {
        assert!((Utility::sqrt().inverse_marginal(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((Utility::piecewise_sqrt_log().inverse_marginal(0.25).unwrap() - 3.0).abs() < 1e-14);
        let sq = Utility::series_unchecked(SeriesCoefficients::InverseSquare);
        assert!((sq.inverse_marginal(1.0).unwrap() - 0.644_934_066_848_226_4).abs() < 1e-10);
        assert!(matches!(sq.inverse_marginal(0.5), Err(ModelError::SeriesDiverged { .. })));
        assert!((ex22().inverse_marginal(1.0).unwrap() - E_MINUS_8_3).abs() < 1e-15);
    }

    #[test]
    fn risk_aversion() {
        assert_eq!(Utility::sqrt().risk_aversion(7.0).unwrap(), 0.5);
        assert!((Utility::power(0.3).unwrap().risk_aversion(2.0).unwrap() - 0.7).abs() < 1e-15);
        let pw = Utility::piecewise_sqrt_log();
        assert!((pw.risk_aversion(3.0).unwrap() - 0.75).abs() < 1e-15);
        let c = Utility::custom(Arc::new(LogPlusOne));
        assert!((c.risk_aversion(3.0).unwrap() - 0.75).abs() < 1e-8);
    }

    #[test]
    fn probes() {
        let n = Numerics::default();
        assert_eq!(
            Utility::power(0.5).unwrap().probe_asymptotic_risk_aversion(&n).verdict,
            ProbeVerdict::PositiveLiminf
        );
        assert_eq!(
            Utility::piecewise_sqrt_log().probe_asymptotic_risk_aversion(&n).verdict,
            ProbeVerdict::PositiveLiminf
        );
        let r = Utility::power(0.9).unwrap().probe_marginal_ratio(2.0, &n).verdict;
        assert!(matches!(r, ProbeVerdict::RatioBelowOne { bound } if (bound - 0.933_032_991_536_807_4).abs() < 1e-12));
        let r = Utility::sqrt().probe_marginal_ratio(4.0, &n).verdict;
        assert!(matches!(r, ProbeVerdict::RatioBelowOne { bound } if (bound - 0.5).abs() < 1e-15));
        // grid path on a custom model with R → 1
        let c = Utility::custom(Arc::new(LogPlusOne));
        assert_eq!(c.probe_asymptotic_risk_aversion(&n).verdict, ProbeVerdict::PositiveLiminf);
        assert!(matches!(c.probe_marginal_ratio(2.0, &n).verdict, ProbeVerdict::RatioBelowOne { .. }));
    }

    #[test]
    fn custom_falls_back_to_bisection() {
        let c = Utility::custom(Arc::new(LogPlusOne));
        assert!((c.inverse_marginal(0.25).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn series_rejects_negative_coefficient() {
        let err = Utility::series(SeriesCoefficients::Explicit { values: vec![-0.5, 1.0] }).unwrap_err();
        assert!(matches!(err, ModelError::SeriesValidation(_)));
    }

    #[test]
    fn power_rejects_bad_exponent() {
        assert!(Utility::power(1.0).is_err());
        assert!(Utility::power(0.0).is_err());
    }

    /// `u(x) = ln(1 + x)`; fails Inada at 0 but exercises the custom paths.
    #[derive(Debug)]
    struct LogPlusOne;

    impl UtilityModel for LogPlusOne {
        fn value(&self, x: f64) -> f64 {
            x.ln_1p()
        }
        fn marginal(&self, x: f64) -> f64 {
            1.0 / (1.0 + x)
        }
    }
}
