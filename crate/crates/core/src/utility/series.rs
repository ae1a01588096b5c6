//! Utilities built from a power series `p(x) = Σ_{n≥2} aₙ xⁿ`.
//!
//! With `g(y) = p(1/y)` and `h = g⁻¹`, the utility has `u' = h`, so
//! `(u')⁻¹ = g`, and `u(x) = x·h(x) + Σ aₙ h(x)^{-(n-1)}/(n-1)`. Everything is
//! evaluated in log space: `ln g(y)` is a log-sum over terms that can peak at
//! astronomically large `n` when `y` is small.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::ModelError;
use crate::expectation::integrate;
use crate::expectation::series::{ln_sum_log_concave, LogSum};
use crate::kernel::PricingKernel;
use crate::numerics::Numerics;

/// Caller-supplied `n ↦ aₙ` for `n ≥ 2`.
#[derive(Clone)]
pub struct CoefficientFn(pub Arc<dyn Fn(u64) -> f64 + Send + Sync>);

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CoefficientFn(..)")
    }
}

/// Coefficient rule for `aₙ`, `n ≥ 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesCoefficients {
    /// `aₙ = 1/(n + shift)!`
    ShiftedFactorial { shift: u32 },
    /// `aₙ = 1/(n² E[ξ^{-(n-1)}])` for the given kernel.
    KernelMatched { kernel: PricingKernel },
    /// `aₙ = 1/n²`. Not entire: `p(1/y)` diverges for `y < 1`.
    InverseSquare,
    /// `values[0] = a₂`, `values[1] = a₃`, …; zero beyond the list.
    Explicit { values: Vec<f64> },
    #[serde(skip)]
    Generator(CoefficientFn),
}

/// Peaks at least this wide (in `n`) are summed as an integral over `n`.
const WIDE_PEAK: f64 = 8.0;
const MAX_INDEX: u64 = 1 << 62;

impl SeriesCoefficients {
    pub fn generator(a: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        SeriesCoefficients::Generator(CoefficientFn(Arc::new(a)))
    }

    /// `aₙ`.
    pub fn coefficient(&self, n: u64) -> f64 {
        match self {
            SeriesCoefficients::Explicit { values } => {
                if n < 2 {
                    0.0
                } else {
                    values.get((n - 2) as usize).copied().unwrap_or(0.0)
                }
            }
            SeriesCoefficients::Generator(a) => (a.0)(n),
            _ => self.ln_coefficient_smooth(n as f64).exp(),
        }
    }

    /// `ln aₙ`; `−∞` for zero coefficients.
    pub fn ln_coefficient(&self, n: u64) -> f64 {
        match self {
            SeriesCoefficients::Explicit { .. } | SeriesCoefficients::Generator(_) => self.coefficient(n).ln(),
            _ => self.ln_coefficient_smooth(n as f64),
        }
    }

    /// Smooth extension of `ln aₙ` to real `n` (closed-form rules only).
    fn ln_coefficient_smooth(&self, n: f64) -> f64 {
        match self {
            SeriesCoefficients::ShiftedFactorial { shift } => -ln_gamma(n + *shift as f64 + 1.0),
            SeriesCoefficients::KernelMatched { kernel } => {
                let ln_m = kernel.ln_negative_moment_closed(n - 1.0).unwrap_or(f64::NAN);
                -2.0 * n.ln() - ln_m
            }
            SeriesCoefficients::InverseSquare => -2.0 * n.ln(),
            _ => f64::NAN,
        }
    }

    /// `ln Σ_{n≥2} aₙ e^{−(n−shift)·v − ln_weight(n)}`, the workhorse behind
    /// `g` and the value series.
    fn ln_sum(&self, v: f64, shift: f64, ln_weight: impl Fn(f64) -> f64) -> f64 {
        let t = |n: f64| self.ln_coefficient_smooth(n) - (n - shift) * v - ln_weight(n);
        match self {
            SeriesCoefficients::Explicit { values } => {
                let mut acc = LogSum::new();
                for (i, a) in values.iter().enumerate() {
                    let n = (i + 2) as f64;
                    acc.add(a.ln() - (n - shift) * v - ln_weight(n));
                }
                acc.ln()
            }
            SeriesCoefficients::Generator(_) => {
                let ti = |n: u64| self.ln_coefficient(n) - (n as f64 - shift) * v - ln_weight(n as f64);
                ln_sum_log_concave(&ti, 2, MAX_INDEX, &Numerics::default())
            }
            _ => ln_sum_smooth(&t, 2.0),
        }
    }

    /// `ln g(e^v) = ln Σ aₙ e^{−n v}`.
    pub fn ln_g(&self, v: f64) -> f64 {
        self.ln_sum(v, 0.0, |_| 0.0)
    }

    /// `ln Σ aₙ e^{−(n−1) v}/(n−1)`: the integral part of `u` at `h = e^v`.
    pub fn ln_value_tail(&self, v: f64) -> f64 {
        self.ln_sum(v, 1.0, |n| (n - 1.0).ln())
    }

    /// `ln h(x)` for `ln x`, by bisection on `ln y`. NaN when `g` cannot be evaluated.
    pub fn ln_h(&self, ln_x: f64) -> f64 {
        if ln_x == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        // g is decreasing: find lo with g(lo) ≥ x ≥ g(hi)
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut width = 2.0;
        for _ in 0..80 {
            let g = self.ln_g(lo);
            if g.is_nan() {
                return f64::NAN;
            }
            if g >= ln_x {
                break;
            }
            hi = hi.min(lo);
            lo -= width;
            width *= 2.0;
        }
        width = 2.0;
        for _ in 0..80 {
            let g = self.ln_g(hi);
            if g.is_nan() {
                return f64::NAN;
            }
            if g <= ln_x {
                break;
            }
            lo = lo.max(hi);
            hi += width;
            width *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-13 * mid.abs().max(1.0) || mid == lo || mid == hi {
                break;
            }
            let g = self.ln_g(mid);
            if g.is_nan() {
                return f64::NAN;
            }
            if g > ln_x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Check the invariants a series utility needs, naming the first failure.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::SeriesValidation(msg));
        let indices: Vec<u64> = match self {
            SeriesCoefficients::Explicit { values } => (2..values.len() as u64 + 2).collect(),
            _ => (2..=65).collect(),
        };
        for &n in &indices {
            let a = self.coefficient(n);
            if a.is_nan() || a < 0.0 {
                return fail(format!("coefficient a_{n} = {a} is negative; coefficients must be nonnegative"));
            }
        }
        if !indices.iter().any(|&n| self.coefficient(n) > 0.0) {
            return fail("all coefficients are zero; at least one must be positive".into());
        }
        // (u')⁻¹ = g must be finite on all of (0, ∞): probe y = 2^{-8} … 2^8
        let mut prev = f64::INFINITY;
        for k in -8..=8 {
            let v = k as f64 * std::f64::consts::LN_2;
            let lg = self.ln_g(v);
            if !lg.is_finite() {
                return fail(format!(
                    "p(1/y) is not summable at y = 2^{k}; the marginal utility inverse is undefined there"
                ));
            }
            if lg >= prev {
                return fail(format!("g(y) = p(1/y) is not strictly decreasing at y = 2^{k}"));
            }
            prev = lg;
        }
        for k in [-3, 0, 3] {
            let v = k as f64 * std::f64::consts::LN_2;
            let back = self.ln_h(self.ln_g(v));
            if (back - v).abs() > 1e-9 * (1.0 + v.abs()) {
                return fail(format!("u' = h fails: h(g(2^{k})) = e^{back}"));
            }
        }
        // u(0⁺) = 0 through x·h(x) → 0
        if self.ln_g(8.0 * std::f64::consts::LN_2) + 8.0 * std::f64::consts::LN_2 >= self.ln_g(0.0) {
            return fail("x·h(x) does not decrease towards 0 as x → 0".into());
        }
        Ok(())
    }
}

/// `ln Σ_{n≥n0} e^{t(n)}` for a smooth, eventually concave `t`.
fn ln_sum_smooth(t: &dyn Fn(f64) -> f64, n0: f64) -> f64 {
    let step = |n: f64| (n * 1e-9).max(1.0);
    let rising = |n: f64| t(n + step(n)) > t(n);
    let peak = if !rising(n0) {
        n0
    } else {
        let (mut lo, mut hi) = (n0, n0 + 1.0);
        while rising(hi) {
            lo = hi;
            hi = n0 + 2.0 * (hi - n0);
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        while hi - lo > step(lo) {
            let mid = 0.5 * (lo + hi);
            if rising(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let tp = t(peak);
    if !tp.is_finite() {
        return tp;
    }
    if peak - n0 > 40.0 * WIDE_PEAK {
        let d = peak.sqrt();
        let curvature = (t(peak + d) - 2.0 * tp + t(peak - d)) / (d * d);
        let w = 1.0 / (-curvature).sqrt();
        if w.is_finite() && w >= WIDE_PEAK && peak - n0 >= 40.0 * w {
            if let Some(v) = ln_integral_around_peak(t, n0, peak, tp, w) {
                return v;
            }
        }
    }
    if peak > MAX_INDEX as f64 / 2.0 {
        return f64::NAN;
    }
    let ti = |n: u64| t(n as f64);
    ln_sum_log_concave(&ti, n0 as u64, MAX_INDEX, &Numerics::default())
}

/// For a peak much wider than one index the sum equals the integral up to
/// an exponentially small Euler–Maclaurin remainder.
fn ln_integral_around_peak(t: &dyn Fn(f64) -> f64, n0: f64, peak: f64, tp: f64, w: f64) -> Option<f64> {
    let mut half = 60.0 * w;
    for _ in 0..8 {
        let lo = (peak - half).max(n0);
        let hi = peak + half;
        let tail_small = |n: f64| t(n) - tp < -45.0;
        if (lo == n0 || tail_small(lo)) && tail_small(hi) {
            let f = |n: f64| (t(n) - tp).exp();
            let mut points = vec![lo];
            if lo < peak {
                points.push(peak);
            }
            points.push(hi);
            let mut acc = 0.0;
            for pair in points.windows(2) {
                acc += integrate(&f, pair[0], pair[1], 1e-13, 0.0, 2000).ok()?.value;
            }
            return (acc > 0.0).then(|| tp + acc.ln());
        }
        half *= 2.0;
    }
    None
}
