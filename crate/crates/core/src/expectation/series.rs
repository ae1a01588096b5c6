//! Series summation in log space with tail certification.

use super::{Diagnostics, DivergenceEvidence, ExtendedValue};
use crate::numerics::Numerics;

/// Running `ln Σ exp(tᵢ)` without overflow.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        LogSum { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    pub(crate) fn add(&mut self, ln_term: f64) {
        if ln_term == f64::NEG_INFINITY {
            return;
        }
        if ln_term > self.max {
            self.scaled = self.scaled * (self.max - ln_term).exp() + 1.0;
            self.max = ln_term;
        } else {
            self.scaled += (ln_term - self.max).exp();
        }
    }

    pub(crate) fn ln(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

pub(crate) fn ln_add(a: f64, b: f64) -> f64 {
    let mut s = LogSum::new();
    s.add(a);
    s.add(b);
    s.ln()
}

/// Stop when a term is this small relative to the partial sum.
const TERM_REL_STOP: f64 = 1e-16;
/// Length of the ratio window used to certify a geometric tail.
const RATIO_WINDOW: usize = 8;
/// Power-law exponents at or below `1 + POWER_MARGIN` are not certified finite.
const POWER_MARGIN: f64 = 0.05;
/// Largest disagreement between the two fitted exponents for a power-law tail.
const EXPONENT_DRIFT: f64 = 2e-3;
/// `|L·n|` below which a fitted factor `e^{Ln}` is indistinguishable from 1.
const EXP_FACTOR_TOL: f64 = 1e-3;

/// Fit `ln tₖ ≈ c − p ln k + L k` through `k = n/4, n/2, n`; returns `(L, p)`.
fn exp_power_fit<F: Fn(u64) -> f64>(ln_term: &F, n0: u64, n: u64) -> Option<(f64, f64)> {
    let (k1, k2, k3) = (n / 4, n / 2, n);
    if k1 < n0.max(4) {
        return None;
    }
    let (t1, t2, t3) = (ln_term(k1), ln_term(k2), ln_term(k3));
    if !(t1.is_finite() && t2.is_finite() && t3.is_finite()) {
        return None;
    }
    let (a1, b1, d1) = (-(k2 as f64 / k1 as f64).ln(), (k2 - k1) as f64, t2 - t1);
    let (a2, b2, d2) = (-(k3 as f64 / k2 as f64).ln(), (k3 - k2) as f64, t3 - t2);
    let det = a1 * b2 - a2 * b1;
    if det == 0.0 {
        return None;
    }
    let p = (d1 * b2 - d2 * b1) / det;
    let l = (a1 * d2 - a2 * d1) / det;
    Some((l, p))
}

/// Sum `Σ_{n ≥ n0} exp(ln_term(n))`.
///
/// Finite when the terms fall below `1e-16` of the partial sum and the
/// ratios provably stay below some `r < 1` (error bound `t·r/(1−r)`; `r`
/// covers both the recent ratios and a fitted factor `e^{Ln}`), or, once
/// `max_series_terms` terms have been added, when the decay fits a stable
/// power law `n^{-p}` with `p > 1.05` (Euler–Maclaurin tail). Diverged when
/// the partial sum passes the divergence cap, the terms are still
/// non-decreasing at the term cap, a growing factor `e^{Ln}` is fitted, or
/// the fitted power is at most one. `last_index` bounds finite-support
/// sequences.
pub fn series_sum_ln<F: Fn(u64) -> f64>(
    ln_term: F,
    n0: u64,
    last_index: Option<u64>,
    numerics: &Numerics,
) -> ExtendedValue {
    let ln_cap = numerics.divergence_cap.ln();
    let max_terms = numerics.max_series_terms;
    let mut acc = LogSum::new();
    let mut ratios = [0.0f64; RATIO_WINDOW];
    let mut filled = 0usize;
    let mut prev = f64::NAN;
    let mut n = n0;
    let mut count = 0u64;
    loop {
        if let Some(last) = last_index {
            if n > last {
                let v = acc.ln().exp();
                return ExtendedValue::finite(v, 4.0 * f64::EPSILON * v).with_diagnostics(Diagnostics {
                    refinements: count as usize,
                    tail_estimate: 0.0,
                    evaluations: count as usize,
                });
            }
        }
        let lt = ln_term(n);
        if lt.is_nan() {
            return ExtendedValue::inconclusive(format!("term {n} evaluated to NaN"));
        }
        if lt == f64::INFINITY {
            return ExtendedValue::diverged(DivergenceEvidence::Overflow { at: n as f64 });
        }
        acc.add(lt);
        count += 1;
        let ln_partial = acc.ln();
        if ln_partial >= f64::MAX.ln() {
            return ExtendedValue::diverged(DivergenceEvidence::Overflow { at: n as f64 });
        }
        if ln_partial > ln_cap {
            return ExtendedValue::diverged(DivergenceEvidence::CapExceeded {
                partial: ln_partial.exp(),
                after: count,
            });
        }
        if !prev.is_nan() {
            let r = if lt == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lt - prev
            };
            ratios[(count as usize) % RATIO_WINDOW] = r;
            filled += 1;
        }
        prev = lt;
        if filled >= RATIO_WINDOW && last_index.is_none() && lt - ln_partial <= TERM_REL_STOP.ln() {
            let r_window = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // future ratios are bounded by the current one for log-concave terms and by
            // e^L for terms n^{-p} e^{Ln}; wait while the two cannot be told apart
            let fit = exp_power_fit(&ln_term, n0, n);
            let lr = match fit {
                Some((l, _)) if l * n as f64 >= -EXP_FACTOR_TOL => f64::NAN,
                Some((l, _)) => r_window.max(l),
                None => r_window,
            };
            if lr < 0.0 {
                let partial = ln_partial.exp();
                let bound = (lt + lr).exp() / (-lr.exp_m1());
                return ExtendedValue::finite(partial + bound, bound + 4.0 * f64::EPSILON * partial)
                    .with_diagnostics(Diagnostics {
                        refinements: count as usize,
                        tail_estimate: bound,
                        evaluations: count as usize + 2,
                    });
            }
        }
        if count >= max_terms {
            return tail_at_cap(&ln_term, n, ln_partial, &ratios, numerics, count);
        }
        n += 1;
    }
}

fn tail_at_cap<F: Fn(u64) -> f64>(
    ln_term: &F,
    n_last: u64,
    ln_partial: f64,
    ratios: &[f64; RATIO_WINDOW],
    numerics: &Numerics,
    count: u64,
) -> ExtendedValue {
    if ratios.iter().all(|r| *r >= 0.0) {
        let r = ratios.iter().cloned().fold(f64::INFINITY, f64::min).exp();
        return ExtendedValue::diverged(DivergenceEvidence::TermGrowth { ratio: r, after: count });
    }
    let partial = ln_partial.exp();
    let lt_n = ln_term(n_last);
    let nf = n_last as f64;
    if let Some((l, _)) = exp_power_fit(ln_term, 1, n_last) {
        if l * nf > EXP_FACTOR_TOL {
            return ExtendedValue::diverged(DivergenceEvidence::ExponentialFactor { rate: l, after: count });
        }
        if l * nf < -EXP_FACTOR_TOL {
            let lr = l.max(ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            if lr < 0.0 {
                let bound = (lt_n + lr).exp() / (-lr.exp_m1());
                return ExtendedValue::finite(partial + bound, bound + 4.0 * f64::EPSILON * partial)
                    .with_diagnostics(Diagnostics {
                        refinements: count as usize,
                        tail_estimate: bound,
                        evaluations: count as usize + 2,
                    });
            }
        }
    }
    let half = (n_last / 2).max(1);
    let quarter = (n_last / 4).max(1);
    let p_far = (ln_term(half) - lt_n) / (n_last as f64 / half as f64).ln();
    let p_near = (ln_term(quarter) - ln_term(half)) / (half as f64 / quarter as f64).ln();
    let t_n = lt_n.exp();
    let em_tail = |p: f64| t_n * (nf / (p - 1.0) - 0.5 + p / (12.0 * nf));
    if p_far <= 1.0 + numerics.growth_tol && p_near <= 1.0 + numerics.growth_tol {
        return ExtendedValue::diverged(DivergenceEvidence::PowerLawTail { exponent: p_far, after: count });
    }
    // a drifting exponent means the terms are not a clean power law
    if p_far.min(p_near) > 1.0 + POWER_MARGIN && (p_near - p_far).abs() <= EXPONENT_DRIFT {
        let tail = em_tail(p_far);
        let err = (tail - em_tail(p_near)).abs() + t_n + EXP_FACTOR_TOL * tail + 4.0 * f64::EPSILON * partial;
        return ExtendedValue::finite(partial + tail, err).with_diagnostics(Diagnostics {
            refinements: count as usize,
            tail_estimate: tail,
            evaluations: count as usize + 3,
        });
    }
    ExtendedValue::inconclusive(format!(
        "term cap reached with slowly decaying terms (fitted exponents {p_near:.4}, {p_far:.4})"
    ))
}

/// `ln Σ_{n ≥ n0} exp(ln_term(n))` for a log-concave (hence unimodal) term
/// sequence. The peak is located by exponential and binary search, the left
/// flank is summed down to `n0` and the right flank is handed to
/// [`series_sum_ln`] without a cap. Returns `+∞` when the terms are still
/// rising at `max_index` or the right flank diverges, NaN when undecidable.
pub(crate) fn ln_sum_log_concave<F: Fn(u64) -> f64>(
    ln_term: &F,
    n0: u64,
    max_index: u64,
    numerics: &Numerics,
) -> f64 {
    let rising = |n: u64| ln_term(n + 1) > ln_term(n);
    let peak = if !rising(n0) {
        n0
    } else {
        let mut lo = n0;
        let mut step = 1u64;
        let mut hi = n0 + 1;
        while rising(hi) {
            lo = hi;
            step = step.saturating_mul(2);
            hi = n0.saturating_add(step);
            if hi > max_index {
                return f64::INFINITY;
            }
        }
        // rising(lo) holds, rising(hi) fails
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if rising(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let mut left = LogSum::new();
    let mut n = peak;
    loop {
        let lt = ln_term(n);
        if lt.is_nan() {
            return f64::NAN;
        }
        left.add(lt);
        if n == n0 {
            break;
        }
        let next = ln_term(n - 1);
        let r = next - lt;
        if r < 0.0 && next - left.ln() < (1e-17f64).ln() + (1.0 - r.exp()).ln() {
            break;
        }
        n -= 1;
    }
    // shift by the peak so the linear-space right flank cannot overflow
    let tp = ln_term(peak);
    let shifted = |n: u64| ln_term(n) - tp;
    let right = series_sum_ln(shifted, peak + 1, None, &numerics.uncapped());
    match right.value() {
        Some(v) if v > 0.0 => ln_add(left.ln(), tp + v.ln()),
        Some(_) => left.ln(),
        None if right.is_diverged() => f64::INFINITY,
        None => f64::NAN,
    }
}
