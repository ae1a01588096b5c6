//! Asymptotic probes: sign of a liminf, or whether a ratio stays below one.
//!
//! A probe answers from a closed form when the model knows one and from a
//! finite grid otherwise. Grid answers are heuristics and say so in their
//! evidence; anything not clear-cut is `Inconclusive`.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ProbeVerdict {
    PositiveLiminf,
    ZeroLiminf,
    /// `sup` of the ratio along the grid, strictly below one.
    RatioBelowOne { bound: f64 },
    RatioAtOne,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Analytic { statement: String },
    Grid { arguments: Vec<f64>, values: Vec<f64>, threshold: f64 },
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutcome {
    #[serde(flatten)]
    pub verdict: ProbeVerdict,
    pub evidence: Evidence,
}

impl ProbeOutcome {
    pub fn analytic(verdict: ProbeVerdict, statement: impl Into<String>) -> Self {
        ProbeOutcome { verdict, evidence: Evidence::Analytic { statement: statement.into() } }
    }

    pub fn unavailable(reason: impl Into<String>) -> Self {
        ProbeOutcome { verdict: ProbeVerdict::Inconclusive, evidence: Evidence::Unavailable { reason: reason.into() } }
    }
}

/// Decide the sign of a liminf from values along an increasingly extreme grid.
///
/// Zero when the values decrease monotonically to below `1e-6`; positive
/// when every value clears `threshold` and the sequence has not sagged
/// (last ≥ 0.95·first). Slow decay that satisfies neither is inconclusive.
pub fn liminf_from_grid(values: &[f64], threshold: f64) -> ProbeVerdict {
    if values.is_empty() || values.iter().any(|v| !v.is_finite() && !(*v == f64::INFINITY)) {
        return ProbeVerdict::Inconclusive;
    }
    let first = values[0];
    let last = *values.last().unwrap();
    let decreasing = values.windows(2).all(|w| w[1] <= w[0]);
    if decreasing && last < 1e-6 {
        return ProbeVerdict::ZeroLiminf;
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= threshold && last >= 0.95 * first {
        return ProbeVerdict::PositiveLiminf;
    }
    ProbeVerdict::Inconclusive
}

/// Decide whether a ratio stays uniformly below one along a grid.
pub fn ratio_from_grid(values: &[f64], margin: f64) -> ProbeVerdict {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return ProbeVerdict::Inconclusive;
    }
    let first = values[0];
    let last = *values.last().unwrap();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 1.0 - margin && (last - first).abs() <= 0.01 {
        ProbeVerdict::RatioBelowOne { bound: max }
    } else if last >= 1.0 - margin {
        ProbeVerdict::RatioAtOne
    } else {
        ProbeVerdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn liminf_rules() {
        assert_eq!(liminf_from_grid(&[0.5, 0.5, 0.5], 1e-3), ProbeVerdict::PositiveLiminf);
        assert_eq!(liminf_from_grid(&[1e-2, 1e-4, 1e-8], 1e-3), ProbeVerdict::ZeroLiminf);
        // 1/ln x style decay: neither clearly positive nor clearly zero
        let slow: Vec<f64> = (20..=40).map(|k| 1.0 / (k as f64 * 2f64.ln())).collect();
        assert_eq!(liminf_from_grid(&slow, 1e-3), ProbeVerdict::Inconclusive);
        assert_eq!(liminf_from_grid(&[f64::NAN], 1e-3), ProbeVerdict::Inconclusive);
    }

    #[test]
    fn ratio_rules() {
        assert_eq!(ratio_from_grid(&[0.5, 0.5], 1e-3), ProbeVerdict::RatioBelowOne { bound: 0.5 });
        assert_eq!(ratio_from_grid(&[0.9, 0.9999], 1e-3), ProbeVerdict::RatioAtOne);
        assert_eq!(ratio_from_grid(&[0.5, 0.8], 1e-3), ProbeVerdict::Inconclusive);
    }
}
