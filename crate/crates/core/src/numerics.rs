use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every module.
///
/// The first five fields form the `numerics` block of the run configuration;
/// the remaining knobs have defaults and may also be overridden there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Relative change below which a domain expansion counts as converged.
    pub rel_tol: f64,
    /// A partial integral or partial sum above this value is reported as divergent.
    pub divergence_cap: f64,
    /// Number of domain doublings (per side) before giving up.
    pub max_doublings: u32,
    /// Sample count for Monte Carlo cross-checks.
    pub mc_n: usize,
    /// Seed for Monte Carlo cross-checks.
    pub seed: u64,
    /// Relative tolerance of the adaptive panel quadrature.
    pub panel_tol: f64,
    /// Increment ratios at or above `1 - growth_tol` count as non-decaying.
    pub growth_tol: f64,
    /// Number of consecutive increment ratios inspected by the divergence test.
    pub growth_window: usize,
    /// Maximum number of series terms summed before the tail analysis.
    pub max_series_terms: u64,
    /// Relative budget tolerance for multipliers and witnesses.
    pub budget_tol: f64,
    /// Threshold on the Arrow–Pratt probe.
    pub risk_aversion_threshold: f64,
    /// Margin below one required by the marginal-ratio probe.
    pub ratio_margin: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            rel_tol: 1e-8,
            divergence_cap: 1e12,
            max_doublings: 20,
            mc_n: 100_000,
            seed: 0,
            panel_tol: 1e-10,
            growth_tol: 1e-3,
            growth_window: 5,
            max_series_terms: 1_000_000,
            budget_tol: 1e-6,
            risk_aversion_threshold: 1e-3,
            ratio_margin: 1e-3,
        }
    }
}

impl Numerics {
    /// Copy with the divergence cap removed, so that only structural evidence
    /// (non-decaying tails or growing terms) certifies divergence.
    pub fn uncapped(&self) -> Self {
        Numerics { divergence_cap: f64::INFINITY, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("divergence_cap", self.divergence_cap),
            ("panel_tol", self.panel_tol),
            ("growth_tol", self.growth_tol),
            ("budget_tol", self.budget_tol),
            ("risk_aversion_threshold", self.risk_aversion_threshold),
            ("ratio_margin", self.ratio_margin),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(format!("numerics.{name} must be positive, got {v}"));
            }
        }
        if self.max_doublings == 0 {
            return Err("numerics.max_doublings must be at least 1".into());
        }
        if self.growth_window < 2 {
            return Err("numerics.growth_window must be at least 2".into());
        }
        if self.mc_n < 100 {
            return Err("numerics.mc_n must be at least 100".into());
        }
        if self.max_series_terms < 16 {
            return Err("numerics.max_series_terms must be at least 16".into());
        }
        Ok(())
    }
}

/// Serialize `±∞` and NaN as the strings `"inf"`, `"-inf"`, `"nan"`; JSON has no such numbers.
pub(crate) fn ser_extended_f64<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}
