//! Pricing-kernel models.
//!
//! A kernel is a strictly positive random variable `ξ`. Besides the usual
//! distribution functions each model exposes the log-density of `ln ξ`,
//! which is what the expectation engine integrates against.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::ModelError;
use crate::expectation::{expect, series::LogSum, ExtendedValue, IntegrandSpec};
use crate::numerics::Numerics;
use crate::probe::{liminf_from_grid, Evidence, ProbeOutcome, ProbeVerdict};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PricingKernel {
    /// `P(ξ ≤ t) = 1 − e^{−rate·t}`.
    Exponential { rate: f64 },
    /// `1/ξ ~ Exp(1)`, i.e. `P(ξ ≤ t) = e^{−1/t}`.
    InverseExponential,
    /// `ln ξ ~ N(mu, sigma²)`.
    Lognormal { mu: f64, sigma: f64 },
    /// `F(x) = 1/(1 − ln x)` on `(0, 1]`; `E[ln(1/ξ)] = +∞`.
    HeavyLog,
    Discrete { atoms: Vec<f64>, probs: Vec<f64> },
    Degenerate { c: f64 },
}

impl PricingKernel {
    pub fn exponential(rate: f64) -> Result<Self, ModelError> {
        let k = PricingKernel::Exponential { rate };
        k.validate()?;
        Ok(k)
    }

    pub fn inverse_exponential() -> Self {
        PricingKernel::InverseExponential
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self, ModelError> {
        let k = PricingKernel::Lognormal { mu, sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn heavy_log() -> Self {
        PricingKernel::HeavyLog
    }

    pub fn discrete(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self, ModelError> {
        let k = PricingKernel::Discrete { atoms, probs };
        k.validate()?;
        Ok(k)
    }

    pub fn degenerate(c: f64) -> Result<Self, ModelError> {
        let k = PricingKernel::Degenerate { c };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::KernelValidation(msg));
        match self {
            PricingKernel::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            PricingKernel::Lognormal { mu, sigma } => {
                if !mu.is_finite() || !(sigma.is_finite() && *sigma > 0.0) {
                    return bad(format!("lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})"));
                }
            }
            PricingKernel::Discrete { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return bad("discrete kernel needs equally many atoms and probs (at least one)".into());
                }
                if atoms.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return bad("discrete atoms must be finite and strictly positive".into());
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return bad("discrete probabilities must be nonnegative".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("discrete probabilities sum to {total}, not 1"));
                }
                let mut sorted = atoms.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return bad("discrete atoms must be distinct".into());
                }
            }
            PricingKernel::Degenerate { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return bad(format!("degenerate value must be positive, got {c}"));
                }
            }
            PricingKernel::InverseExponential | PricingKernel::HeavyLog => {}
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PricingKernel::Exponential { .. } => "exponential",
            PricingKernel::InverseExponential => "inverse_exponential",
            PricingKernel::Lognormal { .. } => "lognormal",
            PricingKernel::HeavyLog => "heavy_log",
            PricingKernel::Discrete { .. } => "discrete",
            PricingKernel::Degenerate { .. } => "degenerate",
        }
    }

    pub fn has_density(&self) -> bool {
        self.atoms().is_none()
    }

    /// Atoms and weights for kernels without a density.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            PricingKernel::Discrete { atoms, probs } => {
                Some(atoms.iter().cloned().zip(probs.iter().cloned()).collect())
            }
            PricingKernel::Degenerate { c } => Some(vec![(*c, 1.0)]),
            _ => None,
        }
    }

    /// Distribution function and, when it exists, the density at `x > 0`.
    pub fn cdf_pdf(&self, x: f64) -> (f64, Option<f64>) {
        if x.is_nan() || x <= 0.0 {
            return (0.0, self.has_density().then_some(0.0));
        }
        match self {
            PricingKernel::Exponential { rate } => {
                let e = (-rate * x).exp();
                (-(-rate * x).exp_m1(), Some(rate * e))
            }
            PricingKernel::InverseExponential => {
                let f = (-1.0 / x).exp();
                (f, Some(f / (x * x)))
            }
            PricingKernel::Lognormal { mu, sigma } => {
                let z = (x.ln() - mu) / sigma;
                let n = Normal::standard();
                let pdf = (-0.5 * z * z - LN_SQRT_2PI).exp() / (x * sigma);
                (n.cdf(z), Some(pdf))
            }
            PricingKernel::HeavyLog => {
                if x >= 1.0 {
                    (1.0, Some(if x == 1.0 { 1.0 } else { 0.0 }))
                } else {
                    let t = 1.0 - x.ln();
                    (1.0 / t, Some(1.0 / (x * t * t)))
                }
            }
            PricingKernel::Discrete { atoms, probs } => {
                let f = atoms.iter().zip(probs).filter(|(a, _)| **a <= x).map(|(_, p)| p).sum::<f64>();
                (f.min(1.0), None)
            }
            PricingKernel::Degenerate { c } => (if x >= *c { 1.0 } else { 0.0 }, None),
        }
    }

    /// `ln F(x)`, accurate deep in the lower tail.
    pub fn ln_cdf(&self, x: f64) -> f64 {
        match self {
            PricingKernel::Exponential { rate } => (-(-rate * x).exp_m1()).ln(),
            PricingKernel::InverseExponential => -1.0 / x,
            PricingKernel::Lognormal { mu, sigma } => ln_normal_cdf((x.ln() - mu) / sigma),
            PricingKernel::HeavyLog if x < 1.0 => -(1.0 - x.ln()).ln(),
            _ => self.cdf_pdf(x).0.ln(),
        }
    }

    /// Log-density of `ln ξ` at `s`; `−∞` outside the support.
    pub fn ln_log_density(&self, s: f64) -> f64 {
        match self {
            PricingKernel::Exponential { rate } => rate.ln() + s - rate * s.exp(),
            PricingKernel::InverseExponential => -(-s).exp() - s,
            PricingKernel::Lognormal { mu, sigma } => {
                let z = (s - mu) / sigma;
                -0.5 * z * z - LN_SQRT_2PI - sigma.ln()
            }
            PricingKernel::HeavyLog => {
                if s <= 0.0 {
                    -2.0 * (1.0 - s).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            PricingKernel::Discrete { .. } | PricingKernel::Degenerate { .. } => f64::NEG_INFINITY,
        }
    }

    /// Centre of the initial log-domain.
    pub fn log_center(&self) -> f64 {
        match self {
            PricingKernel::Exponential { rate } => -rate.ln(),
            PricingKernel::Lognormal { mu, .. } => *mu,
            PricingKernel::HeavyLog => -1.0,
            _ => 0.0,
        }
    }

    /// Half-width of the initial log-domain.
    pub fn log_scale(&self) -> f64 {
        match self {
            PricingKernel::Lognormal { sigma, .. } => sigma.max(0.5),
            _ => 1.0,
        }
    }

    /// Log-locations where the density of `ln ξ` is not smooth.
    pub fn log_breakpoints(&self) -> Vec<f64> {
        match self {
            PricingKernel::HeavyLog => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// `ln E[ξ^{−α}]` when a closed form exists; `Some(+∞)` when it is infinite.
    pub fn ln_negative_moment_closed(&self, alpha: f64) -> Option<f64> {
        match self {
            PricingKernel::Exponential { rate } => {
                if alpha >= 1.0 {
                    Some(f64::INFINITY)
                } else {
                    Some(alpha * rate.ln() + ln_gamma(1.0 - alpha))
                }
            }
            PricingKernel::InverseExponential => Some(ln_gamma(alpha + 1.0)),
            PricingKernel::Lognormal { mu, sigma } => Some(-alpha * mu + 0.5 * alpha * alpha * sigma * sigma),
            PricingKernel::HeavyLog => Some(if alpha > 0.0 { f64::INFINITY } else { 0.0 }),
            PricingKernel::Discrete { atoms, probs } => {
                let mut acc = LogSum::new();
                for (a, p) in atoms.iter().zip(probs) {
                    acc.add(p.ln() - alpha * a.ln());
                }
                Some(acc.ln())
            }
            PricingKernel::Degenerate { c } => Some(-alpha * c.ln()),
        }
    }

    /// `E[ξ^{−α}]`, from a closed form where one is known.
    pub fn negative_moment(&self, alpha: f64, numerics: &Numerics) -> ExtendedValue {
        assert!(alpha > 0.0, "negative moment order must be positive");
        match self {
            PricingKernel::InverseExponential if alpha.fract() == 0.0 && alpha <= 170.0 => {
                ExtendedValue::exact(gamma(alpha + 1.0).round())
            }
            PricingKernel::InverseExponential => ExtendedValue::finite(gamma(alpha + 1.0), 1e-14 * gamma(alpha + 1.0)),
            PricingKernel::Exponential { rate } => {
                if alpha >= 1.0 {
                    ExtendedValue::diverged_analytic("E[ξ^{-α}] = +∞ for α ≥ 1 under an exponential kernel")
                } else {
                    let v = rate.powf(alpha) * gamma(1.0 - alpha);
                    ExtendedValue::finite(v, 1e-14 * v)
                }
            }
            PricingKernel::Lognormal { .. } => {
                let v = self.ln_negative_moment_closed(alpha).unwrap().exp();
                if v.is_finite() {
                    ExtendedValue::finite(v, 1e-14 * v)
                } else {
                    ExtendedValue::diverged(crate::expectation::DivergenceEvidence::Overflow { at: alpha })
                }
            }
            PricingKernel::Discrete { .. } | PricingKernel::Degenerate { .. } => {
                self.negative_moment_quadrature(alpha, numerics)
            }
            PricingKernel::HeavyLog => self.negative_moment_quadrature(alpha, numerics),
        }
    }

    /// `E[ξ^{−α}]` by the expectation engine, ignoring closed forms.
    pub fn negative_moment_quadrature(&self, alpha: f64, numerics: &Numerics) -> ExtendedValue {
        expect(self, &IntegrandSpec::from_ln(move |s| -alpha * s), numerics)
    }

    /// `E[ln(1/ξ)]`.
    pub fn log_reciprocal_moment(&self, numerics: &Numerics) -> ExtendedValue {
        match self {
            PricingKernel::Exponential { rate } => ExtendedValue::finite(EULER_GAMMA + rate.ln(), 1e-15),
            PricingKernel::InverseExponential => ExtendedValue::finite(-EULER_GAMMA, 1e-15),
            PricingKernel::Lognormal { mu, .. } => ExtendedValue::exact(-mu),
            PricingKernel::Degenerate { c } => ExtendedValue::exact(-c.ln()),
            PricingKernel::Discrete { atoms, probs } => {
                ExtendedValue::exact(atoms.iter().zip(probs).map(|(a, p)| -p * a.ln()).sum())
            }
            // support is (0, 1], so ln(1/ξ) ≥ 0 and the engine applies
            PricingKernel::HeavyLog => expect(
                self,
                &IntegrandSpec::from_ln(|s: f64| if s < 0.0 { (-s).ln() } else { f64::NEG_INFINITY }),
                numerics,
            ),
        }
    }

    pub fn essential_infimum(&self) -> f64 {
        match self {
            PricingKernel::Discrete { atoms, probs } => atoms
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(a, _)| *a)
                .fold(f64::INFINITY, f64::min),
            PricingKernel::Degenerate { c } => *c,
            _ => 0.0,
        }
    }

    /// Sign of `liminf_{x→0} x F'(x)/F(x)`, analytically where known.
    pub fn probe_density_ratio(&self, _numerics: &Numerics) -> ProbeOutcome {
        let analytic = |verdict, statement: &str| ProbeOutcome {
            verdict,
            evidence: Evidence::Analytic { statement: statement.to_string() },
        };
        match self {
            PricingKernel::Lognormal { .. } => {
                analytic(ProbeVerdict::PositiveLiminf, "x F'(x)/F(x) = φ(z)/(σΦ(z)) → +∞ as x → 0")
            }
            PricingKernel::Exponential { .. } => {
                analytic(ProbeVerdict::PositiveLiminf, "x F'(x)/F(x) = r x e^{-rx}/(1 − e^{-rx}) → 1 as x → 0")
            }
            PricingKernel::InverseExponential => {
                analytic(ProbeVerdict::PositiveLiminf, "x F'(x)/F(x) = 1/x → +∞ as x → 0")
            }
            PricingKernel::HeavyLog => analytic(ProbeVerdict::ZeroLiminf, "x F'(x)/F(x) = 1/(1 − ln x) → 0 as x → 0"),
            PricingKernel::Discrete { .. } | PricingKernel::Degenerate { .. } => ProbeOutcome {
                verdict: ProbeVerdict::Inconclusive,
                evidence: Evidence::Unavailable { reason: "kernel has no density".into() },
            },
        }
    }

    /// Grid probe of `x F'(x)/F(x)` on `x = 2^{−k}`, `k = 10..=40`.
    pub fn probe_density_ratio_grid(&self, numerics: &Numerics) -> ProbeOutcome {
        if !self.has_density() {
            return ProbeOutcome {
                verdict: ProbeVerdict::Inconclusive,
                evidence: Evidence::Unavailable { reason: "kernel has no density".into() },
            };
        }
        let args: Vec<f64> = (10..=40).map(|k| 2f64.powi(-k)).collect();
        let values: Vec<f64> = args
            .iter()
            .map(|&x| {
                let s = x.ln();
                // ln(x F'(x)) = ln ρ(ln x)
                (self.ln_log_density(s) - self.ln_cdf(x)).exp()
            })
            .collect();
        let verdict = liminf_from_grid(&values, numerics.risk_aversion_threshold);
        ProbeOutcome {
            verdict,
            evidence: Evidence::Grid { arguments: args, values, threshold: numerics.risk_aversion_threshold },
        }
    }

    /// One draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PricingKernel::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            PricingKernel::InverseExponential => 1.0 / Exp::new(1.0).unwrap().sample(rng),
            PricingKernel::Lognormal { mu, sigma } => LogNormal::new(*mu, *sigma).expect("validated").sample(rng),
            PricingKernel::HeavyLog => {
                // U uniform on (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                // U < 1/745 underflows; keep draws strictly positive
                (1.0 - 1.0 / u).exp().max(f64::MIN_POSITIVE)
            }
            PricingKernel::Discrete { atoms, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().unwrap()
            }
            PricingKernel::Degenerate { c } => *c,
        }
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }
}

/// `ln Φ(z)` with an asymptotic expansion in the far lower tail.
fn ln_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        Normal::standard().cdf(z).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_pdf_examples() {
        let (f, p) = PricingKernel::exponential(1.0).unwrap().cdf_pdf(2f64.ln());
        assert!((f - 0.5).abs() < 1e-15 && (p.unwrap() - 0.5).abs() < 1e-15);
        let (f, p) = PricingKernel::inverse_exponential().cdf_pdf(1.0);
        let e1 = (-1.0f64).exp();
        assert!((f - e1).abs() < 1e-15 && (p.unwrap() - e1).abs() < 1e-15);
        let (f, p) = PricingKernel::lognormal(0.0, 1.0).unwrap().cdf_pdf(1.0);
        assert!((f - 0.5).abs() < 1e-15);
        assert!((p.unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(PricingKernel::discrete(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap().cdf_pdf(1.5), (0.5, None));
    }

    #[test]
    fn inverse_exponential_density_matches_finite_difference() {
        let k = PricingKernel::inverse_exponential();
        let h = 1e-6;
        let fd = (k.cdf_pdf(1.0 + h).0 - k.cdf_pdf(1.0 - h).0) / (2.0 * h);
        assert!((fd - k.cdf_pdf(1.0).1.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn negative_moment_examples() {
        let n = Numerics::default();
        assert_eq!(PricingKernel::inverse_exponential().negative_moment(3.0, &n).value(), Some(6.0));
        assert!(PricingKernel::exponential(1.0).unwrap().negative_moment(1.0, &n).is_diverged());
        let v = PricingKernel::lognormal(0.0, 1.0).unwrap().negative_moment(2.0, &n).value().unwrap();
        assert!((v - 2f64.exp()).abs() < 1e-12);
        assert!(PricingKernel::heavy_log().negative_moment(1.0, &n).is_diverged());
    }

    #[test]
    fn exponential_quadrature_path_diverges_at_one() {
        let n = Numerics::default();
        let k = PricingKernel::exponential(1.0).unwrap();
        assert!(k.negative_moment_quadrature(1.0, &n).is_diverged());
        let v = k.negative_moment_quadrature(0.5, &n).value().unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-8, "{v}");
    }

    #[test]
    fn log_reciprocal_moments() {
        let n = Numerics::default();
        assert!(PricingKernel::heavy_log().log_reciprocal_moment(&n).is_diverged());
        assert_eq!(PricingKernel::degenerate(1.0).unwrap().log_reciprocal_moment(&n).value(), Some(0.0));
        assert_eq!(PricingKernel::lognormal(0.3, 2.0).unwrap().log_reciprocal_moment(&n).value(), Some(-0.3));
    }

    #[test]
    fn essinf_examples() {
        assert_eq!(PricingKernel::discrete(vec![0.5, 2.0], vec![0.5, 0.5]).unwrap().essential_infimum(), 0.5);
        assert_eq!(PricingKernel::lognormal(0.0, 1.0).unwrap().essential_infimum(), 0.0);
        assert_eq!(PricingKernel::degenerate(3.0).unwrap().essential_infimum(), 3.0);
    }

    #[test]
    fn density_ratio_probes() {
        let n = Numerics::default();
        assert_eq!(PricingKernel::heavy_log().probe_density_ratio(&n).verdict, ProbeVerdict::ZeroLiminf);
        assert_eq!(PricingKernel::inverse_exponential().probe_density_ratio(&n).verdict, ProbeVerdict::PositiveLiminf);
        let ln = PricingKernel::lognormal(0.0, 1.0).unwrap();
        assert_eq!(ln.probe_density_ratio(&n).verdict, ProbeVerdict::PositiveLiminf);
        assert_eq!(ln.probe_density_ratio_grid(&n).verdict, ProbeVerdict::PositiveLiminf);
        assert_eq!(
            PricingKernel::exponential(1.0).unwrap().probe_density_ratio_grid(&n).verdict,
            ProbeVerdict::PositiveLiminf
        );
        assert!(matches!(
            PricingKernel::degenerate(1.0).unwrap().probe_density_ratio(&n).verdict,
            ProbeVerdict::Inconclusive
        ));
    }

    #[test]
    fn sampling() {
        assert_eq!(PricingKernel::degenerate(2.0).unwrap().sample(3, 1), vec![2.0, 2.0, 2.0]);
        let s = PricingKernel::exponential(1.0).unwrap().sample(1_000_000, 7);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        let s = PricingKernel::discrete(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap().sample(1_000_000, 7);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 2.0).abs() < 0.01);
        assert!(PricingKernel::heavy_log().sample(10_000, 3).iter().all(|x| *x > 0.0 && *x <= 1.0));
    }

    #[test]
    fn validation_rejects_bad_kernels() {
        assert!(PricingKernel::exponential(0.0).is_err());
        assert!(PricingKernel::lognormal(0.0, -1.0).is_err());
        assert!(PricingKernel::discrete(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(PricingKernel::discrete(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(PricingKernel::discrete(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(PricingKernel::degenerate(-1.0).is_err());
    }
}
