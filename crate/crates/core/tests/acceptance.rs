//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that the lines show up in
//! `cargo test` output; exits non-zero when any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wellposed::expectation::integrate;
use wellposed::solver::{f_eval_quadrature, value_at_multiplier, LagrangeSolution};
use wellposed::*;

const F1_FACTORIAL: f64 = 1.0 / 12.0;
const A1_MATCHED: f64 = 0.644_934_066_848_226_4;
// partial-sum oracles, computed independently of the library
const A2_ORACLE: f64 = 0.082_240_526_465_012_5;
const V2_ORACLE: f64 = 0.306_852_819_440_054_7;

#[derive(Default)]
struct Criterion {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        let msg = msg.into();
        if ok {
            self.notes.push(msg);
        } else {
            self.failures.push(msg);
        }
    }

    fn close(&mut self, label: &str, v: &ExtendedValue, want: f64, tol: f64) {
        match v.value() {
            Some(x) => self.check((x - want).abs() <= tol, format!("{label} = {x} (want {want} ± {tol:e})")),
            None => self.check(false, format!("{label} is {} (want {want})", v.tag())),
        }
    }
}

fn ex21() -> (Utility, PricingKernel) {
    (Utility::sqrt(), PricingKernel::exponential(1.0).unwrap())
}

fn ex22() -> (Utility, PricingKernel) {
    let u = Utility::series(SeriesCoefficients::ShiftedFactorial { shift: 2 }).unwrap();
    (u, PricingKernel::inverse_exponential())
}

fn ex23() -> (Utility, PricingKernel) {
    let k = PricingKernel::lognormal(0.0, 1.0).unwrap();
    (Utility::series(SeriesCoefficients::KernelMatched { kernel: k.clone() }).unwrap(), k)
}

fn heavy() -> (Utility, PricingKernel) {
    (Utility::piecewise_sqrt_log(), PricingKernel::heavy_log())
}

fn power_lognormal() -> (Utility, PricingKernel) {
    (Utility::power(0.5).unwrap(), PricingKernel::lognormal(0.0, 1.0).unwrap())
}

fn five_atoms() -> (Vec<f64>, Vec<f64>) {
    (vec![0.5, 0.8, 1.0, 1.5, 2.5], vec![0.1, 0.2, 0.3, 0.25, 0.15])
}

fn c1(n: &Numerics, c: &mut Criterion) {
    let (u, k) = ex22();
    c.close("series f(1)", &f_eval(&u, &k, 1.0, n), F1_FACTORIAL, 1e-9);
    c.close("quadrature f(1)", &f_eval_quadrature(&u, &k, 1.0, n), F1_FACTORIAL, 1e-4 * F1_FACTORIAL);
}

fn c2(n: &Numerics, c: &mut Criterion) {
    let (u, k) = ex23();
    c.close("series a1", &f_eval(&u, &k, 1.0, n), A1_MATCHED, 1e-6);
    c.close("quadrature a1", &f_eval_quadrature(&u, &k, 1.0, n), A1_MATCHED, 1e-4 * A1_MATCHED);
}

fn c3(n: &Numerics, c: &mut Criterion) {
    let (u, k) = ex21();
    for l in [0.1, 1.0, 10.0] {
        let v = f_eval(&u, &k, l, n);
        c.check(v.is_diverged(), format!("sqrt/exp f({l}) {}", v.tag()));
    }
    let (u, k) = ex23();
    for (l, finite) in [(0.5, false), (0.9, false), (1.0, true), (2.0, true)] {
        let v = f_eval(&u, &k, l, n);
        let ok = if finite { v.is_finite() } else { v.is_diverged() };
        c.check(ok, format!("matched f({l}) {}", v.tag()));
    }
}

fn c4(n: &Numerics, c: &mut Criterion) {
    let (u, k) = ex23();
    let l = estimate_lambda0(&u, &k, n).lambda0;
    c.check((0.999..=1.001).contains(&l), format!("matched lambda0 = {l}"));
    let (u, k) = ex21();
    let l = estimate_lambda0(&u, &k, n).lambda0;
    c.check(l == f64::INFINITY, format!("sqrt/exp lambda0 = {l}"));
    let (u, k) = power_lognormal();
    let l = estimate_lambda0(&u, &k, n).lambda0;
    c.check(l == 0.0, format!("power/lognormal lambda0 = {l}"));
}

fn c5(n: &Numerics, c: &mut Criterion) {
    let (u, k) = ex23();
    c.close("a2 = f(2)", &f_eval(&u, &k, 2.0, n), A2_ORACLE, 1e-8);
    c.close("V(a2)", &value_at_multiplier(&u, &k, 2.0, n), V2_ORACLE, 1e-6);
    let v = classify(&u, &k, 1.0, n).verdict;
    c.check(matches!(v, Verdict::WellPosedNonAttainable { .. }), format!("classify(1) = {}", v.name()));
    let v = classify(&u, &k, 0.05, n).verdict;
    c.check(matches!(v, Verdict::WellPosedAttainable { .. }), format!("classify(0.05) = {}", v.name()));
}

fn c6(n: &Numerics, c: &mut Criterion) {
    let (u, k) = heavy();
    for l in [0.5, 1.0, 2.0] {
        let bound = 1.5 / l * (1.0 + 1e-6);
        let f = f_eval(&u, &k, l, n);
        c.check(f.value().is_some_and(|x| x <= bound), format!("f({l}) = {:?} ≤ {bound}", f.value()));
        let v = value_at_multiplier(&u, &k, l, n);
        c.check(v.is_diverged(), format!("E[u(X*)] at {l}: {}", v.tag()));
    }
    let cl = classify_model(&u, &k, n);
    c.check(matches!(cl.verdict, Verdict::IllPosedAll), format!("verdict {}", cl.verdict.name()));
    let cites = cl.theorem_chain.iter().any(|s| s.rule == "infinite_value_at_multiplier");
    c.check(cites, "chain includes the finite-budget / infinite-utility construction");
}

fn expected_utility(u: &Utility, xs: &[f64], ps: &[f64]) -> f64 {
    xs.iter().zip(ps).map(|(x, p)| p * u.value(*x).unwrap()).sum()
}

fn c7(n: &Numerics, c: &mut Criterion) {
    let sol = optimal_solution(&Utility::sqrt(), &PricingKernel::degenerate(1.0).unwrap(), 0.25, n);
    match sol {
        Ok(s) => {
            c.check((s.lambda - 1.0).abs() <= 1e-9, format!("lambda = {}", s.lambda));
            c.close("V(1/4)", &s.value, 0.5, 1e-9);
        }
        Err(e) => c.check(false, format!("degenerate solve failed: {e}")),
    }
    let (atoms, probs) = five_atoms();
    let k = PricingKernel::discrete(atoms.clone(), probs.clone()).unwrap();
    let u = Utility::sqrt();
    let a = 1.0;
    let s = match optimal_solution(&u, &k, a, n) {
        Ok(s) => s,
        Err(e) => return c.check(false, format!("discrete solve failed: {e}")),
    };
    let star: Vec<f64> = atoms.iter().map(|&x| s.wealth(x)).collect();
    let best = expected_utility(&u, &star, &probs);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut margin = f64::INFINITY;
    for _ in 0..1000 {
        let w: Vec<f64> = atoms.iter().map(|_| rng.random::<f64>()).collect();
        let cost: f64 = w.iter().zip(&atoms).zip(&probs).map(|((w, x), p)| w * x * p).sum();
        let y: Vec<f64> = w.iter().map(|w| w * a / cost).collect();
        margin = margin.min(best - expected_utility(&u, &y, &probs));
    }
    c.check(margin >= -1e-9, format!("optimality margin over 1000 candidates = {margin:e}"));
}

fn c8(n: &Numerics, c: &mut Criterion) {
    let (u, k) = ex21();
    for m in [10.0, 100.0] {
        match witness_unboundedness(&u, &k, 1.0, m, n) {
            Ok(w) => {
                c.close(&format!("witness m={m} budget"), &w.achieved_budget, 1.0, 1e-6);
                let eu = w.verified_utility.value();
                c.check(eu.is_some_and(|v| v >= m), format!("witness m={m} E[u(X)] = {eu:?}"));
            }
            Err(e) => c.check(false, format!("witness m={m}: {e}")),
        }
    }
}

fn shipped_models() -> Vec<(&'static str, Utility, PricingKernel)> {
    let (atoms, probs) = five_atoms();
    vec![
        ("sqrt/exponential", ex21().0, ex21().1),
        ("factorial series/inverse-exponential", ex22().0, ex22().1),
        ("matched series/lognormal", ex23().0, ex23().1),
        ("piecewise/heavy-log", heavy().0, heavy().1),
        ("power/lognormal", power_lognormal().0, power_lognormal().1),
        ("sqrt/degenerate", Utility::sqrt(), PricingKernel::degenerate(1.0).unwrap()),
        ("sqrt/discrete", Utility::sqrt(), PricingKernel::discrete(atoms, probs).unwrap()),
        ("piecewise/lognormal", Utility::piecewise_sqrt_log(), PricingKernel::lognormal(0.0, 1.0).unwrap()),
        ("power(0.3)/inverse-exponential", Utility::power(0.3).unwrap(), PricingKernel::inverse_exponential()),
    ]
}

fn monotone_curves(n: &Numerics, c: &mut Criterion) {
    let grid: Vec<f64> = (0..25).map(|i| 2f64.powf(-4.0 + i as f64 / 3.0)).collect();
    for (name, u, k) in shipped_models() {
        let pts = solver::f_curve(&u, &k, &grid, n);
        let mut ok = true;
        let mut seen_finite: Option<(f64, f64)> = None;
        for p in &pts {
            match (p.f.value(), seen_finite) {
                (Some(v), Some((prev, err))) => {
                    let slack = err + p.f.error_bound().unwrap_or(0.0) + 1e-12 * prev.abs();
                    ok &= v <= prev + slack;
                    seen_finite = Some((v, p.f.error_bound().unwrap_or(0.0)));
                }
                (Some(v), None) => seen_finite = Some((v, p.f.error_bound().unwrap_or(0.0))),
                (None, Some(_)) => ok &= !p.f.is_diverged(),
                (None, None) => {}
            }
        }
        c.check(ok, format!("f-curve monotone: {name}"));
    }
}

type Solved = (String, Utility, PricingKernel, LagrangeSolution);

fn solutions(n: &Numerics) -> (Vec<Solved>, Vec<String>) {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut push = |name: &str, (u, k): (Utility, PricingKernel), a: f64| match optimal_solution(&u, &k, a, n) {
        Ok(s) => out.push((format!("{name} a={a}"), u, k, s)),
        Err(e) => errors.push(format!("{name} a={a}: {e}")),
    };
    for a in [0.1, 1.0, 10.0] {
        push("power/lognormal", power_lognormal(), a);
    }
    for a in [0.05, 0.3, 0.6] {
        push("matched series/lognormal", ex23(), a);
    }
    push("factorial series/inverse-exponential", ex22(), 0.05);
    let (atoms, probs) = five_atoms();
    push("sqrt/discrete", (Utility::sqrt(), PricingKernel::discrete(atoms, probs).unwrap()), 1.0);
    push("piecewise/lognormal", (Utility::piecewise_sqrt_log(), PricingKernel::lognormal(0.0, 1.0).unwrap()), 1.0);
    (out, errors)
}

fn kkt_and_scaling(n: &Numerics, c: &mut Criterion) {
    let (sols, errors) = solutions(n);
    for e in errors {
        c.check(false, format!("reference solve failed: {e}"));
    }
    for (name, u, k, s) in &sols {
        let mut worst: f64 = 0.0;
        for x in k.sample(1000, 11) {
            let w = s.wealth(x);
            let (mu, _) = u.marginal(w).unwrap();
            worst = worst.max((mu - s.lambda * x).abs() / (s.lambda * x));
        }
        c.check(worst <= 1e-8, format!("KKT u'(X*) = λξ on 1000 draws, {name}: max rel err {worst:e}"));
    }
    // V(b) ≤ (b/a) V(a) for a < b on the same model
    for i in 0..sols.len() {
        for j in 0..sols.len() {
            let (ni, ui, ki, si) = &sols[i];
            let (nj, _, kj, sj) = &sols[j];
            if ui.kind_name() != sols[j].1.kind_name() || ki != kj || si.budget >= sj.budget {
                continue;
            }
            let (va, vb) = (si.value.value().unwrap(), sj.value.value().unwrap());
            let bound = sj.budget / si.budget * va + 1e-6;
            c.check(vb <= bound, format!("scaling {nj} vs {ni}: {vb} ≤ {bound}"));
        }
    }
}

fn roundtrips(c: &mut Criterion) {
    let utilities = [
        ("sqrt", Utility::sqrt()),
        ("power(0.5)", Utility::power(0.5).unwrap()),
        ("power(0.9)", Utility::power(0.9).unwrap()),
        ("piecewise", Utility::piecewise_sqrt_log()),
        ("factorial series", ex22().0),
        ("matched series", ex23().0),
    ];
    for (name, u) in utilities {
        let mut worst: f64 = 0.0;
        for x in [1e-6, 1e-3, 0.1, 0.5, 0.999, 1.0, 1.001, 2.0, 10.0, 1e3, 1e6] {
            let y = u.marginal(x).unwrap().0;
            let back = u.inverse_marginal(y).unwrap();
            worst = worst.max((back - x).abs() / (1.0 + x));
        }
        c.check(worst <= 1e-8, format!("inverse-marginal roundtrip {name}: {worst:e}"));
    }
}

fn normalization(c: &mut Criterion) {
    let kernels = [
        PricingKernel::exponential(1.0).unwrap(),
        PricingKernel::exponential(3.0).unwrap(),
        PricingKernel::inverse_exponential(),
        PricingKernel::lognormal(0.0, 1.0).unwrap(),
        PricingKernel::lognormal(1.0, 0.5).unwrap(),
        PricingKernel::heavy_log(),
    ];
    for k in kernels {
        // mass below e^lo and above e^hi from the cdf, the rest from the pdf
        let (lo, hi) = (-40.0, 6.0);
        let f = |s: f64| {
            let x = f64::exp(s);
            k.cdf_pdf(x).1.unwrap() * x
        };
        let mut mass = k.cdf_pdf(f64::exp(lo)).0 + 1.0 - k.cdf_pdf(f64::exp(hi)).0;
        let cuts: Vec<f64> = (0..=46).map(|i| lo + i as f64).collect();
        for w in cuts.windows(2) {
            mass += integrate(&f, w[0], w[1], 1e-12, 1e-15, 1000).unwrap().value;
        }
        c.check((mass - 1.0).abs() <= 1e-6, format!("pdf mass {}: {mass}", k.kind_name()));
    }
}

fn factorial_moments(n: &Numerics, c: &mut Criterion) {
    let k = PricingKernel::inverse_exponential();
    let mut fact = 1.0;
    for m in 1..=8 {
        fact *= m as f64;
        let v = k.negative_moment_quadrature(m as f64, n);
        let ok = v.value().is_some_and(|x| (x - fact).abs() <= 1e-9 * fact);
        c.check(ok, format!("E[ξ^-{m}] = {:?} vs {m}! (rel 1e-9)", v.value()));
    }
}

fn c9(n: &Numerics, c: &mut Criterion) {
    monotone_curves(n, c);
    kkt_and_scaling(n, c);
    roundtrips(c);
    normalization(c);
    factorial_moments(n, c);
}

fn c10(n: &Numerics, c: &mut Criterion) {
    let (u, k) = ex21();
    let v = classify_model(&u, &k, n).verdict;
    c.check(matches!(v, Verdict::IllPosedAll), format!("sqrt/exponential: {}", v.name()));
    let (u, k) = ex22();
    let v = classify_model(&u, &k, n).verdict;
    let ok = matches!(v, Verdict::AttainableUpTo { a0 } if (a0 - F1_FACTORIAL).abs() <= 1e-6);
    c.check(ok, format!("factorial series: {v:?}"));
    let (u, k) = ex23();
    let v = classify_model(&u, &k, n).verdict;
    let ok = matches!(v, Verdict::AttainableUpTo { a0 } if (a0 - A1_MATCHED).abs() <= 1e-6);
    c.check(ok, format!("matched series: {v:?}"));
    for a in [0.05, 0.3, 0.6, 0.65, 1.0, 5.0] {
        let v = classify(&u, &k, a, n).verdict;
        let want = a <= A1_MATCHED;
        let ok = if want {
            matches!(v, Verdict::WellPosedAttainable { .. })
        } else {
            matches!(v, Verdict::WellPosedNonAttainable { .. })
        };
        c.check(ok, format!("matched series a={a}: {} (attainable expected: {want})", v.name()));
    }
    let (u, k) = heavy();
    let v = classify_model(&u, &k, n).verdict;
    c.check(matches!(v, Verdict::IllPosedAll), format!("piecewise/heavy-log: {}", v.name()));
    let (u, k) = power_lognormal();
    for a in [0.1, 1.0, 10.0] {
        let v = classify(&u, &k, a, n).verdict;
        c.check(matches!(v, Verdict::WellPosedAttainable { .. }), format!("power/lognormal a={a}: {}", v.name()));
    }
}

fn main() {
    let n = Numerics::default();
    type Check = fn(&Numerics, &mut Criterion);
    let criteria: [(&str, Check); 10] = [
        ("factorial-series constant f(1) = 1/12", c1),
        ("matched-series constant a1 = (pi^2-6)/6", c2),
        ("divergence certification", c3),
        ("lambda0 boundary", c4),
        ("non-attainability numbers", c5),
        ("finite budget map with infinite value", c6),
        ("positive essential infimum path", c7),
        ("unboundedness witnesses", c8),
        ("property suites", c9),
        ("classifier truth table", c10),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let mut c = Criterion::default();
        run(&n, &mut c);
        let status = if c.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {status}: {name} ({} checks, {:.1}s)",
            i + 1,
            c.notes.len() + c.failures.len(),
            t.elapsed().as_secs_f64()
        );
        for f in &c.failures {
            println!("    failed: {f}");
        }
        if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
            for note in &c.notes {
                println!("    ok: {note}");
            }
        }
        failed += !c.failures.is_empty() as usize;
    }
    println!("acceptance: {} of 10 criteria passed in {:.1}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
