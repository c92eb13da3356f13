//! Randomised oracle suites. Each suite draws its own instances from a
//! seeded generator and compares the production algebra against an
//! independent computation.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::lattice::{LatticeBall, TorusMetric};
use crate::measure::min_scaled_resonance;
use crate::normalform::{cohomological_residual, cutoff_eval, solve_cohomological, Cutoff, FrequencyVector, KlFamily};
use crate::polyalg::{center, poisson_bracket, Coefficient, MultiIndex, ParamSchedule, RecenteredPoly, WeightSystem};
use crate::reference::{compare_with_oracle, oracle_bracket};
use crate::resonance::{resonance_value, HomogeneousPoly, DEFAULT_ENUMERATION_CAP};

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed error in the suite's own metric.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &str, cases: usize, failures: usize, worst: f64, tolerance: f64, detail: String) -> Self {
        SuiteResult { name: name.into(), cases, failures, worst, tolerance, passed: failures == 0, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

/// Sizes for every suite.
#[derive(Clone, Copy, Debug)]
pub struct SelftestSizes {
    pub bracket_pairs: usize,
    pub jacobi_triples: usize,
    pub cohomological: usize,
    pub gradient: usize,
    pub quartets: usize,
}

impl SelftestSizes {
    pub fn full() -> Self {
        SelftestSizes { bracket_pairs: 200, jacobi_triples: 50, cohomological: 100, gradient: 50, quartets: 10_000 }
    }

    pub fn quick() -> Self {
        SelftestSizes { bracket_pairs: 20, jacobi_triples: 5, cohomological: 12, gradient: 5, quartets: 1000 }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Random re-centered polynomial with up to `terms` monomials of degree in
/// `1..=max_degree`.
pub fn random_recentered(
    rng: &mut ChaCha8Rng,
    ball: &Arc<LatticeBall>,
    xi: &Arc<Vec<f64>>,
    max_degree: u32,
    terms: usize,
) -> RecenteredPoly {
    let n = ball.len();
    let mut out = RecenteredPoly::zero(ball.clone(), xi.clone(), false);
    for _ in 0..terms {
        let target = rng.random_range(1..=max_degree);
        let mut exps: Vec<(usize, u16, u16, u16)> = Vec::new();
        let mut deg = 0;
        while deg < target {
            let site = rng.random_range(0..n);
            let room = target - deg;
            let choice = rng.random_range(0..3);
            let e = match choice {
                0 => (site, 1, 0, 0),
                1 => (site, 0, 1, 0),
                _ if room >= 2 => (site, 0, 0, 1),
                _ => (site, 1, 0, 0),
            };
            let d = if e.3 == 1 { 2 } else { 1 };
            // keep k·l = 0 at every site
            let clash = exps.iter().any(|x| x.0 == site && ((e.1 > 0 && x.2 > 0) || (e.2 > 0 && x.1 > 0)));
            if clash {
                continue;
            }
            exps.push(e);
            deg += d;
        }
        if let Some(idx) = MultiIndex::from_exps(exps) {
            out.add_term(idx, Coefficient::new(rand_c(rng)));
        }
    }
    out
}

fn desk_ball() -> Arc<LatticeBall> {
    Arc::new(LatticeBall::new(1, 2.0).expect("valid ball"))
}

fn random_xi(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Arc<Vec<f64>> {
    Arc::new((0..n).map(|_| rng.random_range(0.0..scale)).collect())
}

/// Canonical bracket against expand/bracket/re-center, plus antisymmetry.
pub fn bracket_oracle_suite(pairs: usize, seed: u64) -> Result<SuiteResult> {
    let ball = desk_ball();
    let (mut failures, mut worst, mut support_failures) = (0, 0.0f64, 0);
    for case in 0..pairs {
        let mut rng = rng_for(seed, 1000 + case as u64);
        let xi = random_xi(&mut rng, ball.len(), 0.5);
        let nt = rng.random_range(1..=6);
        let p = random_recentered(&mut rng, &ball, &xi, 6, nt);
        let nt = rng.random_range(1..=6);
        let q = random_recentered(&mut rng, &ball, &xi, 6, nt);
        let br = poisson_bracket(&p, &q)?;
        let oracle = oracle_bracket(&p, &q);
        let (support, dev) = compare_with_oracle(&br, &oracle, 1e-9);
        let back = poisson_bracket(&q, &p)?;
        let anti = br.add(&back)?.max_abs();
        worst = worst.max(dev);
        if !support {
            support_failures += 1;
        }
        if !support || dev > 1e-12 || anti > 1e-10 {
            failures += 1;
        }
    }
    Ok(SuiteResult::new(
        "bracket_oracle",
        pairs,
        failures,
        worst,
        1e-12,
        format!("support mismatches {support_failures}; coefficient tolerance 1e-12; antisymmetry 1e-10"),
    ))
}

/// Jacobi identity on degree ≤ 4 triples.
pub fn jacobi_suite(triples: usize, seed: u64) -> Result<SuiteResult> {
    let ball = desk_ball();
    let (mut failures, mut worst) = (0, 0.0f64);
    for case in 0..triples {
        let mut rng = rng_for(seed, 2000 + case as u64);
        let xi = random_xi(&mut rng, ball.len(), 0.5);
        let a = random_recentered(&mut rng, &ball, &xi, 4, 4);
        let b = random_recentered(&mut rng, &ball, &xi, 4, 4);
        let c = random_recentered(&mut rng, &ball, &xi, 4, 4);
        let t1 = poisson_bracket(&a, &poisson_bracket(&b, &c)?)?;
        let t2 = poisson_bracket(&b, &poisson_bracket(&c, &a)?)?;
        let t3 = poisson_bracket(&c, &poisson_bracket(&a, &b)?)?;
        let err = t1.add(&t2)?.add(&t3)?.max_abs();
        worst = worst.max(err);
        if err > 1e-10 {
            failures += 1;
        }
    }
    Ok(SuiteResult::new("jacobi", triples, failures, worst, 1e-10, "degree <= 4".into()))
}

/// Residual of the cohomological equation with h cycling through 0, 1 and
/// an interior value.
pub fn cohomological_suite(cases: usize, seed: u64) -> Result<SuiteResult> {
    let ball = desk_ball();
    let sc = ParamSchedule::new(0.05, 1.0, 1)?;
    let ws = WeightSystem::new(sc);
    let (mut failures, mut worst) = (0, 0.0f64);
    let mut nonempty = 0;
    for case in 0..cases {
        let mut rng = rng_for(seed, 3000 + case as u64);
        let xi = random_xi(&mut rng, ball.len(), 0.01);
        let q = random_recentered(&mut rng, &ball, &xi, 6, 10);
        let omega = FrequencyVector::new((0..ball.len()).map(|_| rng.random_range(0.1..5.0)).collect(), None);
        let alpha = rng.random_range(0..3);
        let h = match case % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.01..0.99),
        };
        let chi = solve_cohomological(&q, &omega, &ws, alpha, &Cutoff::constant(h))?;
        if !chi.is_empty() {
            nonempty += 1;
        }
        let r = cohomological_residual(&q, &chi, &omega, &ws, alpha, h)?;
        worst = worst.max(r);
        if r > 1e-12 {
            failures += 1;
        }
    }
    Ok(SuiteResult::new(
        "cohomological",
        cases,
        failures,
        worst,
        1e-12,
        format!("{nonempty} instances with a nonzero generator"),
    ))
}

struct GradPipeline {
    lambda2: Vec<f64>,
    h1: HomogeneousPoly,
    h2: HomogeneousPoly,
    ws: WeightSystem,
    alpha: u32,
}

impl GradPipeline {
    /// center → bracket → cohomological solve at ξ with ω = λ² + ξ.
    fn run(&self, xi: &[f64], with_grad: bool) -> Result<RecenteredPoly> {
        let xi = Arc::new(xi.to_vec());
        let p = center(&[&self.h1], xi.clone(), with_grad)?;
        let q = center(&[&self.h2], xi.clone(), with_grad)?;
        let b = poisson_bracket(&p, &q)?;
        let mut omega = FrequencyVector::lambda_plus_xi(&self.lambda2, &xi);
        if !with_grad {
            omega.grad = None;
        }
        solve_cohomological(&b, &omega, &self.ws, self.alpha, &Cutoff::constant(1.0))
    }
}

/// Random zero-momentum quartic with `terms` coefficients.
fn random_quartic(rng: &mut ChaCha8Rng, ball: &Arc<LatticeBall>, terms: usize) -> Result<HomogeneousPoly> {
    let mut p = HomogeneousPoly::new(2, ball.clone());
    let mut placed = 0;
    while placed < terms {
        let v: Vec<usize> = (0..3).map(|_| rng.random_range(0..ball.len())).collect();
        // n₁ − n₂ + n₃ − n₄ = 0 fixes n₃
        let n3: Vec<i64> = (0..ball.dim())
            .map(|i| ball.site(v[1])[i] + ball.site(v[2])[i] - ball.site(v[0])[i])
            .collect();
        if let Some(c) = ball.index_of(&n3) {
            p.insert(vec![v[0], v[1], c, v[2]], rand_c(rng))?;
            placed += 1;
        }
    }
    Ok(p)
}

fn desk_xi(rng: &mut ChaCha8Rng, n: usize, eps: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..eps * eps)).collect()
}

/// Draw ξ until ω = λ² + ξ is non-resonant on the family: every
/// |Ω_𝐧|·⟨n₋⟩^{2s} exceeds γε², the regime where the cutoff equals 1.
fn nonresonant_xi(
    rng: &mut ChaCha8Rng,
    lambda2: &[f64],
    family: &KlFamily,
    schedule: &ParamSchedule,
) -> Vec<f64> {
    let thr = schedule.gamma() * schedule.epsilon * schedule.epsilon;
    loop {
        let xi = desk_xi(rng, lambda2.len(), schedule.epsilon);
        let om = FrequencyVector::lambda_plus_xi(lambda2, &xi);
        if min_scaled_resonance(&om, family, schedule.s).0 > thr {
            return xi;
        }
    }
}

/// Propagated ξ-gradients of χ against central finite differences, as
/// max deviation over the largest propagated gradient entry. ξ is drawn from
/// the non-resonant set.
pub fn gradient_suite(cases: usize, seed: u64, fd_step: f64, rel_tol: f64) -> Result<SuiteResult> {
    let ball = desk_ball();
    let lambda2 = ball.frequencies(&TorusMetric::square(1))?;
    let schedule = ParamSchedule::new(0.05, 1.0, 1)?.with_degree_cap(6);
    let family = KlFamily::enumerate(&ball, 6, DEFAULT_ENUMERATION_CAP)?;
    let ws = WeightSystem::new(schedule.clone());
    let (mut failures, mut worst) = (0, 0.0f64);
    for case in 0..cases {
        let mut rng = rng_for(seed, 4000 + case as u64);
        let pipe = GradPipeline {
            lambda2: lambda2.clone(),
            h1: random_quartic(&mut rng, &ball, 6)?,
            h2: random_quartic(&mut rng, &ball, 6)?,
            ws: ws.clone(),
            alpha: 0,
        };
        let xi = nonresonant_xi(&mut rng, &lambda2, &family, &schedule);
        let chi = pipe.run(&xi, true)?;
        let scale = chi.terms().values().flat_map(|c| c.grad.iter().flatten()).map(|g| g.norm()).fold(0.0, f64::max);
        let mut err: f64 = 0.0;
        for k in 0..ball.len() {
            let mut plus = xi.clone();
            let mut minus = xi.clone();
            plus[k] += fd_step;
            minus[k] -= fd_step;
            let cp = pipe.run(&plus, false)?;
            let cm = pipe.run(&minus, false)?;
            let mut keys: BTreeMap<&MultiIndex, ()> = BTreeMap::new();
            for idx in chi.terms().keys().chain(cp.terms().keys()).chain(cm.terms().keys()) {
                keys.insert(idx, ());
            }
            for idx in keys.keys() {
                let fd = (cp.value(idx) - cm.value(idx)) / (2.0 * fd_step);
                let an = chi.get(idx).and_then(|c| c.grad.as_ref()).map_or(Complex64::new(0.0, 0.0), |g| g[k]);
                err = err.max((fd - an).norm());
            }
        }
        let rel = err / scale.max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if rel > rel_tol {
            failures += 1;
        }
    }
    Ok(SuiteResult::new("xi_gradient", cases, failures, worst, rel_tol, format!("fd step {fd_step:e}")))
}

/// ξ-gradient of the small-divisor cutoff against central differences, on
/// draws with 1e−6 < 𝔥 < 1 − 1e−6. The cutoff is steep (factors carry large
/// multiplicities), so the step is smaller than for the polynomial pipeline.
pub fn cutoff_gradient_suite(cases: usize, seed: u64, fd_step: f64, rel_tol: f64) -> Result<SuiteResult> {
    let ball = desk_ball();
    let lambda2 = ball.frequencies(&TorusMetric::square(1))?;
    let sc = ParamSchedule::new(0.05, 1.0, 1)?.with_degree_cap(6);
    let family = KlFamily::enumerate(&ball, 6, DEFAULT_ENUMERATION_CAP)?;
    let eval = |xi: &[f64]| cutoff_eval(&sc, &FrequencyVector::lambda_plus_xi(&lambda2, xi), 0, &ball, &family, 6);
    let mut rng = rng_for(seed, 4500);
    let (mut tested, mut failures, mut worst, mut draws) = (0, 0, 0.0f64, 0);
    while tested < cases && draws < 1000 * cases.max(1) {
        draws += 1;
        let xi = desk_xi(&mut rng, ball.len(), 0.05);
        let c = eval(&xi);
        if !(c.h > 1e-6 && c.h < 1.0 - 1e-6) {
            continue;
        }
        tested += 1;
        let g = c.grad.expect("gradient requested");
        let scale = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let mut err: f64 = 0.0;
        for k in 0..ball.len() {
            let mut plus = xi.clone();
            let mut minus = xi.clone();
            plus[k] += fd_step;
            minus[k] -= fd_step;
            let fd = (eval(&plus).h - eval(&minus).h) / (2.0 * fd_step);
            err = err.max((fd - g[k]).abs());
        }
        let rel = err / scale.max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if rel > rel_tol {
            failures += 1;
        }
    }
    if tested < cases {
        failures += cases - tested;
    }
    Ok(SuiteResult::new(
        "cutoff_gradient",
        cases,
        failures,
        worst,
        rel_tol,
        format!("fd step {fd_step:e}; {tested} interior cutoffs found in {draws} draws"),
    ))
}

/// Ω − 2g(n₁−n₂, n₁−n₄) on random zero-momentum quartets.
pub fn four_wave_identity_suite(count: usize, seed: u64) -> Result<SuiteResult> {
    let metrics = [TorusMetric::admissible_example(), TorusMetric::square(2)];
    let mut rng = rng_for(seed, 5000);
    let (mut failures, mut worst) = (0, 0.0f64);
    for case in 0..count {
        let g = &metrics[case % 2];
        let mut draw = || -> Vec<i64> { (0..2).map(|_| rng.random_range(-50..=50)).collect() };
        let (n1, n2, n4) = (draw(), draw(), draw());
        let n3: Vec<i64> = (0..2).map(|i| n2[i] + n4[i] - n1[i]).collect();
        let om = resonance_value(g, &[n1.clone(), n2.clone(), n3, n4.clone()])?;
        let a: Vec<i64> = (0..2).map(|i| n1[i] - n2[i]).collect();
        let b: Vec<i64> = (0..2).map(|i| n1[i] - n4[i]).collect();
        let res = (om - 2.0 * g.g_form(&a, &b)?).abs() / (1.0 + om.abs());
        worst = worst.max(res);
        if res > 1e-12 {
            failures += 1;
        }
    }
    Ok(SuiteResult::new("four_wave_identity", count, failures, worst, 1e-12, "|n| <= 50 components, d = 2".into()))
}

pub fn run_selftest(sizes: SelftestSizes, seed: u64) -> Result<SelftestReport> {
    let suites = vec![
        bracket_oracle_suite(sizes.bracket_pairs, seed)?,
        jacobi_suite(sizes.jacobi_triples, seed)?,
        cohomological_suite(sizes.cohomological, seed)?,
        gradient_suite(sizes.gradient, seed, 1e-6, 1e-5)?,
        cutoff_gradient_suite(sizes.gradient, seed, 1e-8, 1e-4)?,
        four_wave_identity_suite(sizes.quartets, seed)?,
    ];
    let passed = suites.iter().all(|s| s.passed);
    Ok(SelftestReport { seed, suites, passed })
}
