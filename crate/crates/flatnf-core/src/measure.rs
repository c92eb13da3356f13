//! Non-resonant sets: uniform sampling of weighted balls, the ball-volume
//! formula, non-resonance tests and Monte Carlo measure fractions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlatError, Result};
use crate::lattice::{LatticeBall, TorusMetric};
use crate::normalform::{FrequencyVector, KlFamily};
use crate::resonance::DEFAULT_ENUMERATION_CAP;

/// Volume of {Σ⟨n⟩^{2s}|u_n|² < ρ²} in ℝ^{2N}: the closed form with (N+1)!
/// as printed in the source analysis, and the standard ellipsoid volume with N!.
#[derive(Clone, Debug, Serialize)]
pub struct BallVolume {
    pub sites: usize,
    pub log_formula: f64,
    pub formula: f64,
    pub log_standard: f64,
    pub standard: f64,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn ball_volume(ball: &LatticeBall, s: f64, rho: f64) -> Result<BallVolume> {
    if !(rho > 0.0) {
        return Err(FlatError::Argument(format!("rho must be > 0, got {rho}")));
    }
    let n = ball.len();
    let common = n as f64 * std::f64::consts::PI.ln() + 2.0 * n as f64 * rho.ln()
        - 2.0 * s * (0..n).map(|i| ball.japanese_of(i).ln()).sum::<f64>();
    let log_formula = common - ln_factorial(n + 1);
    let log_standard = common - ln_factorial(n);
    Ok(BallVolume { sites: n, log_formula, formula: log_formula.exp(), log_standard, standard: log_standard.exp() })
}

/// Hit-or-miss estimate of the ellipsoid volume in its bounding box.
#[derive(Clone, Debug, Serialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn monte_carlo_volume(ball: &LatticeBall, s: f64, rho: f64, count: usize, seed: u64) -> Result<VolumeEstimate> {
    if count == 0 {
        return Err(FlatError::Argument("count must be >= 1".into()));
    }
    let n = ball.len();
    let half: Vec<f64> = (0..n).map(|i| rho * ball.japanese_of(i).powf(-s)).collect();
    let box_volume: f64 = half.iter().map(|a| 4.0 * a * a).product();
    let weights: Vec<f64> = (0..n).map(|i| ball.japanese_of(i).powf(2.0 * s)).collect();
    const CHUNK: usize = 4096;
    let hits: usize = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(count);
            (lo..hi)
                .filter(|_| {
                    let mut r2 = 0.0;
                    for i in 0..n {
                        let x: f64 = rng.random_range(-half[i]..half[i]);
                        let y: f64 = rng.random_range(-half[i]..half[i]);
                        r2 += weights[i] * (x * x + y * y);
                    }
                    r2 < rho * rho
                })
                .count()
        })
        .sum();
    let p = hits as f64 / count as f64;
    Ok(VolumeEstimate {
        estimate: box_volume * p,
        std_error: box_volume * (p * (1.0 - p) / count as f64).sqrt(),
        samples: count,
        seed,
    })
}

fn sample_one(rng: &mut ChaCha8Rng, scale: &[f64], rho: f64, weights: &[f64]) -> Vec<Complex64> {
    let n = scale.len();
    loop {
        let z: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let uni: f64 = rng.random();
        let r = uni.powf(1.0 / (2 * n) as f64);
        let u: Vec<Complex64> =
            (0..n).map(|i| Complex64::new(z[2 * i], z[2 * i + 1]) * (r / norm * scale[i])).collect();
        let q: f64 = u.iter().zip(weights).map(|(x, w)| w * x.norm_sqr()).sum();
        if q < rho * rho {
            return u;
        }
    }
}

/// i.i.d. uniform samples of {Σ⟨n⟩^{2s}|u_n|² < ρ²}. Sample i uses stream i
/// of the seeded generator, so results do not depend on the thread count.
pub fn sample_ball(ball: &LatticeBall, s: f64, rho: f64, count: usize, seed: u64) -> Result<Vec<Vec<Complex64>>> {
    if count == 0 {
        return Err(FlatError::Argument("count must be >= 1".into()));
    }
    if !(rho > 0.0) {
        return Err(FlatError::Argument(format!("rho must be > 0, got {rho}")));
    }
    let n = ball.len();
    let scale: Vec<f64> = (0..n).map(|i| rho * ball.japanese_of(i).powf(-s)).collect();
    let weights: Vec<f64> = (0..n).map(|i| ball.japanese_of(i).powf(2.0 * s)).collect();
    Ok((0..count)
        .into_par_iter()
        .map(|i| sample_one(&mut stream_rng(seed, i as u64), &scale, rho, &weights))
        .collect())
}

/// Which multi-indices enter the non-resonance test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySelect {
    /// Every non-integrable multi-index up to the degree cap.
    All,
    /// Only those with n₋ below the given radius (Λ at that scale).
    Lambda { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonResonanceSpec {
    pub gamma: f64,
    pub epsilon: f64,
    pub s: f64,
    pub degree_cap: u32,
    pub family: FamilySelect,
}

impl NonResonanceSpec {
    pub fn threshold(&self) -> f64 {
        self.gamma * self.epsilon * self.epsilon
    }

    pub fn family(&self, ball: &LatticeBall) -> Result<KlFamily> {
        if !(self.gamma * self.epsilon * self.epsilon > 0.0) {
            return Err(FlatError::Argument("gamma·epsilon² must be positive".into()));
        }
        let fam = KlFamily::enumerate(ball, self.degree_cap, DEFAULT_ENUMERATION_CAP)?;
        Ok(match self.family {
            FamilySelect::All => fam,
            FamilySelect::Lambda { radius } => fam.restricted(radius),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NonResonanceResult {
    pub pass: bool,
    pub worst_index: Option<String>,
    /// min |Ω_𝐧|·⟨n₋⟩^{2s} over the family (modulated units).
    pub worst_value: f64,
    pub threshold: f64,
}

/// Smallest |Ω_𝐧(ω)|·⟨n₋⟩^{2s} and the pattern attaining it.
pub fn min_scaled_resonance(omega: &FrequencyVector, family: &KlFamily, s: f64) -> (f64, Option<usize>) {
    let mut best = (f64::INFINITY, None);
    for (i, p) in family.patterns.iter().enumerate() {
        let v = (2.0 * omega.resonance(&p.idx)).abs() * p.n_minus_bracket.powf(2.0 * s);
        if v < best.0 {
            best = (v, Some(i));
        }
    }
    best
}

pub fn nonresonance_test(omega: &FrequencyVector, family: &KlFamily, spec: &NonResonanceSpec) -> NonResonanceResult {
    let (v, at) = min_scaled_resonance(omega, family, spec.s);
    NonResonanceResult {
        pass: v > spec.threshold(),
        worst_index: at.map(|i| family.patterns[i].idx.to_string()),
        worst_value: v,
        threshold: spec.threshold(),
    }
}

/// 95% Wilson score interval for k successes in n trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let z = 1.959963984540054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let den = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / den;
    let half = z / den * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct FractionReport {
    pub fraction: f64,
    pub passes: usize,
    pub count: usize,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// 1 − γ·ε^{−1/10⁴}.
    pub measure_bound: f64,
    pub vacuous: bool,
    pub gamma: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub family_size: usize,
}

/// min |Ω|⟨n₋⟩^{2s} for each sample u ∈ B_s(ε) with ξ = |u|², ω = λ² + ξ.
pub fn sample_minima(
    metric: &TorusMetric,
    ball: &LatticeBall,
    family: &KlFamily,
    s: f64,
    epsilon: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let lambda2 = ball.frequencies(metric)?;
    let samples = sample_ball(ball, s, epsilon, count, seed)?;
    Ok(samples
        .par_iter()
        .map(|u| {
            let xi: Vec<f64> = u.iter().map(|z| z.norm_sqr()).collect();
            let modulated: Vec<f64> = lambda2.iter().zip(&xi).map(|(l, x)| l + x).collect();
            let om = FrequencyVector::from_modulated(&modulated, None);
            min_scaled_resonance(&om, family, s).0
        })
        .collect())
}

fn report_from_minima(minima: &[f64], spec: &NonResonanceSpec, seed: u64, family_size: usize) -> FractionReport {
    let thr = spec.threshold();
    let passes = minima.iter().filter(|&&m| m > thr).count();
    let count = minima.len();
    let (lo, hi) = wilson_interval(passes, count);
    let bound = 1.0 - spec.gamma * spec.epsilon.powf(-1e-4);
    FractionReport {
        fraction: passes as f64 / count as f64,
        passes,
        count,
        wilson_lo: lo,
        wilson_hi: hi,
        measure_bound: bound,
        vacuous: bound <= 0.0,
        gamma: spec.gamma,
        epsilon: spec.epsilon,
        seed,
        family_size,
    }
}

/// Monte Carlo fraction of B_s(ε) whose actions pass the non-resonance test.
pub fn nonresonant_fraction(
    metric: &TorusMetric,
    ball: &LatticeBall,
    spec: &NonResonanceSpec,
    count: usize,
    seed: u64,
) -> Result<FractionReport> {
    let family = spec.family(ball)?;
    let minima = sample_minima(metric, ball, &family, spec.s, spec.epsilon, count, seed)?;
    Ok(report_from_minima(&minima, spec, seed, family.len()))
}

/// The fraction at several γ on the same samples.
pub fn gamma_ladder(
    metric: &TorusMetric,
    ball: &LatticeBall,
    spec: &NonResonanceSpec,
    gammas: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<FractionReport>> {
    let family = spec.family(ball)?;
    let minima = sample_minima(metric, ball, &family, spec.s, spec.epsilon, count, seed)?;
    Ok(gammas
        .iter()
        .map(|&g| report_from_minima(&minima, &NonResonanceSpec { gamma: g, ..spec.clone() }, seed, family.len()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_volume() {
        let ball = LatticeBall::new(2, 0.5).unwrap();
        assert_eq!(ball.len(), 1);
        let v = ball_volume(&ball, 3.0, 1.0).unwrap();
        assert!((v.formula - std::f64::consts::PI / 2.0).abs() < 1e-15);
        assert!((v.standard - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn volume_homogeneity() {
        let ball = LatticeBall::new(1, 2.0).unwrap();
        let a = ball_volume(&ball, 1.0, 0.3).unwrap();
        let b = ball_volume(&ball, 1.0, 0.6).unwrap();
        let n = ball.len() as f64;
        assert!((b.log_formula - a.log_formula - 2.0 * n * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn samples_are_inside_and_reproducible() {
        let ball = LatticeBall::new(1, 3.0).unwrap();
        let a = sample_ball(&ball, 1.5, 0.1, 500, 7).unwrap();
        let b = sample_ball(&ball, 1.5, 0.1, 500, 7).unwrap();
        assert_eq!(a, b);
        for u in &a {
            let q: f64 = u.iter().enumerate().map(|(i, z)| ball.japanese_of(i).powf(3.0) * z.norm_sqr()).sum();
            assert!(q < 0.01);
        }
    }

    #[test]
    fn squared_radius_moment() {
        let ball = LatticeBall::new(1, 2.0).unwrap();
        let n = ball.len() as f64;
        let count = 100_000;
        let s = ball_samples_r2(&ball, count);
        let mean = s.iter().sum::<f64>() / count as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
        let sigma = (var / count as f64).sqrt();
        assert!((mean - n / (n + 1.0)).abs() < 3.0 * sigma, "{mean} vs {}", n / (n + 1.0));
    }

    fn ball_samples_r2(ball: &LatticeBall, count: usize) -> Vec<f64> {
        sample_ball(ball, 1.0, 2.0, count, 11)
            .unwrap()
            .iter()
            .map(|u| u.iter().enumerate().map(|(i, z)| ball.japanese_of(i).powi(2) * z.norm_sqr()).sum::<f64>() / 4.0)
            .collect()
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 100);
        assert!(lo < 1e-15);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn rectangle_resonance_fails_on_square_torus() {
        let ball = LatticeBall::new(2, 1.0).unwrap();
        let spec = NonResonanceSpec { gamma: 0.5, epsilon: 0.1, s: 1.0, degree_cap: 4, family: FamilySelect::All };
        let fam = spec.family(&ball).unwrap();
        let l2 = ball.frequencies(&TorusMetric::square(2)).unwrap();
        let om = FrequencyVector::lambda_plus_xi(&l2, &vec![0.0; ball.len()]);
        let r = nonresonance_test(&om, &fam, &spec);
        assert!(!r.pass);
        assert_eq!(r.worst_value, 0.0);
    }

    #[test]
    fn tiny_gamma_passes_when_nothing_vanishes() {
        let ball = LatticeBall::new(2, 1.0).unwrap();
        let spec = NonResonanceSpec { gamma: 1e-300, epsilon: 0.1, s: 1.0, degree_cap: 4, family: FamilySelect::All };
        let fam = spec.family(&ball).unwrap();
        let l2 = ball.frequencies(&TorusMetric::admissible_example()).unwrap();
        let om = FrequencyVector::lambda_plus_xi(&l2, &vec![0.0; ball.len()]);
        assert!(nonresonance_test(&om, &fam, &spec).pass);
    }

    #[test]
    fn ladder_is_monotone() {
        let ball = LatticeBall::new(1, 2.0).unwrap();
        let spec = NonResonanceSpec { gamma: 0.1, epsilon: 0.1, s: 1.0, degree_cap: 4, family: FamilySelect::All };
        let rungs = gamma_ladder(&TorusMetric::square(1), &ball, &spec, &[1e-4, 1e-3, 1e-2, 1e-1, 1.0], 2000, 3).unwrap();
        for w in rungs.windows(2) {
            assert!(w[1].fraction <= w[0].fraction);
        }
    }
}
