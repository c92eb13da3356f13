use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::hamiltonian::build_nls;
use super::integrate::{integrate, IntegrateOptions, Scheme};
use super::observables::ObservableSeries;
use crate::error::{FlatError, Result};
use crate::lattice::{LatticeBall, TorusMetric};
use crate::polyalg::hs_norm;

fn normalize(ball: &LatticeBall, u: &mut [Complex64], s: f64, eps: f64) -> Result<()> {
    let norm = hs_norm(ball, u, s);
    if norm == 0.0 {
        return Err(FlatError::Argument("seed has zero norm".into()));
    }
    for z in u.iter_mut() {
        *z *= eps / norm;
    }
    Ok(())
}

/// Equal-amplitude data on the given sites with the given phases, scaled to
/// ‖u‖_{h^s} = ε.
pub fn rectangle_seed(ball: &LatticeBall, sites: &[Vec<i64>], phases: &[f64], s: f64, eps: f64) -> Result<Vec<Complex64>> {
    if sites.len() != phases.len() || sites.is_empty() {
        return Err(FlatError::Argument("need one phase per seeded site".into()));
    }
    let mut u = vec![Complex64::new(0.0, 0.0); ball.len()];
    for (n, ph) in sites.iter().zip(phases) {
        let i = ball
            .index_of(n)
            .ok_or_else(|| FlatError::Argument(format!("site {n:?} lies outside the ball")))?;
        u[i] = Complex64::from_polar(1.0, *ph);
    }
    normalize(ball, &mut u, s, eps)?;
    Ok(u)
}

/// Random data with amplitudes decaying like ⟨n⟩^{−s−1}, uniform phases,
/// scaled to ‖u‖_{h^s} = ε.
pub fn random_seed(ball: &LatticeBall, s: f64, eps: f64, seed: u64) -> Result<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<Complex64> = (0..ball.len())
        .map(|i| {
            let amp = rng.random_range(0.5..1.0) * ball.japanese_of(i).powf(-s - 1.0);
            Complex64::from_polar(amp, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    normalize(ball, &mut u, s, eps)?;
    Ok(u)
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub t_end: f64,
    pub dt: f64,
    /// Series on the first metric (the square torus in the standard run).
    pub series_a: ObservableSeries,
    /// Series on the second metric (the admissible torus).
    pub series_b: ObservableSeries,
    /// Final action deviation, first over second.
    pub ratio_final: f64,
    /// Ratio of the maximal action deviations over the run.
    pub ratio_max: f64,
}

/// Integrate the same data under two metrics and compare action deviations.
#[allow(clippy::too_many_arguments)]
pub fn stability_experiment(
    metric_a: &TorusMetric,
    metric_b: &TorusMetric,
    ball: Arc<LatticeBall>,
    u0: &[Complex64],
    fprime0: f64,
    t_end: f64,
    dt: f64,
    s: f64,
    stride: usize,
) -> Result<StabilityReport> {
    let run = |metric: &TorusMetric| -> Result<ObservableSeries> {
        let h = build_nls(metric, ball.clone(), fprime0)?;
        let opts = IntegrateOptions { scheme: Scheme::StrangMidpoint, stride, s, ..Default::default() };
        Ok(integrate(&h, u0, t_end, dt, &opts)?.series)
    };
    let (a, b) = rayon::join(|| run(metric_a), || run(metric_b));
    let (series_a, series_b) = (a?, b?);
    let last = |s: &ObservableSeries| s.action_dev.last().copied().unwrap_or(0.0);
    let peak = |s: &ObservableSeries| s.action_dev.iter().copied().fold(0.0, f64::max);
    let ratio_final = last(&series_a) / last(&series_b);
    let ratio_max = peak(&series_a) / peak(&series_b);
    Ok(StabilityReport { t_end, dt, series_a, series_b, ratio_final, ratio_max })
}
