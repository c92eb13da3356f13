use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hamiltonian::Hamiltonian;
use super::observables::{observables, ObservableSeries};
use crate::clusters::ClusterPartition;
use crate::error::{FlatError, Result};

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Implicit midpoint on the whole Hamiltonian.
    Midpoint,
    /// Exact linear half-steps around an implicit-midpoint step of the
    /// nonlinear part. Reproduces the linear flow exactly.
    StrangMidpoint,
    /// Fourth-order triple-jump composition of `StrangMidpoint`.
    Yoshida4,
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions<'a> {
    pub scheme: Scheme,
    /// Record observables every `stride` steps (and at the end).
    pub stride: usize,
    pub s: f64,
    /// Reference actions for the re-centered sum; |u₀|² when absent.
    pub xi: Option<Vec<f64>>,
    pub partition: Option<&'a ClusterPartition>,
    /// Fixed-point tolerance relative to max|u|.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IntegrateOptions<'_> {
    fn default() -> Self {
        IntegrateOptions {
            scheme: Scheme::StrangMidpoint,
            stride: 100,
            s: 1.0,
            xi: None,
            partition: None,
            tol: 1e-13,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub series: ObservableSeries,
    #[serde(skip)]
    pub final_state: Vec<Complex64>,
    pub steps: usize,
    pub dt: f64,
    /// Largest number of fixed-point iterations used by a step.
    pub max_iterations: usize,
}

fn rotate(h: &Hamiltonian, u: &mut [Complex64], t: f64) {
    for (z, l) in u.iter_mut().zip(h.lambda2()) {
        *z *= Complex64::from_polar(1.0, -l * t);
    }
}

/// Solve v = u − i dt ∇F((u + v)/2) by fixed-point iteration, where ∇F is
/// the full or the nonlinear gradient.
fn midpoint(h: &Hamiltonian, u: &[Complex64], dt: f64, full: bool, tol: f64, max_iter: usize, t: f64) -> Result<(Vec<Complex64>, usize)> {
    let grad = |w: &[Complex64]| if full { h.gradient(w) } else { h.nonlinear_gradient(w) };
    let scale = u.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut v = u.to_vec();
    let mut mid = vec![Complex64::new(0.0, 0.0); u.len()];
    let mut converged_at = None;
    for it in 1..=max_iter {
        for ((m, a), b) in mid.iter_mut().zip(u).zip(&v) {
            *m = 0.5 * (a + b);
        }
        let g = grad(&mid)?;
        let mut delta: f64 = 0.0;
        for ((vi, ui), gi) in v.iter_mut().zip(u).zip(&g) {
            let next = ui - Complex64::new(0.0, dt) * gi;
            delta = delta.max((next - *vi).norm());
            *vi = next;
        }
        if let Some(c) = converged_at {
            // one extra sweep after reaching the tolerance
            return Ok((v, c + 1));
        }
        if delta <= tol * scale {
            converged_at = Some(it);
            if delta == 0.0 {
                return Ok((v, it));
            }
        }
    }
    Err(FlatError::Integration { t, reason: format!("fixed-point iteration did not converge in {max_iter} sweeps") })
}

/// One step of size dt (negative dt steps backwards).
pub fn step(h: &Hamiltonian, u: &[Complex64], dt: f64, scheme: Scheme, tol: f64, max_iter: usize) -> Result<(Vec<Complex64>, usize)> {
    match scheme {
        Scheme::Midpoint => midpoint(h, u, dt, true, tol, max_iter, 0.0),
        Scheme::StrangMidpoint => {
            let mut w = u.to_vec();
            rotate(h, &mut w, 0.5 * dt);
            let (mut w, it) = midpoint(h, &w, dt, false, tol, max_iter, 0.0)?;
            rotate(h, &mut w, 0.5 * dt);
            Ok((w, it))
        }
        Scheme::Yoshida4 => {
            let c = 2f64.powf(1.0 / 3.0);
            let w1 = 1.0 / (2.0 - c);
            let w0 = -c / (2.0 - c);
            let mut w = u.to_vec();
            let mut iters = 0;
            for sub in [w1, w0, w1] {
                let (next, it) = step(h, &w, sub * dt, Scheme::StrangMidpoint, tol, max_iter)?;
                w = next;
                iters = iters.max(it);
            }
            Ok((w, iters))
        }
    }
}

/// Integrate i u̇ = ∇H(u) to time T with step ≈ dt (adjusted so that an
/// integer number of steps lands on T).
pub fn integrate(h: &Hamiltonian, u0: &[Complex64], t_end: f64, dt: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(FlatError::Argument(format!("need dt > 0 and T >= 0, got dt = {dt}, T = {t_end}")));
    }
    if opts.stride == 0 {
        return Err(FlatError::Argument("stride must be >= 1".into()));
    }
    let ball = h.ball().clone();
    if u0.len() != ball.len() {
        return Err(FlatError::Dimension { expected: ball.len(), got: u0.len() });
    }
    let steps = (t_end / dt).ceil() as usize;
    let dt = if steps == 0 { dt } else { t_end / steps as f64 };
    let xi: Vec<f64> = opts.xi.clone().unwrap_or_else(|| u0.iter().map(|z| z.norm_sqr()).collect());
    let mut series = ObservableSeries::default();
    let record = |series: &mut ObservableSeries, t: f64, u: &[Complex64]| -> Result<()> {
        let e = h.energy(u)?;
        let row = observables(&ball, t, u, u0, &xi, opts.partition, opts.s, e)?;
        series.push(&row);
        Ok(())
    };
    let mut u = u0.to_vec();
    record(&mut series, 0.0, &u)?;
    let mut max_iterations = 0;
    for k in 1..=steps {
        let (next, it) = step(h, &u, dt, opts.scheme, opts.tol, opts.max_iter).map_err(|e| match e {
            FlatError::Integration { reason, .. } => FlatError::Integration { t: (k - 1) as f64 * dt, reason },
            other => other,
        })?;
        max_iterations = max_iterations.max(it);
        u = next;
        if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(FlatError::Integration { t: k as f64 * dt, reason: "non-finite state".into() });
        }
        if k % opts.stride == 0 || k == steps {
            record(&mut series, k as f64 * dt, &u)?;
        }
    }
    Ok(Trajectory { series, final_state: u, steps, dt, max_iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{LatticeBall, TorusMetric};
    use crate::simulator::{build_hlo, build_nls};
    use std::sync::Arc;

    fn state(n: usize, amp: f64) -> Vec<Complex64> {
        (0..n).map(|i| Complex64::from_polar(amp * (1.0 + 0.3 * (i % 5) as f64), 0.71 * i as f64)).collect()
    }

    #[test]
    fn linear_flow_is_exact() {
        let ball = Arc::new(LatticeBall::new(2, 3.0).unwrap());
        let g = TorusMetric::admissible_example();
        let h = build_hlo(&g, ball.clone(), 0.0, &[], 1.0).unwrap();
        let u0 = state(ball.len(), 0.01);
        let tr = integrate(&h, &u0, 10.0, 0.01, &IntegrateOptions::default()).unwrap();
        let l2 = ball.frequencies(&g).unwrap();
        for i in 0..ball.len() {
            let exact = u0[i] * Complex64::from_polar(1.0, -l2[i] * 10.0);
            assert!((tr.final_state[i] - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_keeps_its_action() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let h = build_hlo(&TorusMetric::square(1), ball.clone(), -1.0, &[], 1.0).unwrap();
        let mut u0 = vec![Complex64::new(0.0, 0.0); ball.len()];
        u0[3] = Complex64::new(0.2, 0.0);
        for scheme in [Scheme::Midpoint, Scheme::StrangMidpoint, Scheme::Yoshida4] {
            let opts = IntegrateOptions { scheme, ..Default::default() };
            let tr = integrate(&h, &u0, 5.0, 0.01, &opts).unwrap();
            assert!((tr.final_state[3].norm() - 0.2).abs() < 1e-14);
            // i u̇ = (λ² + |u|²)u for f′(0) = −1
            let exact = Complex64::from_polar(0.2, -(h.lambda2()[3] + 0.04) * 5.0);
            assert!((tr.final_state[3] - exact).norm() < 1e-4);
        }
    }

    #[test]
    fn steps_are_reversible() {
        let ball = Arc::new(LatticeBall::new(2, 2.0).unwrap());
        let h = build_nls(&TorusMetric::admissible_example(), ball.clone(), -1.0).unwrap();
        let u0 = state(ball.len(), 0.05);
        for scheme in [Scheme::Midpoint, Scheme::StrangMidpoint, Scheme::Yoshida4] {
            let (a, _) = step(&h, &u0, 0.05, scheme, 1e-14, 100).unwrap();
            let (b, _) = step(&h, &a, -0.05, scheme, 1e-14, 100).unwrap();
            let err = u0.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-11, "{scheme:?}: {err}");
        }
    }

    #[test]
    fn integrable_model_conserves_every_action() {
        let ball = Arc::new(LatticeBall::new(2, 2.0).unwrap());
        let h = build_hlo(&TorusMetric::admissible_example(), ball.clone(), -1.0, &[], 1.0).unwrap();
        let u0 = state(ball.len(), 0.05);
        let tr = integrate(&h, &u0, 100.0, 0.05, &IntegrateOptions::default()).unwrap();
        for (a, b) in tr.final_state.iter().zip(&u0) {
            assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-10 * b.norm_sqr().max(1e-300) + 1e-18);
        }
        assert!(ObservableSeries::relative_drift(&tr.series.mass) < 1e-12);
    }
}
