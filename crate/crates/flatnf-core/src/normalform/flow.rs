use num_complex::Complex64;
use serde::Serialize;

use crate::error::{FlatError, Result};
use crate::polyalg::RecenteredPoly;

/// Step statistics of an adaptive flow computation.
#[derive(Clone, Debug, Default, Serialize)]
pub struct FlowStats {
    pub accepted: usize,
    pub rejected: usize,
}

const MIN_STEP: f64 = 1e-14;
const MAX_STEPS: usize = 1_000_000;

// Dormand–Prince 5(4) tableau; the field is autonomous so the nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn rhs(chi: &RecenteredPoly, u: &[Complex64]) -> Result<Vec<Complex64>> {
    let g = chi.gradient_eval(u)?;
    Ok(g.into_iter().map(|z| Complex64::new(z.im, -z.re)).collect())
}

/// Time-t flow of i u̇ = ∇χ(u) by an adaptive Dormand–Prince pair with
/// local error tolerance `tol` (mixed absolute/relative, max norm).
pub fn poly_flow(chi: &RecenteredPoly, u0: &[Complex64], t: f64, tol: f64) -> Result<(Vec<Complex64>, FlowStats)> {
    if u0.len() != chi.ball().len() {
        return Err(FlatError::Dimension { expected: chi.ball().len(), got: u0.len() });
    }
    if !(tol > 0.0) {
        return Err(FlatError::Argument(format!("tolerance must be positive, got {tol}")));
    }
    let mut stats = FlowStats::default();
    let mut u = u0.to_vec();
    if chi.is_empty() || t == 0.0 {
        return Ok((u, stats));
    }
    let dir = t.signum();
    let total = t.abs();
    let mut done = 0.0;
    let mut h = total.min(0.1);
    let n = u.len();
    let mut k: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n]; 7];
    let mut stage = vec![Complex64::new(0.0, 0.0); n];
    k[0] = rhs(chi, &u)?;
    while done < total {
        if stats.accepted + stats.rejected > MAX_STEPS {
            return Err(FlatError::Integration { t: dir * done, reason: "step budget exhausted".into() });
        }
        let last = done + h >= total;
        let hs = if last { total - done } else { h };
        let sh = dir * hs;
        for s in 1..7 {
            for (i, st) in stage.iter_mut().enumerate() {
                let mut acc = u[i];
                for j in 0..s {
                    acc += sh * A[s][j] * k[j][i];
                }
                *st = acc;
            }
            k[s] = rhs(chi, &stage)?;
        }
        // stage 6 equals the 5th-order solution
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                e += sh * (B5[s] - B4[s]) * k[s][i];
            }
            let sc = tol * (1.0 + u[i].norm().max(stage[i].norm()));
            err = err.max(e.norm() / sc);
        }
        if err <= 1.0 {
            u.copy_from_slice(&stage);
            k.swap(0, 6);
            done = if last { total } else { done + hs };
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = hs * factor;
        if h < MIN_STEP * total.max(1.0) && done < total {
            return Err(FlatError::Integration { t: dir * done, reason: format!("step size underflow (h = {h:.3e})") });
        }
    }
    Ok((u, stats))
}

/// Largest ‖dΦ^t(u)v − v‖ over the probe directions (ℓ² norm), with
/// central differences of step `fd_step` along each real direction v.
pub fn flow_differential_check(
    chi: &RecenteredPoly,
    u: &[Complex64],
    t: f64,
    probes: &[Vec<Complex64>],
    fd_step: f64,
    tol: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for v in probes {
        let plus: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a + fd_step * b).collect();
        let minus: Vec<Complex64> = u.iter().zip(v).map(|(a, b)| a - fd_step * b).collect();
        let (fp, _) = poly_flow(chi, &plus, t, tol)?;
        let (fm, _) = poly_flow(chi, &minus, t, tol)?;
        let dev: f64 = fp
            .iter()
            .zip(&fm)
            .zip(v)
            .map(|((a, b), w)| ((a - b) / (2.0 * fd_step) - w).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBall;
    use crate::polyalg::MultiIndex;
    use std::sync::Arc;

    fn ball() -> Arc<LatticeBall> {
        Arc::new(LatticeBall::new(1, 2.0).unwrap())
    }

    fn state() -> Vec<Complex64> {
        (0..5).map(|i| Complex64::from_polar(0.1 + 0.02 * i as f64, 0.7 * i as f64)).collect()
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let chi = RecenteredPoly::zero(ball(), Arc::new(vec![0.0; 5]), false);
        let u = state();
        assert_eq!(poly_flow(&chi, &u, 1.0, 1e-12).unwrap().0, u);
        let probes = vec![vec![Complex64::new(1.0, 0.0); 5]];
        assert!(flow_differential_check(&chi, &u, 1.0, &probes, 1e-6, 1e-12).unwrap() < 1e-9);
    }

    #[test]
    fn linear_flow_is_phase_rotation() {
        let om = [0.3, -0.5, 1.1, 0.25, 2.0];
        let chi = RecenteredPoly::quadratic_actions(ball(), Arc::new(vec![0.01; 5]), &om, None);
        let u = state();
        let (v, _) = poly_flow(&chi, &u, 1.0, 1e-13).unwrap();
        for i in 0..5 {
            let exact = u[i] * Complex64::from_polar(1.0, -2.0 * om[i]);
            assert!((v[i] - exact).norm() < 1e-11);
        }
        for i in 0..5 {
            let mut p = vec![Complex64::new(0.0, 0.0); 5];
            p[i] = Complex64::new(1.0, 0.0);
            let d = flow_differential_check(&chi, &u, 1.0, &[p], 1e-5, 1e-13).unwrap();
            let expected = (Complex64::from_polar(1.0, -2.0 * om[i]) - 1.0).norm();
            assert!((d - expected).abs() < 1e-7, "site {i}: {d} vs {expected}");
        }
    }

    #[test]
    fn integrable_flow_keeps_actions_and_reverses() {
        let xi = Arc::new(vec![0.02; 5]);
        let b = ball();
        let chi = RecenteredPoly::from_values(
            b,
            xi,
            false,
            [
                (MultiIndex::from_exps([(0, 0, 0, 2)]).unwrap(), Complex64::new(3.0, 0.0)),
                (MultiIndex::from_exps([(1, 0, 0, 1), (3, 0, 0, 1)]).unwrap(), Complex64::new(-2.0, 0.0)),
            ],
        );
        let u = state();
        let (v, _) = poly_flow(&chi, &u, 1.0, 1e-13).unwrap();
        for i in 0..5 {
            assert!((v[i].norm_sqr() - u[i].norm_sqr()).abs() < 1e-12);
        }
        let (w, _) = poly_flow(&chi, &v, -1.0, 1e-13).unwrap();
        for i in 0..5 {
            assert!((w[i] - u[i]).norm() < 1e-12);
        }
    }
}
