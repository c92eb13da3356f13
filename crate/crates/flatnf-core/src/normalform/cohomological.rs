use num_complex::Complex64;

use super::cutoff::Cutoff;
use super::frequency::FrequencyVector;
use crate::error::{FlatError, Result};
use crate::polyalg::{poisson_bracket, Coefficient, RecenteredPoly, WeightSystem};

const I_HALF: Complex64 = Complex64::new(0.0, 0.5);

/// χ_𝐧 = (i/2)·𝔥·Q_𝐧/Ω_𝐧(ω) on Λ_{α+1}, zero elsewhere, so that
/// {Z₂(ω), χ} = −𝔥·Π_Λ Q. Gradients follow the quotient rule.
pub fn solve_cohomological(
    q: &RecenteredPoly,
    omega: &FrequencyVector,
    ws: &WeightSystem,
    alpha: u32,
    h: &Cutoff,
) -> Result<RecenteredPoly> {
    let ball = q.ball().clone();
    if omega.len() != ball.len() {
        return Err(FlatError::Dimension { expected: ball.len(), got: omega.len() });
    }
    let with_grad = q.has_grad() || omega.grad.is_some() || h.grad.is_some();
    let n = ball.len();
    let mut chi = RecenteredPoly::zero(ball.clone(), q.xi().clone(), with_grad);
    if h.h == 0.0 {
        return Ok(chi);
    }
    for (idx, c) in q.terms() {
        if !ws.in_lambda(idx, &ball, alpha + 1) {
            continue;
        }
        let om = omega.resonance(idx);
        if om == 0.0 {
            return Err(FlatError::ZeroDivisor { index: idx.to_string() });
        }
        let value = I_HALF * h.h * c.value / om;
        let coef = if with_grad {
            let mut g = vec![Complex64::new(0.0, 0.0); n];
            if let Some(dq) = &c.grad {
                for (o, x) in g.iter_mut().zip(dq) {
                    *o += I_HALF * h.h * x / om;
                }
            }
            if let Some(dh) = &h.grad {
                for (o, x) in g.iter_mut().zip(dh) {
                    *o += I_HALF * x * c.value / om;
                }
            }
            if let Some(dom) = omega.resonance_grad(idx) {
                for (o, x) in g.iter_mut().zip(dom) {
                    *o -= value * x / om;
                }
            }
            Coefficient::with_grad(value, g)
        } else {
            Coefficient::new(value)
        };
        chi.add_term(idx.clone(), coef);
    }
    Ok(chi)
}

/// Largest coefficient of Q + {Z₂(ω), χ} − (Id − 𝔥Π_Λ)Q, relative to the
/// largest coefficient of Q (absolute when Q = 0).
pub fn cohomological_residual(
    q: &RecenteredPoly,
    chi: &RecenteredPoly,
    omega: &FrequencyVector,
    ws: &WeightSystem,
    alpha: u32,
    h: f64,
) -> Result<f64> {
    let ball = q.ball().clone();
    let z2 = RecenteredPoly::quadratic_actions(ball.clone(), q.xi().clone(), &omega.omega, None);
    let br = poisson_bracket(&z2, chi)?;
    let projected = q.filter(|i| ws.in_lambda(i, &ball, alpha + 1)).scale(Complex64::new(h, 0.0));
    // Q + {Z₂,χ} − (Q − hΠQ) = {Z₂,χ} + hΠQ
    let res = br.without_gradients().add(&projected.without_gradients())?;
    let scale = q.max_abs();
    let r = res.max_abs();
    Ok(if scale > 0.0 { r / scale } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBall;
    use crate::polyalg::{MultiIndex, ParamSchedule};
    use std::sync::Arc;

    fn ws() -> WeightSystem {
        WeightSystem::new(ParamSchedule::new(0.05, 1.0, 1).unwrap())
    }

    #[test]
    fn single_monomial_example() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = Arc::new(vec![0.0; 5]);
        // u_{0} ū_{1}: site indices 2 (n=0) and 3 (n=1); zero momentum is not
        // needed for the algebra here
        let idx = MultiIndex::from_exps([(2, 1, 0, 0), (3, 0, 1, 0)]).unwrap();
        let q = RecenteredPoly::from_values(ball, xi, false, [(idx.clone(), Complex64::new(1.0, 0.0))]);
        // Ω = ω_0 − ω_1 = 2
        let om = FrequencyVector::new(vec![0.0, 0.0, 3.0, 1.0, 0.0], None);
        let chi = solve_cohomological(&q, &om, &ws(), 0, &Cutoff::constant(1.0)).unwrap();
        assert_eq!(chi.value(&idx), Complex64::new(0.0, 0.25));
    }

    #[test]
    fn integrable_q_gives_zero() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = Arc::new(vec![0.1; 5]);
        let idx = MultiIndex::from_exps([(1, 0, 0, 2), (4, 0, 0, 1)]).unwrap();
        let q = RecenteredPoly::from_values(ball, xi, false, [(idx, Complex64::new(1.0, 0.0))]);
        let om = FrequencyVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], None);
        let chi = solve_cohomological(&q, &om, &ws(), 0, &Cutoff::constant(1.0)).unwrap();
        assert!(chi.is_empty());
    }

    #[test]
    fn zero_divisor_is_guarded() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = Arc::new(vec![0.0; 5]);
        let idx = MultiIndex::from_exps([(1, 1, 0, 0), (3, 0, 1, 0)]).unwrap();
        let q = RecenteredPoly::from_values(ball, xi, false, [(idx, Complex64::new(1.0, 0.0))]);
        let om = FrequencyVector::new(vec![0.0, 1.0, 0.0, 1.0, 0.0], None);
        let err = solve_cohomological(&q, &om, &ws(), 0, &Cutoff::constant(0.5)).unwrap_err();
        assert!(matches!(err, FlatError::ZeroDivisor { .. }));
        // h = 0 never divides
        assert!(solve_cohomological(&q, &om, &ws(), 0, &Cutoff::constant(0.0)).unwrap().is_empty());
    }

    #[test]
    fn residual_vanishes() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = Arc::new(vec![0.01, 0.02, 0.03, 0.04, 0.05]);
        let a = MultiIndex::from_exps([(1, 1, 0, 1), (3, 0, 1, 0)]).unwrap();
        let b = MultiIndex::from_exps([(0, 2, 0, 0), (2, 0, 1, 0), (4, 0, 1, 1)]).unwrap();
        let q = RecenteredPoly::from_values(
            ball,
            xi,
            false,
            [(a.clone(), Complex64::new(0.3, -0.2)), (a.conj(), Complex64::new(0.3, 0.2)), (b, Complex64::new(1.5, 0.0))],
        );
        let om = FrequencyVector::new(vec![0.3, 0.71, 1.3, 2.9, 4.1], None);
        for h in [0.0, 0.37, 1.0] {
            let chi = solve_cohomological(&q, &om, &ws(), 0, &Cutoff::constant(h)).unwrap();
            let r = cohomological_residual(&q, &chi, &om, &ws(), 0, h).unwrap();
            assert!(r <= 1e-15, "h={h} residual {r}");
        }
    }
}
