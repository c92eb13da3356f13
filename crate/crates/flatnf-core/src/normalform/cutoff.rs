use serde::Serialize;

use super::family::{pattern_multiplicity, KlFamily};
use super::frequency::FrequencyVector;
use crate::lattice::LatticeBall;
use crate::polyalg::ParamSchedule;

/// Smooth even bump: 1 on |x| ≤ 1/2, 0 on |x| ≥ 1,
/// exp(1 − 1/(1 − (2|x| − 1)²)) in between.
pub fn bump(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        let t = 2.0 * a - 1.0;
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

pub fn bump_derivative(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 || a >= 1.0 {
        return 0.0;
    }
    let t = 2.0 * a - 1.0;
    let q = 1.0 - t * t;
    let dphi_dt = bump(x) * (-2.0 * t / (q * q));
    2.0 * dphi_dt * x.signum()
}

/// Value of the small-divisor cutoff and its ξ-gradient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cutoff {
    pub h: f64,
    pub grad: Option<Vec<f64>>,
    /// Number of distinct patterns entering the product.
    pub factors: usize,
    /// Patterns whose argument lies inside (−1, 1).
    pub active: usize,
}

impl Cutoff {
    /// Constant cutoff (no gradient), for tests and forced settings.
    pub fn constant(h: f64) -> Self {
        Cutoff { h, grad: None, factors: 0, active: 0 }
    }
}

/// 𝔥 = ∏ (1 − φ(⟨n₋⟩^{2s} Ω_𝐧(ω) / (γ(α) ε²))) over the multi-indices of
/// degree ≤ cap in Λ_{α+1}. Multi-indices sharing a (k, l) pattern share a
/// factor, so each pattern factor is raised to its multiplicity. Ω uses the
/// modulated normalisation.
pub fn cutoff_eval(
    schedule: &ParamSchedule,
    omega: &FrequencyVector,
    alpha: u32,
    ball: &LatticeBall,
    family: &KlFamily,
    degree_cap: u32,
) -> Cutoff {
    let radius = schedule.n_of(alpha + 1);
    let scale = 1.0 / (schedule.gamma_of(alpha) * schedule.epsilon * schedule.epsilon);
    let mut log_h = 0.0;
    let mut zero = false;
    let mut dlog: Option<Vec<f64>> = omega.grad.as_ref().map(|_| vec![0.0; omega.len()]);
    let (mut factors, mut active) = (0, 0);
    for p in family.patterns.iter().filter(|p| p.degree <= degree_cap && p.n_minus < radius) {
        factors += 1;
        let c = scale * p.n_minus_bracket.powf(2.0 * schedule.s);
        let x = c * 2.0 * omega.resonance(&p.idx);
        let phi = bump(x);
        if phi == 0.0 {
            continue;
        }
        active += 1;
        if phi == 1.0 {
            zero = true;
            continue;
        }
        let mult = pattern_multiplicity(ball.len(), p.degree, degree_cap);
        log_h += mult * (1.0 - phi).ln();
        if let (Some(d), Some(g)) = (dlog.as_mut(), omega.resonance_grad(&p.idx)) {
            let f = -mult * bump_derivative(x) * c * 2.0 / (1.0 - phi);
            for (o, gi) in d.iter_mut().zip(g) {
                *o += f * gi;
            }
        }
    }
    if zero {
        return Cutoff { h: 0.0, grad: dlog.map(|d| vec![0.0; d.len()]), factors, active };
    }
    let h = log_h.exp();
    Cutoff { h, grad: dlog.map(|d| d.into_iter().map(|x| h * x).collect()), factors, active }
}
