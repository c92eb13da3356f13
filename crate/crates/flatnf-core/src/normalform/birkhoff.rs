use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{FlatError, Result};
use crate::lattice::TorusMetric;
use crate::polyalg::{center, poisson_bracket, MultiIndex, RecenteredPoly};
use crate::resonance::{kappa_filter, omega_from, HomogeneousPoly};

const AMBIGUITY: f64 = 1e-12;

/// Output of the truncated quasi-resonant Birkhoff normal form.
#[derive(Clone, Debug)]
pub struct BirkhoffOutput {
    pub kappa: f64,
    pub degree_cap: u32,
    /// Generator of each degree, in the ξ = 0 frame (y_n = |u_n|²).
    pub chi: Vec<(u32, RecenteredPoly)>,
    /// κ-resonant normal form of each degree.
    pub q: Vec<(u32, RecenteredPoly)>,
    /// Quartic normal form as a homogeneous polynomial: 1_{|Ω|≤κ}P⁴.
    pub q4: HomogeneousPoly,
    /// Terms above the degree cap produced by the transformation.
    pub remainder_terms: usize,
    pub remainder_max_abs: f64,
}

fn check_ambiguous(p: &RecenteredPoly, lambda2: &[f64], kappa: f64) -> Result<()> {
    for idx in p.terms().keys() {
        let om = idx.resonance(lambda2);
        if (om.abs() - kappa).abs() <= AMBIGUITY {
            return Err(FlatError::AmbiguousThreshold { kappa, omega: om.abs(), index: idx.to_string() });
        }
    }
    Ok(())
}

/// Degree-by-degree normal form of Z₂ + H⁴ + … + H^{2r} with
/// Z₂ = ½Σλ²|u|². With the bracket {·,·} used throughout, {Z₂, M} = iΩ_𝐧 M,
/// so the generator solving {Z₂, χ} + P = Q is χ_𝐧 = iP_𝐧/Ω_𝐧 on |Ω_𝐧| > κ.
pub fn birkhoff_truncated(
    hs: &[HomogeneousPoly],
    metric: &TorusMetric,
    kappa: f64,
    degree_cap: u32,
) -> Result<BirkhoffOutput> {
    if !(kappa > 0.0) {
        return Err(FlatError::Argument(format!("kappa must be > 0, got {kappa}")));
    }
    let first = hs.first().ok_or_else(|| FlatError::Argument("no input polynomials".into()))?;
    let ball = first.ball().clone();
    let lambda2 = ball.frequencies(metric)?;
    let quartics: Vec<&HomogeneousPoly> = hs.iter().filter(|p| p.q() == 2).collect();
    for p in &quartics {
        for v in p.coeffs().keys() {
            let om = omega_from(&lambda2, v);
            if (om.abs() - kappa).abs() <= AMBIGUITY {
                return Err(FlatError::AmbiguousThreshold { kappa, omega: om.abs(), index: format!("{v:?}") });
            }
        }
    }
    let mut q4 = HomogeneousPoly::new(2, ball.clone());
    for p in &quartics {
        for (v, c) in kappa_filter(p, metric, kappa)?.coeffs() {
            let old = q4.get(v);
            q4.insert(v.clone(), old + c)?;
        }
    }

    let xi0 = Arc::new(vec![0.0; ball.len()]);
    let refs: Vec<&HomogeneousPoly> = hs.iter().collect();
    let mut h = center(&refs, xi0.clone(), false)?.filter(|i| i.degree() <= degree_cap);
    let z2 = RecenteredPoly::quadratic_actions(
        ball.clone(),
        xi0.clone(),
        &lambda2.iter().map(|l| 0.5 * l).collect::<Vec<_>>(),
        None,
    );
    let mut chis = Vec::new();
    let mut remainder_terms = 0;
    let mut remainder_max_abs: f64 = 0.0;
    let mut d = 4;
    while d <= degree_cap {
        let p = h.filter(|i| i.degree() == d);
        check_ambiguous(&p, &lambda2, kappa)?;
        let mut chi = RecenteredPoly::zero(ball.clone(), xi0.clone(), false);
        for (idx, c) in p.terms() {
            let om = idx.resonance(&lambda2);
            if om.abs() > kappa {
                chi.add_term(idx.clone(), crate::polyalg::Coefficient::new(Complex64::new(0.0, 1.0) * c.value / om));
            }
        }
        if !chi.is_empty() {
            // new H = H∘Φ + (Z₂∘Φ − Z₂): C₁ = {H, χ} + {Z₂, χ}, C_ℓ = {C_{ℓ−1}, χ}
            let mut c = poisson_bracket(&h, &chi)?.add(&poisson_bracket(&z2, &chi)?)?;
            let mut fact = 1.0;
            let mut l = 1;
            loop {
                let (keep, drop): (Vec<_>, Vec<_>) = c.terms().iter().partition(|(i, _)| i.degree() <= degree_cap);
                remainder_terms += drop.len();
                for (_, v) in drop {
                    remainder_max_abs = remainder_max_abs.max(v.value.norm() / fact);
                }
                if keep.is_empty() {
                    break;
                }
                let kept = c.filter(|i| i.degree() <= degree_cap);
                h = h.add(&kept.scale(Complex64::new(1.0 / fact, 0.0)))?;
                l += 1;
                fact *= l as f64;
                c = poisson_bracket(&kept, &chi)?;
            }
        }
        chis.push((d, chi));
        d += 2;
    }
    let q = (4..=degree_cap)
        .step_by(2)
        .map(|d| (d, h.filter(|i: &MultiIndex| i.degree() == d)))
        .collect();
    Ok(BirkhoffOutput { kappa, degree_cap, chi: chis, q, q4, remainder_terms, remainder_max_abs })
}
