use num_complex::Complex64;
use rayon::prelude::*;

use super::index::{MultiIndex, SiteExp};
use super::poly::{Accum, Coefficient, RecenteredPoly};
use crate::error::Result;

const CHUNK: usize = 64;

/// {p, q} = 2i Σ_n (∂_{ū_n}p ∂_{u_n}q − ∂_{u_n}p ∂_{ū_n}q), re-centered at
/// the common ξ. Gradients follow the product rule plus the explicit ξ
/// derivatives created by re-pairing.
pub fn poisson_bracket(p: &RecenteredPoly, q: &RecenteredPoly) -> Result<RecenteredPoly> {
    p.check_frame(q)?;
    let with_grad = p.has_grad() || q.has_grad();
    let nsites = p.ball().len();
    let xi = p.xi().clone();
    let pt: Vec<(&MultiIndex, &Coefficient)> = p.terms().iter().collect();
    let qt: Vec<(&MultiIndex, &Coefficient)> = q.terms().iter().collect();

    let parts: Vec<Accum> = pt
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accum::new(nsites, with_grad);
            let mut raw: Vec<SiteExp> = Vec::with_capacity(16);
            let mut grad_buf = vec![Complex64::new(0.0, 0.0); if with_grad { nsites } else { 0 }];
            for (a, ca) in chunk {
                for (b, cb) in &qt {
                    bracket_monomials(a, ca, b, cb, &xi, with_grad, &mut raw, &mut grad_buf, &mut acc);
                }
            }
            acc
        })
        .collect();

    let mut total = Accum::new(nsites, with_grad);
    for part in parts {
        total.merge(part);
    }
    Ok(RecenteredPoly::from_terms(p.ball().clone(), xi, total.into_terms(), with_grad))
}

#[allow(clippy::too_many_arguments)]
fn bracket_monomials(
    a: &MultiIndex,
    ca: &Coefficient,
    b: &MultiIndex,
    cb: &Coefficient,
    xi: &[f64],
    with_grad: bool,
    raw: &mut Vec<SiteExp>,
    grad_buf: &mut [Complex64],
    acc: &mut Accum,
) {
    let ea = a.entries();
    let eb = b.entries();
    // shared sites
    let (mut i, mut j) = (0, 0);
    while i < ea.len() && j < eb.len() {
        let (x, y) = (ea[i], eb[j]);
        if x.site < y.site {
            i += 1;
            continue;
        }
        if y.site < x.site {
            j += 1;
            continue;
        }
        let site = x.site;
        let pair_kill = y.k as i32 * x.l as i32 - x.k as i32 * y.l as i32;
        let action_kill =
            x.m as i32 * (y.k as i32 - y.l as i32) + y.m as i32 * (x.l as i32 - x.k as i32);
        for (factor, kind) in [(pair_kill, 0u8), (action_kill, 1u8)] {
            if factor == 0 {
                continue;
            }
            merged_exponents(ea, eb, raw);
            let e = raw.iter_mut().find(|e| e.site == site).expect("shared site present");
            if kind == 0 {
                e.k -= 1;
                e.l -= 1;
            } else {
                e.m -= 1;
            }
            let f = Complex64::new(0.0, 2.0 * factor as f64);
            let value = f * ca.value * cb.value;
            if with_grad {
                for g in grad_buf.iter_mut() {
                    *g = Complex64::new(0.0, 0.0);
                }
                if let Some(ga) = &ca.grad {
                    for (o, x) in grad_buf.iter_mut().zip(ga) {
                        *o += f * x * cb.value;
                    }
                }
                if let Some(gb) = &cb.grad {
                    for (o, x) in grad_buf.iter_mut().zip(gb) {
                        *o += f * ca.value * x;
                    }
                }
                acc.push_raw(raw, xi, value, Some(grad_buf));
            } else {
                acc.push_raw(raw, xi, value, None);
            }
        }
        i += 1;
        j += 1;
    }
}

/// Site-wise sum of two exponent lists (sorted by site).
fn merged_exponents(ea: &[SiteExp], eb: &[SiteExp], out: &mut Vec<SiteExp>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < ea.len() || j < eb.len() {
        if j == eb.len() || (i < ea.len() && ea[i].site < eb[j].site) {
            out.push(ea[i]);
            i += 1;
        } else if i == ea.len() || eb[j].site < ea[i].site {
            out.push(eb[j]);
            j += 1;
        } else {
            let (x, y) = (ea[i], eb[j]);
            out.push(SiteExp { site: x.site, k: x.k + y.k, l: x.l + y.l, m: x.m + y.m });
            i += 1;
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBall;
    use std::sync::Arc;

    #[test]
    fn actions_commute() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = Arc::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        for n in 0..5 {
            for m in 0..5 {
                let p = RecenteredPoly::from_values(ball.clone(), xi.clone(), false, [(MultiIndex::action(n), 1.0.into())]);
                let q = RecenteredPoly::from_values(ball.clone(), xi.clone(), false, [(MultiIndex::action(m), 1.0.into())]);
                assert!(poisson_bracket(&p, &q).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn bracket_with_an_action() {
        // p = u_a ū_b (a ≠ b), q = y_a ⇒ {p, q} = −2i u_a ū_b
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = Arc::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let (a, b) = (1usize, 3usize);
        let z = MultiIndex::from_exps([(a, 1, 0, 0), (b, 0, 1, 0)]).unwrap();
        let p = RecenteredPoly::from_values(ball.clone(), xi.clone(), false, [(z.clone(), 1.0.into())]);
        let q = RecenteredPoly::from_values(ball, xi, false, [(MultiIndex::action(a), 1.0.into())]);
        let r = poisson_bracket(&p, &q).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.value(&z), Complex64::new(0.0, -2.0));
    }

    #[test]
    fn frame_mismatch_is_an_error() {
        let ball = Arc::new(LatticeBall::new(1, 1.0).unwrap());
        let p = RecenteredPoly::zero(ball.clone(), Arc::new(vec![0.0; 3]), false);
        let q = RecenteredPoly::zero(ball, Arc::new(vec![0.1; 3]), false);
        assert!(poisson_bracket(&p, &q).is_err());
    }
}
