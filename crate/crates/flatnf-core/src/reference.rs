//! Independent reference implementations used as oracles by the test suite
//! and by `selftest`. They share no arithmetic with the production paths:
//! polynomials are fully expanded to dense-exponent monomials u^a ū^b,
//! bracketed by direct differentiation and re-centered from scratch.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::polyalg::{MultiIndex, RecenteredPoly};

/// Dense exponent vectors (a, b) for the monomial ∏ u_n^{a_n} ū_n^{b_n}.
pub type PlainKey = (Vec<u16>, Vec<u16>);

/// Plain polynomial in u and ū.
#[derive(Clone, Debug, Default)]
pub struct PlainPoly {
    pub n: usize,
    pub terms: BTreeMap<PlainKey, Complex64>,
}

fn pascal(n: u32, k: u32) -> f64 {
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row.get(k as usize).copied().unwrap_or(0.0)
}

impl PlainPoly {
    pub fn new(n: usize) -> Self {
        PlainPoly { n, terms: BTreeMap::new() }
    }

    fn add(&mut self, key: PlainKey, c: Complex64) {
        *self.terms.entry(key).or_insert(Complex64::new(0.0, 0.0)) += c;
    }

    fn mul(&self, other: &PlainPoly) -> PlainPoly {
        let mut out = PlainPoly::new(self.n);
        for ((a1, b1), c1) in &self.terms {
            for ((a2, b2), c2) in &other.terms {
                let a = a1.iter().zip(a2).map(|(x, y)| x + y).collect();
                let b = b1.iter().zip(b2).map(|(x, y)| x + y).collect();
                out.add((a, b), c1 * c2);
            }
        }
        out
    }

    fn one(n: usize) -> PlainPoly {
        let mut p = PlainPoly::new(n);
        p.add((vec![0; n], vec![0; n]), Complex64::new(1.0, 0.0));
        p
    }

    /// Expand a re-centered polynomial: y_n^m = Σ_j C(m,j)(−ξ_n)^{m−j}|u_n|^{2j}.
    pub fn expand(p: &RecenteredPoly) -> PlainPoly {
        let n = p.ball().len();
        let xi = p.xi();
        let mut out = PlainPoly::new(n);
        for (idx, c) in p.terms() {
            let mut acc = PlainPoly::one(n);
            for e in idx.entries() {
                let s = e.site as usize;
                let mut f = PlainPoly::new(n);
                for j in 0..=e.m as u32 {
                    let mut a = vec![0u16; n];
                    let mut b = vec![0u16; n];
                    a[s] = e.k + j as u16;
                    b[s] = e.l + j as u16;
                    let coef = pascal(e.m as u32, j) * (-xi[s]).powi((e.m as u32 - j) as i32);
                    f.add((a, b), Complex64::new(coef, 0.0));
                }
                acc = acc.mul(&f);
            }
            for (k, v) in acc.terms {
                out.add(k, v * c.value);
            }
        }
        out
    }

    fn d_u(&self, s: usize) -> PlainPoly {
        let mut out = PlainPoly::new(self.n);
        for ((a, b), c) in &self.terms {
            if a[s] > 0 {
                let mut a2 = a.clone();
                a2[s] -= 1;
                out.add((a2, b.clone()), c * a[s] as f64);
            }
        }
        out
    }

    fn d_ubar(&self, s: usize) -> PlainPoly {
        let mut out = PlainPoly::new(self.n);
        for ((a, b), c) in &self.terms {
            if b[s] > 0 {
                let mut b2 = b.clone();
                b2[s] -= 1;
                out.add((a.clone(), b2), c * b[s] as f64);
            }
        }
        out
    }

    /// {p, q} = 2i Σ (∂_ū p ∂_u q − ∂_u p ∂_ū q).
    pub fn bracket(&self, q: &PlainPoly) -> PlainPoly {
        let mut out = PlainPoly::new(self.n);
        for s in 0..self.n {
            let t1 = self.d_ubar(s).mul(&q.d_u(s));
            let t2 = self.d_u(s).mul(&q.d_ubar(s));
            for (k, v) in t1.terms {
                out.add(k, Complex64::new(0.0, 2.0) * v);
            }
            for (k, v) in t2.terms {
                out.add(k, Complex64::new(0.0, -2.0) * v);
            }
        }
        out
    }

    pub fn evaluate(&self, u: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|((a, b), c)| {
                let mut t = *c;
                for s in 0..self.n {
                    for _ in 0..a[s] {
                        t *= u[s];
                    }
                    for _ in 0..b[s] {
                        t *= u[s].conj();
                    }
                }
                t
            })
            .sum()
    }

    /// Rewrite every |u_n|^{2p} as (y_n + ξ_n)^p and collect by multi-index.
    pub fn recenter(&self, xi: &[f64]) -> BTreeMap<MultiIndex, Complex64> {
        let mut out: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for ((a, b), c) in &self.terms {
            // list of (site, k, l, p) with p pairs
            let mut partial: Vec<(Vec<(usize, u16, u16, u16)>, Complex64)> = vec![(Vec::new(), *c)];
            for s in 0..self.n {
                let p = a[s].min(b[s]);
                let (k, l) = (a[s] - p, b[s] - p);
                let mut next = Vec::new();
                for (exps, v) in &partial {
                    for j in 0..=p {
                        let coef = pascal(p as u32, j as u32) * xi[s].powi((p - j) as i32);
                        let mut e = exps.clone();
                        e.push((s, k, l, j));
                        next.push((e, v * coef));
                    }
                }
                partial = next;
            }
            for (exps, v) in partial {
                let idx = MultiIndex::from_exps(exps).expect("pairs removed");
                *out.entry(idx).or_insert(Complex64::new(0.0, 0.0)) += v;
            }
        }
        out
    }
}

/// Oracle bracket: expand both, bracket directly, re-center.
pub fn oracle_bracket(p: &RecenteredPoly, q: &RecenteredPoly) -> BTreeMap<MultiIndex, Complex64> {
    let pp = PlainPoly::expand(p);
    let qq = PlainPoly::expand(q);
    pp.bracket(&qq).recenter(p.xi())
}

/// Support and coefficient comparison between a polynomial and an oracle
/// map. Coefficients below `floor` are treated as structural zeros.
/// Returns (support_equal, max coefficient deviation).
pub fn compare_with_oracle(p: &RecenteredPoly, oracle: &BTreeMap<MultiIndex, Complex64>, floor: f64) -> (bool, f64) {
    let sig_p: Vec<&MultiIndex> = p.terms().iter().filter(|(_, c)| c.value.norm() > floor).map(|(i, _)| i).collect();
    let sig_o: Vec<&MultiIndex> = oracle.iter().filter(|(_, c)| c.norm() > floor).map(|(i, _)| i).collect();
    let mut dev: f64 = 0.0;
    for (idx, c) in p.terms() {
        let o = oracle.get(idx).copied().unwrap_or_default();
        dev = dev.max((c.value - o).norm());
    }
    for (idx, o) in oracle {
        if p.get(idx).is_none() {
            dev = dev.max(o.norm());
        }
    }
    (sig_p == sig_o, dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBall;
    use std::sync::Arc;

    #[test]
    fn pascal_rows() {
        assert_eq!(pascal(4, 2), 6.0);
        assert_eq!(pascal(0, 0), 1.0);
        assert_eq!(pascal(2, 3), 0.0);
    }

    #[test]
    fn expand_and_recenter_round_trip() {
        let ball = Arc::new(LatticeBall::new(1, 1.0).unwrap());
        let xi = Arc::new(vec![0.2, -0.1, 0.3]);
        let idx = MultiIndex::from_exps([(0, 1, 0, 2), (2, 0, 1, 1)]).unwrap();
        let p = RecenteredPoly::from_values(ball, xi.clone(), false, [(idx.clone(), Complex64::new(0.5, 0.25))]);
        let back = PlainPoly::expand(&p).recenter(&xi);
        let sig: Vec<_> = back.iter().filter(|(_, c)| c.norm() > 1e-14).collect();
        assert_eq!(sig.len(), 1);
        assert!((back[&idx] - Complex64::new(0.5, 0.25)).norm() < 1e-14);
    }
}
