use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use super::index::{MultiIndex, SiteExp};
use crate::error::{FlatError, Result};
use crate::lattice::LatticeBall;
use crate::resonance::HomogeneousPoly;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficient value with an optional dense ξ-gradient over the ball sites.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coefficient {
    pub value: Complex64,
    pub grad: Option<Vec<Complex64>>,
}

impl Coefficient {
    pub fn new(value: Complex64) -> Self {
        Coefficient { value, grad: None }
    }

    pub fn with_grad(value: Complex64, grad: Vec<Complex64>) -> Self {
        Coefficient { value, grad: Some(grad) }
    }

    fn is_zero(&self) -> bool {
        self.value == ZERO && self.grad.as_ref().map_or(true, |g| g.iter().all(|x| *x == ZERO))
    }
}

/// Binomial coefficient as f64, exact for the degrees used here.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n > 60 {
        // exact integer arithmetic would overflow; a rounded product is enough
        return (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    }
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc as f64
}

/// Sparse accumulator keyed by canonical multi-indices.
pub(crate) struct Accum {
    pub map: HashMap<MultiIndex, Coefficient>,
    pub with_grad: bool,
    pub nsites: usize,
}

impl Accum {
    pub fn new(nsites: usize, with_grad: bool) -> Self {
        Accum { map: HashMap::new(), with_grad, nsites }
    }

    /// Add `value` with gradient `grad_scale·grad + Σ extra` to `idx`.
    fn add(
        &mut self,
        idx: MultiIndex,
        value: Complex64,
        grad: Option<&[Complex64]>,
        grad_scale: Complex64,
        extra: &[(usize, Complex64)],
    ) {
        let with_grad = self.with_grad;
        let nsites = self.nsites;
        let c = self.map.entry(idx).or_insert_with(|| Coefficient {
            value: ZERO,
            grad: if with_grad { Some(vec![ZERO; nsites]) } else { None },
        });
        c.value += value;
        if let Some(g) = c.grad.as_mut() {
            if let Some(src) = grad {
                for (a, b) in g.iter_mut().zip(src) {
                    *a += grad_scale * b;
                }
            }
            for &(site, d) in extra {
                g[site] += d;
            }
        }
    }

    /// Canonicalise a raw monomial u^K ū^L y^M (K and L may overlap) with
    /// coefficient `value` and gradient `grad`: every overlapping pair is
    /// rewritten as |u_j|² = y_j + ξ_j and expanded binomially.
    pub fn push_raw(&mut self, raw: &[SiteExp], xi: &[f64], value: Complex64, grad: Option<&[Complex64]>) {
        // For each paired site: (site, a, base m). Others go straight through.
        let mut fixed: Vec<SiteExp> = Vec::with_capacity(raw.len());
        let mut paired: Vec<(SiteExp, u16)> = Vec::new();
        for e in raw {
            if e.k > 0 && e.l > 0 {
                let a = e.k.min(e.l);
                paired.push((SiteExp { site: e.site, k: e.k - a, l: e.l - a, m: e.m }, a));
            } else if e.k + e.l + e.m > 0 {
                fixed.push(*e);
            }
        }
        if paired.is_empty() {
            self.add(MultiIndex::from_sorted(fixed), value, grad, Complex64::new(1.0, 0.0), &[]);
            return;
        }
        // odometer over b_j ∈ 0..=a_j
        let mut b = vec![0u16; paired.len()];
        let mut factors = vec![0.0f64; paired.len()];
        let mut dfactors = vec![0.0f64; paired.len()];
        let mut extra: Vec<(usize, Complex64)> = Vec::with_capacity(paired.len());
        loop {
            let mut entries = fixed.clone();
            for (j, (base, a)) in paired.iter().enumerate() {
                let (a, bj) = (*a as u32, b[j] as u32);
                let x = xi[base.site as usize];
                let c = binomial(a, bj);
                let p = (a - bj) as i32;
                factors[j] = c * x.powi(p);
                dfactors[j] = if p > 0 { c * p as f64 * x.powi(p - 1) } else { 0.0 };
                let e = SiteExp { m: base.m + b[j], ..*base };
                if e.k + e.l + e.m > 0 {
                    entries.push(e);
                }
            }
            let total: f64 = factors.iter().product();
            if total != 0.0 || dfactors.iter().any(|&d| d != 0.0) {
                entries.sort_unstable();
                extra.clear();
                if self.with_grad {
                    for j in 0..paired.len() {
                        if dfactors[j] == 0.0 {
                            continue;
                        }
                        let others: f64 =
                            factors.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, f)| f).product();
                        extra.push((paired[j].0.site as usize, value * dfactors[j] * others));
                    }
                }
                self.add(
                    MultiIndex::from_sorted(entries),
                    value * total,
                    grad,
                    Complex64::new(total, 0.0),
                    &extra,
                );
            }
            // advance
            let mut j = 0;
            loop {
                if j == b.len() {
                    return;
                }
                if b[j] < paired[j].1 {
                    b[j] += 1;
                    break;
                }
                b[j] = 0;
                j += 1;
            }
        }
    }

    pub fn merge(&mut self, other: Accum) {
        for (idx, c) in other.map {
            self.add(idx, c.value, c.grad.as_deref(), Complex64::new(1.0, 0.0), &[]);
        }
    }

    pub fn into_terms(self) -> BTreeMap<MultiIndex, Coefficient> {
        self.map.into_iter().filter(|(_, c)| !c.is_zero()).collect()
    }
}

/// Sparse re-centered polynomial Σ c_𝐧 u^k ū^l (|u|² − ξ)^m at a fixed ξ.
#[derive(Clone, Debug)]
pub struct RecenteredPoly {
    ball: Arc<LatticeBall>,
    xi: Arc<Vec<f64>>,
    terms: BTreeMap<MultiIndex, Coefficient>,
    with_grad: bool,
}

impl RecenteredPoly {
    pub fn zero(ball: Arc<LatticeBall>, xi: Arc<Vec<f64>>, with_grad: bool) -> Self {
        assert_eq!(ball.len(), xi.len(), "xi must be indexed over the ball");
        RecenteredPoly { ball, xi, terms: BTreeMap::new(), with_grad }
    }

    pub(crate) fn from_terms(
        ball: Arc<LatticeBall>,
        xi: Arc<Vec<f64>>,
        terms: BTreeMap<MultiIndex, Coefficient>,
        with_grad: bool,
    ) -> Self {
        RecenteredPoly { ball, xi, terms, with_grad }
    }

    /// Build from (index, value) pairs; gradients start at zero when requested.
    pub fn from_values<I: IntoIterator<Item = (MultiIndex, Complex64)>>(
        ball: Arc<LatticeBall>,
        xi: Arc<Vec<f64>>,
        with_grad: bool,
        it: I,
    ) -> Self {
        let mut p = Self::zero(ball, xi, with_grad);
        for (idx, v) in it {
            p.add_term(idx, Coefficient::new(v));
        }
        p
    }

    /// Σ ω_n y_n with optional ω-gradients (rows indexed by site n).
    pub fn quadratic_actions(
        ball: Arc<LatticeBall>,
        xi: Arc<Vec<f64>>,
        omega: &[f64],
        grad: Option<&[Vec<f64>]>,
    ) -> Self {
        let with_grad = grad.is_some();
        let mut p = Self::zero(ball, xi, with_grad);
        for (n, &w) in omega.iter().enumerate() {
            let c = match grad {
                Some(g) => Coefficient::with_grad(
                    Complex64::new(w, 0.0),
                    g[n].iter().map(|&x| Complex64::new(x, 0.0)).collect(),
                ),
                None => Coefficient::new(Complex64::new(w, 0.0)),
            };
            p.add_term(MultiIndex::action(n), c);
        }
        p
    }

    pub fn ball(&self) -> &Arc<LatticeBall> {
        &self.ball
    }

    pub fn xi(&self) -> &Arc<Vec<f64>> {
        &self.xi
    }

    pub fn has_grad(&self) -> bool {
        self.with_grad
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, Coefficient> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, idx: &MultiIndex) -> Option<&Coefficient> {
        self.terms.get(idx)
    }

    pub fn value(&self, idx: &MultiIndex) -> Complex64 {
        self.terms.get(idx).map_or(ZERO, |c| c.value)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(|i| i.degree()).max().unwrap_or(0)
    }

    pub fn same_frame(&self, other: &RecenteredPoly) -> bool {
        (Arc::ptr_eq(&self.ball, &other.ball) || *self.ball == *other.ball)
            && (Arc::ptr_eq(&self.xi, &other.xi) || *self.xi == *other.xi)
    }

    pub(crate) fn check_frame(&self, other: &RecenteredPoly) -> Result<()> {
        if self.same_frame(other) {
            Ok(())
        } else {
            Err(FlatError::BallMismatch)
        }
    }

    /// Add a term; the index must have zero momentum on this ball.
    pub fn add_term(&mut self, idx: MultiIndex, c: Coefficient) {
        let n = self.ball.len();
        let grad = if self.with_grad { Some(c.grad.unwrap_or_else(|| vec![ZERO; n])) } else { None };
        match self.terms.get_mut(&idx) {
            Some(e) => {
                e.value += c.value;
                if let (Some(a), Some(b)) = (e.grad.as_mut(), grad.as_ref()) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
            }
            None => {
                self.terms.insert(idx, Coefficient { value: c.value, grad });
            }
        }
    }

    /// Attach zero gradients (or keep existing ones).
    pub fn with_gradients(mut self) -> Self {
        if !self.with_grad {
            let n = self.ball.len();
            for c in self.terms.values_mut() {
                c.grad = Some(vec![ZERO; n]);
            }
            self.with_grad = true;
        }
        self
    }

    pub fn without_gradients(mut self) -> Self {
        for c in self.terms.values_mut() {
            c.grad = None;
        }
        self.with_grad = false;
        self
    }

    /// Same coefficients viewed at a different ξ frame (no re-expansion).
    pub fn reframed(&self, xi: Arc<Vec<f64>>) -> Self {
        RecenteredPoly { ball: self.ball.clone(), xi, terms: self.terms.clone(), with_grad: self.with_grad }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.value *= s;
            if let Some(g) = c.grad.as_mut() {
                for x in g.iter_mut() {
                    *x *= s;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &RecenteredPoly) -> Result<Self> {
        self.check_frame(other)?;
        let mut out = if other.with_grad && !self.with_grad { self.clone().with_gradients() } else { self.clone() };
        for (idx, c) in &other.terms {
            out.add_term(idx.clone(), c.clone());
        }
        out.prune();
        Ok(out)
    }

    pub fn sub(&self, other: &RecenteredPoly) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Keep the terms whose index satisfies `pred`.
    pub fn filter<F: Fn(&MultiIndex) -> bool>(&self, pred: F) -> Self {
        RecenteredPoly {
            ball: self.ball.clone(),
            xi: self.xi.clone(),
            terms: self.terms.iter().filter(|(i, _)| pred(i)).map(|(i, c)| (i.clone(), c.clone())).collect(),
            with_grad: self.with_grad,
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| !c.is_zero());
    }

    /// Reality: coefficient of (k,l,m) is the conjugate of that of (l,k,m).
    pub fn is_real(&self, tol: f64) -> bool {
        self.terms.iter().all(|(idx, c)| {
            let other = self.value(&idx.conj());
            (other.conj() - c.value).norm() <= tol * (1.0 + c.value.norm())
        })
    }

    /// Largest |coefficient|.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.value.norm()).fold(0.0, f64::max)
    }

    /// Σ c_𝐧 ∏ u_n^{k_n} ū_n^{l_n} (|u_n|² − ξ_n)^{m_n}.
    pub fn evaluate(&self, u: &[Complex64]) -> Result<Complex64> {
        if u.len() != self.ball.len() {
            return Err(FlatError::Dimension { expected: self.ball.len(), got: u.len() });
        }
        let y: Vec<f64> = u.iter().zip(self.xi.iter()).map(|(z, x)| z.norm_sqr() - x).collect();
        let mut acc = ZERO;
        for (idx, c) in &self.terms {
            let mut t = c.value;
            for e in idx.entries() {
                t *= site_factor(u[e.site as usize], y[e.site as usize], e);
            }
            acc += t;
        }
        Ok(acc)
    }

    /// (∇p)_n = 2 ∂_{ū_n} p at u, assembled from products over the other sites.
    pub fn gradient_eval(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        if u.len() != self.ball.len() {
            return Err(FlatError::Dimension { expected: self.ball.len(), got: u.len() });
        }
        let y: Vec<f64> = u.iter().zip(self.xi.iter()).map(|(z, x)| z.norm_sqr() - x).collect();
        let mut out = vec![ZERO; u.len()];
        let mut f = Vec::new();
        let mut suffix = Vec::new();
        for (idx, c) in &self.terms {
            let es = idx.entries();
            f.clear();
            f.extend(es.iter().map(|e| site_factor(u[e.site as usize], y[e.site as usize], e)));
            suffix.clear();
            suffix.resize(es.len() + 1, Complex64::new(1.0, 0.0));
            for j in (0..es.len()).rev() {
                suffix[j] = suffix[j + 1] * f[j];
            }
            let mut prefix = Complex64::new(1.0, 0.0);
            for (j, e) in es.iter().enumerate() {
                let s = e.site as usize;
                let d = site_dbar(u[s], y[s], e);
                out[s] += 2.0 * c.value * prefix * suffix[j + 1] * d;
                prefix *= f[j];
            }
        }
        Ok(out)
    }
}

fn cpow(z: Complex64, p: u16) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..p {
        acc *= z;
    }
    acc
}

fn site_factor(u: Complex64, y: f64, e: &SiteExp) -> Complex64 {
    cpow(u, e.k) * cpow(u.conj(), e.l) * y.powi(e.m as i32)
}

/// ∂_ū of u^k ū^l y^m with y = |u|² − ξ.
fn site_dbar(u: Complex64, y: f64, e: &SiteExp) -> Complex64 {
    let mut d = ZERO;
    if e.l > 0 {
        d += e.l as f64 * cpow(u, e.k) * cpow(u.conj(), e.l - 1) * y.powi(e.m as i32);
    }
    if e.m > 0 {
        d += e.m as f64 * u * cpow(u, e.k) * cpow(u.conj(), e.l) * y.powi(e.m as i32 - 1);
    }
    d
}

/// Re-center a sum of homogeneous polynomials at ξ: each |u_n|^{2a} becomes
/// Σ_b C(a,b) ξ_n^{a−b} y_n^b.
pub fn center(ps: &[&HomogeneousPoly], xi: Arc<Vec<f64>>, with_grad: bool) -> Result<RecenteredPoly> {
    let ball = match ps.first() {
        Some(p) => p.ball().clone(),
        None => return Err(FlatError::Argument("center needs at least one polynomial".into())),
    };
    if ps.iter().any(|p| **p.ball() != *ball) {
        return Err(FlatError::BallMismatch);
    }
    if xi.len() != ball.len() {
        return Err(FlatError::Dimension { expected: ball.len(), got: xi.len() });
    }
    // collect plain monomials u^a ū^b first
    let mut plain: BTreeMap<Vec<SiteExp>, Complex64> = BTreeMap::new();
    for p in ps {
        for (v, c) in p.coeffs() {
            let mut raw: Vec<SiteExp> = Vec::new();
            for (i, &s) in v.iter().enumerate() {
                let site = s as u32;
                let pos = match raw.iter().position(|e| e.site == site) {
                    Some(pos) => pos,
                    None => {
                        raw.push(SiteExp { site, k: 0, l: 0, m: 0 });
                        raw.len() - 1
                    }
                };
                if i % 2 == 0 {
                    raw[pos].k += 1;
                } else {
                    raw[pos].l += 1;
                }
            }
            raw.sort_unstable();
            *plain.entry(raw).or_insert(ZERO) += *c;
        }
    }
    let mut acc = Accum::new(ball.len(), with_grad);
    let zero_grad = vec![ZERO; ball.len()];
    for (raw, c) in &plain {
        acc.push_raw(raw, &xi, *c, if with_grad { Some(&zero_grad) } else { None });
    }
    Ok(RecenteredPoly::from_terms(ball, xi, acc.into_terms(), with_grad))
}
