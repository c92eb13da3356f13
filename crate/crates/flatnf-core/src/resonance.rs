//! Zero-momentum multi-vectors, resonance functions, κ-filtering and the
//! four-wave triviality check.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FlatError, Result};
use crate::lattice::{LatticeBall, TorusMetric};

/// Default refusal threshold for materialised enumerations.
pub const DEFAULT_ENUMERATION_CAP: usize = 20_000_000;

/// A zero-momentum tuple (n₁,…,n_{2q}) stored as site indices of a ball.
/// Odd slots (1-based) carry u, even slots carry ū.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MultiVector {
    pub sites: Vec<usize>,
}

impl MultiVector {
    pub fn new(sites: Vec<usize>) -> Self {
        MultiVector { sites }
    }

    pub fn q(&self) -> usize {
        self.sites.len() / 2
    }

    pub fn vectors(&self, ball: &LatticeBall) -> Vec<Vec<i64>> {
        self.sites.iter().map(|&i| ball.site(i).to_vec()).collect()
    }

    /// Alternating sum Σ(−1)^i n_i (1-based) is zero.
    pub fn has_zero_momentum(&self, ball: &LatticeBall) -> bool {
        let mut acc = vec![0i64; ball.dim()];
        for (i, &s) in self.sites.iter().enumerate() {
            let sign = if i % 2 == 0 { 1 } else { -1 };
            for (a, x) in acc.iter_mut().zip(ball.site(s)) {
                *a += sign * x;
            }
        }
        acc.iter().all(|&x| x == 0)
    }

    /// Swap the roles of odd and even slots.
    pub fn slot_swapped(&self) -> MultiVector {
        let mut s = self.sites.clone();
        for pair in s.chunks_mut(2) {
            pair.swap(0, 1);
        }
        MultiVector { sites: s }
    }

    /// Cyclic shift (n_{2q}, n₁, …, n_{2q−1}) used by the reality condition.
    pub fn cyclic_shift(&self) -> MultiVector {
        let mut s = Vec::with_capacity(self.sites.len());
        s.push(*self.sites.last().expect("non-empty multi-vector"));
        s.extend_from_slice(&self.sites[..self.sites.len() - 1]);
        MultiVector { sites: s }
    }
}

/// Ω = Σ(−1)^{i+1} λ²_{n_i} using precomputed frequencies.
pub fn omega_from(lambda2: &[f64], sites: &[usize]) -> f64 {
    // Each signed half is summed in sorted order so that permuting slots of
    // equal parity, or swapping the halves, changes the result only in sign.
    let mut plus: Vec<f64> = sites.iter().step_by(2).map(|&s| lambda2[s]).collect();
    let mut minus: Vec<f64> = sites.iter().skip(1).step_by(2).map(|&s| lambda2[s]).collect();
    plus.sort_by(f64::total_cmp);
    minus.sort_by(f64::total_cmp);
    plus.iter().sum::<f64>() - minus.iter().sum::<f64>()
}

/// Resonance function of an explicit tuple of integer vectors.
pub fn resonance_value(metric: &TorusMetric, entries: &[Vec<i64>]) -> Result<f64> {
    let mut acc = 0.0;
    for (i, n) in entries.iter().enumerate() {
        let l2 = metric.frequency(n)?;
        if i % 2 == 0 {
            acc += l2;
        } else {
            acc -= l2;
        }
    }
    Ok(acc)
}

/// Visit every zero-momentum multi-vector of half-degree q whose first entry
/// is `first`. The last entry is solved from the momentum condition.
fn visit_with_first<F: FnMut(&[usize])>(q: usize, ball: &LatticeBall, first: usize, f: &mut F) {
    let len = 2 * q;
    let dim = ball.dim();
    let n = ball.len();
    let mut idx = vec![0usize; len];
    idx[0] = first;
    // partial[i] holds n₁ − n₂ + … ± n_i
    let mut partial = vec![vec![0i64; dim]; len];
    partial[0].copy_from_slice(ball.site(first));
    if len == 2 {
        if let Some(last) = ball.index_of(&partial[0]) {
            idx[1] = last;
            f(&idx);
        }
        return;
    }
    let free = len - 1; // slots 0..free are chosen, slot `free` is solved
    let mut pos = 1;
    idx[1] = 0;
    loop {
        if idx[pos] == n {
            if pos == 1 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            continue;
        }
        let sign = if pos % 2 == 0 { 1 } else { -1 };
        let (lo, hi) = partial.split_at_mut(pos);
        for ((p, prev), x) in hi[0].iter_mut().zip(&lo[pos - 1]).zip(ball.site(idx[pos])) {
            *p = prev + sign * x;
        }
        if pos + 1 == free {
            if let Some(last) = ball.index_of(&partial[pos]) {
                idx[free] = last;
                f(&idx);
            }
            idx[pos] += 1;
        } else {
            pos += 1;
            idx[pos] = 0;
        }
    }
}

/// Sequential visitor over all zero-momentum multi-vectors in canonical order.
pub fn for_each_multivector<F: FnMut(&[usize])>(q: usize, ball: &LatticeBall, mut f: F) {
    for first in 0..ball.len() {
        visit_with_first(q, ball, first, &mut f);
    }
}

/// Parallel fold over all zero-momentum multi-vectors; partial results are
/// combined in the canonical order of the first entry.
pub fn par_fold_multivectors<T, I, F, C>(q: usize, ball: &LatticeBall, init: I, fold: F, combine: C) -> T
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[usize]) + Sync,
    C: Fn(T, T) -> T,
{
    let parts: Vec<T> = (0..ball.len())
        .into_par_iter()
        .map(|first| {
            let mut acc = init();
            visit_with_first(q, ball, first, &mut |v: &[usize]| fold(&mut acc, v));
            acc
        })
        .collect();
    let mut it = parts.into_iter();
    let mut acc = it.next().unwrap_or_else(&init);
    for p in it {
        acc = combine(acc, p);
    }
    acc
}

/// Upper bound on the number of candidates the enumeration examines.
pub fn projected_count(q: usize, ball: &LatticeBall) -> f64 {
    (ball.len() as f64).powi(2 * q as i32 - 1)
}

/// All zero-momentum multi-vectors of half-degree q, in canonical order.
pub fn enumerate_multivectors(q: usize, ball: &LatticeBall, cap: usize) -> Result<Vec<MultiVector>> {
    if q == 0 {
        return Err(FlatError::Argument("q must be >= 1".into()));
    }
    let estimate = projected_count(q, ball);
    if estimate > cap as f64 {
        return Err(FlatError::EnumerationCap { estimate, cap });
    }
    let mut out = Vec::new();
    for_each_multivector(q, ball, |v| out.push(MultiVector::new(v.to_vec())));
    Ok(out)
}

/// Four-wave diagnostic record.
#[derive(Clone, Debug, Serialize)]
pub struct FourWave {
    pub omega: f64,
    pub identity_residual: f64,
    pub trivial: bool,
}

/// {n₁,n₃} = {n₂,n₄} as multisets.
pub fn is_trivial_quartet(sites: &[usize]) -> bool {
    (sites[0] == sites[1] && sites[2] == sites[3]) || (sites[0] == sites[3] && sites[2] == sites[1])
}

pub fn four_wave_check(metric: &TorusMetric, ball: &LatticeBall, v: &MultiVector) -> Result<FourWave> {
    if v.sites.len() != 4 {
        return Err(FlatError::Argument(format!(
            "four_wave_check needs q = 2, got q = {}",
            v.q()
        )));
    }
    metric.check_dim(ball.dim())?;
    let e = v.vectors(ball);
    let omega = resonance_value(metric, &e)?;
    let d12: Vec<i64> = e[0].iter().zip(&e[1]).map(|(a, b)| a - b).collect();
    let d14: Vec<i64> = e[0].iter().zip(&e[3]).map(|(a, b)| a - b).collect();
    let identity = 2.0 * metric.g_unchecked(&d12, &d14);
    Ok(FourWave {
        omega,
        identity_residual: (omega - identity).abs(),
        trivial: is_trivial_quartet(&v.sites),
    })
}

/// Real homogeneous polynomial Σ H_{n⃗} u_{n₁}ū_{n₂}⋯ū_{n_{2q}} over a ball.
#[derive(Clone, Debug)]
pub struct HomogeneousPoly {
    q: usize,
    ball: Arc<LatticeBall>,
    coeffs: BTreeMap<Vec<usize>, Complex64>,
}

impl HomogeneousPoly {
    pub fn new(q: usize, ball: Arc<LatticeBall>) -> Self {
        HomogeneousPoly { q, ball, coeffs: BTreeMap::new() }
    }

    /// Fill every zero-momentum multi-vector with `f(v)` (zeros skipped).
    pub fn from_fn<F: FnMut(&[usize]) -> Complex64>(q: usize, ball: Arc<LatticeBall>, mut f: F) -> Self {
        let mut coeffs = BTreeMap::new();
        for_each_multivector(q, &ball, |v| {
            let c = f(v);
            if c != Complex64::new(0.0, 0.0) {
                coeffs.insert(v.to_vec(), c);
            }
        });
        HomogeneousPoly { q, ball, coeffs }
    }

    /// The polynomial with coefficient c on every multi-vector of 𝒩_{2q}.
    pub fn constant(q: usize, ball: Arc<LatticeBall>, c: f64) -> Self {
        Self::from_fn(q, ball, |_| Complex64::new(c, 0.0))
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn ball(&self) -> &Arc<LatticeBall> {
        &self.ball
    }

    pub fn support_radius(&self) -> f64 {
        self.ball.radius()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<usize>, Complex64> {
        &self.coeffs
    }

    pub fn get(&self, sites: &[usize]) -> Complex64 {
        self.coeffs.get(sites).copied().unwrap_or_default()
    }

    /// Insert a coefficient; the multi-vector must have zero momentum.
    pub fn insert(&mut self, sites: Vec<usize>, c: Complex64) -> Result<()> {
        if sites.len() != 2 * self.q {
            return Err(FlatError::Argument(format!(
                "expected {} entries, got {}",
                2 * self.q,
                sites.len()
            )));
        }
        if sites.iter().any(|&s| s >= self.ball.len()) {
            return Err(FlatError::Argument("site outside the support ball".into()));
        }
        if !MultiVector::new(sites.clone()).has_zero_momentum(&self.ball) {
            return Err(FlatError::Argument(format!("{sites:?} has nonzero momentum")));
        }
        self.coeffs.insert(sites, c);
        Ok(())
    }

    /// Condition (1): invariance under permutations of odd and of even slots.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|(v, c)| {
            let mut odd: Vec<usize> = v.iter().step_by(2).copied().collect();
            let mut even: Vec<usize> = v.iter().skip(1).step_by(2).copied().collect();
            odd.sort_unstable();
            even.sort_unstable();
            // compare against the sorted representative
            let mut rep = Vec::with_capacity(v.len());
            for i in 0..self.q {
                rep.push(odd[i]);
                rep.push(even[i]);
            }
            (self.get(&rep) - c).norm() <= tol * (1.0 + c.norm())
        })
    }

    /// Condition (2): H_{n⃗} equals the conjugate of the cyclically shifted coefficient.
    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|(v, c)| {
            let shifted = MultiVector::new(v.clone()).cyclic_shift();
            (self.get(&shifted.sites).conj() - c).norm() <= tol * (1.0 + c.norm())
        })
    }

    pub fn evaluate(&self, u: &[Complex64]) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(v, c)| {
                let mut term = *c;
                for (i, &s) in v.iter().enumerate() {
                    term *= if i % 2 == 0 { u[s] } else { u[s].conj() };
                }
                term
            })
            .sum()
    }

    /// Largest |Ω| over the stored support.
    pub fn max_abs_omega(&self, lambda2: &[f64]) -> f64 {
        self.coeffs.keys().map(|v| omega_from(lambda2, v).abs()).fold(0.0, f64::max)
    }
}

/// Keep exactly the coefficients with |Ω| ≤ κ.
pub fn kappa_filter(p: &HomogeneousPoly, metric: &TorusMetric, kappa: f64) -> Result<HomogeneousPoly> {
    let lambda2 = p.ball.frequencies(metric)?;
    let coeffs = p
        .coeffs
        .iter()
        .filter(|(v, _)| omega_from(&lambda2, v).abs() <= kappa)
        .map(|(v, c)| (v.clone(), *c))
        .collect();
    Ok(HomogeneousPoly { q: p.q, ball: p.ball.clone(), coeffs })
}

/// Summary of an exhaustive quartet scan.
#[derive(Clone, Debug, Serialize)]
pub struct QuartetScan {
    pub count: usize,
    pub min_nonzero_omega: f64,
    pub max_identity_residual: f64,
    pub nontrivial_resonant: Vec<Vec<Vec<i64>>>,
    pub nontrivial_resonant_count: usize,
}

/// Scan all quartets of a ball; a quartet is "resonant" when |Ω| ≤ kappa.
/// At most `keep` resonant quartets are materialised in the report.
pub fn scan_quartets(metric: &TorusMetric, ball: &LatticeBall, kappa: f64, keep: usize) -> Result<QuartetScan> {
    let lambda2 = ball.frequencies(metric)?;
    let scale = metric.norm_inf() * ball.radius().max(1.0).powi(2);
    let zero_tol = 1e-12 * scale;
    struct Acc {
        count: usize,
        min_nz: f64,
        max_res: f64,
        hits: Vec<Vec<usize>>,
        n_hits: usize,
    }
    let acc = par_fold_multivectors(
        2,
        ball,
        || Acc { count: 0, min_nz: f64::INFINITY, max_res: 0.0, hits: Vec::new(), n_hits: 0 },
        |a, v| {
            a.count += 1;
            let om = omega_from(&lambda2, v);
            let d12: Vec<i64> = ball.site(v[0]).iter().zip(ball.site(v[1])).map(|(x, y)| x - y).collect();
            let d14: Vec<i64> = ball.site(v[0]).iter().zip(ball.site(v[3])).map(|(x, y)| x - y).collect();
            let res = (om - 2.0 * metric.g_unchecked(&d12, &d14)).abs() / (1.0 + om.abs());
            a.max_res = a.max_res.max(res);
            if om.abs() > zero_tol {
                a.min_nz = a.min_nz.min(om.abs());
            }
            if !is_trivial_quartet(v) && om.abs() <= kappa {
                a.n_hits += 1;
                if a.hits.len() < keep {
                    a.hits.push(v.to_vec());
                }
            }
        },
        |mut a, b| {
            a.count += b.count;
            a.min_nz = a.min_nz.min(b.min_nz);
            a.max_res = a.max_res.max(b.max_res);
            a.n_hits += b.n_hits;
            for h in b.hits {
                if a.hits.len() < keep {
                    a.hits.push(h);
                }
            }
            a
        },
    );
    Ok(QuartetScan {
        count: acc.count,
        min_nonzero_omega: acc.min_nz,
        max_identity_residual: acc.max_res,
        nontrivial_resonant: acc
            .hits
            .iter()
            .map(|v| MultiVector::new(v.clone()).vectors(ball))
            .collect(),
        nontrivial_resonant_count: acc.n_hits,
    })
}

/// u-slots and ū-slots carry the same multiset of sites, so Ω ≡ 0.
pub fn is_trivial_multivector(sites: &[usize]) -> bool {
    let mut plus: Vec<usize> = sites.iter().step_by(2).copied().collect();
    let mut minus: Vec<usize> = sites.iter().skip(1).step_by(2).copied().collect();
    plus.sort_unstable();
    minus.sort_unstable();
    plus == minus
}

/// Summary of a resonance scan at arbitrary half-degree.
#[derive(Clone, Debug, Serialize)]
pub struct ResonanceScan {
    pub q: usize,
    pub kappa: f64,
    pub count: usize,
    pub min_nonzero_omega: f64,
    pub nontrivial_resonant: Vec<Vec<Vec<i64>>>,
    pub nontrivial_resonant_count: usize,
}

/// Scan all zero-momentum multi-vectors of half-degree q; nontrivial ones
/// with |Ω| ≤ kappa are counted and the first `keep` are materialised.
/// Refuses when the projected candidate count exceeds `cap`.
pub fn scan_resonances(
    metric: &TorusMetric,
    ball: &LatticeBall,
    q: usize,
    kappa: f64,
    keep: usize,
    cap: usize,
) -> Result<ResonanceScan> {
    if q == 0 {
        return Err(FlatError::Argument("q must be >= 1".into()));
    }
    let estimate = projected_count(q, ball);
    if estimate > cap as f64 {
        return Err(FlatError::EnumerationCap { estimate, cap });
    }
    let lambda2 = ball.frequencies(metric)?;
    let zero_tol = 1e-12 * metric.norm_inf() * ball.radius().max(1.0).powi(2) * q as f64;
    type Acc = (usize, f64, Vec<Vec<usize>>, usize);
    let (count, min_nz, hits, n_hits) = par_fold_multivectors(
        q,
        ball,
        || -> Acc { (0, f64::INFINITY, Vec::new(), 0) },
        |a, v| {
            a.0 += 1;
            let om = omega_from(&lambda2, v);
            if om.abs() > zero_tol {
                a.1 = a.1.min(om.abs());
            }
            if om.abs() <= kappa && !is_trivial_multivector(v) {
                a.3 += 1;
                if a.2.len() < keep {
                    a.2.push(v.to_vec());
                }
            }
        },
        |mut a, b| {
            a.0 += b.0;
            a.1 = a.1.min(b.1);
            a.3 += b.3;
            for h in b.2 {
                if a.2.len() < keep {
                    a.2.push(h);
                }
            }
            a
        },
    );
    Ok(ResonanceScan {
        q,
        kappa,
        count,
        min_nonzero_omega: min_nz,
        nontrivial_resonant: hits.into_iter().map(|v| MultiVector::new(v).vectors(ball)).collect(),
        nontrivial_resonant_count: n_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_count(q: usize, ball: &LatticeBall) -> usize {
        let n = ball.len();
        let len = 2 * q;
        let total = n.pow(len as u32);
        let mut count = 0;
        for code in 0..total {
            let mut c = code;
            let mut sites = Vec::with_capacity(len);
            for _ in 0..len {
                sites.push(c % n);
                c /= n;
            }
            if MultiVector::new(sites).has_zero_momentum(ball) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn generic_scan_agrees_with_quartet_scan() {
        let ball = LatticeBall::new(2, 3.0).unwrap();
        let sq = TorusMetric::square(2);
        let a = scan_quartets(&sq, &ball, 0.5, 3).unwrap();
        let b = scan_resonances(&sq, &ball, 2, 0.5, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(a.count, b.count);
        assert_eq!(a.nontrivial_resonant_count, b.nontrivial_resonant_count);
        assert_eq!(a.min_nonzero_omega, b.min_nonzero_omega);
        assert!(matches!(
            scan_resonances(&sq, &ball, 4, 0.5, 0, 1000),
            Err(FlatError::EnumerationCap { .. })
        ));
        assert!(is_trivial_multivector(&[1, 2, 2, 1, 5, 5]));
        assert!(!is_trivial_multivector(&[1, 2, 3, 4]));
    }

    #[test]
    fn enumeration_counts() {
        let b1 = LatticeBall::new(1, 1.0).unwrap();
        let q1 = enumerate_multivectors(1, &b1, 1000).unwrap();
        assert_eq!(q1.len(), 3);
        assert!(q1.iter().all(|v| v.sites[0] == v.sites[1]));
        assert_eq!(enumerate_multivectors(2, &b1, 1000).unwrap().len(), 19);
        let b2 = LatticeBall::new(2, 1.0).unwrap();
        assert_eq!(enumerate_multivectors(2, &b2, 1000).unwrap().len(), brute_count(2, &b2));
        let b3 = LatticeBall::new(1, 2.0).unwrap();
        assert_eq!(enumerate_multivectors(3, &b3, 100_000).unwrap().len(), brute_count(3, &b3));
    }

    #[test]
    fn enumeration_respects_cap() {
        let b = LatticeBall::new(2, 3.0).unwrap();
        match enumerate_multivectors(3, &b, 1000) {
            Err(FlatError::EnumerationCap { estimate, cap }) => {
                assert_eq!(cap, 1000);
                assert!(estimate > 1000.0);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn enumeration_is_sorted_and_zero_momentum() {
        let b = LatticeBall::new(2, 2.0).unwrap();
        let all = enumerate_multivectors(2, &b, 1_000_000).unwrap();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(|v| v.has_zero_momentum(&b)));
    }

    #[test]
    fn resonance_examples() {
        let rect = vec![vec![0, 0], vec![1, 0], vec![1, 1], vec![0, 1]];
        assert_eq!(resonance_value(&TorusMetric::square(2), &rect).unwrap(), 0.0);
        let om = resonance_value(&TorusMetric::admissible_example(), &rect).unwrap();
        assert!((om - 2.0 * 2f64.sqrt()).abs() < 1e-13);
        let pair = vec![vec![3, 1], vec![3, 1], vec![-2, 5], vec![-2, 5]];
        assert_eq!(resonance_value(&TorusMetric::admissible_example(), &pair).unwrap(), 0.0);
    }

    #[test]
    fn four_wave_examples() {
        let g = TorusMetric::admissible_example();
        let b = LatticeBall::new(2, 2.0).unwrap();
        let a = b.index_of(&[1, 1]).unwrap();
        let c = b.index_of(&[0, -1]).unwrap();
        let fw = four_wave_check(&g, &b, &MultiVector::new(vec![a, a, c, c])).unwrap();
        assert!(fw.trivial);
        assert_eq!(fw.omega, 0.0);

        let sq = TorusMetric::square(2);
        let ids: Vec<usize> = [[0, 0], [1, 0], [1, 1], [0, 1]].iter().map(|n| b.index_of(n).unwrap()).collect();
        let fw = four_wave_check(&sq, &b, &MultiVector::new(ids)).unwrap();
        assert!(!fw.trivial);
        assert_eq!(fw.omega, 0.0);

        assert!(four_wave_check(&g, &b, &MultiVector::new(vec![a, a])).is_err());
    }

    #[test]
    fn admissible_nontrivial_quartets_are_nonresonant() {
        let g = TorusMetric::admissible_example();
        let b = LatticeBall::new(2, 6.0).unwrap();
        let scan = scan_quartets(&g, &b, 1e-9, 10).unwrap();
        assert_eq!(scan.nontrivial_resonant_count, 0);
        assert!(scan.min_nonzero_omega > 0.0);
    }

    /// Rectangles with a corner at n₁: n₂ = n₁+v, n₄ = n₁+w, n₃ = n₁+v+w, v ⊥ w.
    fn rectangle_quartets(ball: &LatticeBall) -> std::collections::BTreeSet<Vec<usize>> {
        let r = 2 * ball.radius().floor() as i64;
        let mut out = std::collections::BTreeSet::new();
        for n1 in ball.sites() {
            for vx in -r..=r {
                for vy in -r..=r {
                    if vx == 0 && vy == 0 {
                        continue;
                    }
                    for t in -r..=r {
                        if t == 0 {
                            continue;
                        }
                        let g = gcd(vx.abs(), vy.abs());
                        let (wx, wy) = (-vy / g * t, vx / g * t);
                        let n2 = [n1[0] + vx, n1[1] + vy];
                        let n4 = [n1[0] + wx, n1[1] + wy];
                        let n3 = [n1[0] + vx + wx, n1[1] + vy + wy];
                        if let (Some(a), Some(b2), Some(c), Some(d)) =
                            (ball.index_of(n1), ball.index_of(&n2), ball.index_of(&n3), ball.index_of(&n4))
                        {
                            out.insert(vec![a, b2, c, d]);
                        }
                    }
                }
            }
        }
        out
    }

    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }

    #[test]
    fn kappa_filter_on_square_torus_keeps_rectangles() {
        let ball = Arc::new(LatticeBall::new(2, 2.0).unwrap());
        let p = HomogeneousPoly::constant(2, ball.clone(), 1.0);
        let f = kappa_filter(&p, &TorusMetric::square(2), 1e-9).unwrap();
        let nontrivial: std::collections::BTreeSet<Vec<usize>> =
            f.coeffs().keys().filter(|v| !is_trivial_quartet(v)).cloned().collect();
        assert_eq!(nontrivial, rectangle_quartets(&ball));
    }

    #[test]
    fn kappa_filter_on_admissible_keeps_trivial_pairings() {
        let ball = Arc::new(LatticeBall::new(2, 2.0).unwrap());
        let g = TorusMetric::admissible_example();
        let scan = scan_quartets(&g, &ball, 0.0, 0).unwrap();
        let p = HomogeneousPoly::constant(2, ball.clone(), 1.0);
        let f = kappa_filter(&p, &g, 0.5 * scan.min_nonzero_omega).unwrap();
        assert!(f.coeffs().keys().all(|v| is_trivial_quartet(v)));
        let trivial = p.coeffs().keys().filter(|v| is_trivial_quartet(v)).count();
        assert_eq!(f.len(), trivial);
    }

    #[test]
    fn kappa_filter_large_kappa_is_identity() {
        let ball = Arc::new(LatticeBall::new(2, 2.0).unwrap());
        let g = TorusMetric::admissible_example();
        let p = HomogeneousPoly::constant(2, ball.clone(), 0.25);
        let lambda2 = ball.frequencies(&g).unwrap();
        let f = kappa_filter(&p, &g, p.max_abs_omega(&lambda2) + 1.0).unwrap();
        assert_eq!(f.coeffs(), p.coeffs());
        assert!(f.is_real(0.0) && f.is_symmetric(0.0));
    }

    #[test]
    fn constant_polynomial_is_real_and_symmetric() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let p = HomogeneousPoly::constant(3, ball, 1.0);
        assert!(p.is_real(0.0));
        assert!(p.is_symmetric(0.0));
    }

    proptest! {
        #[test]
        fn slot_swap_negates_omega(seed in 0usize..10_000) {
            let ball = LatticeBall::new(2, 3.0).unwrap();
            let g = TorusMetric::admissible_example();
            let l2 = ball.frequencies(&g).unwrap();
            let all = enumerate_multivectors(2, &ball, 10_000_000).unwrap();
            let v = &all[seed % all.len()];
            let w = v.slot_swapped();
            prop_assert!(w.has_zero_momentum(&ball));
            prop_assert_eq!(omega_from(&l2, &w.sites), -omega_from(&l2, &v.sites));
        }

        #[test]
        fn kappa_filter_idempotent_and_monotone(k1 in 0.0f64..20.0, k2 in 0.0f64..20.0) {
            let ball = Arc::new(LatticeBall::new(2, 1.5).unwrap());
            let g = TorusMetric::admissible_example();
            let p = HomogeneousPoly::constant(2, ball, 1.0);
            let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
            let flo = kappa_filter(&p, &g, lo).unwrap();
            let fhi = kappa_filter(&p, &g, hi).unwrap();
            let again = kappa_filter(&flo, &g, lo).unwrap();
            prop_assert_eq!(again.coeffs(), flo.coeffs());
            prop_assert!(flo.coeffs().keys().all(|v| fhi.coeffs().contains_key(v)));
        }
    }
}
