//! Dyadic, separated frequency-cluster partitions and super-actions.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FlatError, Result};
use crate::lattice::{LatticeBall, TorusMetric};

/// Partition of the ball into frequency clusters. Class 0 is the bounded
/// class and holds every site with |n| < 2.
#[derive(Clone, Debug, Serialize)]
pub struct ClusterPartition {
    #[serde(skip)]
    ball: Arc<LatticeBall>,
    pub delta: f64,
    pub classes: Vec<Vec<usize>>,
    pub class_of: Vec<usize>,
    /// m_υ = min |n| over the class.
    pub m_of: Vec<f64>,
    /// Every non-bounded class is dyadic.
    pub valid: bool,
    /// Largest |n| in the bounded class.
    pub bounded_radius: f64,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// |n₁ − n₂| + |λ²₁ − λ²₂| − (|n₁| + |n₂|)^δ; edges have margin ≤ 0.
fn margin(ball: &LatticeBall, lambda2: &[f64], i: usize, j: usize, delta: f64) -> f64 {
    let a = ball.site(i);
    let b = ball.site(j);
    let dist = a.iter().zip(b).map(|(x, y)| ((x - y) * (x - y)) as f64).sum::<f64>().sqrt();
    dist + (lambda2[i] - lambda2[j]).abs() - (ball.norm_of(i) + ball.norm_of(j)).powf(delta)
}

impl ClusterPartition {
    pub fn ball(&self) -> &Arc<LatticeBall> {
        &self.ball
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Build a partition from explicit classes (class 0 = bounded class).
    pub fn from_classes(ball: Arc<LatticeBall>, delta: f64, classes: Vec<Vec<usize>>) -> Result<Self> {
        let mut class_of = vec![usize::MAX; ball.len()];
        for (c, members) in classes.iter().enumerate() {
            for &s in members {
                if s >= ball.len() || class_of[s] != usize::MAX {
                    return Err(FlatError::Argument(format!("site {s} is missing or repeated")));
                }
                class_of[s] = c;
            }
        }
        if class_of.iter().any(|&c| c == usize::MAX) {
            return Err(FlatError::Argument("classes do not cover the ball".into()));
        }
        let m_of: Vec<f64> = classes
            .iter()
            .map(|m| m.iter().map(|&s| ball.norm_of(s)).fold(f64::INFINITY, f64::min))
            .collect();
        let valid = classes.iter().enumerate().skip(1).all(|(c, members)| {
            members.iter().map(|&s| ball.norm_of(s)).fold(0.0, f64::max) <= 2.0 * m_of[c]
        });
        let bounded_radius = classes
            .first()
            .map(|m| m.iter().map(|&s| ball.norm_of(s)).fold(0.0, f64::max))
            .unwrap_or(0.0);
        Ok(ClusterPartition { ball, delta, classes, class_of, m_of, valid, bounded_radius })
    }
}

/// Connected components of the proximity graph, with every component that
/// touches |n| < 2 merged into the bounded class.
pub fn build_partition(metric: &TorusMetric, ball: Arc<LatticeBall>, delta: f64) -> Result<ClusterPartition> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(FlatError::Argument(format!("delta must be in (0,1), got {delta}")));
    }
    let lambda2 = ball.frequencies(metric)?;
    let n = ball.len();
    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let lambda2 = &lambda2;
            let ball = &ball;
            ((i + 1)..n).filter(move |&j| margin(ball, lambda2, i, j, delta) <= 0.0).map(move |j| (i, j))
        })
        .collect();
    let mut uf = UnionFind::new(n);
    for (i, j) in edges {
        uf.union(i, j);
    }
    let seeds: Vec<usize> = (0..n).filter(|&i| ball.norm_of(i) < 2.0).collect();
    for w in seeds.windows(2) {
        uf.union(w[0], w[1]);
    }
    let bounded_root = seeds.first().map(|&s| uf.find(s));
    let mut root_class = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = vec![Vec::new()];
    if let Some(r) = bounded_root {
        root_class[r] = 0;
    }
    for i in 0..n {
        let r = uf.find(i);
        if root_class[r] == usize::MAX {
            root_class[r] = classes.len();
            classes.push(Vec::new());
        }
        classes[root_class[r]].push(i);
    }
    if classes[0].is_empty() {
        classes.remove(0);
    }
    ClusterPartition::from_classes(ball, delta, classes)
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    pub dyadic_ok: bool,
    pub separation_ok: bool,
    /// Pair in distinct classes with the smallest separation margin.
    pub worst_pair: Option<(Vec<i64>, Vec<i64>)>,
    pub worst_margin: f64,
}

/// Exhaustive check of dyadicity and of the separation property.
pub fn verify_partition(p: &ClusterPartition, metric: &TorusMetric) -> Result<PartitionReport> {
    let ball = p.ball.clone();
    let lambda2 = ball.frequencies(metric)?;
    let n = ball.len();
    let dyadic_ok = p.classes.iter().enumerate().skip(1).all(|(c, members)| {
        let mx = members.iter().map(|&s| ball.norm_of(s)).fold(0.0, f64::max);
        let mn = members.iter().map(|&s| ball.norm_of(s)).fold(f64::INFINITY, f64::min);
        debug_assert_eq!(mn, p.m_of[c]);
        mx <= 2.0 * mn
    });
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, None);
            for j in (i + 1)..n {
                if p.class_of[i] != p.class_of[j] {
                    let m = margin(&ball, &lambda2, i, j, p.delta);
                    if m < best.0 {
                        best = (m, Some((i, j)));
                    }
                }
            }
            best
        })
        .reduce(|| (f64::INFINITY, None), |a, b| if b.0 < a.0 { b } else { a });
    Ok(PartitionReport {
        dyadic_ok,
        separation_ok: worst.0 > 0.0,
        worst_pair: worst.1.map(|(i, j)| (ball.site(i).to_vec(), ball.site(j).to_vec())),
        worst_margin: worst.0,
    })
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// S_υ = Σ_{n∈υ} |u_n|² for every class, with compensated summation.
pub fn super_actions(u: &[Complex64], p: &ClusterPartition) -> Result<Vec<f64>> {
    if u.len() != p.ball.len() {
        return Err(FlatError::BallMismatch);
    }
    Ok(p.classes.iter().map(|m| compensated_sum(m.iter().map(|&s| u[s].norm_sqr()))).collect())
}

/// Largest δ in `deltas` whose partition is valid, with the validity of each.
pub fn delta_sweep(metric: &TorusMetric, ball: Arc<LatticeBall>, deltas: &[f64]) -> Result<(Option<f64>, Vec<(f64, bool)>)> {
    let mut flags = Vec::new();
    let mut best = None;
    for &d in deltas {
        let p = build_partition(metric, ball.clone(), d)?;
        flags.push((d, p.valid));
        if p.valid && best.map_or(true, |b| d > b) {
            best = Some(d);
        }
    }
    Ok((best, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_d(m: f64) -> Arc<LatticeBall> {
        Arc::new(LatticeBall::new(1, m).unwrap())
    }

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        assert_eq!(compensated_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
        assert_eq!(compensated_sum(std::iter::repeat(0.1).take(10)), 1.0);
    }

    #[test]
    fn one_dimensional_example() {
        let metric = TorusMetric::new(vec![vec![1.0]], 1.0).unwrap();
        let ball = one_d(4.0);
        let p = build_partition(&metric, ball.clone(), 0.3).unwrap();
        // 0, ±1 sit in the bounded class; ±n pairs with equal λ² but distance 2n
        let bounded: Vec<i64> = p.classes[0].iter().map(|&s| ball.site(s)[0]).collect();
        for n in [-1, 0, 1] {
            assert!(bounded.contains(&n));
        }
        let idx4 = ball.index_of(&[4]).unwrap();
        assert_ne!(p.class_of[idx4], 0);
        let r = verify_partition(&p, &metric).unwrap();
        assert!(r.separation_ok);
        assert_eq!(r.dyadic_ok, p.valid);
    }

    #[test]
    fn small_ball_is_one_bounded_class() {
        let g = TorusMetric::admissible_example();
        let p = build_partition(&g, Arc::new(LatticeBall::new(2, 1.5).unwrap()), 0.25).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.valid);
    }

    #[test]
    fn splitting_an_edge_breaks_separation() {
        let metric = TorusMetric::square(2);
        let ball = Arc::new(LatticeBall::new(2, 3.0).unwrap());
        let p = build_partition(&metric, ball.clone(), 0.5).unwrap();
        // find a multi-site class and split off one member
        let (c, members) = p.classes.iter().enumerate().skip(1).find(|(_, m)| m.len() > 1).expect("a merged class");
        let mut classes = p.classes.clone();
        let moved = members[members.len() - 1];
        classes[c].retain(|&s| s != moved);
        classes.push(vec![moved]);
        let split = ClusterPartition::from_classes(ball, 0.5, classes).unwrap();
        assert!(!verify_partition(&split, &metric).unwrap().separation_ok);
    }

    #[test]
    fn super_action_examples() {
        let g = TorusMetric::admissible_example();
        let ball = Arc::new(LatticeBall::new(2, 5.0).unwrap());
        let p = build_partition(&g, ball.clone(), 0.25).unwrap();
        let n0 = ball.index_of(&[3, -2]).unwrap();
        let mut u = vec![Complex64::new(0.0, 0.0); ball.len()];
        u[n0] = Complex64::new(1.0, 0.0);
        let s = super_actions(&u, &p).unwrap();
        for (c, v) in s.iter().enumerate() {
            assert_eq!(*v, if c == p.class_of[n0] { 1.0 } else { 0.0 });
        }
        let a = 0.3;
        let cls = p.class_of[n0];
        let mut u = vec![Complex64::new(0.0, 0.0); ball.len()];
        for &m in &p.classes[cls] {
            u[m] = Complex64::from_polar(a, m as f64);
        }
        let s = super_actions(&u, &p).unwrap();
        let k = p.classes[cls].len() as f64;
        assert!((s[cls] - k * a * a).abs() < 1e-15);
    }

    #[test]
    fn partition_is_deterministic() {
        let g = TorusMetric::admissible_example();
        let ball = Arc::new(LatticeBall::new(2, 8.0).unwrap());
        let a = build_partition(&g, ball.clone(), 0.3).unwrap();
        let b = build_partition(&g, ball, 0.3).unwrap();
        assert_eq!(a.classes, b.classes);
    }

    #[test]
    fn merging_classes_keeps_separation() {
        let g = TorusMetric::admissible_example();
        let ball = Arc::new(LatticeBall::new(2, 6.0).unwrap());
        let p = build_partition(&g, ball.clone(), 0.25).unwrap();
        let mut classes = p.classes.clone();
        let last = classes.pop().unwrap();
        classes[1].extend(last);
        let merged = ClusterPartition::from_classes(ball, 0.25, classes).unwrap();
        assert!(verify_partition(&merged, &g).unwrap().separation_ok);
    }

    proptest! {
        #[test]
        fn mass_identity_and_weighted_bounds(seed in 0u64..1000, s in 0.5f64..3.0) {
            use rand::{Rng, SeedableRng};
            let g = TorusMetric::admissible_example();
            let ball = Arc::new(LatticeBall::new(2, 7.0).unwrap());
            let p = build_partition(&g, ball.clone(), 0.25).unwrap();
            prop_assume!(p.valid);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<Complex64> = (0..ball.len())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let sa = super_actions(&u, &p).unwrap();
            let mass = compensated_sum(u.iter().map(|z| z.norm_sqr()));
            prop_assert!((compensated_sum(sa.iter().copied()) - mass).abs() <= 1e-15 * mass);
            // ⟨m_υ⟩-weighted super-actions bracket the h^s mass off the bounded class
            let mut weighted = 0.0;
            let mut hs = 0.0;
            for (c, members) in p.classes.iter().enumerate().skip(1) {
                let bm = (1.0 + p.m_of[c] * p.m_of[c]).sqrt();
                weighted += bm.powf(2.0 * s) * sa[c];
                for &m in members {
                    hs += ball.japanese_of(m).powf(2.0 * s) * u[m].norm_sqr();
                }
            }
            prop_assert!(weighted <= hs * (1.0 + 1e-12));
            prop_assert!(hs <= 2f64.powf(2.0 * s) * weighted * (1.0 + 1e-12));
        }
    }
}
