//! Torus geometry: the bilinear form, linear frequencies and finite-range
//! admissibility scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlatError, Result};

/// Symmetric positive-definite metric on the dual lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusMetric {
    dim: usize,
    g: Vec<Vec<f64>>,
    tau_star: f64,
    c_lower: f64,
}

impl TorusMetric {
    pub fn new(g: Vec<Vec<f64>>, tau_star: f64) -> Result<Self> {
        let dim = g.len();
        if dim == 0 {
            return Err(FlatError::Argument("metric must have dimension >= 1".into()));
        }
        for row in &g {
            if row.len() != dim {
                return Err(FlatError::Dimension { expected: dim, got: row.len() });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(FlatError::Argument("metric entries must be finite".into()));
            }
        }
        for i in 0..dim {
            for j in 0..i {
                if g[i][j] != g[j][i] {
                    return Err(FlatError::Argument(format!(
                        "metric is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if !leading_minors_positive(&g) {
            return Err(FlatError::Argument("metric is not positive definite".into()));
        }
        if !(tau_star > 0.0) {
            return Err(FlatError::Argument("tau_star must be > 0".into()));
        }
        Ok(TorusMetric { dim, g, tau_star, c_lower: 0.0 })
    }

    /// Identity metric: the square torus.
    pub fn square(dim: usize) -> Self {
        let g = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        TorusMetric { dim, g, tau_star: 1.0, c_lower: 0.0 }
    }

    /// The two-dimensional admissible example [[1, √2], [√2, 3]].
    pub fn admissible_example() -> Self {
        let r2 = 2f64.sqrt();
        TorusMetric { dim: 2, g: vec![vec![1.0, r2], vec![r2, 3.0]], tau_star: 4.0, c_lower: 0.0 }
    }

    pub fn with_c_lower(mut self, c: f64) -> Self {
        self.c_lower = c;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.g
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    /// Max-row-sum norm of G.
    pub fn norm_inf(&self) -> f64 {
        self.g
            .iter()
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn g_form(&self, a: &[i64], b: &[i64]) -> Result<f64> {
        self.check_dim(a.len())?;
        self.check_dim(b.len())?;
        Ok(self.g_unchecked(a, b))
    }

    pub fn frequency(&self, n: &[i64]) -> Result<f64> {
        self.g_form(n, n)
    }

    pub(crate) fn g_unchecked(&self, a: &[i64], b: &[i64]) -> f64 {
        // Pair the off-diagonal entries through integer sums so that
        // g(a,b) and g(b,a) round identically.
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.g[i][i] * (a[i] * b[i]) as f64;
            for j in (i + 1)..self.dim {
                acc += self.g[i][j] * (a[i] * b[j] + a[j] * b[i]) as f64;
            }
        }
        acc
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(FlatError::Dimension { expected: self.dim, got });
        }
        Ok(())
    }
}

fn leading_minors_positive(g: &[Vec<f64>]) -> bool {
    // Cholesky succeeds iff every leading principal minor is positive.
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return false;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    true
}

/// Euclidean norm of an integer vector.
pub fn norm(n: &[i64]) -> f64 {
    n.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt()
}

/// Japanese bracket ⟨n⟩ = (1 + |n|²)^{1/2}.
pub fn japanese(n: &[i64]) -> f64 {
    (1.0 + n.iter().map(|&x| (x * x) as f64).sum::<f64>()).sqrt()
}

/// The truncated lattice {n ∈ ℤ^d : |n| ≤ M} in lexicographic order.
#[derive(Clone, Debug, Serialize)]
pub struct LatticeBall {
    dim: usize,
    radius: f64,
    sites: Vec<Vec<i64>>,
    #[serde(skip)]
    half: i64,
    #[serde(skip)]
    lookup: Vec<u32>,
}

const NO_SITE: u32 = u32::MAX;

impl PartialEq for LatticeBall {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.sites == other.sites
    }
}

impl LatticeBall {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || dim > 4 {
            return Err(FlatError::Argument(format!("unsupported lattice dimension {dim}")));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(FlatError::Argument(format!("invalid ball radius {radius}")));
        }
        let half = radius.floor() as i64;
        let side = (2 * half + 1) as usize;
        let cells = side.pow(dim as u32);
        if cells > 50_000_000 {
            return Err(FlatError::EnumerationCap { estimate: cells as f64, cap: 50_000_000 });
        }
        let r2 = radius * radius;
        let mut sites = Vec::new();
        let mut n = vec![-half; dim];
        loop {
            let sq: i64 = n.iter().map(|x| x * x).sum();
            if (sq as f64) <= r2 + 1e-9 {
                sites.push(n.clone());
            }
            // odometer increment, last coordinate fastest => lexicographic order
            let mut i = dim;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if n[i] < half {
                    n[i] += 1;
                    break;
                }
                n[i] = -half;
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX {
                break;
            }
        }
        let mut lookup = vec![NO_SITE; cells];
        for (idx, s) in sites.iter().enumerate() {
            lookup[cell_of(s, half, side)] = idx as u32;
        }
        Ok(LatticeBall { dim, radius, sites, half, lookup })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Vec<i64>] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.sites[i]
    }

    pub fn norm_of(&self, i: usize) -> f64 {
        norm(&self.sites[i])
    }

    pub fn japanese_of(&self, i: usize) -> f64 {
        japanese(&self.sites[i])
    }

    /// Index of the site `n`, or None when it lies outside the ball.
    pub fn index_of(&self, n: &[i64]) -> Option<usize> {
        if n.len() != self.dim || n.iter().any(|&x| x.abs() > self.half) {
            return None;
        }
        let side = (2 * self.half + 1) as usize;
        match self.lookup[cell_of(n, self.half, side)] {
            NO_SITE => None,
            idx => Some(idx as usize),
        }
    }

    /// Index of the origin (always present).
    pub fn origin(&self) -> usize {
        self.index_of(&vec![0; self.dim]).expect("origin is in every ball")
    }

    /// Linear frequencies λ_n² for every site.
    pub fn frequencies(&self, metric: &TorusMetric) -> Result<Vec<f64>> {
        metric.check_dim(self.dim)?;
        Ok(self.sites.iter().map(|n| metric.g_unchecked(n, n)).collect())
    }
}

fn cell_of(n: &[i64], half: i64, side: usize) -> usize {
    n.iter().fold(0usize, |acc, &x| acc * side + (x + half) as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroHit {
    pub a: Vec<i64>,
    pub b: Vec<i64>,
}

/// Result of a finite-range admissibility scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub min_value: f64,
    pub argmin_a: Vec<i64>,
    pub argmin_b: Vec<i64>,
    pub zero_hits: Vec<ZeroHit>,
    #[serde(rename = "M")]
    pub m: f64,
    pub tau_star: f64,
    pub note: &'static str,
}

/// Minimise |g(a,b)|·|a|^τ*·|b|^τ* over nonzero a, b with |a|, |b| ≤ M.
pub fn admissibility_scan(metric: &TorusMetric, m: f64) -> Result<ScanReport> {
    if !(m >= 1.0) {
        return Err(FlatError::Argument(format!("scan radius must be >= 1, got {m}")));
    }
    let ball = LatticeBall::new(metric.dim(), m)?;
    let nonzero: Vec<&Vec<i64>> = ball.sites().iter().filter(|n| n.iter().any(|&x| x != 0)).collect();
    let g_norm = metric.norm_inf();
    let tau = metric.tau_star();

    struct Partial {
        min: f64,
        arg: (usize, usize),
        zeros: Vec<(usize, usize)>,
    }

    let partials: Vec<Partial> = (0..nonzero.len())
        .into_par_iter()
        .map(|i| {
            let a = nonzero[i];
            let na = norm(a);
            let mut p = Partial { min: f64::INFINITY, arg: (i, 0), zeros: Vec::new() };
            for (j, b) in nonzero.iter().enumerate() {
                let nb = norm(b);
                let g = metric.g_unchecked(a, b);
                let tol = 1e-14 * g_norm * na * nb;
                let value = if g.abs() <= tol {
                    p.zeros.push((i, j));
                    0.0
                } else {
                    g.abs() * na.powf(tau) * nb.powf(tau)
                };
                if value < p.min {
                    p.min = value;
                    p.arg = (i, j);
                }
            }
            p
        })
        .collect();

    let mut min_value = f64::INFINITY;
    let mut arg = (0, 0);
    let mut zero_hits = Vec::new();
    for p in partials {
        if p.min < min_value {
            min_value = p.min;
            arg = p.arg;
        }
        for (i, j) in p.zeros {
            zero_hits.push(ZeroHit { a: nonzero[i].clone(), b: nonzero[j].clone() });
        }
    }
    Ok(ScanReport {
        min_value,
        argmin_a: nonzero[arg.0].clone(),
        argmin_b: nonzero[arg.1].clone(),
        zero_hits,
        m,
        tau_star: tau,
        note: "empirical finite-range scan, not a proof of admissibility",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g_form_examples() {
        let g = TorusMetric::admissible_example();
        let v = g.g_form(&[1, 0], &[0, 1]).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.g_form(&[0, 0], &[3, -7]).unwrap(), 0.0);
        let sq = TorusMetric::square(2);
        assert_eq!(sq.g_form(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert!(g.g_form(&[1], &[0, 1]).is_err());
    }

    #[test]
    fn frequency_examples() {
        let g = TorusMetric::admissible_example();
        let f = g.frequency(&[1, 1]).unwrap();
        assert!((f - (4.0 + 2.0 * 2f64.sqrt())).abs() < 1e-14);
        assert_eq!(g.frequency(&[0, 0]).unwrap(), 0.0);
        assert_eq!(TorusMetric::square(2).frequency(&[3, 4]).unwrap(), 25.0);
    }

    #[test]
    fn rejects_bad_metrics() {
        assert!(TorusMetric::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]], 1.0).is_err());
        assert!(TorusMetric::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]], 1.0).is_err());
        assert!(TorusMetric::new(vec![vec![2.0]], 1.0).is_ok());
    }

    #[test]
    fn ball_enumerates_exactly() {
        let ball = LatticeBall::new(2, 2.0).unwrap();
        let mut brute = Vec::new();
        for x in -2i64..=2 {
            for y in -2i64..=2 {
                if x * x + y * y <= 4 {
                    brute.push(vec![x, y]);
                }
            }
        }
        assert_eq!(ball.sites(), &brute[..]);
        for (i, s) in ball.sites().iter().enumerate() {
            assert_eq!(ball.index_of(s), Some(i));
        }
        assert_eq!(ball.index_of(&[2, 1]), None);
        assert_eq!(ball.index_of(&[5, 0]), None);
    }

    #[test]
    fn scan_square_torus_finds_zeros() {
        let r = admissibility_scan(&TorusMetric::square(2), 2.0).unwrap();
        assert_eq!(r.min_value, 0.0);
        assert!(r.zero_hits.iter().any(|h| h.a == vec![1, 0] && h.b == vec![0, 1]));
    }

    #[test]
    fn scan_admissible_example_has_no_zeros() {
        let r = admissibility_scan(&TorusMetric::admissible_example(), 8.0).unwrap();
        assert!(r.zero_hits.is_empty());
        assert!(r.min_value > 0.0);
    }

    #[test]
    fn scan_one_dimensional_unit_radius() {
        let m = TorusMetric::new(vec![vec![2.5]], 1.0).unwrap();
        let r = admissibility_scan(&m, 1.0).unwrap();
        assert!((r.min_value - 2.5).abs() < 1e-15);
    }

    #[test]
    fn admissible_example_has_no_orthogonal_pairs_up_to_twelve() {
        let g = TorusMetric::admissible_example();
        let ball = LatticeBall::new(2, 12.0).unwrap();
        for a in ball.sites().iter().filter(|n| n.iter().any(|&x| x != 0)) {
            for b in ball.sites().iter().filter(|n| n.iter().any(|&x| x != 0)) {
                assert!(g.g_form(a, b).unwrap().abs() > 1e-9, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn square_scan_always_has_zero_for_m_at_least_two() {
        for m in [2.0, 2.5, 3.0, 4.0] {
            let r = admissibility_scan(&TorusMetric::square(2), m).unwrap();
            assert!(!r.zero_hits.is_empty());
        }
    }

    proptest! {
        #[test]
        fn g_form_is_symmetric(a in prop::collection::vec(-20i64..20, 2), b in prop::collection::vec(-20i64..20, 2)) {
            let g = TorusMetric::admissible_example();
            prop_assert_eq!(g.g_form(&a, &b).unwrap(), g.g_form(&b, &a).unwrap());
        }

        #[test]
        fn frequency_positive_off_origin(n in prop::collection::vec(-12i64..12, 2)) {
            prop_assume!(n.iter().any(|&x| x != 0));
            prop_assert!(TorusMetric::admissible_example().frequency(&n).unwrap() > 0.0);
        }
    }
}
