use std::collections::HashMap;

use serde::Serialize;

use crate::error::{FlatError, Result};
use crate::lattice::LatticeBall;
use crate::polyalg::{binomial, MultiIndex};

/// Zero-momentum, non-integrable (k, l) pattern: a multi-index with m = 0.
/// Every re-centered multi-index shares its small divisor with its pattern.
#[derive(Clone, Debug, Serialize)]
pub struct KlPattern {
    pub idx: MultiIndex,
    pub degree: u32,
    /// Smallest Euclidean |n| over unpaired sites.
    pub n_minus: f64,
    /// Smallest ⟨n⟩ over unpaired sites.
    pub n_minus_bracket: f64,
}

/// All zero-momentum non-integrable patterns of degree ≤ `max_degree`.
#[derive(Clone, Debug, Serialize)]
pub struct KlFamily {
    pub max_degree: u32,
    pub patterns: Vec<KlPattern>,
}

fn multisets(nsites: usize, size: usize, out: &mut Vec<Vec<(usize, u16)>>) {
    fn rec(nsites: usize, start: usize, left: usize, cur: &mut Vec<(usize, u16)>, out: &mut Vec<Vec<(usize, u16)>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for s in start..nsites {
            for c in 1..=left {
                cur.push((s, c as u16));
                rec(nsites, s + 1, left - c, cur, out);
                cur.pop();
            }
        }
    }
    rec(nsites, 0, size, &mut Vec::new(), out);
}

impl KlFamily {
    /// Enumerate; refuses when the projected pair count exceeds `cap`.
    pub fn enumerate(ball: &LatticeBall, max_degree: u32, cap: usize) -> Result<Self> {
        let b = ball.len() as u32;
        let mut estimate = 0.0;
        for t in 1..=max_degree / 2 {
            let c = binomial(b + t - 1, t);
            estimate += c * c;
        }
        if estimate > cap as f64 {
            return Err(FlatError::EnumerationCap { estimate, cap });
        }
        let mut patterns = Vec::new();
        for t in 1..=(max_degree / 2) as usize {
            let mut sets = Vec::new();
            multisets(ball.len(), t, &mut sets);
            let mut by_mom: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            for (i, set) in sets.iter().enumerate() {
                let mut mom = vec![0i64; ball.dim()];
                for &(s, c) in set {
                    for (a, x) in mom.iter_mut().zip(ball.site(s)) {
                        *a += c as i64 * x;
                    }
                }
                by_mom.entry(mom).or_default().push(i);
            }
            let mut groups: Vec<_> = by_mom.into_values().collect();
            groups.sort();
            for group in groups {
                for &ki in &group {
                    for &li in &group {
                        let (k, l) = (&sets[ki], &sets[li]);
                        if k.iter().any(|(s, _)| l.iter().any(|(s2, _)| s == s2)) {
                            continue;
                        }
                        let idx = MultiIndex::from_exps(
                            k.iter().map(|&(s, c)| (s, c, 0, 0)).chain(l.iter().map(|&(s, c)| (s, 0, c, 0))),
                        )
                        .expect("disjoint supports");
                        patterns.push(KlPattern {
                            degree: 2 * t as u32,
                            n_minus: idx.n_minus(ball),
                            n_minus_bracket: idx.n_minus_bracket(ball),
                            idx,
                        });
                    }
                }
            }
        }
        patterns.sort_by(|a, b| a.idx.cmp(&b.idx));
        Ok(KlFamily { max_degree, patterns })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Patterns with n₋ < radius (membership in Λ at that scale).
    pub fn restricted(&self, radius: f64) -> KlFamily {
        KlFamily {
            max_degree: self.max_degree,
            patterns: self.patterns.iter().filter(|p| p.n_minus < radius).cloned().collect(),
        }
    }
}

/// Number of multi-indices of degree ≤ cap sharing a pattern of degree
/// `degree`: the count of action exponents m with 2|m| ≤ cap − degree over a
/// ball of `nsites` sites.
pub fn pattern_multiplicity(nsites: usize, degree: u32, cap: u32) -> f64 {
    if degree > cap {
        return 0.0;
    }
    let j = (cap - degree) / 2;
    binomial(nsites as u32 + j, j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_quartic_patterns() {
        // d = 1, M = 2: count unordered-by-slot quartic patterns by brute force
        let ball = LatticeBall::new(1, 2.0).unwrap();
        let fam = KlFamily::enumerate(&ball, 4, 1_000_000).unwrap();
        let mut brute = std::collections::BTreeSet::new();
        let n = ball.len();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let idx = match MultiIndex::from_exps([(a, 1, 0, 0), (b, 1, 0, 0), (c, 0, 1, 0), (d, 0, 1, 0)]) {
                            Some(i) => i,
                            None => continue,
                        };
                        if !idx.is_integrable() && idx.has_zero_momentum(&ball) && idx.degree() == 4 {
                            brute.insert(idx);
                        }
                    }
                }
            }
        }
        // pairing removal only produces lower degrees; those are degree-2 patterns, none exist
        let got: std::collections::BTreeSet<_> = fam.patterns.iter().map(|p| p.idx.clone()).collect();
        assert_eq!(got, brute);
        assert!(fam.patterns.iter().all(|p| p.degree == 4));
    }

    #[test]
    fn multiplicity_counts_action_exponents() {
        assert_eq!(pattern_multiplicity(5, 6, 6), 1.0);
        assert_eq!(pattern_multiplicity(5, 4, 6), 6.0);
        assert_eq!(pattern_multiplicity(5, 4, 8), 21.0);
        assert_eq!(pattern_multiplicity(5, 10, 8), 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let ball = LatticeBall::new(2, 6.0).unwrap();
        assert!(matches!(KlFamily::enumerate(&ball, 8, 1000), Err(FlatError::EnumerationCap { .. })));
    }
}
