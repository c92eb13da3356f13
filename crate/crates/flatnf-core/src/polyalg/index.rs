use std::fmt;

use serde::Serialize;

use crate::lattice::LatticeBall;

/// Exponents (k, l, m) of one site: u^k ū^l y^m with k·l = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SiteExp {
    pub site: u32,
    pub k: u16,
    pub l: u16,
    pub m: u16,
}

/// Finitely supported multi-index (k, l, m), stored sorted by site with no
/// all-zero entries. Non-pairing k_n·l_n = 0 holds at every site.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MultiIndex {
    entries: Vec<SiteExp>,
}

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex { entries: Vec::new() }
    }

    /// Build from unsorted per-site exponents; entries on the same site are
    /// added. Returns None when the result violates non-pairing.
    pub fn from_exps<I: IntoIterator<Item = (usize, u16, u16, u16)>>(it: I) -> Option<Self> {
        let mut entries: Vec<SiteExp> = Vec::new();
        for (site, k, l, m) in it {
            let site = site as u32;
            match entries.iter_mut().find(|e| e.site == site) {
                Some(e) => {
                    e.k += k;
                    e.l += l;
                    e.m += m;
                }
                None => entries.push(SiteExp { site, k, l, m }),
            }
        }
        entries.retain(|e| e.k + e.l + e.m > 0);
        entries.sort_unstable();
        if entries.iter().any(|e| e.k > 0 && e.l > 0) {
            return None;
        }
        Some(MultiIndex { entries })
    }

    /// Trusted constructor for already sorted, non-pairing entries.
    pub(crate) fn from_sorted(entries: Vec<SiteExp>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].site < w[1].site));
        debug_assert!(entries.iter().all(|e| e.k * e.l == 0 && e.k + e.l + e.m > 0));
        MultiIndex { entries }
    }

    /// y_n, the single action monomial at `site`.
    pub fn action(site: usize) -> Self {
        MultiIndex { entries: vec![SiteExp { site: site as u32, k: 0, l: 0, m: 1 }] }
    }

    pub fn entries(&self) -> &[SiteExp] {
        &self.entries
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(|e| (e.k + e.l + 2 * e.m) as u32).sum()
    }

    /// No unpaired site: k = l = 0.
    pub fn is_integrable(&self) -> bool {
        self.entries.iter().all(|e| e.k == 0 && e.l == 0)
    }

    /// Σ(k_n − l_n) = 0 and Σ n(k_n − l_n) = 0.
    pub fn has_zero_momentum(&self, ball: &LatticeBall) -> bool {
        let mut count = 0i64;
        let mut mom = vec![0i64; ball.dim()];
        for e in &self.entries {
            let w = e.k as i64 - e.l as i64;
            count += w;
            for (a, x) in mom.iter_mut().zip(ball.site(e.site as usize)) {
                *a += w * x;
            }
        }
        count == 0 && mom.iter().all(|&x| x == 0)
    }

    /// Swap k and l (index of the complex-conjugate monomial).
    pub fn conj(&self) -> Self {
        MultiIndex {
            entries: self.entries.iter().map(|e| SiteExp { site: e.site, k: e.l, l: e.k, m: e.m }).collect(),
        }
    }

    /// Drop the m part.
    pub fn kl_part(&self) -> Self {
        MultiIndex {
            entries: self
                .entries
                .iter()
                .filter(|e| e.k + e.l > 0)
                .map(|e| SiteExp { m: 0, ..*e })
                .collect(),
        }
    }

    /// Smallest |n| over unpaired sites, +∞ for integrable indices.
    pub fn n_minus(&self, ball: &LatticeBall) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.k + e.l > 0)
            .map(|e| ball.norm_of(e.site as usize))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest ⟨n⟩ over unpaired sites, +∞ for integrable indices.
    pub fn n_minus_bracket(&self, ball: &LatticeBall) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.k + e.l > 0)
            .map(|e| ball.japanese_of(e.site as usize))
            .fold(f64::INFINITY, f64::min)
    }

    /// Ω_𝐧(ω) = Σ(k_n − l_n)ω_n.
    pub fn resonance(&self, omega: &[f64]) -> f64 {
        self.entries.iter().map(|e| (e.k as f64 - e.l as f64) * omega[e.site as usize]).sum()
    }

    /// (k − l) as sparse (site, weight) pairs.
    pub fn k_minus_l(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .iter()
            .filter(|e| e.k != e.l)
            .map(|e| (e.site as usize, e.k as f64 - e.l as f64))
    }

    /// Is this the single action monomial y_n? Returns the site.
    pub fn as_action(&self) -> Option<usize> {
        match self.entries.as_slice() {
            [e] if e.k == 0 && e.l == 0 && e.m == 1 => Some(e.site as usize),
            _ => None,
        }
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for e in &self.entries {
            for (sym, p) in [("u", e.k), ("ū", e.l), ("y", e.m)] {
                if p == 0 {
                    continue;
                }
                if !first {
                    write!(f, "·")?;
                }
                first = false;
                if p == 1 {
                    write!(f, "{sym}[{}]", e.site)?;
                } else {
                    write!(f, "{sym}[{}]^{p}", e.site)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_merges_and_rejects_pairing() {
        let a = MultiIndex::from_exps([(2, 1, 0, 0), (0, 0, 0, 1), (2, 1, 0, 1)]).unwrap();
        assert_eq!(a.entries().len(), 2);
        assert_eq!(a.entries()[1], SiteExp { site: 2, k: 2, l: 0, m: 1 });
        assert_eq!(a.degree(), 6);
        assert!(MultiIndex::from_exps([(1, 1, 1, 0)]).is_none());
        assert_eq!(MultiIndex::from_exps([(1, 0, 0, 0)]).unwrap(), MultiIndex::empty());
    }

    #[test]
    fn n_minus_conventions() {
        let ball = LatticeBall::new(1, 3.0).unwrap();
        let y = MultiIndex::action(ball.index_of(&[2]).unwrap());
        assert!(y.is_integrable());
        assert_eq!(y.n_minus(&ball), f64::INFINITY);
        let i3 = ball.index_of(&[3]).unwrap();
        let im1 = ball.index_of(&[-1]).unwrap();
        let z = MultiIndex::from_exps([(i3, 1, 0, 0), (im1, 0, 1, 2)]).unwrap();
        assert_eq!(z.n_minus(&ball), 1.0);
        assert_eq!(z.conj().conj(), z);
    }
}
