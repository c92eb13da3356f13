use serde::Serialize;

use crate::polyalg::MultiIndex;

/// Frequencies of the quadratic part Z₂ = Σ ω_n y_n, stored as the
/// coefficients of y_n, with an optional Jacobian ∂_{ξ_k}ω_n.
///
/// The modulated frequencies of the normal-form literature are normalised so
/// that the linear flow reads i u̇_n = ω_n u_n. With the bracket used here the
/// y-coefficient equals half of that, so [`FrequencyVector::modulated`]
/// returns 2ω.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyVector {
    pub omega: Vec<f64>,
    pub grad: Option<Vec<Vec<f64>>>,
}

impl FrequencyVector {
    pub fn new(omega: Vec<f64>, grad: Option<Vec<Vec<f64>>>) -> Self {
        FrequencyVector { omega, grad }
    }

    /// Build from modulated frequencies (linear flow rate), halving them.
    pub fn from_modulated(modulated: &[f64], grad: Option<&[Vec<f64>]>) -> Self {
        FrequencyVector {
            omega: modulated.iter().map(|w| 0.5 * w).collect(),
            grad: grad.map(|g| g.iter().map(|row| row.iter().map(|x| 0.5 * x).collect()).collect()),
        }
    }

    /// ω_n = λ_n² + ξ_n in modulated units, with identity Jacobian.
    pub fn lambda_plus_xi(lambda2: &[f64], xi: &[f64]) -> Self {
        let m: Vec<f64> = lambda2.iter().zip(xi).map(|(l, x)| l + x).collect();
        let n = m.len();
        let eye: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::from_modulated(&m, Some(&eye))
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn modulated(&self) -> Vec<f64> {
        self.omega.iter().map(|w| 2.0 * w).collect()
    }

    /// Ω_𝐧(ω) with the stored (y-coefficient) frequencies.
    pub fn resonance(&self, idx: &MultiIndex) -> f64 {
        idx.resonance(&self.omega)
    }

    /// ∂_ξ Ω_𝐧(ω) in stored units; None without a Jacobian.
    pub fn resonance_grad(&self, idx: &MultiIndex) -> Option<Vec<f64>> {
        let g = self.grad.as_ref()?;
        let n = self.omega.len();
        let mut out = vec![0.0; n];
        for (site, w) in idx.k_minus_l() {
            for (o, x) in out.iter_mut().zip(&g[site]) {
                *o += w * x;
            }
        }
        Some(out)
    }

    /// Entries (n, k) where |∂_{ξ_k}(ω_n − ξ_n)| exceeds `bound`, in
    /// modulated units.
    pub fn budget_violations(&self, bound: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        if let Some(g) = &self.grad {
            for (n, row) in g.iter().enumerate() {
                for (k, x) in row.iter().enumerate() {
                    let v = 2.0 * x - if n == k { 1.0 } else { 0.0 };
                    if v.abs() > bound {
                        out.push((n, k, v));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modulated_round_trip() {
        let f = FrequencyVector::lambda_plus_xi(&[0.0, 1.0, 3.0], &[0.1, 0.2, 0.3]);
        assert_eq!(f.modulated(), vec![0.1, 1.2, 3.3]);
        assert!(f.budget_violations(1e-15).is_empty());
        let idx = MultiIndex::from_exps([(1, 1, 0, 0), (2, 0, 1, 0)]).unwrap();
        assert!((f.resonance(&idx) - 0.5 * (1.2 - 3.3)).abs() < 1e-15);
        assert_eq!(f.resonance_grad(&idx).unwrap(), vec![0.0, 0.5, -0.5]);
    }
}
