use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{FlatError, Result};
use crate::lattice::{LatticeBall, TorusMetric};
use crate::polyalg::{center, RecenteredPoly};
use crate::resonance::{omega_from, HomogeneousPoly};

/// Which quartic term the Hamiltonian carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarticModel {
    /// −f′(0)/4 Σ|u_n|⁴, the integrable quartic of the truncated model.
    Diagonal,
    /// f′(0)/4 Σ_{zero momentum} u ū u ū, the Galerkin-truncated cubic NLS.
    Full,
}

/// Physical-space grid for the full quartic: side L > 4M avoids aliasing of
/// every quartet interaction.
struct FftGrid {
    side: usize,
    dim: usize,
    cells: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftGrid").field("side", &self.side).field("dim", &self.dim).finish()
    }
}

impl FftGrid {
    fn new(ball: &LatticeBall) -> Self {
        let m = ball.radius().floor() as usize;
        let side = (4 * m + 1).next_power_of_two().max(2);
        let dim = ball.dim();
        let cells = ball
            .sites()
            .iter()
            .map(|n| n.iter().fold(0usize, |acc, &x| acc * side + x.rem_euclid(side as i64) as usize))
            .collect();
        let mut planner = FftPlanner::new();
        FftGrid { side, dim, cells, forward: planner.plan_fft_forward(side), inverse: planner.plan_fft_inverse(side) }
    }

    fn total(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Apply a 1-d transform along every axis of the row-major grid.
    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let l = self.side;
        let total = self.total();
        let mut line = vec![Complex64::new(0.0, 0.0); l];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = l.pow((self.dim - 1 - axis) as u32);
            for start in 0..total {
                // visit each line once: the axis coordinate of `start` must be 0
                if (start / stride) % l != 0 {
                    continue;
                }
                for (j, x) in line.iter_mut().enumerate() {
                    *x = data[start + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, x) in line.iter().enumerate() {
                    data[start + j * stride] = *x;
                }
            }
        }
    }

    fn to_physical(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.total()];
        for (c, z) in self.cells.iter().zip(u) {
            v[*c] = *z;
        }
        self.transform(&mut v, &self.inverse);
        v
    }
}

/// Truncated Hamiltonian ½Σλ²|u|² + quartic + optional higher resonant terms.
#[derive(Debug)]
pub struct Hamiltonian {
    ball: Arc<LatticeBall>,
    lambda2: Vec<f64>,
    fprime0: f64,
    model: QuarticModel,
    extras: Option<RecenteredPoly>,
    grid: Option<FftGrid>,
}

/// H_lo with the diagonal quartic and κ-resonant extras of degree ≥ 6.
pub fn build_hlo(
    metric: &TorusMetric,
    ball: Arc<LatticeBall>,
    fprime0: f64,
    extras: &[HomogeneousPoly],
    kappa: f64,
) -> Result<Hamiltonian> {
    let lambda2 = ball.frequencies(metric)?;
    for p in extras {
        if p.q() < 3 {
            return Err(FlatError::Argument(format!("extra terms must have degree >= 6, got {}", 2 * p.q())));
        }
        if **p.ball() != *ball {
            return Err(FlatError::BallMismatch);
        }
        for (v, c) in p.coeffs() {
            let om = omega_from(&lambda2, v);
            if c.norm() > 0.0 && om.abs() > kappa {
                return Err(FlatError::Argument(format!(
                    "extra term {v:?} has |Omega| = {} > kappa = {kappa}",
                    om.abs()
                )));
            }
        }
    }
    let extras = if extras.is_empty() {
        None
    } else {
        let refs: Vec<&HomogeneousPoly> = extras.iter().collect();
        Some(center(&refs, Arc::new(vec![0.0; ball.len()]), false)?)
    };
    Ok(Hamiltonian { ball, lambda2, fprime0, model: QuarticModel::Diagonal, extras, grid: None })
}

/// Galerkin truncation of cubic NLS: ½Σλ²|u|² + f′(0)/4 Σ_{𝒩₄} u ū u ū.
pub fn build_nls(metric: &TorusMetric, ball: Arc<LatticeBall>, fprime0: f64) -> Result<Hamiltonian> {
    let lambda2 = ball.frequencies(metric)?;
    let grid = FftGrid::new(&ball);
    Ok(Hamiltonian { ball, lambda2, fprime0, model: QuarticModel::Full, extras: None, grid: Some(grid) })
}

impl Hamiltonian {
    pub fn ball(&self) -> &Arc<LatticeBall> {
        &self.ball
    }

    pub fn lambda2(&self) -> &[f64] {
        &self.lambda2
    }

    pub fn model(&self) -> QuarticModel {
        self.model
    }

    pub fn fprime0(&self) -> f64 {
        self.fprime0
    }

    fn check(&self, u: &[Complex64]) -> Result<()> {
        if u.len() != self.ball.len() {
            return Err(FlatError::Dimension { expected: self.ball.len(), got: u.len() });
        }
        Ok(())
    }

    pub fn quadratic_energy(&self, u: &[Complex64]) -> f64 {
        0.5 * u.iter().zip(&self.lambda2).map(|(z, l)| l * z.norm_sqr()).sum::<f64>()
    }

    /// Everything but the quadratic part.
    pub fn nonlinear_energy(&self, u: &[Complex64]) -> Result<f64> {
        self.check(u)?;
        let mut e = match self.model {
            QuarticModel::Diagonal => -self.fprime0 / 4.0 * u.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>(),
            QuarticModel::Full => {
                if self.fprime0 == 0.0 {
                    0.0
                } else {
                    let g = self.grid.as_ref().expect("full model has a grid");
                    let v = g.to_physical(u);
                    self.fprime0 / 4.0 * v.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / g.total() as f64
                }
            }
        };
        if let Some(x) = &self.extras {
            e += x.evaluate(u)?.re;
        }
        Ok(e)
    }

    pub fn energy(&self, u: &[Complex64]) -> Result<f64> {
        Ok(self.quadratic_energy(u) + self.nonlinear_energy(u)?)
    }

    /// 2∂_ū of the nonlinear part.
    pub fn nonlinear_gradient(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(u)?;
        let mut g: Vec<Complex64> = match self.model {
            QuarticModel::Diagonal => u.iter().map(|z| -self.fprime0 * z.norm_sqr() * z).collect(),
            QuarticModel::Full => {
                if self.fprime0 == 0.0 {
                    vec![Complex64::new(0.0, 0.0); u.len()]
                } else {
                    let grid = self.grid.as_ref().expect("full model has a grid");
                    let mut w = grid.to_physical(u);
                    for z in w.iter_mut() {
                        *z *= z.norm_sqr();
                    }
                    grid.transform(&mut w, &grid.forward);
                    let scale = self.fprime0 / grid.total() as f64;
                    grid.cells.iter().map(|&c| w[c] * scale).collect()
                }
            }
        };
        if let Some(x) = &self.extras {
            for (a, b) in g.iter_mut().zip(x.gradient_eval(u)?) {
                *a += b;
            }
        }
        Ok(g)
    }

    /// 2∂_ū H.
    pub fn gradient(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut g = self.nonlinear_gradient(u)?;
        for ((a, z), l) in g.iter_mut().zip(u).zip(&self.lambda2) {
            *a += l * z;
        }
        Ok(g)
    }
}
