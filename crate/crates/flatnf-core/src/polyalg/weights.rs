use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::index::MultiIndex;
use super::poly::RecenteredPoly;
use crate::error::{FlatError, Result};
use crate::lattice::LatticeBall;

/// Scale-dependent parameters of the two-scale iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub epsilon: f64,
    pub s: f64,
    pub r: u32,
    /// Constant c in ε_α = 10ε − cαrε^{3/2}.
    pub c_eps: f64,
    /// Degree cap standing in for the astronomically large r̄.
    pub degree_cap: u32,
}

impl ParamSchedule {
    pub fn new(epsilon: f64, s: f64, r: u32) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(FlatError::Argument(format!("epsilon must be in (0,1), got {epsilon}")));
        }
        if !(s > 0.0) {
            return Err(FlatError::Argument(format!("s must be > 0, got {s}")));
        }
        if r == 0 {
            return Err(FlatError::Argument("r must be >= 1".into()));
        }
        Ok(ParamSchedule { epsilon, s, r, c_eps: 40.0, degree_cap: 8 })
    }

    pub fn with_degree_cap(mut self, cap: u32) -> Self {
        self.degree_cap = cap;
        self
    }

    pub fn with_c_eps(mut self, c: f64) -> Self {
        self.c_eps = c;
        self
    }

    /// η = ε^{1 − 1/100}.
    pub fn eta(&self) -> f64 {
        self.epsilon.powf(0.99)
    }

    pub fn beta(&self) -> u32 {
        100 * self.r
    }

    /// τ = s / (10³ r).
    pub fn tau(&self) -> f64 {
        self.s / (1000.0 * self.r as f64)
    }

    /// N(α) = ε^{−α/(200 s)}.
    pub fn n_of(&self, alpha: u32) -> f64 {
        self.log_n_of(alpha).exp()
    }

    pub fn log_n_of(&self, alpha: u32) -> f64 {
        -(alpha as f64) / (200.0 * self.s) * self.epsilon.ln()
    }

    /// γ = ε^{1/30}.
    pub fn gamma(&self) -> f64 {
        self.epsilon.powf(1.0 / 30.0)
    }

    pub fn gamma_of(&self, alpha: u32) -> f64 {
        4f64.powi(alpha as i32) * self.gamma()
    }

    pub fn eps_alpha(&self, alpha: u32) -> f64 {
        10.0 * self.epsilon - self.c_eps * alpha as f64 * self.r as f64 * self.epsilon.powf(1.5)
    }

    /// (η^{−1}ε)·N(α)^{5τ} ≤ ε^{1/200}, checked in log space.
    pub fn eta_tau_holds(&self, alpha: u32) -> bool {
        let lhs = self.epsilon.ln() - self.eta().ln() + 5.0 * self.tau() * self.log_n_of(alpha);
        lhs <= self.epsilon.ln() / 200.0 + 1e-12
    }

    /// γ(α)^{−1}(ε^{−1}η)²(N(α+1)/N(α))^{2s} ≤ ε^{−1/15}, checked in log space.
    pub fn par_holds(&self, alpha: u32) -> bool {
        let lhs = -self.gamma_of(alpha).ln()
            + 2.0 * (self.eta().ln() - self.epsilon.ln())
            + 2.0 * self.s * (self.log_n_of(alpha + 1) - self.log_n_of(alpha));
        lhs <= -self.epsilon.ln() / 15.0 + 1e-12
    }
}

/// Weights w⁰, w¹ of the coefficient norms at a given scale.
#[derive(Clone, Debug, Serialize)]
pub struct WeightSystem {
    pub schedule: ParamSchedule,
}

impl WeightSystem {
    pub fn new(schedule: ParamSchedule) -> Self {
        WeightSystem { schedule }
    }

    /// log D(α) = log(η^{−2−1/5} N(α)^{2s}).
    pub fn log_d(&self, alpha: u32) -> f64 {
        -2.2 * self.schedule.eta().ln() + 2.0 * self.schedule.s * self.schedule.log_n_of(alpha)
    }

    /// log C_n(α) = log(η^{−1} min(⟨n⟩, N(α))^s N(α)^τ).
    pub fn log_c(&self, bracket_n: f64, alpha: u32) -> f64 {
        let ln_n = self.schedule.log_n_of(alpha);
        -self.schedule.eta().ln() + self.schedule.s * bracket_n.ln().min(ln_n) + self.schedule.tau() * ln_n
    }

    pub fn log_weight(&self, idx: &MultiIndex, ball: &LatticeBall, alpha: u32, order: u8) -> f64 {
        let sc = &self.schedule;
        let (p_n, p_eta) = if order == 0 { (6.0, 6.0) } else { (4.0, 4.0) };
        let mut acc = -p_n * sc.s * sc.log_n_of(alpha) + p_eta * sc.eta().ln();
        let log_d = self.log_d(alpha);
        for e in idx.entries() {
            if e.m > 0 {
                acc += e.m as f64 * log_d;
            }
            if e.k + e.l > 0 {
                acc += (e.k + e.l) as f64 * self.log_c(ball.japanese_of(e.site as usize), alpha);
            }
        }
        acc
    }

    pub fn weight_of(&self, idx: &MultiIndex, ball: &LatticeBall, alpha: u32, order: u8) -> f64 {
        self.log_weight(idx, ball, alpha, order).exp()
    }

    /// 𝐧 ∈ Λ_α: some unpaired site has |n| < N(α).
    pub fn in_lambda(&self, idx: &MultiIndex, ball: &LatticeBall, alpha: u32) -> bool {
        idx.n_minus(ball) < self.schedule.n_of(alpha)
    }
}

/// Sampled coefficient norms.
#[derive(Clone, Debug, Serialize)]
pub struct Norms {
    pub ysup: f64,
    pub log_ysup: f64,
    pub ylip: Option<f64>,
    pub zsup: f64,
    pub zlip: Option<f64>,
    pub dominant: Option<String>,
    pub samples: usize,
}

/// Norms of a polynomial evaluated at several ξ samples (one polynomial per
/// sample); the sup over ξ is replaced by the max over samples.
pub fn norms(samples: &[&RecenteredPoly], ws: &WeightSystem, alpha: u32) -> Norms {
    let mut log_ysup = f64::NEG_INFINITY;
    let mut zsup: f64 = 0.0;
    let mut dominant = None;
    let all_grad = !samples.is_empty() && samples.iter().all(|p| p.has_grad());
    let mut ylip: f64 = 0.0;
    let mut zlip: f64 = 0.0;
    for p in samples {
        let ball = p.ball();
        for (idx, c) in p.terms() {
            let a = c.value.norm();
            zsup = zsup.max(a);
            if a > 0.0 {
                let lw = a.ln() - ws.log_weight(idx, ball, alpha, 0);
                if lw > log_ysup {
                    log_ysup = lw;
                    dominant = Some(idx.to_string());
                }
            }
            if let Some(g) = &c.grad {
                let gmax = g.iter().map(|x| x.norm()).fold(0.0, f64::max);
                zlip = zlip.max(gmax);
                if gmax > 0.0 {
                    ylip = ylip.max((gmax.ln() - ws.log_weight(idx, ball, alpha, 1)).exp());
                }
            }
        }
    }
    Norms {
        ysup: log_ysup.exp(),
        log_ysup,
        ylip: all_grad.then_some(ylip),
        zsup,
        zlip: all_grad.then_some(zlip),
        dominant,
        samples: samples.len(),
    }
}

/// Projection modes of [`project_scale`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    InsideLambda,
    OutsideLambda,
    DegreeEq(u32),
    DegreeLe(u32),
    DegreeRange(u32, u32),
}

pub fn project_scale(p: &RecenteredPoly, ws: &WeightSystem, alpha: u32, mode: Projection) -> RecenteredPoly {
    let ball = p.ball().clone();
    match mode {
        Projection::InsideLambda => p.filter(|i| ws.in_lambda(i, &ball, alpha)),
        Projection::OutsideLambda => p.filter(|i| !ws.in_lambda(i, &ball, alpha)),
        Projection::DegreeEq(q) => p.filter(|i| i.degree() == q),
        Projection::DegreeLe(q) => p.filter(|i| i.degree() <= q),
        Projection::DegreeRange(lo, hi) => p.filter(|i| (lo..=hi).contains(&i.degree())),
    }
}

/// h^s norm (Σ⟨n⟩^{2s}|u_n|²)^{1/2}.
pub fn hs_norm(ball: &LatticeBall, u: &[Complex64], s: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(i, z)| ball.japanese_of(i).powf(2.0 * s) * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Σ⟨n⟩^{2s} | |u_n|² − ξ_n |.
pub fn recentered_sum(ball: &LatticeBall, u: &[Complex64], xi: &[f64], s: f64) -> f64 {
    u.iter()
        .zip(xi)
        .enumerate()
        .map(|(i, (z, x))| ball.japanese_of(i).powf(2.0 * s) * (z.norm_sqr() - x).abs())
        .sum()
}

/// Is u in the annulus at scale α around ξ (radius 20ε)?
pub fn in_annulus(ws: &WeightSystem, alpha: u32, ball: &LatticeBall, u: &[Complex64], xi: &[f64]) -> bool {
    let sc = &ws.schedule;
    let threshold = sc.epsilon.powf(2.2) * (-2.0 * sc.s * sc.log_n_of(alpha)).exp();
    recentered_sum(ball, u, xi, sc.s) <= threshold && hs_norm(ball, u, sc.s) <= 20.0 * sc.epsilon
}

#[derive(Clone, Debug, Serialize)]
pub struct VectorFieldDiagnostic {
    pub max_ratio: Option<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

/// max ‖∇p(u)‖_{h^s} / (Ysup·N(α)^{−4s}·ε^{4−1/4}·‖u‖_{h^s}) over annulus samples.
pub fn vector_field_diagnostic(
    p: &RecenteredPoly,
    ws: &WeightSystem,
    alpha: u32,
    u_samples: &[Vec<Complex64>],
) -> Result<VectorFieldDiagnostic> {
    let ball = p.ball().clone();
    let sc = &ws.schedule;
    let ysup = norms(&[p], ws, alpha).ysup;
    let bound_scale = ysup * (-4.0 * sc.s * sc.log_n_of(alpha)).exp() * sc.epsilon.powf(3.75);
    let mut max_ratio: Option<f64> = None;
    let (mut accepted, mut rejected) = (0, 0);
    for u in u_samples {
        if !in_annulus(ws, alpha, &ball, u, p.xi()) {
            rejected += 1;
            continue;
        }
        accepted += 1;
        let g = p.gradient_eval(u)?;
        let num = hs_norm(&ball, &g, sc.s);
        let den = bound_scale * hs_norm(&ball, u, sc.s);
        let ratio = if num == 0.0 { 0.0 } else { num / den };
        max_ratio = Some(max_ratio.map_or(ratio, |m: f64| m.max(ratio)));
    }
    Ok(VectorFieldDiagnostic { max_ratio, accepted, rejected })
}
