use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use super::cohomological::solve_cohomological;
use super::cutoff::{cutoff_eval, Cutoff};
use super::family::KlFamily;
use super::flow::poly_flow;
use super::frequency::FrequencyVector;
use crate::error::{FlatError, Result};
use crate::lattice::{LatticeBall, TorusMetric};
use crate::polyalg::{center, norms, poisson_bracket, Coefficient, MultiIndex, ParamSchedule, RecenteredPoly, WeightSystem};
use crate::resonance::{HomogeneousPoly, DEFAULT_ENUMERATION_CAP};

/// Where a discarded piece of the Hamiltonian came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderKind {
    Preparation,
    Constant,
    LowDegreeNonIntegrable,
    HighDegree,
    ScaleResidue,
}

/// Norm bookkeeping of one discarded piece.
#[derive(Clone, Debug, Serialize)]
pub struct RemainderEntry {
    pub alpha: u32,
    pub step: u32,
    pub kind: RemainderKind,
    pub terms: usize,
    pub max_degree: u32,
    pub zsup: f64,
    pub ysup: f64,
}

/// Snapshot of the iteration at scale α, step j, for one fixed ξ.
#[derive(Clone, Debug)]
pub struct NormalFormState {
    pub alpha: u32,
    pub step: u32,
    pub omega: FrequencyVector,
    /// ω at the beginning of the current scale, for drift bookkeeping.
    pub omega_scale_start: Vec<f64>,
    pub z4: RecenteredPoly,
    pub q: RecenteredPoly,
    pub remainder_log: Vec<RemainderEntry>,
    pub schedule: ParamSchedule,
    pub xi: Arc<Vec<f64>>,
    pub family: Arc<KlFamily>,
}

/// Iteration knobs.
#[derive(Clone, Debug, Serialize)]
pub struct LieStepOptions {
    /// Order of the Lie series.
    pub kappa_steps: u32,
    /// Intermediate brackets keep degrees up to degree_cap + this margin.
    pub work_margin: u32,
    /// Blowup guard: abort when Ysup(Q) exceeds this multiple of ε^{−1/10⁴}.
    pub blowup_factor: f64,
}

impl Default for LieStepOptions {
    fn default() -> Self {
        LieStepOptions { kappa_steps: 6, work_margin: 4, blowup_factor: 10.0 }
    }
}

/// Result of one Lie step.
#[derive(Clone, Debug)]
pub struct LieStepOutcome {
    pub state: NormalFormState,
    pub chi: RecenteredPoly,
    /// Everything discarded by this step, as one polynomial.
    pub remainder: RecenteredPoly,
    pub cutoff: Cutoff,
    /// Sampled Ysup of Π_Λ Q before and after the step.
    pub lambda_ysup_before: f64,
    pub lambda_ysup_after: f64,
    /// Largest |Im| of a degree-2 action coefficient (sent to the remainder).
    pub frequency_imaginary: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdvanceReport {
    pub alpha: u32,
    pub residue_terms: usize,
    pub residue_ysup: f64,
    /// max_n |ω_n(end) − ω_n(start)| in modulated units.
    pub frequency_drift: f64,
    /// N(α)^{−4s} ε³.
    pub drift_budget: f64,
    pub within_budget: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub points: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

fn entry(state: &NormalFormState, kind: RemainderKind, p: &RecenteredPoly, alpha: u32, step: u32) -> RemainderEntry {
    let ws = WeightSystem::new(state.schedule.clone());
    let n = norms(&[p], &ws, alpha);
    RemainderEntry {
        alpha,
        step,
        kind,
        terms: p.len(),
        max_degree: p.max_degree(),
        zsup: n.zsup,
        ysup: if p.is_empty() { 0.0 } else { n.ysup },
    }
}

impl NormalFormState {
    /// Start of the iteration from H_lo = ½Σλ²|u|² − f′(0)/4 Σ|u|⁴ plus
    /// `extras`, re-centered at ξ. Returns the state and the discarded
    /// preparation remainder (constants and out-of-range degrees).
    #[allow(clippy::too_many_arguments)]
    pub fn prepare(
        metric: &TorusMetric,
        ball: Arc<LatticeBall>,
        xi: Vec<f64>,
        fprime0: f64,
        extras: &[HomogeneousPoly],
        schedule: ParamSchedule,
        with_grad: bool,
    ) -> Result<(Self, RecenteredPoly)> {
        if xi.len() != ball.len() {
            return Err(FlatError::Dimension { expected: ball.len(), got: xi.len() });
        }
        let n = ball.len();
        let lambda2 = ball.frequencies(metric)?;
        let xi = Arc::new(xi);
        let cap = schedule.degree_cap;
        let family = Arc::new(KlFamily::enumerate(&ball, cap, DEFAULT_ENUMERATION_CAP)?);

        let c4 = -fprime0 / 4.0;
        let mut omega: Vec<f64> = (0..n).map(|i| 0.5 * lambda2[i] + 2.0 * c4 * xi[i]).collect();
        let mut grad: Option<Vec<Vec<f64>>> = with_grad.then(|| {
            (0..n).map(|i| (0..n).map(|k| if i == k { 2.0 * c4 } else { 0.0 }).collect()).collect()
        });
        let mut z4 = RecenteredPoly::from_values(
            ball.clone(),
            xi.clone(),
            with_grad,
            (0..n).map(|i| (MultiIndex::from_exps([(i, 0, 0, 2)]).unwrap(), Complex64::new(c4, 0.0))),
        );
        // constant Σ(½λ²ξ + c4ξ²) left over by writing |u|² = y + ξ
        let mut rem = RecenteredPoly::zero(ball.clone(), xi.clone(), with_grad);
        let cval: f64 = (0..n).map(|i| 0.5 * lambda2[i] * xi[i] + c4 * xi[i] * xi[i]).sum();
        if cval != 0.0 {
            let c = if with_grad {
                Coefficient::with_grad(
                    Complex64::new(cval, 0.0),
                    (0..n).map(|i| Complex64::new(0.5 * lambda2[i] + 2.0 * c4 * xi[i], 0.0)).collect(),
                )
            } else {
                Coefficient::new(Complex64::new(cval, 0.0))
            };
            rem.add_term(MultiIndex::empty(), c);
        }
        let mut q = RecenteredPoly::zero(ball.clone(), xi.clone(), with_grad);
        if !extras.is_empty() {
            let refs: Vec<&HomogeneousPoly> = extras.iter().collect();
            let e = center(&refs, xi.clone(), with_grad)?;
            let e = if with_grad { e.with_gradients() } else { e };
            for (idx, c) in e.terms() {
                let d = idx.degree();
                if d == 2 && idx.is_integrable() && c.value.im == 0.0 {
                    let site = idx.as_action().expect("degree-2 integrable is an action");
                    omega[site] += c.value.re;
                    if let (Some(g), Some(cg)) = (grad.as_mut(), &c.grad) {
                        for (o, x) in g[site].iter_mut().zip(cg) {
                            *o += x.re;
                        }
                    }
                } else if d == 4 && idx.is_integrable() {
                    z4.add_term(idx.clone(), c.clone());
                } else if (6..=cap).contains(&d) {
                    q.add_term(idx.clone(), c.clone());
                } else {
                    rem.add_term(idx.clone(), c.clone());
                }
            }
        }
        let state = NormalFormState {
            alpha: 0,
            step: 0,
            omega_scale_start: omega.clone(),
            omega: FrequencyVector::new(omega, grad),
            z4,
            q,
            remainder_log: Vec::new(),
            schedule,
            xi,
            family,
        };
        let mut state = state;
        if !rem.is_empty() {
            let e = entry(&state, RemainderKind::Preparation, &rem, 0, 0);
            state.remainder_log.push(e);
        }
        Ok((state, rem))
    }

    pub fn ball(&self) -> &Arc<LatticeBall> {
        self.q.ball()
    }

    pub fn has_grad(&self) -> bool {
        self.q.has_grad()
    }

    pub fn weights(&self) -> WeightSystem {
        WeightSystem::new(self.schedule.clone())
    }

    /// Z₂(ω) + Z₄ + Q.
    pub fn total_hamiltonian(&self) -> Result<RecenteredPoly> {
        let z2 = RecenteredPoly::quadratic_actions(
            self.ball().clone(),
            self.xi.clone(),
            &self.omega.omega,
            self.omega.grad.as_deref(),
        );
        z2.add(&self.z4)?.add(&self.q)
    }

    /// Π_{Λ_{α+1}} Q.
    pub fn lambda_part(&self) -> RecenteredPoly {
        let ws = self.weights();
        let ball = self.ball().clone();
        self.q.filter(|i| ws.in_lambda(i, &ball, self.alpha + 1))
    }

    /// Sampled Ysup of Π_{Λ_{α+1}} Q (0 when empty).
    pub fn lambda_ysup(&self) -> f64 {
        let p = self.lambda_part();
        if p.is_empty() {
            0.0
        } else {
            norms(&[&p], &self.weights(), self.alpha).ysup
        }
    }

    pub fn cutoff(&self) -> Cutoff {
        cutoff_eval(&self.schedule, &self.omega, self.alpha, self.ball(), &self.family, self.schedule.degree_cap)
    }
}

/// (Id − hΠ)Q with the product rule on gradients.
fn remove_projected(q: &RecenteredPoly, in_lambda: impl Fn(&MultiIndex) -> bool, h: &Cutoff) -> RecenteredPoly {
    let mut out = RecenteredPoly::zero(q.ball().clone(), q.xi().clone(), q.has_grad() || h.grad.is_some());
    for (idx, c) in q.terms() {
        if !in_lambda(idx) {
            out.add_term(idx.clone(), c.clone());
            continue;
        }
        let f = 1.0 - h.h;
        let value = c.value * f;
        let grad = if out.has_grad() {
            let n = q.ball().len();
            let mut g: Vec<Complex64> = match &c.grad {
                Some(g) => g.iter().map(|x| x * f).collect(),
                None => vec![Complex64::new(0.0, 0.0); n],
            };
            if let Some(dh) = &h.grad {
                for (o, x) in g.iter_mut().zip(dh) {
                    *o -= c.value * x;
                }
            }
            Some(g)
        } else {
            None
        };
        let zero = value == Complex64::new(0.0, 0.0) && grad.as_ref().is_none_or(|g| g.iter().all(|x| x.norm() == 0.0));
        if !zero {
            out.add_term(idx.clone(), Coefficient { value, grad });
        }
    }
    out
}

/// One step of the iteration at scale α: χ = ℒ(Q), Lie series of the total
/// Hamiltonian to order κ, and reassembly of ω, Z₄, Q and the remainder.
pub fn lie_step(state: &NormalFormState, opts: &LieStepOptions) -> Result<LieStepOutcome> {
    let ws = state.weights();
    let ball = state.ball().clone();
    let alpha = state.alpha;
    let cap = state.schedule.degree_cap;
    let with_grad = state.has_grad();
    let cutoff = state.cutoff();
    let chi = solve_cohomological(&state.q, &state.omega, &ws, alpha, &cutoff)?;
    let chi = if with_grad { chi.with_gradients() } else { chi.without_gradients() };
    let lambda_ysup_before = state.lambda_ysup();

    if chi.is_empty() {
        let mut next = state.clone();
        next.step += 1;
        return Ok(LieStepOutcome {
            remainder: RecenteredPoly::zero(ball, state.xi.clone(), with_grad),
            state: next,
            chi,
            cutoff,
            lambda_ysup_before,
            lambda_ysup_after: lambda_ysup_before,
            frequency_imaginary: 0.0,
        });
    }

    let z2 = RecenteredPoly::quadratic_actions(ball.clone(), state.xi.clone(), &state.omega.omega, state.omega.grad.as_deref());
    let z2 = if with_grad { z2.with_gradients() } else { z2.without_gradients() };
    let z2chi = poisson_bracket(&z2, &chi)?;
    let z4chi = poisson_bracket(&state.z4, &chi)?;
    let qchi = poisson_bracket(&state.q, &chi)?;

    // S = Σ_{ℓ=1}^{κ} A_ℓ/ℓ!, A_1 = {H, χ}, A_ℓ = {A_{ℓ−1}, χ}
    let work_cap = cap + opts.work_margin;
    let mut a = z2chi.add(&z4chi)?.add(&qchi)?;
    let mut series = a.clone();
    let mut fact = 1.0;
    for l in 2..=opts.kappa_steps {
        let trimmed = a.filter(|i| i.degree() <= work_cap);
        if trimmed.is_empty() {
            break;
        }
        a = poisson_bracket(&trimmed, &chi)?;
        fact *= l as f64;
        series = series.add(&a.scale(Complex64::new(1.0 / fact, 0.0)))?;
    }
    let p = series.sub(&z2chi)?;

    let mut omega = state.omega.clone();
    let mut z4 = state.z4.clone();
    let mut rem = RecenteredPoly::zero(ball.clone(), state.xi.clone(), with_grad);
    let mut new_q = remove_projected(&state.q, |i| ws.in_lambda(i, &ball, alpha + 1), &cutoff);
    let mut frequency_imaginary: f64 = 0.0;
    let z4chi_int4 = z4chi.filter(|i| i.degree() == 4 && i.is_integrable());
    let mut kinds: Vec<(RemainderKind, RecenteredPoly)> = vec![
        (RemainderKind::Constant, RecenteredPoly::zero(ball.clone(), state.xi.clone(), with_grad)),
        (RemainderKind::LowDegreeNonIntegrable, RecenteredPoly::zero(ball.clone(), state.xi.clone(), with_grad)),
        (RemainderKind::HighDegree, RecenteredPoly::zero(ball.clone(), state.xi.clone(), with_grad)),
    ];
    for (idx, c) in p.terms() {
        let d = idx.degree();
        if d == 0 {
            kinds[0].1.add_term(idx.clone(), c.clone());
        } else if d == 2 && idx.is_integrable() {
            let site = idx.as_action().expect("degree-2 integrable is an action");
            omega.omega[site] += c.value.re;
            if let (Some(g), Some(cg)) = (omega.grad.as_mut(), &c.grad) {
                for (o, x) in g[site].iter_mut().zip(cg) {
                    *o += x.re;
                }
            }
            if c.value.im != 0.0 || c.grad.as_ref().is_some_and(|g| g.iter().any(|x| x.im != 0.0)) {
                frequency_imaginary = frequency_imaginary.max(c.value.im.abs());
                let imag = Coefficient {
                    value: Complex64::new(0.0, c.value.im),
                    grad: c.grad.as_ref().map(|g| g.iter().map(|x| Complex64::new(0.0, x.im)).collect()),
                };
                kinds[1].1.add_term(idx.clone(), imag);
            }
        } else if d == 4 && idx.is_integrable() {
            z4.add_term(idx.clone(), c.clone());
        } else if d <= 4 {
            kinds[1].1.add_term(idx.clone(), c.clone());
        } else if d <= cap {
            new_q.add_term(idx.clone(), c.clone());
        } else {
            kinds[2].1.add_term(idx.clone(), c.clone());
        }
    }
    // the quartic part of {Z₄, χ} is bookkept as remainder rather than normal form
    if !z4chi_int4.is_empty() {
        z4 = z4.sub(&z4chi_int4)?;
        kinds[1].1 = kinds[1].1.add(&z4chi_int4)?;
    }
    let new_q = new_q.add(&RecenteredPoly::zero(ball.clone(), state.xi.clone(), with_grad))?;

    let mut next = NormalFormState {
        alpha,
        step: state.step + 1,
        omega,
        omega_scale_start: state.omega_scale_start.clone(),
        z4: z4.add(&RecenteredPoly::zero(ball.clone(), state.xi.clone(), with_grad))?,
        q: new_q,
        remainder_log: state.remainder_log.clone(),
        schedule: state.schedule.clone(),
        xi: state.xi.clone(),
        family: state.family.clone(),
    };
    for (kind, part) in &kinds {
        if !part.is_empty() {
            let e = entry(&next, *kind, part, alpha, state.step);
            next.remainder_log.push(e);
            rem = rem.add(part)?;
        }
    }

    if !next.q.is_empty() {
        let nq = norms(&[&next.q], &ws, alpha);
        let limit = opts.blowup_factor * state.schedule.epsilon.powf(-1e-4);
        if nq.ysup > limit {
            return Err(FlatError::NormBlowup {
                ysup: nq.ysup,
                limit,
                index: nq.dominant.unwrap_or_default(),
            });
        }
    }
    let lambda_ysup_after = next.lambda_ysup();
    Ok(LieStepOutcome { state: next, chi, remainder: rem, cutoff, lambda_ysup_before, lambda_ysup_after, frequency_imaginary })
}

/// Close scale α: move Π_{Λ_{α+1}} Q to the remainder and record the
/// frequency drift over the scale.
pub fn scale_advance(state: &NormalFormState) -> (NormalFormState, AdvanceReport) {
    let residue = state.lambda_part();
    let ws = state.weights();
    let ball = state.ball().clone();
    let alpha = state.alpha;
    let mut next = state.clone();
    next.q = state.q.filter(|i| !ws.in_lambda(i, &ball, alpha + 1));
    let residue_ysup = if residue.is_empty() { 0.0 } else { norms(&[&residue], &ws, alpha).ysup };
    if !residue.is_empty() {
        let e = entry(state, RemainderKind::ScaleResidue, &residue, alpha, state.step);
        next.remainder_log.push(e);
    }
    let drift = state
        .omega
        .omega
        .iter()
        .zip(&state.omega_scale_start)
        .map(|(a, b)| 2.0 * (a - b).abs())
        .fold(0.0, f64::max);
    let sc = &state.schedule;
    let budget = (-4.0 * sc.s * sc.log_n_of(alpha)).exp() * sc.epsilon.powi(3);
    next.alpha = alpha + 1;
    next.step = 0;
    next.omega_scale_start = next.omega.omega.clone();
    (
        next,
        AdvanceReport {
            alpha,
            residue_terms: residue.len(),
            residue_ysup,
            frequency_drift: drift,
            drift_budget: budget,
            within_budget: drift <= budget,
        },
    )
}

/// Compare H_old(Φ¹_χ(u)) with H_new(u) + R(u) at the given points.
pub fn consistency_check(
    old: &NormalFormState,
    outcome: &LieStepOutcome,
    points: &[Vec<Complex64>],
    tol: f64,
) -> Result<ConsistencyReport> {
    let h_old = old.total_hamiltonian()?;
    let h_new = outcome.state.total_hamiltonian()?;
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for u in points {
        let (v, _) = poly_flow(&outcome.chi, u, 1.0, tol)?;
        let lhs = h_old.evaluate(&v)?;
        let rhs = h_new.evaluate(u)? + outcome.remainder.evaluate(u)?;
        let err = (lhs - rhs).norm();
        max_abs = max_abs.max(err);
        max_rel = max_rel.max(err / lhs.norm().max(f64::MIN_POSITIVE));
    }
    Ok(ConsistencyReport { points: points.len(), max_abs_error: max_abs, max_rel_error: max_rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sextic_seed(ball: &Arc<LatticeBall>) -> HomogeneousPoly {
        // u_1² u_{−2} ū_{−1}² ū_2 and its conjugate, in multi-vector form
        let s = |n: i64| ball.index_of(&[n]).unwrap();
        let mut p = HomogeneousPoly::new(3, ball.clone());
        p.insert(vec![s(1), s(-1), s(1), s(-1), s(-2), s(2)], Complex64::new(1.0, 0.0)).unwrap();
        p.insert(vec![s(-1), s(1), s(-1), s(1), s(2), s(-2)], Complex64::new(1.0, 0.0)).unwrap();
        p
    }

    fn desk_state(with_grad: bool, cap: u32) -> NormalFormState {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = vec![0.0005, 0.002, 0.004, 0.01, 0.001];
        let sc = ParamSchedule::new(0.05, 1.0, 1).unwrap().with_degree_cap(cap);
        let seed = sextic_seed(&ball);
        NormalFormState::prepare(&TorusMetric::square(1), ball, xi, -1.0, &[seed], sc, with_grad).unwrap().0
    }

    #[test]
    fn preparation_preserves_the_hamiltonian() {
        let ball = Arc::new(LatticeBall::new(1, 2.0).unwrap());
        let xi = vec![0.0005, 0.002, 0.004, 0.01, 0.001];
        let sc = ParamSchedule::new(0.05, 1.0, 1).unwrap();
        let seed = sextic_seed(&ball);
        let metric = TorusMetric::square(1);
        let (st, rem) = NormalFormState::prepare(&metric, ball.clone(), xi, -1.0, &[seed.clone()], sc, false).unwrap();
        let l2 = ball.frequencies(&metric).unwrap();
        let u: Vec<Complex64> = (0..5).map(|i| Complex64::from_polar(0.05 + 0.01 * i as f64, 1.3 * i as f64)).collect();
        let direct: f64 = (0..5).map(|i| 0.5 * l2[i] * u[i].norm_sqr() + 0.25 * u[i].norm_sqr().powi(2)).sum();
        let direct = Complex64::new(direct, 0.0) + seed.evaluate(&u);
        let via = st.total_hamiltonian().unwrap().evaluate(&u).unwrap() + rem.evaluate(&u).unwrap();
        assert!((direct - via).norm() < 1e-15, "{}", (direct - via).norm());
        // modulated frequency λ² + ξ for f′(0) = −1
        assert!((st.omega.modulated()[3] - (1.0 + 0.01)).abs() < 1e-15);
    }

    #[test]
    fn empty_projection_leaves_state() {
        let mut st = desk_state(false, 8);
        st.q = RecenteredPoly::zero(st.ball().clone(), st.xi.clone(), false);
        let out = lie_step(&st, &LieStepOptions::default()).unwrap();
        assert!(out.chi.is_empty());
        assert_eq!(out.state.omega, st.omega);
        assert_eq!(out.state.step, 1);
    }

    #[test]
    fn step_is_consistent_with_the_flow() {
        let st = desk_state(false, 8);
        assert_eq!(st.cutoff().h, 1.0);
        let out = lie_step(&st, &LieStepOptions::default()).unwrap();
        assert!(out.lambda_ysup_after < out.lambda_ysup_before);
        let pts: Vec<Vec<Complex64>> = (0..4)
            .map(|k| st.xi.iter().enumerate().map(|(i, x)| Complex64::from_polar(x.sqrt(), 0.9 * (i * k) as f64)).collect())
            .collect();
        let rep = consistency_check(&st, &out, &pts, 1e-13).unwrap();
        assert!(rep.max_abs_error < 1e-12, "{rep:?}");
    }

    #[test]
    fn advance_clears_lambda() {
        let st = desk_state(false, 8);
        let out = lie_step(&st, &LieStepOptions::default()).unwrap();
        let (next, rep) = scale_advance(&out.state);
        assert_eq!(next.alpha, 1);
        let ws = next.weights();
        let ball = next.ball().clone();
        assert!(next.q.terms().keys().all(|i| !ws.in_lambda(i, &ball, 1)));
        assert!(rep.frequency_drift >= 0.0);
    }
}
