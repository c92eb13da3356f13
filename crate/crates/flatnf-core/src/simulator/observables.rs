use num_complex::Complex64;
use serde::Serialize;

use crate::clusters::ClusterPartition;
use crate::error::{FlatError, Result};
use crate::lattice::LatticeBall;
use crate::polyalg::{hs_norm, recentered_sum, ParamSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ObservableRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub hs_norm: f64,
    /// Σ⟨n⟩^{2s} | |u_n(t)|² − |u_n(0)|² |.
    pub action_dev: f64,
    /// Σ_υ ⟨m_υ⟩^{2s} |S_υ(t) − S_υ(0)|.
    pub superaction_dev: f64,
    /// Σ⟨n⟩^{2s} | |u_n(t)|² − ξ_n |.
    pub recentered_sum: f64,
}

/// Column-oriented time series.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub hs_norm: Vec<f64>,
    pub action_dev: Vec<f64>,
    pub superaction_dev: Vec<f64>,
    pub recentered_sum: Vec<f64>,
}

impl ObservableSeries {
    pub fn push(&mut self, r: &ObservableRow) {
        self.times.push(r.t);
        self.mass.push(r.mass);
        self.energy.push(r.energy);
        self.hs_norm.push(r.hs_norm);
        self.action_dev.push(r.action_dev);
        self.superaction_dev.push(r.superaction_dev);
        self.recentered_sum.push(r.recentered_sum);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, i: usize) -> ObservableRow {
        ObservableRow {
            t: self.times[i],
            mass: self.mass[i],
            energy: self.energy[i],
            hs_norm: self.hs_norm[i],
            action_dev: self.action_dev[i],
            superaction_dev: self.superaction_dev[i],
            recentered_sum: self.recentered_sum[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = ObservableRow> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    /// max |x(t) − x(0)| / |x(0)| of a column.
    pub fn relative_drift(column: &[f64]) -> f64 {
        match column.first() {
            Some(&x0) => column.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max) / x0.abs().max(f64::MIN_POSITIVE),
            None => 0.0,
        }
    }
}

/// One row of observables. Without a partition, every site is its own
/// cluster and the super-action deviation equals the action deviation.
pub fn observables(
    ball: &LatticeBall,
    t: f64,
    u_t: &[Complex64],
    u_0: &[Complex64],
    xi: &[f64],
    partition: Option<&ClusterPartition>,
    s: f64,
    energy: f64,
) -> Result<ObservableRow> {
    let n = ball.len();
    for len in [u_t.len(), u_0.len(), xi.len()] {
        if len != n {
            return Err(FlatError::Dimension { expected: n, got: len });
        }
    }
    let w: Vec<f64> = (0..n).map(|i| ball.japanese_of(i).powf(2.0 * s)).collect();
    let action_dev = (0..n).map(|i| w[i] * (u_t[i].norm_sqr() - u_0[i].norm_sqr()).abs()).sum();
    let superaction_dev = match partition {
        Some(p) => {
            if p.ball().len() != n {
                return Err(FlatError::BallMismatch);
            }
            p.classes
                .iter()
                .zip(&p.m_of)
                .map(|(members, m)| {
                    let ds: f64 = members.iter().map(|&i| u_t[i].norm_sqr() - u_0[i].norm_sqr()).sum();
                    (1.0 + m * m).sqrt().powf(2.0 * s) * ds.abs()
                })
                .sum()
        }
        None => action_dev,
    };
    Ok(ObservableRow {
        t,
        mass: u_t.iter().map(|z| z.norm_sqr()).sum(),
        energy,
        hs_norm: hs_norm(ball, u_t, s),
        action_dev,
        superaction_dev,
        recentered_sum: recentered_sum(ball, u_t, xi, s),
    })
}

/// Membership of a re-centered action sum in the annulus of each scale
/// α = 0..=alpha_max: sum ≤ ε^{2+1/5} N(α)^{−2s}.
pub fn annulus_membership(recentered: f64, schedule: &ParamSchedule, alpha_max: u32) -> Vec<bool> {
    (0..=alpha_max)
        .map(|a| recentered <= schedule.epsilon.powf(2.2) * (-2.0 * schedule.s * schedule.log_n_of(a)).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusters::build_partition;
    use crate::lattice::TorusMetric;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn setup() -> (Arc<LatticeBall>, ClusterPartition) {
        let ball = Arc::new(LatticeBall::new(2, 4.0).unwrap());
        let p = build_partition(&TorusMetric::admissible_example(), ball.clone(), 0.25).unwrap();
        (ball, p)
    }

    #[test]
    fn identical_states_have_no_deviation() {
        let (ball, p) = setup();
        let u: Vec<Complex64> = (0..ball.len()).map(|i| Complex64::from_polar(0.01, i as f64)).collect();
        let r = observables(&ball, 0.0, &u, &u, &vec![0.0; ball.len()], Some(&p), 1.0, 0.0).unwrap();
        assert_eq!(r.action_dev, 0.0);
        assert_eq!(r.superaction_dev, 0.0);
        // phase-only evolution changes nothing
        let v: Vec<Complex64> = u.iter().enumerate().map(|(i, z)| z * Complex64::from_polar(1.0, 0.3 * i as f64)).collect();
        let r = observables(&ball, 1.0, &v, &u, &vec![0.0; ball.len()], Some(&p), 1.0, 0.0).unwrap();
        let scale = r.hs_norm * r.hs_norm;
        assert!(r.action_dev < 1e-14 * scale, "{}", r.action_dev);
        assert!(r.superaction_dev < 1e-14 * scale);
    }

    #[test]
    fn annulus_membership_shrinks_with_scale() {
        let sc = ParamSchedule::new(0.05, 1.0, 1).unwrap();
        let thr0 = 0.05f64.powf(2.2);
        let m = annulus_membership(thr0 * 0.99999, &sc, 3);
        assert!(m[0]);
        assert!(!m[3]);
    }

    proptest! {
        #[test]
        fn superaction_bounded_by_action(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let (ball, p) = setup();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || -> Vec<Complex64> {
                (0..ball.len()).map(|_| Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))).collect()
            };
            let a = draw();
            let b = draw();
            let r = observables(&ball, 0.0, &a, &b, &vec![0.0; ball.len()], Some(&p), 1.5, 0.0).unwrap();
            prop_assert!(r.superaction_dev <= r.action_dev * (1.0 + 1e-12));
            // global phase changes nothing
            let ph = Complex64::from_polar(1.0, 1.234);
            let a2: Vec<Complex64> = a.iter().map(|z| z * ph).collect();
            let r2 = observables(&ball, 0.0, &a2, &b, &vec![0.0; ball.len()], Some(&p), 1.5, 0.0).unwrap();
            prop_assert!((r2.action_dev - r.action_dev).abs() <= 1e-15 * r.action_dev.max(1e-300) * 10.0);
            prop_assert!((r2.hs_norm - r.hs_norm).abs() <= 1e-15 * r.hs_norm * 10.0);
        }
    }
}
