//! Subcommand implementations. Each returns a serialisable result and, for
//! time series, CSV rows written next to the JSON output.

use std::collections::BTreeMap;
use std::sync::Arc;

use flatnf_core::clusters::{build_partition, verify_partition, ClusterPartition, PartitionReport};
use flatnf_core::lattice::{admissibility_scan, LatticeBall, ScanReport, TorusMetric};
use flatnf_core::measure::{
    ball_volume, nonresonance_test, nonresonant_fraction, sample_ball, BallVolume, FamilySelect, FractionReport,
    NonResonanceResult, NonResonanceSpec,
};
use flatnf_core::normalform::{lie_step, scale_advance, AdvanceReport, LieStepOptions, NormalFormState, RemainderEntry};
use flatnf_core::resonance::{scan_resonances, HomogeneousPoly, ResonanceScan, DEFAULT_ENUMERATION_CAP};
use flatnf_core::selftest::{run_selftest, SelftestReport, SelftestSizes};
use flatnf_core::simulator::{
    build_hlo, build_nls, integrate, random_seed, rectangle_seed, stability_experiment, Hamiltonian, IntegrateOptions,
    ObservableSeries, Trajectory,
};
use flatnf_core::{Complex64, FlatError};
use serde::Serialize;

use crate::config::{field_error, ConfigError, InitialData, ModelSpec, RunConfig};

/// Failure classes of a command, mapped onto exit codes by the caller.
#[derive(Debug)]
pub enum CommandError {
    Config(ConfigError),
    Core(FlatError),
    Io(String),
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<FlatError> for CommandError {
    fn from(e: FlatError) -> Self {
        CommandError::Core(e)
    }
}

pub type CmdResult<T> = Result<T, CommandError>;

fn ball_for(metric: &TorusMetric, m: f64) -> CmdResult<Arc<LatticeBall>> {
    Ok(Arc::new(LatticeBall::new(metric.dim(), m).map_err(|e| field_error("M", e.to_string()))?))
}

/// Group configured extras into homogeneous polynomials by degree.
pub fn extras_for(cfg: &RunConfig, ball: &Arc<LatticeBall>) -> CmdResult<Vec<HomogeneousPoly>> {
    let mut by_q: BTreeMap<usize, HomogeneousPoly> = BTreeMap::new();
    for (i, t) in cfg.extras.iter().enumerate() {
        let field = format!("extras[{i}].vectors");
        let mut sites = Vec::with_capacity(t.vectors.len());
        for v in &t.vectors {
            let idx = ball
                .index_of(v)
                .ok_or_else(|| field_error(&field, format!("vector {v:?} lies outside the ball of radius {}", ball.radius())))?;
            sites.push(idx);
        }
        let q = sites.len() / 2;
        let p = by_q.entry(q).or_insert_with(|| HomogeneousPoly::new(q, ball.clone()));
        let prev = p.get(&sites);
        p.insert(sites, prev + Complex64::new(t.re, t.im)).map_err(|e| field_error(&field, e.to_string()))?;
    }
    Ok(by_q.into_values().collect())
}

pub fn admissibility(cfg: &RunConfig, m: f64) -> CmdResult<ScanReport> {
    let metric = cfg.metric()?;
    Ok(admissibility_scan(&metric, m).map_err(|e| field_error("M", e.to_string()))?)
}

pub fn resonances(cfg: &RunConfig, m: f64, q: usize, kappa: f64, keep: usize) -> CmdResult<ResonanceScan> {
    let metric = cfg.metric()?;
    let ball = ball_for(&metric, m)?;
    Ok(scan_resonances(&metric, &ball, q, kappa, keep, DEFAULT_ENUMERATION_CAP)?)
}

#[derive(Serialize)]
pub struct ClustersOutput {
    pub sites: Vec<Vec<i64>>,
    pub partition: ClusterPartition,
    pub report: PartitionReport,
}

pub fn clusters(cfg: &RunConfig, m: f64, delta: f64) -> CmdResult<ClustersOutput> {
    let metric = cfg.metric()?;
    let ball = ball_for(&metric, m)?;
    let partition = build_partition(&metric, ball.clone(), delta).map_err(|e| field_error("delta", e.to_string()))?;
    let report = verify_partition(&partition, &metric)?;
    Ok(ClustersOutput { sites: ball.sites().to_vec(), partition, report })
}

#[derive(Serialize)]
pub struct StepRecord {
    pub alpha: u32,
    pub step: u32,
    pub cutoff: f64,
    pub chi_terms: usize,
    pub lambda_ysup_before: f64,
    pub lambda_ysup_after: f64,
    pub q_terms: usize,
    pub remainder_terms: usize,
    pub frequency_imaginary: f64,
    /// max_n |ω_n − ω_n(start of scale)| in modulated units.
    pub frequency_drift: f64,
}

#[derive(Serialize)]
pub struct NormalFormOutput {
    pub xi: Vec<f64>,
    pub xi_source: &'static str,
    pub initial_nonresonance: NonResonanceResult,
    pub family_size: usize,
    pub steps: Vec<StepRecord>,
    pub advances: Vec<AdvanceReport>,
    pub final_modulated_frequencies: Vec<f64>,
    pub remainder_log: Vec<RemainderEntry>,
    pub note: &'static str,
}

pub fn normal_form(cfg: &RunConfig, alpha_max: u32, steps: u32, gradients: bool) -> CmdResult<NormalFormOutput> {
    let metric = cfg.metric()?;
    let ball = ball_for(&metric, cfg.m)?;
    let (xi, xi_source) = match &cfg.xi {
        Some(xi) => {
            if xi.len() != ball.len() {
                return Err(field_error("xi", format!("need {} entries (one per site), got {}", ball.len(), xi.len())).into());
            }
            (xi.clone(), "config")
        }
        None => {
            let u = sample_ball(&ball, cfg.s, cfg.epsilon, 1, cfg.seed)?;
            (u[0].iter().map(|z| z.norm_sqr()).collect(), "sampled from the h^s ball with the run seed")
        }
    };
    let extras = extras_for(cfg, &ball)?;
    let schedule = cfg.schedule()?;
    let (mut state, _) = NormalFormState::prepare(&metric, ball, xi.clone(), cfg.fprime0, &extras, schedule, gradients)?;
    let spec = NonResonanceSpec {
        gamma: cfg.gamma()?,
        epsilon: cfg.epsilon,
        s: cfg.s,
        degree_cap: cfg.degree_cap,
        family: FamilySelect::All,
    };
    let initial_nonresonance = nonresonance_test(&state.omega, &state.family, &spec);
    let opts = LieStepOptions { kappa_steps: cfg.kappa_steps, work_margin: cfg.work_margin, ..Default::default() };
    let mut records = Vec::new();
    let mut advances = Vec::new();
    for _ in 0..=alpha_max {
        for _ in 0..steps {
            let out = lie_step(&state, &opts)?;
            let drift = out
                .state
                .omega
                .omega
                .iter()
                .zip(&out.state.omega_scale_start)
                .map(|(a, b)| 2.0 * (a - b).abs())
                .fold(0.0, f64::max);
            records.push(StepRecord {
                alpha: state.alpha,
                step: out.state.step,
                cutoff: out.cutoff.h,
                chi_terms: out.chi.len(),
                lambda_ysup_before: out.lambda_ysup_before,
                lambda_ysup_after: out.lambda_ysup_after,
                q_terms: out.state.q.len(),
                remainder_terms: out.remainder.len(),
                frequency_imaginary: out.frequency_imaginary,
                frequency_drift: drift,
            });
            state = out.state;
        }
        let (next, rep) = scale_advance(&state);
        advances.push(rep);
        state = next;
    }
    Ok(NormalFormOutput {
        xi,
        xi_source,
        initial_nonresonance,
        family_size: state.family.len(),
        steps: records,
        advances,
        final_modulated_frequencies: state.omega.modulated(),
        remainder_log: state.remainder_log.clone(),
        note: "norms are sampled over the listed xi only, not suprema over the parameter set",
    })
}

#[derive(Serialize)]
pub struct MeasureOutput {
    pub fraction: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub measure_bound: f64,
    pub seed: u64,
    pub report: FractionReport,
    pub ball_volume: BallVolume,
}

pub fn measure(cfg: &RunConfig, samples: usize, gamma: f64) -> CmdResult<MeasureOutput> {
    if samples == 0 {
        return Err(field_error("--samples", "must be >= 1").into());
    }
    let metric = cfg.metric()?;
    let ball = ball_for(&metric, cfg.m)?;
    let spec = NonResonanceSpec {
        gamma,
        epsilon: cfg.epsilon,
        s: cfg.s,
        degree_cap: cfg.degree_cap,
        family: FamilySelect::All,
    };
    let report = nonresonant_fraction(&metric, &ball, &spec, samples, cfg.seed)?;
    Ok(MeasureOutput {
        fraction: report.fraction,
        wilson_lo: report.wilson_lo,
        wilson_hi: report.wilson_hi,
        measure_bound: report.measure_bound,
        seed: cfg.seed,
        ball_volume: ball_volume(&ball, cfg.s, cfg.epsilon)?,
        report,
    })
}

fn initial_state(cfg: &RunConfig, ball: &LatticeBall) -> CmdResult<Vec<Complex64>> {
    Ok(match &cfg.simulation.initial {
        InitialData::Random => random_seed(ball, cfg.s, cfg.epsilon, cfg.seed)?,
        InitialData::Sites { sites, phases } => rectangle_seed(ball, sites, phases, cfg.s, cfg.epsilon)
            .map_err(|e| field_error("simulation.initial", e.to_string()))?,
    })
}

fn hamiltonian(cfg: &RunConfig, metric: &TorusMetric, ball: &Arc<LatticeBall>) -> CmdResult<Hamiltonian> {
    Ok(match cfg.simulation.model {
        ModelSpec::Nls => {
            if !cfg.extras.is_empty() {
                return Err(field_error("extras", "extra terms apply to the \"hlo\" model only").into());
            }
            build_nls(metric, ball.clone(), cfg.fprime0)?
        }
        ModelSpec::Hlo => {
            let extras = extras_for(cfg, ball)?;
            build_hlo(metric, ball.clone(), cfg.fprime0, &extras, cfg.kappa.unwrap_or(f64::INFINITY))
                .map_err(|e| field_error("extras", e.to_string()))?
        }
    })
}

#[derive(Serialize)]
pub struct SimulateSummary {
    pub sites: usize,
    pub steps: usize,
    pub dt: f64,
    pub max_iterations: usize,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub final_action_dev: f64,
    pub final_hs_norm: f64,
    pub note: &'static str,
}

pub struct SimulateOutput {
    pub summary: SimulateSummary,
    pub series: ObservableSeries,
}

fn summarize(tr: &Trajectory, sites: usize) -> SimulateSummary {
    let s = &tr.series;
    SimulateSummary {
        sites,
        steps: tr.steps,
        dt: tr.dt,
        max_iterations: tr.max_iterations,
        mass_drift: ObservableSeries::relative_drift(&s.mass),
        energy_drift: ObservableSeries::relative_drift(&s.energy),
        final_action_dev: s.action_dev.last().copied().unwrap_or(0.0),
        final_hs_norm: s.hs_norm.last().copied().unwrap_or(0.0),
        note: "desk-scale horizon; long-time scales of the stability theory are out of reach",
    }
}

pub fn simulate(cfg: &RunConfig) -> CmdResult<SimulateOutput> {
    let metric = cfg.metric()?;
    let ball = ball_for(&metric, cfg.m)?;
    let h = hamiltonian(cfg, &metric, &ball)?;
    let u0 = initial_state(cfg, &ball)?;
    let sim = &cfg.simulation;
    let opts = IntegrateOptions { scheme: sim.scheme, stride: sim.stride, s: cfg.s, ..Default::default() };
    let tr = integrate(&h, &u0, sim.t_end, sim.dt, &opts)?;
    Ok(SimulateOutput { summary: summarize(&tr, ball.len()), series: tr.series })
}

#[derive(Serialize)]
pub struct CompareSummary {
    pub square_final_action_dev: f64,
    pub config_final_action_dev: f64,
    pub ratio_final: f64,
    pub ratio_max: f64,
}

pub struct CompareOutput {
    pub summary: CompareSummary,
    pub square: ObservableSeries,
    pub config: ObservableSeries,
}

/// Same data under the square torus and the configured metric, full NLS.
pub fn compare(cfg: &RunConfig) -> CmdResult<CompareOutput> {
    let metric = cfg.metric()?;
    let ball = ball_for(&metric, cfg.m)?;
    let u0 = initial_state(cfg, &ball)?;
    let sim = &cfg.simulation;
    let square = TorusMetric::square(metric.dim());
    let r = stability_experiment(&square, &metric, ball, &u0, cfg.fprime0, sim.t_end, sim.dt, cfg.s, sim.stride)?;
    let last = |s: &ObservableSeries| s.action_dev.last().copied().unwrap_or(0.0);
    Ok(CompareOutput {
        summary: CompareSummary {
            square_final_action_dev: last(&r.series_a),
            config_final_action_dev: last(&r.series_b),
            ratio_final: r.ratio_final,
            ratio_max: r.ratio_max,
        },
        square: r.series_a,
        config: r.series_b,
    })
}

pub fn selftest(quick: bool, seed: u64) -> CmdResult<SelftestReport> {
    let sizes = if quick { SelftestSizes::quick() } else { SelftestSizes::full() };
    Ok(run_selftest(sizes, seed)?)
}
