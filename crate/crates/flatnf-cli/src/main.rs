use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;

use commands::{CommandError, CmdResult};
use config::{field_error, RunConfig, SCHEMA};
use flatnf_core::simulator::ObservableSeries;

#[derive(Parser)]
#[command(name = "flatnf", version, about = "Normal-form and stability toolkit for NLS on flat tori")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON, "schema": 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files; JSON goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "FLATNF_THREADS")]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-range admissibility scan of the metric.
    Admissibility {
        #[arg(long = "M")]
        m: Option<f64>,
    },
    /// Resonant multi-vectors of half-degree q.
    Resonances {
        #[arg(long = "M")]
        m: Option<f64>,
        #[arg(long, default_value_t = 2)]
        q: usize,
        #[arg(long)]
        kappa: Option<f64>,
        /// Number of resonant multi-vectors listed in the output.
        #[arg(long, default_value_t = 100)]
        keep: usize,
    },
    /// Frequency cluster partition and its verification.
    Clusters {
        #[arg(long = "M")]
        m: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Desk-scale normal-form iteration.
    NormalForm {
        #[arg(long, default_value_t = 0)]
        alpha_max: u32,
        #[arg(long, default_value_t = 3)]
        steps: u32,
        /// Propagate ξ-gradients.
        #[arg(long)]
        gradients: bool,
    },
    /// Integrate the truncated Hamiltonian and record observables.
    Simulate {
        /// Also run the square torus on the same data and compare.
        #[arg(long)]
        compare_square: bool,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Monte Carlo fraction of non-resonant data.
    Measure {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// "auto" (ε^{1/30}) or a number.
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Randomised oracle-equivalence suites.
    Selftest {
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Admissibility { .. } => "admissibility",
            Command::Resonances { .. } => "resonances",
            Command::Clusters { .. } => "clusters",
            Command::NormalForm { .. } => "normal-form",
            Command::Simulate { .. } => "simulate",
            Command::Measure { .. } => "measure",
            Command::Selftest { .. } => "selftest",
        }
    }
}

/// Every JSON output: the effective config, the seed and the result.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    flags: serde_json::Value,
    result: T,
}

fn load_config(global: &Global, needed: bool) -> CmdResult<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None if needed => return Err(field_error("--config", "this subcommand needs a configuration file").into()),
        None => RunConfig::from_json(r#"{"schema": 1, "metric": "admissible"}"#)?,
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_csv(path: &Path, series: &ObservableSeries) -> CmdResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CommandError::Io(format!("{}: {e}", path.display())))?;
    for row in series.rows() {
        w.serialize(row).map_err(|e| CommandError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CommandError::Io(e.to_string()))
}

fn emit<T: Serialize>(global: &Global, name: &str, cfg: &RunConfig, flags: serde_json::Value, result: T) -> CmdResult<()> {
    let env = Envelope { schema: SCHEMA, command: name, seed: cfg.seed, config: cfg, flags, result };
    let text = serde_json::to_string_pretty(&env).map_err(|e| CommandError::Io(e.to_string()))? + "\n";
    match &global.out {
        Some(dir) => {
            let path = dir.join(format!("{name}.json"));
            std::fs::write(&path, text).map_err(|e| CommandError::Io(format!("{}: {e}", path.display())))?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_gamma(cfg: &RunConfig, text: Option<&str>) -> CmdResult<f64> {
    match text {
        None => Ok(cfg.gamma()?),
        Some("auto") => Ok(cfg.epsilon.powf(1.0 / 30.0)),
        Some(t) => match t.parse::<f64>() {
            Ok(g) if g > 0.0 && g.is_finite() => Ok(g),
            _ => Err(field_error("--gamma", format!("expected a positive number or \"auto\", got {t:?}")).into()),
        },
    }
}

fn run(cli: Cli) -> CmdResult<bool> {
    let g = &cli.global;
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir).map_err(|e| CommandError::Io(format!("{}: {e}", dir.display())))?;
    }
    let name = cli.command.name();
    match &cli.command {
        Command::Admissibility { m } => {
            let cfg = load_config(g, true)?;
            let m = m.unwrap_or(cfg.m);
            let r = commands::admissibility(&cfg, m)?;
            emit(g, name, &cfg, serde_json::json!({ "M": m }), r)?;
        }
        Command::Resonances { m, q, kappa, keep } => {
            let cfg = load_config(g, true)?;
            let m = m.unwrap_or(cfg.m);
            let kappa = kappa.or(cfg.kappa).ok_or_else(|| field_error("kappa", "give --kappa or set kappa in the config"))?;
            let r = commands::resonances(&cfg, m, *q, kappa, *keep)?;
            emit(g, name, &cfg, serde_json::json!({ "M": m, "q": q, "kappa": kappa, "keep": keep }), r)?;
        }
        Command::Clusters { m, delta } => {
            let cfg = load_config(g, true)?;
            let m = m.unwrap_or(cfg.m);
            let delta = delta.unwrap_or(cfg.delta);
            let r = commands::clusters(&cfg, m, delta)?;
            emit(g, name, &cfg, serde_json::json!({ "M": m, "delta": delta }), r)?;
        }
        Command::NormalForm { alpha_max, steps, gradients } => {
            let cfg = load_config(g, true)?;
            let r = commands::normal_form(&cfg, *alpha_max, *steps, *gradients)?;
            let flags = serde_json::json!({ "alpha_max": alpha_max, "steps": steps, "gradients": gradients });
            emit(g, name, &cfg, flags, r)?;
        }
        Command::Simulate { compare_square, t_end, dt } => {
            let mut cfg = load_config(g, true)?;
            if let Some(t) = t_end {
                cfg.simulation.t_end = *t;
            }
            if let Some(dt) = dt {
                cfg.simulation.dt = *dt;
            }
            cfg.validate()?;
            let flags = serde_json::json!({ "compare_square": compare_square });
            if *compare_square {
                let r = commands::compare(&cfg)?;
                if let Some(dir) = &g.out {
                    write_csv(&dir.join("simulate_square.csv"), &r.square)?;
                    write_csv(&dir.join("simulate_config.csv"), &r.config)?;
                    emit(g, name, &cfg, flags, r.summary)?;
                } else {
                    let body = serde_json::json!({ "summary": r.summary, "square": r.square, "config": r.config });
                    emit(g, name, &cfg, flags, body)?;
                }
            } else {
                let r = commands::simulate(&cfg)?;
                if let Some(dir) = &g.out {
                    write_csv(&dir.join("simulate.csv"), &r.series)?;
                    emit(g, name, &cfg, flags, r.summary)?;
                } else {
                    emit(g, name, &cfg, flags, serde_json::json!({ "summary": r.summary, "series": r.series }))?;
                }
            }
        }
        Command::Measure { samples, gamma } => {
            let cfg = load_config(g, true)?;
            let gamma = parse_gamma(&cfg, gamma.as_deref())?;
            let r = commands::measure(&cfg, *samples, gamma)?;
            emit(g, name, &cfg, serde_json::json!({ "samples": samples, "gamma": gamma }), r)?;
        }
        Command::Selftest { quick } => {
            let cfg = load_config(g, false)?;
            let r = commands::selftest(*quick, cfg.seed)?;
            let passed = r.passed;
            for s in &r.suites {
                eprintln!(
                    "[{}] {}: {} cases, worst {:.2e} (tol {:.0e}); {}",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.name,
                    s.cases,
                    s.worst,
                    s.tolerance,
                    s.detail
                );
            }
            emit(g, name, &cfg, serde_json::json!({ "quick": quick }), r)?;
            return Ok(passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CommandError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(CommandError::Core(e)) if e.is_numeric_guard() || matches!(e, flatnf_core::FlatError::AmbiguousThreshold { .. }) => {
            eprintln!("numeric guard: {e}");
            ExitCode::from(3)
        }
        Err(CommandError::Core(e)) => {
            eprintln!("invalid input: {e}");
            ExitCode::from(2)
        }
        Err(CommandError::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(1)
        }
    }
}
