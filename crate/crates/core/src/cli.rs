//! Command-line driver. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! configuration error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{NetError, SolveError};
use crate::eval::{estimation_error_report, EvalParams, EvalReport};
use crate::gradest::{EstimatorParams, Truncation};
use crate::netmodel::{
    build_scenario, compute_theory_constants, feasibility_check, suggested_params,
    raw_topology, RateVector, Scenario, ScenarioConfig, SuggestedParams, TheoryConstants,
};
use crate::optimize::{solve, Algorithm, IterationRecord, SolverParams};
use crate::rng::derive_seed;

pub const COMPARE_HEADER: [&str; 7] = [
    "algorithm",
    "utility",
    "utility_se",
    "norm_utility",
    "mean_error",
    "error_se",
    "runtime_s",
];
pub const SWEEP_HEADER: [&str; 7] = [
    "axis",
    "factor",
    "algorithm",
    "utility",
    "utility_se",
    "mean_error",
    "error_se",
];
pub const TRACE_HEADER: [&str; 5] = ["k", "tau", "utility", "grad_inf_norm", "lp_value"];

#[derive(Debug, Parser)]
#[command(name = "ednet", version, about = "Experimental design over networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a scenario from a config (or preset) and write it as JSON.
    Gen {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one solver and write a JSON run record.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "fw")]
        algorithm: AlgorithmArg,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration CSV (k, tau, utility, grad_inf_norm, lp_value).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Estimate the utility at every iterate for the trace.
        #[arg(long)]
        trace_utility: bool,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run all algorithms with shared evaluation seeds and write a CSV.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Rescale source rates or capacities and compare at every factor.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        factors: Vec<f64>,
        /// Comma-separated subset of algorithms (default: all).
        #[arg(long, value_enum, value_delimiter = ',')]
        algorithms: Vec<AlgorithmArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Print λ_MAX, G_MAX, the Lipschitz constant and suggested K, n′, N.
    Constants {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps0: f64,
        #[arg(long, default_value_t = 0.1)]
        eps1: f64,
        #[arg(long, default_value_t = 1.0)]
        eps2: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Abilene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Fw,
    Pga,
    Maxsum,
    Maxalpha,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Fw => Algorithm::Fw,
            AlgorithmArg::Pga => Algorithm::Pga,
            AlgorithmArg::Maxsum => Algorithm::MaxSum,
            AlgorithmArg::Maxalpha => Algorithm::MaxAlpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    SourceScale,
    CapacityDownsize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SourceScale => "source_scale",
            SweepAxis::CapacityDownsize => "capacity_downsize",
        }
    }

    pub fn apply(self, scenario: &Scenario, factor: f64) -> Scenario {
        match self {
            SweepAxis::SourceScale => scenario.scale_source_rates(factor),
            SweepAxis::CapacityDownsize => scenario.downsize_capacities(factor),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frank-Wolfe iteration count K (sets δ = 1/K).
    #[arg(long, conflicts_with = "delta")]
    pub iters: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Samples N per gradient estimate.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Truncation multiplier m in n′ = ⌈m·max λT⌉.
    #[arg(long, default_value_t = 2.0)]
    pub trunc_mult: f64,
    #[arg(long, default_value_t = 1000)]
    pub utility_samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub realizations: usize,
    /// Keep each type's true model fixed across realizations.
    #[arg(long)]
    pub fixed_beta: bool,
    #[arg(long, default_value_t = 100)]
    pub pga_iters: usize,
    #[arg(long, default_value_t = 0.05)]
    pub pga_step_scale: f64,
    #[arg(long, default_value_t = 50)]
    pub projection_iters: usize,
    #[arg(long, default_value_t = 5.0)]
    pub alpha: f64,
    /// Record wall-clock runtimes (makes outputs machine-dependent).
    #[arg(long)]
    pub record_timings: bool,
}

impl Default for RunFlags {
    fn default() -> Self {
        Self {
            seed: 0,
            iters: None,
            delta: None,
            samples: 100,
            trunc_mult: 2.0,
            utility_samples: 1000,
            realizations: 1000,
            fixed_beta: false,
            pga_iters: 100,
            pga_step_scale: 0.05,
            projection_iters: 50,
            alpha: 5.0,
            record_timings: false,
        }
    }
}

impl RunFlags {
    pub fn solver_params(&self) -> Result<SolverParams, CliError> {
        let delta = match (self.iters, self.delta) {
            (Some(0), _) => return Err(CliError::usage("--iters must be positive")),
            (Some(k), _) => 1.0 / k as f64,
            (None, Some(d)) => d,
            (None, None) => 0.01,
        };
        let p = SolverParams {
            delta,
            estimator: EstimatorParams {
                samples: self.samples,
                truncation: Truncation::Multiplier(self.trunc_mult),
                utility_samples: self.utility_samples,
            },
            seed: self.seed,
            pga_iterations: self.pga_iters,
            pga_step_scale: self.pga_step_scale,
            projection_iterations: self.projection_iters,
            alpha: self.alpha,
            ..SolverParams::default()
        };
        p.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(p)
    }

    pub fn eval_params(&self) -> Result<EvalParams, CliError> {
        if self.realizations == 0 {
            return Err(CliError::usage("--realizations must be positive"));
        }
        Ok(EvalParams {
            realizations: self.realizations,
            utility_samples: self.utility_samples,
            seed: derive_seed(self.seed, &[0xE7A1]),
            fixed_beta: self.fixed_beta,
        })
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Runtime(e.into())
    }
}

fn net_error(e: NetError) -> CliError {
    match e {
        NetError::Config { .. }
        | NetError::UnsupportedKind(_)
        | NetError::FileParse { .. }
        | NetError::InvalidScenario(_)
        | NetError::InvalidNetwork(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.into()),
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid scenario {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    write_text(path, &text)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).context("writing CSV")?;
    for r in rows {
        w.write_record(r).context("writing CSV")?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// One algorithm's outcome on a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub final_rates: RateVector,
    pub report: EvalReport,
    pub runtime_s: Option<f64>,
}

/// Solves and evaluates each algorithm with the same solver and evaluation seeds.
pub fn run_algorithms(
    scenario: &Scenario,
    algorithms: &[Algorithm],
    solver: &SolverParams,
    eval: &EvalParams,
    record_timings: bool,
) -> Result<Vec<AlgorithmResult>, CliError> {
    algorithms
        .iter()
        .map(|&a| {
            let start = Instant::now();
            let traj = solve(a, scenario, solver)
                .with_context(|| format!("running {}", a.name()))?;
            let runtime = start.elapsed().as_secs_f64();
            let report = estimation_error_report(&traj.final_rates, scenario, eval)
                .with_context(|| format!("evaluating {}", a.name()))?;
            Ok(AlgorithmResult {
                algorithm: a,
                final_rates: traj.final_rates,
                report,
                runtime_s: record_timings.then_some(runtime),
            })
        })
        .collect()
}

pub fn compare_rows(results: &[AlgorithmResult]) -> Vec<Vec<String>> {
    let u_fw = results
        .iter()
        .find(|r| r.algorithm == Algorithm::Fw)
        .map(|r| r.report.utility);
    results
        .iter()
        .map(|r| {
            let norm = match u_fw {
                Some(_) if r.algorithm == Algorithm::Fw => "1".to_string(),
                Some(u) if u != 0.0 => (r.report.utility / u).to_string(),
                _ => String::new(),
            };
            vec![
                r.algorithm.name().to_string(),
                r.report.utility.to_string(),
                r.report.utility_se.to_string(),
                norm,
                r.report.mean_error.to_string(),
                r.report.error_se.to_string(),
                r.runtime_s.map(|t| format!("{t:.3}")).unwrap_or_default(),
            ]
        })
        .collect()
}

/// Runs the `compare` verb and returns the CSV text.
pub fn compare_csv(scenario: &Scenario, run: &RunFlags) -> Result<String, CliError> {
    let results = run_algorithms(
        scenario,
        &Algorithm::ALL,
        &run.solver_params()?,
        &run.eval_params()?,
        run.record_timings,
    )?;
    csv_text(&COMPARE_HEADER, &compare_rows(&results))
}

pub fn sweep_results(
    scenario: &Scenario,
    axis: SweepAxis,
    factors: &[f64],
    algorithms: &[Algorithm],
    run: &RunFlags,
) -> Result<Vec<(f64, Vec<AlgorithmResult>)>, CliError> {
    if factors.is_empty() || factors.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(CliError::usage("factors must be a nonempty list of positive numbers"));
    }
    let solver = run.solver_params()?;
    let eval = run.eval_params()?;
    factors
        .iter()
        .map(|&f| {
            let sc = axis.apply(scenario, f);
            Ok((f, run_algorithms(&sc, algorithms, &solver, &eval, run.record_timings)?))
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub scenario_path: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub solver_params: SolverParams,
    pub iterations: Vec<IterationRecord>,
    pub final_rates: RateVector,
    pub report: EvalReport,
    pub feasibility_warnings: Vec<String>,
    pub timings_s: Option<RunTimings>,
}

#[derive(Debug, Serialize)]
pub struct RunTimings {
    pub solve: f64,
    pub evaluate: f64,
}

#[derive(Debug, Serialize)]
struct ConstantsReport {
    constants: TheoryConstants,
    eps: [f64; 3],
    suggested: SuggestedParams,
}

fn describe_scenario(s: &Scenario) -> String {
    format!(
        "nodes={} edges={} sources={} learners={} features={} dim={} types={}",
        s.network().num_nodes(),
        s.network().edges().len(),
        s.network().sources().len(),
        s.learners().len(),
        s.num_features(),
        s.pool().dim(),
        s.num_types()
    )
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen {
            config,
            preset,
            seed,
            out,
        } => {
            let mut cfg = match (config, preset) {
                (Some(p), _) => load_config(&p)?,
                (None, Some(Preset::Abilene)) => ScenarioConfig::abilene(0),
                (None, None) => return Err(CliError::usage("one of --config or --preset is required")),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let raw = raw_topology(&cfg).map_err(net_error)?;
            let scenario = build_scenario(&cfg).map_err(net_error)?;
            write_json(&out, &scenario)?;
            eprintln!(
                "{} raw_nodes={} raw_directed_edges={}",
                describe_scenario(&scenario),
                raw.num_nodes,
                raw.directed_edge_count()
            );
            Ok(())
        }
        Command::Solve {
            scenario: path,
            algorithm,
            out,
            trace,
            trace_utility,
            run,
        } => {
            let scenario = load_scenario(&path)?;
            let mut params = run.solver_params()?;
            params.trace_utility = trace_utility;
            let t0 = Instant::now();
            let traj = solve(algorithm.into(), &scenario, &params)?;
            let solve_s = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let report = estimation_error_report(&traj.final_rates, &scenario, &run.eval_params()?)
                .context("evaluating the final allocation")?;
            let eval_s = t1.elapsed().as_secs_f64();
            let warnings = feasibility_check(&traj.final_rates, &scenario, 1e-6)
                .context("checking feasibility")?
                .into_iter()
                .map(|v| format!("{:?} at {}: {:.3e}", v.kind, v.location, v.magnitude))
                .collect();
            if let Some(tp) = trace {
                let rows: Vec<Vec<String>> = traj
                    .records
                    .iter()
                    .map(|r| {
                        vec![
                            r.k.to_string(),
                            r.tau.to_string(),
                            r.utility.map(|u| u.to_string()).unwrap_or_default(),
                            r.grad_inf_norm.to_string(),
                            r.lp_value.to_string(),
                        ]
                    })
                    .collect();
                write_text(&tp, &csv_text(&TRACE_HEADER, &rows)?)?;
            }
            let record = RunRecord {
                format_version: 1,
                scenario_path: path.display().to_string(),
                seed: run.seed,
                algorithm: traj.algorithm,
                solver_params: params,
                iterations: traj.records,
                final_rates: traj.final_rates,
                report,
                feasibility_warnings: warnings,
                timings_s: run.record_timings.then_some(RunTimings {
                    solve: solve_s,
                    evaluate: eval_s,
                }),
            };
            write_json(&out, &record)
        }
        Command::Compare { scenario, out, run } => {
            let sc = load_scenario(&scenario)?;
            let text = compare_csv(&sc, &run)?;
            emit(out.as_deref(), &text)
        }
        Command::Sweep {
            scenario,
            axis,
            factors,
            algorithms,
            out,
            run,
        } => {
            let sc = load_scenario(&scenario)?;
            let algs: Vec<Algorithm> = if algorithms.is_empty() {
                Algorithm::ALL.to_vec()
            } else {
                algorithms.into_iter().map(Into::into).collect()
            };
            let results = sweep_results(&sc, axis, &factors, &algs, &run)?;
            let rows: Vec<Vec<String>> = results
                .iter()
                .flat_map(|(f, rs)| {
                    rs.iter().map(move |r| {
                        vec![
                            axis.name().to_string(),
                            f.to_string(),
                            r.algorithm.name().to_string(),
                            r.report.utility.to_string(),
                            r.report.utility_se.to_string(),
                            r.report.mean_error.to_string(),
                            r.report.error_se.to_string(),
                        ]
                    })
                })
                .collect();
            emit(out.as_deref(), &csv_text(&SWEEP_HEADER, &rows)?)
        }
        Command::Constants {
            scenario,
            eps0,
            eps1,
            eps2,
        } => {
            if !(eps0 > 0.0 && eps0 < 1.0 && eps1 > 0.0 && eps1 < 1.0 && eps2 > 0.0) {
                return Err(CliError::usage("need 0 < eps0, eps1 < 1 and eps2 > 0"));
            }
            let sc = load_scenario(&scenario)?;
            let constants = compute_theory_constants(&sc).context("solving for λ_MAX")?;
            let report = ConstantsReport {
                constants,
                eps: [eps0, eps1, eps2],
                suggested: suggested_params(&constants, eps0, eps1, eps2),
            };
            println!("{}", serde_json::to_string_pretty(&report).context("serializing")?);
            Ok(())
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_map_to_params() {
        let f = RunFlags {
            iters: Some(4),
            ..RunFlags::default()
        };
        let p = f.solver_params().unwrap();
        assert_eq!(p.iterations(), 4);
        assert_eq!(RunFlags::default().solver_params().unwrap().iterations(), 100);
        let bad = RunFlags {
            trunc_mult: 0.5,
            ..RunFlags::default()
        };
        assert!(matches!(bad.solver_params(), Err(CliError::Usage(_))));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["ednet", "solve", "--algorithm", "sgd"]), 2);
        assert_eq!(run(["ednet", "frobnicate"]), 2);
        assert_eq!(run(["ednet", "constants", "--scenario", "/nonexistent/x.json"]), 1);
    }
}
