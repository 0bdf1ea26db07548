//! `medianforge` command-line front end.
//!
//! Exit codes: 0 success, 1 infeasibility certificate or failed
//! verification, 2 invalid input, 3 internal invariant violation.

mod canonical;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use medianforge::greedy::{derandomize_fl, greedy_kmedians, DerandMode};
use medianforge::lagrangian::{solve_frac_fl, solve_frac_kmedians};
use medianforge::model::{eval_fractional, CostReport, FractionalSolution, Instance, IntegralSolution};
use medianforge::oracle::verify::{verify, Suite, VerifyConfig};
use medianforge::oracle::{
    exact_fl_with_guard, exact_kmedians, exact_kmedians_with_guard, gen_instance, GeneratorConfig,
    MAX_EXACT_FACILITIES,
};
use medianforge::probability::{estimate_chernoff_tail, run_wald_experiment, solve_chernoff_wald_epsilon};
use medianforge::rounding::{
    fl_rounding_bound, round_fl, round_frac_fl, round_frac_kmedians, round_kmedians, RoundingTrace,
};
use medianforge::seed::derive_seed;
use medianforge::{Error, Result};

use canonical::{render, render_lines, to_value};

#[derive(Debug, Parser)]
#[command(
    name = "medianforge",
    version,
    about = "Approximation algorithms for facility location and k-medians",
    after_help = "Set MEDIANFORGE_THREADS to cap parallelism (0 or 1 runs serially)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one algorithm on an instance.
    Solve(SolveArgs),
    /// Exact brute-force optimum (facility location, or k-medians with --budget).
    Oracle(OracleArgs),
    /// Generate a random instance from a JSON config.
    Gen(GenArgs),
    /// Check every selected algorithm against its bound on a corpus.
    Verify(VerifyArgs),
    /// Monte Carlo experiments.
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    RoundFl,
    RoundKmedians,
    GreedyKmedians,
    DerandFl,
    RoundFracKmedians,
    FracKmedians,
    RoundFracFl,
    FracFl,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::RoundFl => "round-fl",
            Algo::RoundKmedians => "round-kmedians",
            Algo::GreedyKmedians => "greedy-kmedians",
            Algo::DerandFl => "derand-fl",
            Algo::RoundFracKmedians => "round-frac-kmedians",
            Algo::FracKmedians => "frac-kmedians",
            Algo::RoundFracFl => "round-frac-fl",
            Algo::FracFl => "frac-fl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Estimator,
    BestOfSeeds,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Instance JSON.
    #[arg(long)]
    input: PathBuf,
    /// Accuracy parameter in (0, 1) (greedy-kmedians accepts any positive value).
    #[arg(long)]
    eps: Option<f64>,
    /// Facility-cost budget k (an integer for frac-kmedians).
    #[arg(long)]
    budget: Option<f64>,
    /// Target assignment cost d.
    #[arg(long)]
    dist_bound: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Derandomization mode for derand-fl.
    #[arg(long, value_enum, default_value = "estimator")]
    mode: Mode,
    /// Seed count for best-of-seeds.
    #[arg(long, default_value_t = DerandMode::DEFAULT_SEEDS)]
    seeds: u32,
    /// Fractional solution to round; defaults to the exact optimum (the
    /// k-medians optimum within --budget for the k-medians schemes).
    #[arg(long)]
    fractional: Option<PathBuf>,
    /// Write per-iteration JSON lines here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Facility-cost budget; switches to exact k-medians.
    #[arg(long)]
    budget: Option<f64>,
    /// Enumeration guard on the facility count.
    #[arg(long, default_value_t = MAX_EXACT_FACILITIES)]
    max_facilities: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Generator config JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Directory of instance JSON files.
    #[arg(long)]
    corpus: PathBuf,
    /// Suite name, or `all`.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5])]
    eps: Vec<f64>,
    /// Monte Carlo runs per randomized check.
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed count for best-of-seeds derandomization.
    #[arg(long, default_value_t = DerandMode::DEFAULT_SEEDS)]
    seeds: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Experiment {
    /// Dice-and-coins stopping-time experiment.
    Wald {
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 50)]
        people: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Empirical upper tail of a Bernoulli sum.
    Chernoff {
        #[arg(long)]
        k: u64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Smallest ε with (1+ε)·bound covering the maximum of m stopped sums.
    Epsilon {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        bound: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_internal() {
        3
    } else if e.is_infeasibility() {
        1
    } else {
        2
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Solve(args) => solve(&args).map(|_| 0),
        Command::Oracle(args) => oracle(&args).map(|_| 0),
        Command::Gen(args) => {
            let config: GeneratorConfig = serde_json::from_slice(&read(&args.config)?)?;
            let instance = gen_instance(&config)?;
            let value: Value = serde_json::from_str(&instance.to_json())?;
            emit(args.out.as_deref(), &render(value))?;
            Ok(0)
        }
        Command::Verify(args) => run_verify(&args),
        Command::Experiment(exp) => experiment(exp).map(|_| 0),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::from_json(&read(path)?)
}

fn require(value: Option<f64>, flag: &str, algo: Algo) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required for {}", algo.name())))
}

fn unit_eps(eps: f64) -> Result<f64> {
    if eps > 0.0 && eps < 1.0 {
        Ok(eps)
    } else {
        Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")))
    }
}

fn integral_json(instance: &Instance, sol: &IntegralSolution, report: &CostReport) -> Value {
    json!({
        "solution": sol.to_json_value(instance),
        "report": to_value(report),
    })
}

fn fractional_json(instance: &Instance, x: &FractionalSolution) -> Result<Value> {
    Ok(json!({
        "solution": x.to_json_value(instance),
        "report": to_value(&eval_fractional(instance, x)?),
    }))
}

fn solve(args: &SolveArgs) -> Result<()> {
    let instance = load_instance(&args.input)?;
    let algo = args.algo;
    let seed = derive_seed(args.seed, algo.name(), 0);
    let supplied = match &args.fractional {
        Some(path) => Some(FractionalSolution::from_json(&instance, &read(path)?)?),
        None => None,
    };
    // reference fractional solution: supplied, or an exact integral optimum
    let reference = |kmedians: bool| -> Result<FractionalSolution> {
        if let Some(x) = &supplied {
            return Ok(x.clone());
        }
        let (sol, _) = if kmedians {
            exact_kmedians(&instance, require(args.budget, "budget", algo)?)?
        } else {
            exact_fl_with_guard(&instance, MAX_EXACT_FACILITIES)?
        };
        Ok(FractionalSolution::from_integral(&instance, &sol))
    };

    let (mut body, trace): (Value, RoundingTrace) = match algo {
        Algo::RoundFl => {
            let x = reference(false)?;
            let (sol, trace) = round_fl(&instance, &x, seed)?;
            let (sol, report) = medianforge::model::eval_integral(&instance, &sol.chosen)?;
            let mut v = integral_json(&instance, &sol, &report);
            v["bound"] = json!(fl_rounding_bound(&instance, &x)?);
            (v, trace)
        }
        Algo::DerandFl => {
            let x = reference(false)?;
            let mode = match args.mode {
                Mode::Estimator => DerandMode::Estimator,
                Mode::BestOfSeeds => DerandMode::BestOfSeeds { seeds: args.seeds },
            };
            let out = derandomize_fl(&instance, &x, mode)?;
            let mut v = integral_json(&instance, &out.solution, &out.report);
            v["bound"] = json!(out.bound);
            v["mode"] = to_value(&out.mode_used);
            v["diagnostics"] = json!(out.diagnostics);
            (v, out.trace)
        }
        Algo::RoundKmedians => {
            let eps = require(args.eps, "eps", algo)?;
            let k = require(args.budget, "budget", algo)?;
            let d = require(args.dist_bound, "dist-bound", algo)?;
            let x = reference(true)?;
            let out = round_kmedians(&instance, &x, k, d, eps, seed)?;
            let chosen: Vec<&str> = out.chosen.iter().map(|&f| instance.facility_id(f)).collect();
            let mut v = match &out.solution {
                Some((sol, report)) => integral_json(&instance, sol, report),
                None => json!({ "solution": Value::Null, "report": Value::Null }),
            };
            v["success"] = json!(out.success);
            v["chosen"] = json!(chosen);
            v["facility_cost"] = json!(out.chosen.iter().map(|&f| instance.cost(f)).sum::<f64>());
            (v, out.trace)
        }
        Algo::GreedyKmedians => {
            let eps = require(args.eps, "eps", algo)?;
            let d = require(args.dist_bound, "dist-bound", algo)?;
            let out = greedy_kmedians(&instance, d, eps)?;
            let mut v = integral_json(&instance, &out.solution, &out.report);
            let order: Vec<&str> = out.order.iter().map(|&f| instance.facility_id(f)).collect();
            v["order"] = json!(order);
            (v, out.trace)
        }
        Algo::RoundFracKmedians => {
            let eps = unit_eps(require(args.eps, "eps", algo)?)?;
            let x = reference(true)?;
            let out = round_frac_kmedians(&instance, &x, eps, seed)?;
            let mut v = fractional_json(&instance, &out.solution)?;
            v["iterations"] = json!(out.trace.len());
            v["min_coverage"] = json!(out.counters.min_coverage());
            (v, out.trace)
        }
        Algo::FracKmedians => {
            let eps = unit_eps(require(args.eps, "eps", algo)?)?;
            let k = require(args.budget, "budget", algo)?;
            if k.fract() != 0.0 || k < 1.0 || k > u64::MAX as f64 {
                return Err(Error::InvalidParameter(format!(
                    "frac-kmedians needs a positive integer budget, got {k}"
                )));
            }
            let d = require(args.dist_bound, "dist-bound", algo)?;
            let out = solve_frac_kmedians(&instance, k as u64, d, eps)?;
            let mut v = fractional_json(&instance, &out.solution)?;
            v["iterations"] = json!(out.trace.len());
            v["estimator_max"] = json!(out
                .estimator
                .iter()
                .map(|e| e.value)
                .fold(f64::NEG_INFINITY, f64::max));
            (v, out.trace)
        }
        Algo::RoundFracFl => {
            let eps = unit_eps(require(args.eps, "eps", algo)?)?;
            let x = reference(false)?;
            let out = round_frac_fl(&instance, &x, eps, seed)?;
            let mut v = fractional_json(&instance, &out.solution)?;
            v["iterations"] = json!(out.trace.len());
            (v, out.trace)
        }
        Algo::FracFl => {
            let eps = unit_eps(require(args.eps, "eps", algo)?)?;
            let out = solve_frac_fl(&instance, eps)?;
            let mut v = fractional_json(&instance, &out.solution)?;
            v["iterations"] = json!(out.trace.len());
            (v, out.trace)
        }
    };
    body["algorithm"] = json!(algo.name());
    if let Some(path) = &args.trace {
        emit(Some(path), &render_lines(&trace.to_json_lines(&instance)))?;
    }
    emit(args.out.as_deref(), &render(body))
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let instance = load_instance(&args.input)?;
    let (sol, report) = match args.budget {
        Some(k) => exact_kmedians_with_guard(&instance, k, args.max_facilities)?,
        None => exact_fl_with_guard(&instance, args.max_facilities)?,
    };
    emit(args.out.as_deref(), &render(integral_json(&instance, &sol, &report)))
}

fn load_corpus(dir: &Path) -> Result<Vec<(String, Instance)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().expect("json files have stems").to_string_lossy().into_owned();
            Ok((id, load_instance(&p)?))
        })
        .collect()
}

fn run_verify(args: &VerifyArgs) -> Result<u8> {
    let suites = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        args.suite
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<Suite>>>()?
    };
    let corpus = load_corpus(&args.corpus)?;
    let config = VerifyConfig {
        suites,
        eps: args.eps.clone(),
        seed: args.seed,
        trials: args.trials,
        best_of_seeds: args.seeds,
    };
    let report = verify(&corpus, &config);
    let failed = report.failures().count();
    let body = json!({
        "records": to_value(&report.records),
        "summary": {
            "instances": corpus.len(),
            "records": report.records.len(),
            "passed": report.records.len() - failed,
            "failed": failed,
        },
    });
    emit(args.out.as_deref(), &render(body))?;
    Ok(if failed == 0 { 0 } else { 1 })
}

fn experiment(exp: Experiment) -> Result<()> {
    let value = match exp {
        Experiment::Wald { trials, people, seed } => {
            to_value(&run_wald_experiment(trials, people, derive_seed(seed, "experiment/wald", 0))?)
        }
        Experiment::Chernoff { k, p, eps, trials, seed } => to_value(&estimate_chernoff_tail(
            k,
            p,
            eps,
            trials,
            derive_seed(seed, "experiment/chernoff", 0),
        )?),
        Experiment::Epsilon { m, bound } => json!({
            "m": m,
            "bound": bound,
            "eps": solve_chernoff_wald_epsilon(m, bound)?,
        }),
    };
    emit(None, &render(value))
}
