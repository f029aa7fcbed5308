use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strict_saddle::experiment::{
    diagnose, generate, measured_budgets, run_experiment, run_solve, GenConfig, RunConfig,
};
use strict_saddle::problem::{ProblemFile, ProblemKind};
use strict_saddle::Result;

/// Adaptive line-search solver for strict-saddle low-rank matrix problems.
#[derive(Parser)]
#[command(name = "saddle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file; writes the result JSON and optionally a trace CSV.
    Solve(RunArgs),
    /// Region and lemma checks against the known solution.
    Diagnose(DiagnoseArgs),
    /// Theoretical budgets from constants measured along a solve.
    Budgets(RunArgs),
    /// Write a synthetic problem file.
    Gen(GenArgs),
    /// Run an experiment file (problem, config and artifact paths).
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Solver config JSON; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Samples per region and per lemma check.
    #[arg(long, default_value_t = 100)]
    samples: usize,
}

#[derive(Args)]
struct GenArgs {
    /// Generator config JSON (kind, n, m, r, condition_number, density, sigma_min, seed).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<ProblemKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    condition_number: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_run(args: &RunArgs) -> Result<(strict_saddle::problem::LoadedProblem, RunConfig)> {
    let problem = ProblemFile::load(&args.problem)?.build()?;
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok((problem, cfg))
}

fn gen_config(args: &GenArgs) -> Result<GenConfig> {
    let mut value = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => serde_json::json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| strict_saddle::SaddleError::Schema("generator config: expected a JSON object".into()))?;
    let mut set = |key: &str, v: serde_json::Value| {
        obj.insert(key.to_string(), v);
    };
    if let Some(k) = args.kind {
        set("kind", serde_json::to_value(k)?);
    }
    for (key, v) in [("n", args.n), ("m", args.m), ("r", args.r)] {
        if let Some(v) = v {
            set(key, v.into());
        }
    }
    for (key, v) in
        [("condition_number", args.condition_number), ("density", args.density), ("sigma_min", args.sigma_min)]
    {
        if let Some(v) = v {
            set(key, v.into());
        }
    }
    if let Some(s) = args.seed {
        set("seed", s.into());
    }
    GenConfig::from_json(&value.to_string())
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let (problem, cfg) = load_run(&args)?;
            let out = run_solve(&problem, &cfg)?;
            if let Some(p) = &args.trace {
                out.trace.write_csv(p)?;
            }
            emit(args.out.as_deref(), &out.result_json()?)?;
            log::info!(
                "{:?} after {} outer iterations, |grad G| = {:e}",
                out.result.termination_reason,
                out.result.outer_iters,
                out.result.grad_norm
            );
            Ok(out.exit_code())
        }
        Command::Diagnose(args) => {
            let (problem, cfg) = load_run(&args.run)?;
            let report = diagnose(&problem, args.samples, cfg.solver.seed, &cfg.solver)?;
            emit(args.run.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            Ok(0)
        }
        Command::Budgets(args) => {
            let (problem, cfg) = load_run(&args)?;
            let (report, run) = measured_budgets(&problem, &cfg)?;
            if let Some(p) = &args.trace {
                run.trace.write_csv(p)?;
            }
            emit(args.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
            Ok(0)
        }
        Command::Gen(args) => {
            let file = generate(&gen_config(&args)?)?;
            emit(args.out.as_deref(), &(file.to_json()? + "\n"))?;
            Ok(0)
        }
        Command::Run { config } => run_experiment(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SADDLE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
