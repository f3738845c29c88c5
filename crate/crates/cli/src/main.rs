//! Command-line driver: single solves and experiment grids.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use noisy_ipm::harness::{
    cell_stem, fill_true_measures, run_grid, write_all_profiles, write_summary_json,
    write_trace_csv, Cell, ExperimentGrid,
};
use noisy_ipm::problem::{scale_problem, NoiseKeying, NoiseSpec, NoisyOracle};
use noisy_ipm::solver::{
    continuation_loop, solve_barrier_subproblem, ContinuationConfig, SolveResult, SolverConfig,
};
use noisy_ipm::suite;

#[derive(Parser)]
#[command(name = "noisy-ipm", about = "Interior-point solver for noisy inequality-constrained problems", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write its iteration trace.
    Solve(SolveArgs),
    /// Run a problems × mus × noise-levels × seeds grid.
    Experiment(ExperimentArgs),
    /// List the embedded problems.
    Problems,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Registered problem name (see `problems`).
    #[arg(long)]
    problem: Option<String>,
    /// JSON configuration file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Barrier parameter.
    #[arg(long, default_value_t = 1e-1)]
    mu: f64,
    /// Objective noise bound; ε_g = ε_J = ε_H = √ε_f are derived.
    #[arg(long, default_value_t = 0.0)]
    eps_f: f64,
    /// Constraint noise bound.
    #[arg(long, default_value_t = 0.0)]
    eps_c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Solve a sequence of barrier subproblems down to --mu-min.
    #[arg(long)]
    continuation: bool,
    #[arg(long, default_value_t = 1e-6)]
    mu_min: f64,
    /// Termination threshold for the two stationarity tests (0 disables).
    #[arg(long, default_value_t = 0.0)]
    tol_term: f64,
    /// Noise keying: per-iteration or hash-of-point.
    #[arg(long, default_value = "per-iteration")]
    keying: String,
    /// Disable gradient-based problem scaling.
    #[arg(long)]
    no_scaling: bool,
    /// Trace CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON path (defaults to the trace path with .json).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// Suite name: `default`, `convex`, or `nondegenerate`.
    #[arg(long, default_value = "default")]
    suite: String,
    /// Comma-separated barrier parameters.
    #[arg(long, default_value = "1e-1,1e-4", value_delimiter = ',')]
    mus: Vec<f64>,
    /// Comma-separated ε_f = ε_c noise levels.
    #[arg(long, default_value = "1e-2,1e-6", value_delimiter = ',')]
    noise: Vec<f64>,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Output directory for traces, summaries and profiles.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 1 runs strictly sequentially.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Thresholds for the profile tables.
    #[arg(
        long,
        default_value = "1e-7,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1e0",
        value_delimiter = ','
    )]
    thresholds: Vec<f64>,
}

/// JSON problem-configuration format: problem name, noise spec, scaling.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolveFileConfig {
    problem: Option<String>,
    noise: Option<NoiseFileConfig>,
    scaling: Option<bool>,
    mu: Option<f64>,
    max_iter: Option<usize>,
    tol_term: Option<f64>,
}

#[derive(Deserialize)]
struct NoiseFileConfig {
    eps_f: f64,
    #[serde(default)]
    eps_c: Option<f64>,
    #[serde(default)]
    eps_g: Option<f64>,
    #[serde(default)]
    eps_j: Option<f64>,
    #[serde(default)]
    eps_h: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    keying: Option<String>,
}

fn parse_keying(name: &str) -> Result<NoiseKeying> {
    match name {
        "per-iteration" => Ok(NoiseKeying::PerIteration),
        "hash-of-point" => Ok(NoiseKeying::HashOfPoint),
        other => bail!("unknown keying '{other}' (expected per-iteration or hash-of-point)"),
    }
}

fn main() -> Result<()> {
    match Args::parse().command {
        Command::Solve(args) => solve(args),
        Command::Experiment(args) => experiment(args),
        Command::Problems => {
            for name in suite::registry().names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    let file: SolveFileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SolveFileConfig::default(),
    };

    let name = args
        .problem
        .clone()
        .or(file.problem)
        .context("no problem given (use --problem or a config file)")?;
    let base = suite::problem(&name)?;

    let scaling = !args.no_scaling && file.scaling.unwrap_or(true);
    let problem = if scaling {
        Arc::new(scale_problem(base))
    } else {
        base
    };

    let spec = match &file.noise {
        Some(nf) => {
            let root = nf.eps_f.sqrt();
            NoiseSpec {
                eps_f: nf.eps_f,
                eps_c: nf.eps_c.unwrap_or(nf.eps_f),
                eps_g: nf.eps_g.unwrap_or(root),
                eps_j: nf.eps_j.unwrap_or(root),
                eps_h: nf.eps_h.unwrap_or(root),
                seed: if args.seed != 0 { args.seed } else { nf.seed },
                keying: parse_keying(nf.keying.as_deref().unwrap_or("per-iteration"))?,
            }
        }
        None if args.eps_f == 0.0 && args.eps_c == 0.0 => {
            let mut s = NoiseSpec::exact(args.seed);
            s.keying = parse_keying(&args.keying)?;
            s
        }
        None => {
            let mut s = NoiseSpec::derived(args.eps_f, args.seed);
            s.eps_c = if args.eps_c > 0.0 { args.eps_c } else { args.eps_f };
            s.keying = parse_keying(&args.keying)?;
            s
        }
    };

    let oracle = NoisyOracle::new(Arc::clone(&problem), spec)?;
    let config = SolverConfig {
        mu: file.mu.unwrap_or(args.mu),
        eps_f: spec.eps_f,
        eps_c: spec.eps_c,
        max_iter: file.max_iter.unwrap_or(args.max_iter),
        tol_term: file.tol_term.unwrap_or(args.tol_term),
        time_limit: Duration::from_secs(3600),
        continuation: ContinuationConfig {
            mu_min: args.mu_min,
            ..Default::default()
        },
        ..Default::default()
    };

    let mut result: SolveResult = if args.continuation {
        let mut results = continuation_loop(&oracle, &config)?;
        let merged_trace: Vec<_> = results.iter().flat_map(|r| r.trace.clone()).collect();
        let merged_snaps: Vec<_> = results.iter().flat_map(|r| r.snapshots.clone()).collect();
        let mut last = results.pop().context("continuation produced no subproblems")?;
        last.trace = merged_trace;
        last.snapshots = merged_snaps;
        last
    } else {
        solve_barrier_subproblem(&oracle, &config, None)?
    };
    fill_true_measures(&problem, &mut result);

    write_trace_csv(&args.out, &result.trace)?;
    let cell = Cell {
        problem: name.clone(),
        mu: config.mu,
        eps_f: spec.eps_f,
        seed: spec.seed,
    };
    let summary = noisy_ipm::harness::summarize_run(&cell, &result);
    let summary_path = args
        .summary
        .unwrap_or_else(|| args.out.with_extension("json"));
    write_summary_json(&summary_path, &summary)?;

    println!(
        "{name}: status {:?}, {} iterations, geo_kkt_true {:.3e}, geo_infeas_true {:.3e}",
        result.status,
        result.trace.len(),
        summary.geo_kkt_true,
        summary.geo_infeas_true,
    );
    println!("trace: {}", args.out.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let problems: Vec<String> = match args.suite.as_str() {
        "default" => suite::default_suite_names().into_iter().map(String::from).collect(),
        "convex" => suite::convex_suite_names().into_iter().map(String::from).collect(),
        "nondegenerate" => suite::nondegenerate_suite_names()
            .into_iter()
            .map(String::from)
            .collect(),
        other => bail!("unknown suite '{other}'"),
    };
    let grid = ExperimentGrid {
        problems,
        mus: args.mus,
        noise_levels: args.noise,
        seeds: args.seeds,
        max_iter: args.max_iter,
        ..Default::default()
    };
    let jobs = if args.jobs == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        args.jobs
    };
    let summaries = run_grid(&grid, jobs, Some(&args.out))?;
    let profiles = write_all_profiles(&args.out, &summaries, &args.thresholds)?;

    let failures = summaries.iter().filter(|s| s.error.is_some()).count();
    println!(
        "{} runs ({} failed), {} profile tables, outputs in {}",
        summaries.len(),
        failures,
        profiles.len(),
        args.out.display()
    );
    for s in &summaries {
        println!(
            "  {:<46} status {:<22} geo_kkt_true {:>10.3e}",
            cell_stem(&Cell {
                problem: s.problem.clone(),
                mu: s.mu,
                eps_f: s.eps_f,
                seed: s.seed
            }),
            format!("{:?}", s.status),
            s.geo_kkt_true
        );
    }
    Ok(())
}
