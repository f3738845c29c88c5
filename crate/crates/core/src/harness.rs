//! Experiment harness: grid runner, noiseless diagnostics, aggregation.
//!
//! A grid cell is one (problem, μ, noise level, seed) combination. Every cell
//! is solved independently on the scaled problem; afterwards a harness-side
//! pass re-evaluates the recorded iterates noiselessly to fill the `*_true`
//! trace columns — the solver itself never sees noiseless values. Cells are
//! independent, so the grid can run them in parallel; results are keyed by
//! cell index and identical regardless of the degree of parallelism.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use crate::barrier::assemble;
use crate::error::{Error, Result};
use crate::problem::{scale_problem, NoiseSpec, NoisyEvaluation, NoisyOracle, TrueProblem};
use crate::solver::{solve_barrier_subproblem, IterationRecord, SolveResult, SolveStatus, SolverConfig};
use crate::suite;

/// Floor applied to measures before log-averaging so exact zeros stay finite.
pub const GEO_FLOOR: f64 = 1e-300;

/// Documented column order of the trace CSV.
pub const TRACE_HEADER: &str = "k,tau,alpha_max,alpha,j,dm,merit_noisy,stat_kkt_noisy,stat_infeas_noisy,stat_kkt_true,stat_infeas_true,shift,mu";

/// The experiment grid: all combinations are run.
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub problems: Vec<String>,
    pub mus: Vec<f64>,
    /// ε_f = ε_c values; ε_g = ε_J = ε_H = √ε_f are derived.
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_iter: usize,
    pub time_limit: Duration,
    pub scaling: bool,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            problems: suite::default_suite_names()
                .into_iter()
                .map(String::from)
                .collect(),
            mus: vec![1e-1, 1e-4],
            noise_levels: vec![1e-2, 1e-6],
            seeds: vec![0],
            max_iter: 2000,
            time_limit: Duration::from_secs(3600),
            scaling: true,
        }
    }
}

/// Aggregated outcome of a single run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub mu: f64,
    pub eps_f: f64,
    pub seed: u64,
    pub status: SolveStatus,
    pub iters: usize,
    pub wall_time_s: f64,
    /// Geometric means of the last (up to) ten recorded measures.
    pub geo_kkt_noisy: f64,
    pub geo_infeas_noisy: f64,
    pub geo_kkt_true: f64,
    pub geo_infeas_true: f64,
    /// Last-iterate measures (NaN when the trace is empty).
    pub final_kkt_noisy: f64,
    pub final_infeas_noisy: f64,
    pub final_kkt_true: f64,
    pub final_infeas_true: f64,
    pub invariant_violations: usize,
    pub error: Option<String>,
}

/// Which stationarity measure a profile is built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    GeoKktNoisy,
    GeoInfeasNoisy,
    GeoKktTrue,
    GeoInfeasTrue,
}

impl Measure {
    pub fn parse(name: &str) -> Result<Measure> {
        match name {
            "geo_kkt_noisy" => Ok(Measure::GeoKktNoisy),
            "geo_infeas_noisy" => Ok(Measure::GeoInfeasNoisy),
            "geo_kkt_true" => Ok(Measure::GeoKktTrue),
            "geo_infeas_true" => Ok(Measure::GeoInfeasTrue),
            other => Err(Error::UnknownMeasure(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Measure::GeoKktNoisy => "geo_kkt_noisy",
            Measure::GeoInfeasNoisy => "geo_infeas_noisy",
            Measure::GeoKktTrue => "geo_kkt_true",
            Measure::GeoInfeasTrue => "geo_infeas_true",
        }
    }

    pub fn of(&self, s: &RunSummary) -> f64 {
        match self {
            Measure::GeoKktNoisy => s.geo_kkt_noisy,
            Measure::GeoInfeasNoisy => s.geo_infeas_noisy,
            Measure::GeoKktTrue => s.geo_kkt_true,
            Measure::GeoInfeasTrue => s.geo_infeas_true,
        }
    }
}

/// Geometric mean of the final `window` entries, flooring each value first.
pub fn geometric_mean_tail(values: &[f64], window: usize) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let tail = &values[values.len().saturating_sub(window)..];
    let mean_log = tail
        .iter()
        .map(|&v| v.max(GEO_FLOOR).ln())
        .sum::<f64>()
        / tail.len() as f64;
    mean_log.exp()
}

/// Fill the noiseless diagnostic columns of a finished run: at every recorded
/// iterate, evaluate the true problem and recompute the two measures with the
/// multiplier the solver produced there.
pub fn fill_true_measures(problem: &TrueProblem, result: &mut SolveResult) {
    for (record, snap) in result.trace.iter_mut().zip(&result.snapshots) {
        let eval = NoisyEvaluation {
            f0: problem.eval_f0(&snap.x),
            g0: problem.eval_g0(&snap.x),
            c_i: problem.eval_ci(&snap.x),
            j_i: problem.eval_ji(&snap.x),
            hess: nalgebra::DMatrix::zeros(problem.n(), problem.n()),
        };
        if let Ok(sys) = assemble(&eval, &snap.s, record.mu) {
            let kkt = (&sys.g + sys.j.transpose() * &snap.y_next).norm();
            record.stat_kkt_true = kkt.max(sys.c.norm());
            record.stat_infeas_true = sys.jt_c_norm();
        }
    }
}

/// Audit a finished noisy run against the true problem: the realized errors
/// at every recorded iterate must respect the configured bounds.
pub fn max_realized_noise(
    problem: &TrueProblem,
    oracle: &NoisyOracle,
    result: &SolveResult,
) -> (f64, f64, f64, f64) {
    let (mut df, mut dc, mut dg, mut dj) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (record, snap) in result.trace.iter().zip(&result.snapshots) {
        let key = crate::problem::EvalKey::base(record.k);
        let Ok(noisy) = oracle.evaluate(&snap.x, &snap.y_next, key) else {
            continue;
        };
        df = df.max((noisy.f0 - problem.eval_f0(&snap.x)).abs());
        dc = dc.max((&noisy.c_i - problem.eval_ci(&snap.x)).norm());
        dg = dg.max((&noisy.g0 - problem.eval_g0(&snap.x)).norm());
        dj = dj.max((&noisy.j_i - problem.eval_ji(&snap.x)).norm());
    }
    (df, dc, dg, dj)
}

/// Summarize a finished run for one cell.
pub fn summarize_run(cell: &Cell, result: &SolveResult) -> RunSummary {
    summarize(cell, result)
}

/// One grid cell fully specified.
#[derive(Debug, Clone)]
pub struct Cell {
    pub problem: String,
    pub mu: f64,
    pub eps_f: f64,
    pub seed: u64,
}

fn cells_of(grid: &ExperimentGrid) -> Vec<Cell> {
    let mut cells = Vec::new();
    for p in &grid.problems {
        for &mu in &grid.mus {
            for &eps in &grid.noise_levels {
                for &seed in &grid.seeds {
                    cells.push(Cell {
                        problem: p.clone(),
                        mu,
                        eps_f: eps,
                        seed,
                    });
                }
            }
        }
    }
    cells
}

/// Solve one cell: scale the problem, build the oracle and config, run, fill
/// the noiseless diagnostics, and summarize.
pub fn run_cell(cell: &Cell, grid: &ExperimentGrid) -> (RunSummary, Option<SolveResult>) {
    let summary_err = |msg: String| RunSummary {
        problem: cell.problem.clone(),
        mu: cell.mu,
        eps_f: cell.eps_f,
        seed: cell.seed,
        status: SolveStatus::Failure,
        iters: 0,
        wall_time_s: 0.0,
        geo_kkt_noisy: f64::NAN,
        geo_infeas_noisy: f64::NAN,
        geo_kkt_true: f64::NAN,
        geo_infeas_true: f64::NAN,
        final_kkt_noisy: f64::NAN,
        final_infeas_noisy: f64::NAN,
        final_kkt_true: f64::NAN,
        final_infeas_true: f64::NAN,
        invariant_violations: 0,
        error: Some(msg),
    };

    let base = match suite::problem(&cell.problem) {
        Ok(p) => p,
        Err(e) => return (summary_err(e.to_string()), None),
    };
    let problem = if grid.scaling {
        Arc::new(scale_problem(base))
    } else {
        base
    };
    let spec = NoiseSpec::derived(cell.eps_f, cell.seed);
    let oracle = match NoisyOracle::new(Arc::clone(&problem), spec) {
        Ok(o) => o,
        Err(e) => return (summary_err(e.to_string()), None),
    };
    let config = SolverConfig {
        mu: cell.mu,
        eps_f: cell.eps_f,
        eps_c: cell.eps_f,
        max_iter: grid.max_iter,
        time_limit: grid.time_limit,
        ..Default::default()
    };
    let mut result = match solve_barrier_subproblem(&oracle, &config, None) {
        Ok(r) => r,
        Err(e) => return (summary_err(e.to_string()), None),
    };
    fill_true_measures(&problem, &mut result);
    let summary = summarize(cell, &result);
    (summary, Some(result))
}

fn summarize(cell: &Cell, result: &SolveResult) -> RunSummary {
    let series = |f: fn(&IterationRecord) -> f64| -> Vec<f64> {
        result.trace.iter().map(f).collect()
    };
    let last = |f: fn(&IterationRecord) -> f64| -> f64 {
        result.trace.last().map(f).unwrap_or(f64::NAN)
    };
    RunSummary {
        problem: cell.problem.clone(),
        mu: cell.mu,
        eps_f: cell.eps_f,
        seed: cell.seed,
        status: result.status,
        iters: result.trace.len(),
        wall_time_s: result.wall_time.as_secs_f64(),
        geo_kkt_noisy: geometric_mean_tail(&series(|r| r.stat_kkt_noisy), 10),
        geo_infeas_noisy: geometric_mean_tail(&series(|r| r.stat_infeas_noisy), 10),
        geo_kkt_true: geometric_mean_tail(&series(|r| r.stat_kkt_true), 10),
        geo_infeas_true: geometric_mean_tail(&series(|r| r.stat_infeas_true), 10),
        final_kkt_noisy: last(|r| r.stat_kkt_noisy),
        final_infeas_noisy: last(|r| r.stat_infeas_noisy),
        final_kkt_true: last(|r| r.stat_kkt_true),
        final_infeas_true: last(|r| r.stat_infeas_true),
        invariant_violations: result.violations.len(),
        error: result.failure.clone(),
    }
}

/// Run every grid cell, optionally writing a trace CSV and summary JSON per
/// run into `out_dir`. `jobs ≤ 1` runs strictly sequentially; larger values
/// use a data-parallel pool when the `parallel` feature is enabled. Results
/// are deterministic either way.
pub fn run_grid(
    grid: &ExperimentGrid,
    jobs: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<RunSummary>> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let cells = cells_of(grid);

    let work = |cell: &Cell| -> Result<RunSummary> {
        let (summary, result) = run_cell(cell, grid);
        if let (Some(dir), Some(result)) = (out_dir, result.as_ref()) {
            let stem = cell_stem(cell);
            write_trace_csv(&dir.join(format!("{stem}.csv")), &result.trace)?;
            write_summary_json(&dir.join(format!("{stem}.json")), &summary)?;
        }
        Ok(summary)
    };

    let summaries: Vec<Result<RunSummary>> = if jobs > 1 {
        run_parallel(&cells, jobs, work)
    } else {
        cells.iter().map(work).collect()
    };
    summaries.into_iter().collect()
}

#[cfg(feature = "parallel")]
fn run_parallel<F>(cells: &[Cell], jobs: usize, work: F) -> Vec<Result<RunSummary>>
where
    F: Fn(&Cell) -> Result<RunSummary> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| cells.par_iter().map(&work).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<F>(cells: &[Cell], _jobs: usize, work: F) -> Vec<Result<RunSummary>>
where
    F: Fn(&Cell) -> Result<RunSummary> + Sync,
{
    cells.iter().map(|c| work(c)).collect()
}

/// File stem for a cell's outputs.
pub fn cell_stem(cell: &Cell) -> String {
    format!(
        "{}_mu{:e}_eps{:e}_seed{}",
        cell.problem, cell.mu, cell.eps_f, cell.seed
    )
}

/// Write the iteration trace with the documented column order.
pub fn write_trace_csv(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.k,
            r.tau,
            r.alpha_max,
            r.alpha,
            r.j,
            r.dm,
            r.merit_noisy,
            r.stat_kkt_noisy,
            r.stat_infeas_noisy,
            r.stat_kkt_true,
            r.stat_infeas_true,
            r.shift,
            r.mu
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_summary_json(path: &Path, summary: &RunSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)?;
    fs::write(path, json)?;
    Ok(())
}

/// A profile row: threshold and the percentage of summaries at or below it.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub threshold: f64,
    pub percent: f64,
}

/// Percentage-below-threshold table for one measure, suitable for step plots.
/// The percentage column is nondecreasing in the threshold.
pub fn profile(summaries: &[RunSummary], measure: Measure, thresholds: &[f64]) -> Result<Vec<ProfileRow>> {
    if summaries.is_empty() {
        return Err(Error::InvalidArgument("profile of empty summary set".into()));
    }
    let mut sorted: Vec<f64> = thresholds.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total = summaries.len() as f64;
    Ok(sorted
        .into_iter()
        .map(|t| {
            let count = summaries.iter().filter(|s| measure.of(s) <= t).count();
            ProfileRow {
                threshold: t,
                percent: 100.0 * count as f64 / total,
            }
        })
        .collect())
}

pub fn write_profile_csv(path: &Path, rows: &[ProfileRow]) -> Result<()> {
    let mut out = String::from("threshold,percent\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.threshold, r.percent));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write one profile CSV per (μ, ε, measure) combination present in the
/// summaries, following the experiment's threshold sweep.
pub fn write_all_profiles(
    out_dir: &Path,
    summaries: &[RunSummary],
    thresholds: &[f64],
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut mus: Vec<f64> = summaries.iter().map(|s| s.mu).collect();
    mus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mus.dedup();
    let mut epss: Vec<f64> = summaries.iter().map(|s| s.eps_f).collect();
    epss.sort_by(|a, b| a.partial_cmp(b).unwrap());
    epss.dedup();
    for &mu in &mus {
        for &eps in &epss {
            let subset: Vec<RunSummary> = summaries
                .iter()
                .filter(|s| s.mu == mu && s.eps_f == eps)
                .cloned()
                .collect();
            if subset.is_empty() {
                continue;
            }
            for measure in [
                Measure::GeoKktNoisy,
                Measure::GeoInfeasNoisy,
                Measure::GeoKktTrue,
                Measure::GeoInfeasTrue,
            ] {
                let rows = profile(&subset, measure, thresholds)?;
                let path = out_dir.join(format!(
                    "profile_mu{mu:e}_eps{eps:e}_{}.csv",
                    measure.name()
                ));
                write_profile_csv(&path, &rows)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
