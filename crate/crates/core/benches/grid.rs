//! Experiment-grid throughput: strictly sequential execution versus the
//! rayon pool. Grid cells are independent solves, so the parallel path
//! should scale with cores while producing identical results.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use std::time::Duration;

use noisy_ipm::harness::{run_grid, ExperimentGrid};

fn bench_grid(c: &mut Criterion) {
    let grid = ExperimentGrid {
        problems: vec![
            "bound1d".into(),
            "circle_lp".into(),
            "qp_box2".into(),
            "qp_diag5".into(),
            "lp_simplex2".into(),
            "exp_sum3".into(),
        ],
        mus: vec![1e-1],
        noise_levels: vec![1e-2],
        seeds: vec![0, 1],
        max_iter: 300,
        ..Default::default()
    };
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(4);

    let mut group = c.benchmark_group("grid");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(12));
    group.bench_function(BenchmarkId::new("sequential", "jobs=1"), |b| {
        b.iter(|| {
            let summaries = run_grid(black_box(&grid), 1, None).unwrap();
            black_box(summaries)
        })
    });
    group.bench_function(BenchmarkId::new("parallel", format!("jobs={cores}")), |b| {
        b.iter(|| {
            let summaries = run_grid(black_box(&grid), cores, None).unwrap();
            black_box(summaries)
        })
    });
    group.finish();
}

fn bench_single_solve(c: &mut Criterion) {
    use noisy_ipm::problem::{scale_problem, NoiseSpec, NoisyOracle};
    use noisy_ipm::solver::{solve_barrier_subproblem, SolverConfig};
    use std::sync::Arc;

    let base = noisy_ipm::suite::problem("qp_nd10").unwrap();
    let problem = Arc::new(scale_problem(base));
    let oracle = NoisyOracle::new(problem, NoiseSpec::derived(1e-2, 0)).unwrap();
    let config = SolverConfig {
        mu: 1e-1,
        eps_f: 1e-2,
        eps_c: 1e-2,
        max_iter: 200,
        ..Default::default()
    };
    c.bench_function("solve/qp_nd10_200it", |b| {
        b.iter(|| {
            let r = solve_barrier_subproblem(black_box(&oracle), &config, None).unwrap();
            black_box(r.trace.len())
        })
    });
}

criterion_group!(benches, bench_grid, bench_single_solve);
criterion_main!(benches);
