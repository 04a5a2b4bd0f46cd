use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coldwave::elliptic::solve_batch;
use coldwave::harness::{epsilon_study, refine_study};
use coldwave::{Execution, Field, Grid, Scheme, SolverConfig};

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn densities(grid: &Grid, count: usize) -> Vec<Field> {
    (0..count)
        .map(|i| {
            let a = 0.05 + 0.8 * i as f64 / count as f64;
            let phase = i as f64;
            grid.field_from_fn(|x| a * (x + phase).cos() - 0.3 * a * (2.0 * x).sin())
        })
        .collect()
}

fn batch_solves(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_batch");
    for scheme in [Scheme::Spectral, Scheme::FiniteDifference2] {
        let grid = Grid::new(256, scheme).unwrap();
        let etas = densities(&grid, 32);
        for (name, exec) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, scheme.as_str()), &etas, |b, etas| {
                b.iter(|| solve_batch(&grid, etas, 1e-10, exec))
            });
        }
    }
    group.finish();
}

fn studies(c: &mut Criterion) {
    let config = SolverConfig::parse(
        "n_points = 64\ndt = 5e-3\nt_max = 0.25\ninitial_condition = cosine_density(0.1, 1)",
    )
    .unwrap();
    let mut group = c.benchmark_group("studies");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("epsilon", name), |b| {
            b.iter(|| epsilon_study(&config, &[0.2, 0.1, 0.05, 0.025], 0.25, exec).unwrap())
        });
        group.bench_function(BenchmarkId::new("refine", name), |b| {
            b.iter(|| refine_study(&config, &[64, 128, 256], 0.25, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, batch_solves, studies);
criterion_main!(benches);
