use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use prmc_bench::{grid_pmc, grid_prmc};
use prmc_core::learning::{run_learning, LearnConfig, Strategy};
use prmc_core::{Direction, PmcAnalysis, RobustAnalysis};

fn pmc(c: &mut Criterion) {
    let mut g = c.benchmark_group("pmc");
    for &(n, p) in &[(400, 20), (1600, 50)] {
        let (m, u) = grid_pmc(n, p);
        let id = format!("{n}x{p}");
        g.bench_function(BenchmarkId::new("solve", &id), |b| {
            b.iter(|| PmcAnalysis::new(&m, &u).unwrap())
        });
        let a = PmcAnalysis::new(&m, &u).unwrap();
        g.bench_function(BenchmarkId::new("explicit", &id), |b| {
            b.iter(|| a.gradient_explicit().unwrap())
        });
        g.bench_function(BenchmarkId::new("adjoint", &id), |b| {
            b.iter(|| a.gradient_adjoint().unwrap())
        });
        g.bench_function(BenchmarkId::new("topk1", &id), |b| {
            b.iter(|| a.topk(1, Direction::Highest, false).unwrap())
        });
    }
    g.finish();
}

fn prmc(c: &mut Criterion) {
    let mut g = c.benchmark_group("prmc");
    g.sample_size(10);
    for &(n, p) in &[(400, 20), (1600, 50)] {
        let (m, u) = grid_prmc(n, p);
        let id = format!("{n}x{p}");
        g.bench_function(BenchmarkId::new("solve", &id), |b| {
            b.iter(|| RobustAnalysis::new(&m, &u).unwrap())
        });
        let a = RobustAnalysis::new(&m, &u).unwrap();
        g.bench_function(BenchmarkId::new("gradient_all", &id), |b| {
            b.iter(|| a.gradient_all().unwrap())
        });
        g.bench_function(BenchmarkId::new("topk1", &id), |b| {
            b.iter(|| a.topk(1, Direction::Highest, false).unwrap())
        });
    }
    g.finish();
}

fn learning(c: &mut Criterion) {
    let mut g = c.benchmark_group("learning");
    g.sample_size(10);
    let (m, u) = grid_pmc(200, 5);
    for s in [Strategy::Derivative, Strategy::Uniform] {
        let cfg = LearnConfig::new(s, 5, 100, 1);
        g.bench_function(s.name(), |b| b.iter(|| run_learning(&m, &u, &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, pmc, prmc, learning);
criterion_main!(benches);
