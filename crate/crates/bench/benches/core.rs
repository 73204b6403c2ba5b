use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sslab_core::augmentation::{analytic_moments, AugmentationModel};
use sslab_core::evalx::fit_probe;
use sslab_core::rng::{standard_normal_matrix, stream_rng};
use sslab_core::solvers::{solve_joint_embedding, solve_reconstruction_moments, solve_supervised_moments, SolveOptions};
use sslab_core::spectral::sym_eig;
use std::hint::black_box;

fn bench_sym_eig(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    for d in [20, 100] {
        let a = standard_normal_matrix(d, d, &mut stream_rng(1, &[d as u64]));
        let m = a.tr_mul(&a);
        group.bench_with_input(BenchmarkId::from_parameter(d), &m, |b, m| b.iter(|| sym_eig(black_box(m)).unwrap()));
    }
    group.finish();
}

fn bench_solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    for d in [20, 100] {
        let mut rng = stream_rng(2, &[d as u64]);
        let x = standard_normal_matrix(5 * d, d, &mut rng);
        let y = standard_normal_matrix(5 * d, 10, &mut rng);
        let a = standard_normal_matrix(d, d, &mut rng);
        let g = standard_normal_matrix(d, d, &mut rng);
        let model = AugmentationModel::new(a.tr_mul(&a) / d as f64, g.tr_mul(&g) / d as f64, 1.0).unwrap();
        let moments = analytic_moments(&model, &x).unwrap();
        let cross = y.tr_mul(&x) / x.nrows() as f64;
        let k = d / 2;
        group.bench_function(BenchmarkId::new("supervised", d), |b| {
            b.iter(|| solve_supervised_moments(black_box(&cross), &moments.s, SolveOptions::default()).unwrap())
        });
        group.bench_function(BenchmarkId::new("je", d), |b| b.iter(|| solve_joint_embedding(black_box(&moments), k).unwrap()));
        group.bench_function(BenchmarkId::new("rc", d), |b| {
            b.iter(|| solve_reconstruction_moments(black_box(&moments), k, SolveOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_probe(c: &mut Criterion) {
    let mut rng = stream_rng(3, &[]);
    let z = standard_normal_matrix(10_000, 50, &mut rng);
    let y = standard_normal_matrix(10_000, 10, &mut rng);
    c.bench_function("fit_probe/10000x50", |b| b.iter(|| fit_probe(black_box(&z), &y).unwrap()));
}

criterion_group!(benches, bench_sym_eig, bench_solvers, bench_probe);
criterion_main!(benches);
