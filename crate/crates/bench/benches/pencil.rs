use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wlap_bench::cosine_density;
use wlap_core::laplacian::{assemble_pencil, contour_projector, solve_spectrum};
use wlap_core::spectral::{select_contour, spectral_projector};

fn assemble_and_solve(c: &mut Criterion) {
    let f = cosine_density();
    let mut group = c.benchmark_group("pencil");
    for k in [8usize, 16, 32] {
        group.bench_with_input(BenchmarkId::new("assemble", k), &k, |b, &k| b.iter(|| assemble_pencil(&f, 1.0, k, 4).unwrap()));
        let p = Arc::new(assemble_pencil(&f, 1.0, k, 4).unwrap());
        group.bench_with_input(BenchmarkId::new("eigensolve", k), &p, |b, p| b.iter(|| solve_spectrum(p).unwrap()));
    }
    group.finish();
}

fn projectors(c: &mut Criterion) {
    let f = cosine_density();
    let p = Arc::new(assemble_pencil(&f, 1.0, 16, 4).unwrap());
    let eig = solve_spectrum(&p).unwrap();
    let contour = select_contour(&eig, 1, 30.0).unwrap();
    let mut group = c.benchmark_group("projector");
    group.bench_function("eigenvectors", |b| b.iter(|| spectral_projector(&eig, &contour).unwrap()));
    group.bench_function("contour", |b| b.iter(|| contour_projector(&eig, &contour).unwrap()));
    group.finish();
}

criterion_group!(benches, assemble_and_solve, projectors);
criterion_main!(benches);
