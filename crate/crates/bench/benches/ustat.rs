use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wlap_bench::{cosine_density, draw, product_form};
use wlap_core::functional::{ustat, UStatKernel, UStatMode};
use wlap_core::torus::ProjectionFamily;

fn fast_vs_naive(c: &mut Criterion) {
    let f = cosine_density();
    let mut group = c.benchmark_group("ustat-order2");
    for n in [30usize, 100, 300] {
        let x = draw(&f, n);
        let k = UStatKernel::single(product_form(&f, 2), 40.0, ProjectionFamily::default(), f.geometry()).unwrap();
        group.bench_with_input(BenchmarkId::new("fast", n), &x, |b, x| b.iter(|| ustat(&k, x, UStatMode::Fast).unwrap()));
        group.bench_with_input(BenchmarkId::new("naive", n), &x, |b, x| b.iter(|| ustat(&k, x, UStatMode::Naive).unwrap()));
    }
    group.finish();
}

fn cubic_fast(c: &mut Criterion) {
    let f = cosine_density();
    let mut group = c.benchmark_group("ustat-multiscale3");
    group.sample_size(20);
    for n in [1000usize, 4000] {
        let x = draw(&f, n);
        let k = UStatKernel::multiscale(product_form(&f, 3), [10.0, 20.0, 40.0], ProjectionFamily::default(), f.geometry()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| b.iter(|| ustat(&k, x, UStatMode::Fast).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, fast_vs_naive, cubic_fast);
criterion_main!(benches);
