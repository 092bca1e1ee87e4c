use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use lagrmt_bench::{common_mode_series, poisson_levels};
use lagrmt_core::corrmat::{build_ensemble, WindowSpec};
use lagrmt_core::mpmodel::{build_poly_basis, MPParams};
use lagrmt_core::spectra::{eigenvalues, remove_extreme_bands};
use lagrmt_core::stats::{number_variance, spectral_rigidity};
use lagrmt_core::unfold::unfold_numerical;

fn ensemble(c: &mut Criterion) {
    let series = common_mode_series(1, 900);
    let mut group = c.benchmark_group("build_ensemble");
    for n in [20usize, 90] {
        let spec = WindowSpec::new(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &spec, |b, spec| {
            b.iter(|| build_ensemble(black_box(&series[0]), spec).unwrap())
        });
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let series = common_mode_series(1, 900);
    let ens = build_ensemble(&series[0], &WindowSpec::new(90).unwrap()).unwrap();
    let m = &ens.matrices[0];
    c.bench_function("eigenvalues_90", |b| b.iter(|| eigenvalues(black_box(m)).unwrap()));
    c.bench_function("band_removed_eigenvalues_90_k15", |b| {
        b.iter(|| eigenvalues(&remove_extreme_bands(black_box(m), 15).unwrap()).unwrap())
    });
    let spectrum = eigenvalues(m).unwrap();
    c.bench_function("unfold_numerical_90", |b| b.iter(|| unfold_numerical(black_box(&spectrum), 5).unwrap()));
}

fn fluctuations(c: &mut Criterion) {
    let levels = poisson_levels(10_000);
    let args: Vec<f64> = (1..=20).map(f64::from).collect();
    c.bench_function("number_variance_1e4", |b| b.iter(|| number_variance(black_box(&levels), &args).unwrap()));
    c.bench_function("spectral_rigidity_1e4", |b| b.iter(|| spectral_rigidity(black_box(&levels), &args).unwrap()));
}

fn basis(c: &mut Criterion) {
    let p = MPParams::new(2.75, 3.535).unwrap();
    c.bench_function("poly_basis_deg10", |b| b.iter(|| build_poly_basis(black_box(&p), 10).unwrap()));
}

criterion_group!(benches, ensemble, eigen, fluctuations, basis);
criterion_main!(benches);
