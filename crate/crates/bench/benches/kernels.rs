use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use unbiased_bench::{gaussian_problem, phantom_problem};
use unbiased_core::phantom::{image_uge, ImageUgeParams};
use unbiased_core::{split_bregman_tv, uge, whiten, NoncentralF, TvParams, UgeOptions};

fn ncf(c: &mut Criterion) {
    let mut g = c.benchmark_group("ncf_cdf");
    for lambda in [0.0, 50.0, 5000.0] {
        let f = NoncentralF::new(3.0, 60.0, lambda).unwrap();
        g.bench_function(format!("lambda_{lambda}"), |b| b.iter(|| f.cdf(black_box(2.5)).unwrap()));
    }
    g.finish();
}

fn whitening(c: &mut Criterion) {
    let (model, cov, _) = gaussian_problem(64, 300, 2, 1);
    c.bench_function("whiten_64x600", |b| b.iter(|| whiten(black_box(&model), &cov).unwrap()));
}

fn mixture(c: &mut Criterion) {
    let (model, cov, y) = gaussian_problem(32, 40, 2, 2);
    let wm = whiten(&model, &cov).unwrap();
    let yhat = wm.whiten_vector(&y).unwrap();
    let opts = UgeOptions::new(1000, 3);
    c.bench_function("uge_two_sources", |b| b.iter(|| uge(&wm, black_box(&yhat), 2, &opts).unwrap()));
}

fn phantom(c: &mut Criterion) {
    let (truth, data) = phantom_problem(64, 22, 0.3, 4);
    let mut g = c.benchmark_group("phantom_64");
    g.sample_size(10);
    g.bench_function("split_bregman_tv", |b| {
        b.iter(|| split_bregman_tv(black_box(&data), &TvParams::default(), Some(&truth)).unwrap())
    });
    let params = ImageUgeParams { samples: 20, ..ImageUgeParams::default() };
    g.bench_function("image_uge_20_windows", |b| b.iter(|| image_uge(black_box(&data), &params, None).unwrap()));
    g.finish();
}

criterion_group!(benches, ncf, whitening, mixture, phantom);
criterion_main!(benches);
