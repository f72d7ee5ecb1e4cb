use std::hint::black_box;

use bdist::fast::fast_prob;
use bdist::inference::{likelihood, Dataset, Family, RegressionModel};
use bdist::pmf::pmf_default;
use bdist::sampler::sample_batch;
use bdist::{BDist, ChainParams, ParentDist};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn spec(r1: f64, r2: f64, parent: ParentDist) -> BDist {
    BDist::new(ChainParams::new(r1, r2).unwrap(), parent).unwrap()
}

fn full_pmf(c: &mut Criterion) {
    let mut group = c.benchmark_group("pmf");
    for mu0 in [10.0, 100.0, 500.0] {
        let s = spec(0.4, 0.6, ParentDist::poisson(mu0).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(mu0), &s, |b, s| {
            b.iter(|| pmf_default(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn single_probability(c: &mut Criterion) {
    let mut group = c.benchmark_group("fast_prob");
    let s = spec(0.4, 0.6, ParentDist::fixed(500));
    for i in [50usize, 200, 400] {
        group.bench_with_input(BenchmarkId::new("m500", i), &i, |b, &i| {
            b.iter(|| fast_prob(black_box(&s), i).unwrap())
        });
    }
    let under = spec(0.8, 0.8, ParentDist::fixed(500));
    group.bench_function("m500/underdispersed/i=200", |b| {
        b.iter(|| fast_prob(black_box(&under), 200).unwrap())
    });
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let s = spec(0.3, 0.5, ParentDist::poisson(20.0).unwrap());
    c.bench_function("sample_batch/10k", |b| b.iter(|| sample_batch(black_box(&s), 10_000, 1)));
}

fn log_likelihood(c: &mut Criterion) {
    let s = spec(0.3, 0.5, ParentDist::poisson(6.0).unwrap());
    let y = sample_batch(&s, 1000, 3).counts;
    let x = (0..1000).map(|k| vec![(k % 7) as f64 / 7.0]).collect();
    let data = Dataset::new(y, x, vec!["x".into()]).unwrap();
    let model = RegressionModel::new(Family::BPoisson, 5.0, vec![0.3], ChainParams::new(0.3, 0.5).unwrap()).unwrap();
    c.bench_function("likelihood/1000obs", |b| {
        b.iter(|| likelihood(black_box(&model), black_box(&data)).unwrap())
    });
}

criterion_group!(benches, full_pmf, single_probability, sampling, log_likelihood);
criterion_main!(benches);
