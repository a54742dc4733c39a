//! Benchmarks for the hot paths: link kernels, category-probability laws,
//! a full maximum-likelihood fit at catalog scale, and PSIS smoothing.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fragfit_core::data::{log_spaced_ims, simulate_dataset};
use fragfit_core::eval::{psis_loo, PointwiseLogLik};
use fragfit_core::mle::{fit_mle, log_likelihood, FitOptions};
use fragfit_core::model::{category_probs, ModelSpec, ParamSet, Slope};
use fragfit_core::Link;
use std::hint::black_box;

fn reference_params() -> ParamSet {
    ParamSet::shared(vec![-1.617, -1.000, -0.082, 0.623], 1.549)
}

fn bench_links(c: &mut Criterion) {
    let mut group = c.benchmark_group("link");
    for link in [Link::Probit, Link::Logit, Link::Cloglog] {
        group.bench_function(format!("cdf_{link}"), |b| {
            b.iter(|| {
                let mut acc = 0.0;
                let mut z = -6.0;
                while z < 6.0 {
                    acc += link.cdf(black_box(z));
                    z += 0.01;
                }
                acc
            })
        });
        group.bench_function(format!("log_cdf_{link}"), |b| {
            b.iter(|| {
                let mut acc = 0.0;
                let mut z = -40.0;
                while z < 8.0 {
                    acc += link.log_cdf(black_box(z));
                    z += 0.04;
                }
                acc
            })
        });
    }
    group.finish();
}

fn bench_category_probs(c: &mut Criterion) {
    let mut group = c.benchmark_group("category_probs");
    for name in ["cum", "seq", "acat", "mlogit", "seq+vh+cs"] {
        let spec = ModelSpec::parse(name, 5).unwrap();
        let params = match name {
            "mlogit" => ParamSet {
                tau: vec![-0.5, 0.2, 0.6, 1.0],
                beta: Slope::PerCategory(vec![0.4, 0.9, 1.3, 1.8]),
                gamma: None,
            },
            "seq+vh+cs" => ParamSet {
                tau: vec![-1.6, -0.9, 0.0, 0.8],
                beta: Slope::PerCategory(vec![0.6, 1.1, 1.9, 2.7]),
                gamma: Some(0.1),
            },
            _ => reference_params(),
        };
        group.bench_function(name, |b| {
            b.iter(|| category_probs(black_box(&spec), black_box(&params), black_box(-0.7)))
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let spec = ModelSpec::parse("cum", 5).unwrap();
    let params = reference_params();
    let ims = log_spaced_ims(0.05, 2.0, 442);
    let ds = simulate_dataset(&spec, &params, &ims, 42).unwrap();
    c.bench_function("log_likelihood_n442", |b| {
        b.iter(|| log_likelihood(black_box(&spec), black_box(&params), black_box(&ds)))
    });
    c.bench_function("fit_mle_cum_n442", |b| {
        b.iter_batched(
            || ds.clone(),
            |data| fit_mle(&spec, &data, FitOptions::default()),
            BatchSize::SmallInput,
        )
    });
}

fn bench_psis(c: &mut Criterion) {
    // Synthetic pointwise matrix shaped like a catalog-scale run.
    let n_draws = 2000;
    let n_obs = 442;
    let mut values = Vec::with_capacity(n_draws * n_obs);
    let mut state = 0x2545F4914F6CDD1Du64;
    for _ in 0..n_draws * n_obs {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        values.push(-1.5 - u);
    }
    let pll = PointwiseLogLik::new(values, n_draws, n_obs).unwrap();
    c.bench_function("psis_loo_s2000_n442", |b| {
        b.iter(|| psis_loo(black_box(&pll)))
    });
}

criterion_group!(
    benches,
    bench_links,
    bench_category_probs,
    bench_fit,
    bench_psis
);
criterion_main!(benches);
