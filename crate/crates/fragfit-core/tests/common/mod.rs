#![allow(dead_code)] // shared by several integration-test binaries

//! Helpers shared by the integration and acceptance suites.

use fragfit_core::model::{ModelSpec, ParamSet, Slope};
use fragfit_core::Family;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reference cumulative probit parameters used across the suite:
/// tau = (-1.617, -1.000, -0.082, 0.623), beta = 1.549.
pub fn reference_params() -> ParamSet {
    ParamSet::shared(vec![-1.617, -1.000, -0.082, 0.623], 1.549)
}

pub fn reference_spec() -> ModelSpec {
    ModelSpec::new(
        Family::Cumulative,
        fragfit_core::Link::Probit,
        false,
        false,
        5,
    )
    .unwrap()
}

/// Random valid parameter set for any catalog spec.
pub fn random_params<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ParamSet {
    let cuts = spec.n_cuts();
    let tau: Vec<f64> = if spec.family() == Family::Mlogit {
        (0..cuts).map(|_| rng.random_range(-2.0..2.0)).collect()
    } else {
        let mut t = rng.random_range(-2.5..0.0);
        (0..cuts)
            .map(|j| {
                if j > 0 {
                    t += rng.random_range(0.05..1.2);
                }
                t
            })
            .collect()
    };
    let cs = spec.category_specific() || spec.family() == Family::Mlogit;
    let beta = if cs {
        Slope::PerCategory((0..cuts).map(|_| rng.random_range(-2.0..2.0)).collect())
    } else {
        Slope::Shared(rng.random_range(-2.0..2.0))
    };
    let gamma = spec
        .variance_heterogeneity()
        .then(|| rng.random_range(-0.5..0.5));
    ParamSet { tau, beta, gamma }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
