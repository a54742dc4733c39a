//! Shared helpers for unit tests: independent oracles and fixtures.

use crate::link::Link;
use crate::model::{Family, ModelSpec, ParamSet, Slope};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// erf via its Maclaurin series; independent of the libm implementation used
/// by the production code. Accurate to ~1e-16 for |x| <= 3 and unusable
/// beyond |x| ~ 4 (cancellation), hence the tail branch in [`phi_oracle`].
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..300 {
        let nf = n as f64;
        term *= -x * x / nf;
        let add = term / (2.0 * nf + 1.0);
        sum += add;
        if add.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// Lower-tail normal probability by the Mills-ratio continued fraction,
/// full relative precision for z <= -4.
fn phi_lower_tail(z: f64) -> f64 {
    debug_assert!(z <= -4.0);
    let x = -z;
    let mut r = 0.0;
    for k in (1..400).rev() {
        r = k as f64 / (x + r);
    }
    let mills = 1.0 / (x + r);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    pdf * mills
}

/// High-precision standard normal CDF oracle.
pub fn phi_oracle(z: f64) -> f64 {
    if z <= -4.0 {
        phi_lower_tail(z)
    } else if z >= 4.0 {
        1.0 - phi_lower_tail(-z)
    } else {
        0.5 + 0.5 * erf_series(z / std::f64::consts::SQRT_2)
    }
}

/// Cumulative probit spec with K = 5 used throughout the fixtures.
pub fn reference_spec() -> ModelSpec {
    ModelSpec::new(Family::Cumulative, Link::Probit, false, false, 5).unwrap()
}

/// The reference parameter set: tau = (-1.617, -1.000, -0.082, 0.623),
/// beta = 1.549.
pub fn reference_params() -> ParamSet {
    ParamSet::shared(vec![-1.617, -1.000, -0.082, 0.623], 1.549)
}

/// Deterministic "random" valid parameter set for a spec.
pub fn any_params(spec: &ModelSpec, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params_from_rng(spec, &mut rng)
}

/// Random valid parameter set drawn from broad but tame ranges.
pub fn params_from_rng<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ParamSet {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_is_consistent_at_branch_seams() {
        let a = phi_oracle(-3.9999);
        let b = phi_oracle(-4.0001);
        assert!(a > b && (a - b) < 1e-7);
        assert!((phi_oracle(0.0) - 0.5).abs() < 1e-16);
        assert!((phi_oracle(4.0) + phi_oracle(-4.0) - 1.0).abs() < 1e-16);
    }
}
