//! Analytical fragility pipeline: log-linear probabilistic seismic demand
//! model, closed-form lognormal fragility, and sampling-based damage-state
//! generation with ordered limit states.
//!
//! The sampler feeds the ordinal fitters end-to-end: demands come from the
//! demand model, capacities from lognormal limit states drawn as an ordered
//! vector (equicorrelated Gaussian copula plus acceptance-rejection), and
//! the damage state counts how many capacities the demand exceeds.

use crate::data::{DamageState, Dataset, Observation};
use crate::error::{Error, Result};
use crate::link::{normal_cdf, normal_quantile};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Log-linear demand model ln(D) = ln_a0 + a1 ln(IM) + beta_d eps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Psdm {
    pub ln_a0: f64,
    pub a1: f64,
    pub beta_d: f64,
}

impl Psdm {
    pub fn new(ln_a0: f64, a1: f64, beta_d: f64) -> Result<Self> {
        if !ln_a0.is_finite() || !a1.is_finite() || !(beta_d >= 0.0) || !beta_d.is_finite() {
            return Err(Error::invalid(
                "psdm requires finite coefficients and beta_d >= 0",
            ));
        }
        Ok(Psdm { ln_a0, a1, beta_d })
    }

    /// Median log-demand at an intensity.
    pub fn median_ln_demand(&self, im: f64) -> f64 {
        self.ln_a0 + self.a1 * im.ln()
    }
}

/// One lognormal limit state: median log-capacity and dispersion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LimitState {
    pub ln_sc: f64,
    pub beta_c: f64,
}

/// Ordered lognormal limit states separating K = states + 1 damage levels.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<LimitState>", into = "Vec<LimitState>")]
pub struct CapacityModel {
    states: Vec<LimitState>,
}

impl TryFrom<Vec<LimitState>> for CapacityModel {
    type Error = Error;

    fn try_from(states: Vec<LimitState>) -> Result<Self> {
        CapacityModel::new(states)
    }
}

impl From<CapacityModel> for Vec<LimitState> {
    fn from(c: CapacityModel) -> Self {
        c.states
    }
}

impl CapacityModel {
    pub fn new(states: Vec<LimitState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("need at least one limit state"));
        }
        for s in &states {
            if !s.ln_sc.is_finite() || !(s.beta_c >= 0.0) || !s.beta_c.is_finite() {
                return Err(Error::invalid(
                    "limit states need finite medians and beta_c >= 0",
                ));
            }
        }
        for w in states.windows(2) {
            if !(w[0].ln_sc < w[1].ln_sc) {
                return Err(Error::invalid(
                    "limit-state medians must be strictly increasing",
                ));
            }
        }
        Ok(CapacityModel { states })
    }

    pub fn states(&self) -> &[LimitState] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Number of damage categories the model induces.
    pub fn k(&self) -> usize {
        self.states.len() + 1
    }
}

/// Least-squares fit of the demand model on (im, demand) samples;
/// the residual dispersion uses the n-2 divisor.
pub fn fit_psdm(samples: &[(f64, f64)]) -> Result<Psdm> {
    if samples.len() < 3 {
        return Err(Error::invalid("need at least 3 demand samples"));
    }
    for &(im, d) in samples {
        if !(im > 0.0) || !(d > 0.0) || !im.is_finite() || !d.is_finite() {
            return Err(Error::invalid("demand samples must be positive and finite"));
        }
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|&(im, _)| im.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, d)| d.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - xbar) * (x - xbar)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid(
            "degenerate design: all intensities identical; need >= 2 distinct im values",
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (x - xbar) * (y - ybar))
        .sum();
    let a1 = sxy / sxx;
    let ln_a0 = ybar - a1 * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let e = y - ln_a0 - a1 * x;
            e * e
        })
        .sum();
    let beta_d = (rss.max(0.0) / (n - 2.0)).sqrt();
    Psdm::new(ln_a0, a1, beta_d)
}

/// Closed-form exceedance probability of limit state `k` (1-based) at `im`:
/// a lognormal fragility with median ln(theta) = (ln_sc_k - ln_a0)/a1 and
/// dispersion sqrt(beta_d^2 + beta_c_k^2)/a1.
pub fn closed_form_fragility(psdm: &Psdm, cap: &CapacityModel, im: f64, k: usize) -> Result<f64> {
    if psdm.a1 <= 0.0 {
        return Err(Error::invalid("fragility must increase with IM; a1 <= 0"));
    }
    if k == 0 || k > cap.n_states() {
        return Err(Error::invalid(format!(
            "state index {k} outside 1..={}",
            cap.n_states()
        )));
    }
    if !(im > 0.0) || !im.is_finite() {
        return Err(Error::invalid("im must be positive and finite"));
    }
    let ls = cap.states()[k - 1];
    let ln_theta = (ls.ln_sc - psdm.ln_a0) / psdm.a1;
    let dispersion = (psdm.beta_d * psdm.beta_d + ls.beta_c * ls.beta_c).sqrt() / psdm.a1;
    if dispersion == 0.0 {
        return Ok(if im.ln() >= ln_theta { 1.0 } else { 0.0 });
    }
    Ok(normal_cdf((im.ln() - ln_theta) / dispersion))
}

/// Sampling statistics of the ordered-capacity rejection loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStats {
    pub attempts: usize,
    pub accepts: usize,
}

/// Draw one demand and one ordered capacity vector per intensity and emit
/// the resulting damage states as a Dataset.
///
/// Capacities use an equicorrelated Gaussian copula with parameter `rho`
/// on the log scale, redrawn until the vector is ordered; demand and
/// capacity draws are independent. Errors when the ordered-vector
/// acceptance rate over a probe batch falls below 1e-3.
pub fn sample_damage_states(
    psdm: &Psdm,
    cap: &CapacityModel,
    ims: &[f64],
    rho: f64,
    seed: u64,
) -> Result<Dataset> {
    sample_damage_states_with_stats(psdm, cap, ims, rho, seed).map(|(ds, _)| ds)
}

/// As [`sample_damage_states`], also returning the rejection statistics.
pub fn sample_damage_states_with_stats(
    psdm: &Psdm,
    cap: &CapacityModel,
    ims: &[f64],
    rho: f64,
    seed: u64,
) -> Result<(Dataset, SampleStats)> {
    if ims.is_empty() {
        return Err(Error::invalid("need at least one intensity"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must be in [0,1], got {rho}")));
    }
    let m = cap.n_states();
    let k_cat = cap.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0usize;
    let mut accepts = 0usize;
    let mut obs = Vec::with_capacity(ims.len());
    let sqrt_rho = rho.sqrt();
    let sqrt_com = (1.0 - rho).sqrt();
    let mut caps = vec![0.0f64; m];
    for &im in ims {
        if !(im > 0.0) || !im.is_finite() {
            return Err(Error::invalid(format!("im must be positive, got {im}")));
        }
        let ln_d = psdm.median_ln_demand(im) + psdm.beta_d * draw_normal(&mut rng);
        // Ordered capacity vector by acceptance-rejection on the copula.
        loop {
            attempts += 1;
            let z0 = draw_normal(&mut rng);
            for (j, c) in caps.iter_mut().enumerate() {
                let z = sqrt_rho * z0 + sqrt_com * draw_normal(&mut rng);
                *c = cap.states()[j].ln_sc + cap.states()[j].beta_c * z;
            }
            if caps.windows(2).all(|w| w[0] <= w[1]) {
                accepts += 1;
                break;
            }
            if attempts >= 2000 && (accepts as f64) < 1e-3 * attempts as f64 {
                return Err(Error::numerical(format!(
                    "ordered-capacity acceptance rate below 1e-3 ({accepts}/{attempts}); \
                     increase rho or reduce the capacity dispersions"
                )));
            }
        }
        let exceeded = caps.iter().filter(|&&c| c < ln_d).count();
        obs.push(Observation {
            im,
            ds: DamageState::new(exceeded + 1, k_cat)?,
        });
    }
    Ok((Dataset::new(obs, k_cat)?, SampleStats { attempts, accepts }))
}

#[inline]
fn draw_normal<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    normal_quantile((1.0 - u).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}
