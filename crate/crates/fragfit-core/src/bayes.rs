//! Bayesian inference by adaptive random-walk Metropolis on the
//! unconstrained scale, with split-chain Rhat / ESS diagnostics and
//! posterior fragility bands.
//!
//! Chains are independent: each derives its own RNG stream from
//! (seed, chain index), adapts a proposal covariance during warmup (frozen
//! afterwards, acceptance target ~0.3) and is assembled in chain order, so
//! results are bit-identical for a given seed regardless of scheduling.

use crate::data::Dataset;
use crate::error::{Error, Result, Warning};
use crate::link::normal_quantile;
use crate::mle::LOG_FLOOR;
use crate::model::{
    self, category_probs, exceedance_probs, from_unconstrained, log_prob_of, natural_flat,
    unconstrained_log_jacobian, ModelSpec, ParamSet,
};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Independent normal prior applied to every parameter on the natural scale
/// (thresholds, slopes and the scale slope alike).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Prior {
    pub mean: f64,
    pub sd: f64,
}

impl Default for Prior {
    /// The weakly informative Normal(0, 10) default.
    fn default() -> Self {
        Prior {
            mean: 0.0,
            sd: 10.0,
        }
    }
}

impl Prior {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::invalid(format!(
                "prior sd must be positive, got {sd}"
            )));
        }
        Ok(Prior { mean, sd })
    }

    fn log_density(&self, flat: &[f64]) -> f64 {
        let c = -0.5 * (2.0 * std::f64::consts::PI).ln() - self.sd.ln();
        flat.iter()
            .map(|v| {
                let z = (v - self.mean) / self.sd;
                c - 0.5 * z * z
            })
            .sum()
    }
}

/// MCMC settings. `iters` counts post-warmup draws per chain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McmcOptions {
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            chains: 4,
            warmup: 1000,
            iters: 1000,
            seed: 0,
        }
    }
}

/// Posterior draws on the natural scale plus per-draw pointwise
/// log-likelihoods. Every stored draw satisfies the threshold ordering
/// exactly because sampling happens on the unconstrained scale.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub chains: usize,
    pub iters: usize,
    pub n_params: usize,
    pub n_obs: usize,
    pub seed: u64,
    /// Natural-scale draws, indexed [(chain * iters + iter) * n_params + p].
    params: Vec<f64>,
    /// ln p(y_i | theta_s), indexed [(chain * iters + iter) * n_obs + i].
    /// Empty for prior-only sampling.
    pointwise: Vec<f64>,
    pub accept_rate: Vec<f64>,
    pub warnings: Vec<Warning>,
    pub data_fingerprint: u64,
}

impl PosteriorDraws {
    /// Total number of retained draws across chains.
    pub fn n_draws(&self) -> usize {
        self.chains * self.iters
    }

    /// Natural-scale parameter vector of one draw (flattened index).
    pub fn draw(&self, s: usize) -> &[f64] {
        &self.params[s * self.n_params..(s + 1) * self.n_params]
    }

    /// Natural-scale draw by chain and iteration.
    pub fn draw_at(&self, chain: usize, iter: usize) -> &[f64] {
        self.draw(chain * self.iters + iter)
    }

    /// Stored pointwise log-likelihood row of one draw.
    pub fn pointwise_row(&self, s: usize) -> &[f64] {
        &self.pointwise[s * self.n_obs..(s + 1) * self.n_obs]
    }

    pub fn has_pointwise(&self) -> bool {
        !self.pointwise.is_empty()
    }

    /// Rebuild the ParamSet of one draw.
    pub fn param_set(&self, s: usize) -> ParamSet {
        model::params_from_natural_flat(&self.spec, self.draw(s))
            .expect("stored draws satisfy the parameter invariants")
    }

    pub fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }

    /// Posterior mean on the natural scale.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_params];
        for s in 0..self.n_draws() {
            for (acc, v) in m.iter_mut().zip(self.draw(s)) {
                *acc += v;
            }
        }
        let n = self.n_draws() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Posterior standard deviation per parameter.
    pub fn posterior_sd(&self) -> Vec<f64> {
        let mean = self.posterior_mean();
        let mut ss = vec![0.0; self.n_params];
        for s in 0..self.n_draws() {
            for ((acc, v), m) in ss.iter_mut().zip(self.draw(s)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let n = (self.n_draws() - 1).max(1) as f64;
        ss.iter().map(|v| (v / n).sqrt()).collect()
    }

    /// Marginal quantile of one parameter.
    pub fn quantile(&self, param: usize, q: f64) -> f64 {
        let mut vals: Vec<f64> = (0..self.n_draws()).map(|s| self.draw(s)[param]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted_quantile(&vals, q)
    }

    /// Constructor from raw natural-scale draws (tests, tooling).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spec: ModelSpec,
        chains: usize,
        iters: usize,
        params: Vec<f64>,
        pointwise: Vec<f64>,
        n_obs: usize,
        seed: u64,
    ) -> Result<Self> {
        let n_params = spec.n_params();
        if params.len() != chains * iters * n_params {
            return Err(Error::invalid("params length mismatch"));
        }
        if !pointwise.is_empty() && pointwise.len() != chains * iters * n_obs {
            return Err(Error::invalid("pointwise length mismatch"));
        }
        Ok(PosteriorDraws {
            spec,
            chains,
            iters,
            n_params,
            n_obs,
            seed,
            params,
            pointwise,
            accept_rate: vec![],
            warnings: vec![],
            data_fingerprint: 0,
        })
    }
}

/// Empirical quantile (linear interpolation) of sorted values.
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

struct ChainOutput {
    params: Vec<f64>,
    pointwise: Vec<f64>,
    accept_rate: f64,
    diverged: bool,
}

enum TargetMode<'a> {
    Posterior(&'a Dataset),
    PriorOnly,
}

fn run_chain(
    spec: &ModelSpec,
    mode: &TargetMode<'_>,
    prior: &Prior,
    mcmc: &McmcOptions,
    chain_idx: usize,
    init: &[f64],
) -> ChainOutput {
    let dim = spec.n_params();
    let n_obs = match mode {
        TargetMode::Posterior(ds) => ds.n(),
        TargetMode::PriorOnly => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
    rng.set_stream(chain_idx as u64 + 1);

    // Log posterior density on the unconstrained scale; fills the pointwise
    // log-likelihood row as a side product.
    let target = |v: &[f64], pw: &mut Vec<f64>| -> f64 {
        let params = from_unconstrained(spec, v);
        let mut lp =
            prior.log_density(&natural_flat(spec, &params)) + unconstrained_log_jacobian(spec, v);
        if let TargetMode::Posterior(ds) = mode {
            pw.clear();
            for o in ds.observations() {
                let l = log_prob_of(spec, &params, o.im.ln(), o.ds.get()).max(LOG_FLOOR);
                pw.push(l);
                lp += l;
            }
        }
        lp
    };

    let mut x = init.to_vec();
    let mut pw = Vec::with_capacity(n_obs);
    let mut lp = target(&x, &mut pw);
    if !lp.is_finite() {
        return ChainOutput {
            params: vec![],
            pointwise: vec![],
            accept_rate: 0.0,
            diverged: true,
        };
    }

    // Adaptive proposal (Haario-style): Welford running covariance of the
    // warmup states times 2.38^2/d, with a Robbins-Monro log-scale tuned
    // toward ~0.3 acceptance. Both are frozen after warmup.
    let mut mean = DVector::from_column_slice(&x);
    let mut m2 = DMatrix::<f64>::zeros(dim, dim);
    let mut n_seen = 1.0f64;
    let mut log_scale: f64 = 0.0;
    let base = 2.38f64.powi(2) / dim as f64;
    let mut chol = Cholesky::new(DMatrix::<f64>::identity(dim, dim) * (0.01 / dim as f64))
        .expect("identity is positive definite");

    let total = mcmc.warmup + mcmc.iters;
    let mut params_out = Vec::with_capacity(mcmc.iters * dim);
    let mut pointwise_out = Vec::with_capacity(mcmc.iters * n_obs);
    let mut accepts = 0usize;
    let mut any_accept = false;
    let mut prop = vec![0.0; dim];
    let mut pw_prop = Vec::with_capacity(n_obs);

    for t in 0..total {
        let adapting = t < mcmc.warmup;
        // Propose x' = x + exp(log_scale/2) L z.
        let z = DVector::from_iterator(dim, (0..dim).map(|_| standard_normal(&mut rng)));
        let step = chol.l() * z * (0.5 * log_scale).exp();
        for i in 0..dim {
            prop[i] = x[i] + step[i];
        }
        let lp_prop = target(&prop, &mut pw_prop);
        let log_alpha = if lp_prop.is_finite() {
            (lp_prop - lp).min(0.0)
        } else {
            f64::NEG_INFINITY
        };
        let accept = {
            let u: f64 = rng.random();
            u.ln() < log_alpha
        };
        if accept {
            x.copy_from_slice(&prop);
            std::mem::swap(&mut pw, &mut pw_prop);
            lp = lp_prop;
            any_accept = true;
            if !adapting {
                accepts += 1;
            }
        }

        if adapting {
            let gamma = (t as f64 + 2.0).powf(-0.6);
            log_scale += gamma * (log_alpha.exp() - 0.3);
            // Welford update with the current state.
            n_seen += 1.0;
            let xv = DVector::from_column_slice(&x);
            let d1 = &xv - &mean;
            mean += &d1 / n_seen;
            let d2 = &xv - &mean;
            m2 += d1 * d2.transpose();
            if n_seen >= 20.0 && (t % 10 == 9 || t + 1 == mcmc.warmup) {
                let mut cov = &m2 * (base / (n_seen - 1.0));
                for i in 0..dim {
                    cov[(i, i)] += 1e-10 + 1e-6 * cov[(i, i)];
                }
                if let Some(c) = Cholesky::new(cov) {
                    chol = c;
                }
            }
        } else {
            params_out.extend_from_slice(&natural_flat(spec, &from_unconstrained(spec, &x)));
            if n_obs > 0 {
                pointwise_out.extend_from_slice(&pw);
            }
        }
    }

    ChainOutput {
        params: params_out,
        pointwise: pointwise_out,
        accept_rate: accepts as f64 / mcmc.iters.max(1) as f64,
        diverged: !any_accept,
    }
}

#[inline]
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Inverse-CDF transform keeps the draw sequence stable across rand
    // versions, which the byte-determinism guarantee relies on.
    let u: f64 = rng.random();
    normal_quantile((1.0 - u).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

fn sample_impl(
    spec: &ModelSpec,
    mode: TargetMode<'_>,
    prior: &Prior,
    mcmc: &McmcOptions,
) -> Result<PosteriorDraws> {
    if mcmc.chains == 0 || mcmc.iters == 0 {
        return Err(Error::invalid(
            "need at least one chain and one retained iteration",
        ));
    }
    let (init, n_obs, fingerprint) = match &mode {
        TargetMode::Posterior(ds) => {
            crate::mle::model_checks(spec, ds)?;
            // Warm start near the mode; random-walk chains mix far too
            // slowly from the intercept-only start at large n.
            let opts = crate::mle::FitOptions {
                tol: 1e-6,
                max_iter: 200,
            };
            let init = match crate::mle::fit_mle(spec, ds, opts) {
                Ok(fit) => model::to_unconstrained(spec, &fit.estimates)
                    .unwrap_or_else(|_| crate::mle::mle_style_init(spec, ds)),
                Err(_) => crate::mle::mle_style_init(spec, ds),
            };
            (init, ds.n(), ds.fingerprint())
        }
        TargetMode::PriorOnly => (vec![0.0; spec.n_params()], 0, 0),
    };

    let outputs: Vec<ChainOutput> = (0..mcmc.chains)
        .into_par_iter()
        .map(|c| run_chain(spec, &mode, prior, mcmc, c, &init))
        .collect();

    if outputs.iter().any(|o| o.diverged) {
        return Err(Error::numerical(
            "divergent target: a chain could not find any finite-density state",
        ));
    }

    let n_params = spec.n_params();
    let mut params = Vec::with_capacity(mcmc.chains * mcmc.iters * n_params);
    let mut pointwise = Vec::with_capacity(mcmc.chains * mcmc.iters * n_obs);
    let mut accept_rate = Vec::with_capacity(mcmc.chains);
    for o in &outputs {
        params.extend_from_slice(&o.params);
        pointwise.extend_from_slice(&o.pointwise);
        accept_rate.push(o.accept_rate);
    }

    let mut draws = PosteriorDraws {
        spec: *spec,
        chains: mcmc.chains,
        iters: mcmc.iters,
        n_params,
        n_obs,
        seed: mcmc.seed,
        params,
        pointwise,
        accept_rate,
        warnings: vec![],
        data_fingerprint: fingerprint,
    };
    if mcmc.chains >= 2 && mcmc.iters >= 100 {
        let names = draws.param_names();
        for (i, cs) in convergence_stats(&draws)?.iter().enumerate() {
            if cs.rhat > 1.05 {
                draws.warnings.push(Warning::HighRhat {
                    param: names[i].clone(),
                    rhat: cs.rhat,
                });
            }
        }
    }
    Ok(draws)
}

/// Draw from the posterior of `spec` given `ds`.
pub fn sample_posterior(
    spec: &ModelSpec,
    ds: &Dataset,
    prior: &Prior,
    mcmc: &McmcOptions,
) -> Result<PosteriorDraws> {
    sample_impl(spec, TargetMode::Posterior(ds), prior, mcmc)
}

/// Prior-only sampling (empty likelihood), for prior checks and sampler
/// validation.
pub fn sample_prior(spec: &ModelSpec, prior: &Prior, mcmc: &McmcOptions) -> Result<PosteriorDraws> {
    sample_impl(spec, TargetMode::PriorOnly, prior, mcmc)
}

/// Split-chain convergence statistics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConvStat {
    pub rhat: f64,
    pub ess: f64,
}

/// Split-chain Rhat and autocorrelation-sum ESS per parameter.
///
/// Zero-variance edge cases map to sentinels instead of NaN: all draws
/// identical gives rhat = 1 and ess = 0; constant chains that disagree give
/// rhat = +inf.
pub fn convergence_stats(draws: &PosteriorDraws) -> Result<Vec<ConvStat>> {
    if draws.chains < 2 {
        return Err(Error::invalid(
            "need >= 2 chains for split-chain diagnostics",
        ));
    }
    if draws.iters < 100 {
        return Err(Error::invalid("need >= 100 post-warmup draws per chain"));
    }
    let half = draws.iters / 2;
    let mut out = Vec::with_capacity(draws.n_params);
    for p in 0..draws.n_params {
        let mut chains: Vec<Vec<f64>> = Vec::with_capacity(draws.chains * 2);
        for c in 0..draws.chains {
            let full: Vec<f64> = (0..draws.iters).map(|i| draws.draw_at(c, i)[p]).collect();
            chains.push(full[..half].to_vec());
            chains.push(full[half..2 * half].to_vec());
        }
        out.push(rhat_ess(&chains));
    }
    Ok(out)
}

fn rhat_ess(chains: &[Vec<f64>]) -> ConvStat {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = n as f64
        * means
            .iter()
            .map(|mu| (mu - grand) * (mu - grand))
            .sum::<f64>()
        / (m - 1) as f64;
    let w = vars.iter().sum::<f64>() / m as f64;
    if w <= 0.0 {
        return if b <= 0.0 {
            ConvStat {
                rhat: 1.0,
                ess: 0.0,
            }
        } else {
            ConvStat {
                rhat: f64::INFINITY,
                ess: 0.0,
            }
        };
    }
    let var_plus = (n - 1) as f64 / n as f64 * w + b / n as f64;
    let rhat = (var_plus / w).sqrt();

    // ESS via paired autocorrelation sums (Geyer's initial monotone sequence).
    let mut pair_sums = Vec::new();
    let mut t = 0usize;
    let mut prev_pair = f64::INFINITY;
    while t + 1 < n {
        let rho_even = if t == 0 {
            1.0
        } else {
            1.0 - (w - mean_autocov(chains, &means, t)) / var_plus
        };
        let rho_odd = 1.0 - (w - mean_autocov(chains, &means, t + 1)) / var_plus;
        let mut pair = rho_even + rho_odd;
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        prev_pair = pair;
        pair_sums.push(pair);
        t += 2;
        if t > 2000 {
            break;
        }
    }
    let tau = -1.0 + 2.0 * pair_sums.iter().sum::<f64>();
    let total = (m * n) as f64;
    let ess = (total / tau.max(1e-12)).min(total);
    ConvStat { rhat, ess }
}

fn mean_autocov(chains: &[Vec<f64>], means: &[f64], lag: usize) -> f64 {
    let n = chains[0].len();
    if lag >= n {
        return 0.0;
    }
    let mut acc = 0.0;
    for (c, mu) in chains.iter().zip(means) {
        let mut s = 0.0;
        for i in 0..n - lag {
            s += (c[i] - mu) * (c[i + lag] - mu);
        }
        acc += s / n as f64;
    }
    acc / chains.len() as f64
}

/// One row of a posterior fragility-band table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BandRow {
    pub im: f64,
    pub k: usize,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise posterior bands for exceedance and category probabilities.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FragilityBands {
    pub level: f64,
    pub exceedance: Vec<BandRow>,
    pub category: Vec<BandRow>,
}

/// Pointwise posterior quantiles of Fr_k(im) and p_k(im) across draws.
pub fn fragility_bands(
    draws: &PosteriorDraws,
    im_grid: &[f64],
    level: f64,
) -> Result<FragilityBands> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "level must be in (0,1), got {level}"
        )));
    }
    if im_grid.is_empty() || im_grid.iter().any(|&im| !(im > 0.0) || !im.is_finite()) {
        return Err(Error::invalid("im grid must be non-empty and positive"));
    }
    let spec = draws.spec;
    let s_total = draws.n_draws();
    let lo_q = (1.0 - level) / 2.0;
    let hi_q = 1.0 - lo_q;
    let param_sets: Vec<ParamSet> = (0..s_total).map(|s| draws.param_set(s)).collect();

    let mut exceedance = Vec::with_capacity(im_grid.len() * spec.n_cuts());
    let mut category = Vec::with_capacity(im_grid.len() * spec.k());
    let mut fr_cols = vec![vec![0.0; s_total]; spec.n_cuts()];
    let mut p_cols = vec![vec![0.0; s_total]; spec.k()];
    for &im in im_grid {
        let x = im.ln();
        for (s, ps) in param_sets.iter().enumerate() {
            let fr = exceedance_probs(&spec, ps, x)?;
            for (j, v) in fr.into_iter().enumerate() {
                fr_cols[j][s] = v;
            }
            let p = category_probs(&spec, ps, x)?;
            for (j, &v) in p.as_slice().iter().enumerate() {
                p_cols[j][s] = v;
            }
        }
        for (j, col) in fr_cols.iter_mut().enumerate() {
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            exceedance.push(BandRow {
                im,
                k: j + 1,
                median: sorted_quantile(col, 0.5),
                lower: sorted_quantile(col, lo_q),
                upper: sorted_quantile(col, hi_q),
            });
        }
        for (j, col) in p_cols.iter_mut().enumerate() {
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            category.push(BandRow {
                im,
                k: j + 1,
                median: sorted_quantile(col, 0.5),
                lower: sorted_quantile(col, lo_q),
                upper: sorted_quantile(col, hi_q),
            });
        }
    }
    Ok(FragilityBands {
        level,
        exceedance,
        category,
    })
}
