//! Bayesian model evaluation: WAIC, DIC, Pareto-smoothed importance-sampling
//! leave-one-out cross-validation (PSIS-LOO), an exact refit-every-point LOO
//! oracle, and the multi-model comparison table.

use crate::bayes::{sample_posterior, McmcOptions, PosteriorDraws, Prior};
use crate::data::Dataset;
use crate::error::{Error, Result, Warning};
use crate::mle::{log_likelihood_floored, LOG_FLOOR};
use crate::model::{self, log_prob_of, log_sum_exp, ModelSpec};
use rayon::prelude::*;

/// Sentinel Pareto k for observations whose importance ratios carried no
/// variation (smoothing skipped, nothing to fit).
pub const PARETO_K_NOT_FITTED: f64 = f64::NEG_INFINITY;

/// Matrix of log predictive densities, draws by observations (row-major).
#[derive(Debug, Clone)]
pub struct PointwiseLogLik {
    values: Vec<f64>,
    pub n_draws: usize,
    pub n_obs: usize,
}

impl PointwiseLogLik {
    pub fn new(values: Vec<f64>, n_draws: usize, n_obs: usize) -> Result<Self> {
        if values.len() != n_draws * n_obs || n_draws == 0 || n_obs == 0 {
            return Err(Error::invalid("pointwise log-likelihood shape mismatch"));
        }
        Ok(PointwiseLogLik {
            values,
            n_draws,
            n_obs,
        })
    }

    #[inline]
    pub fn at(&self, s: usize, i: usize) -> f64 {
        self.values[s * self.n_obs + i]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_obs..(s + 1) * self.n_obs]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n_draws).map(|s| self.at(s, i)).collect()
    }

    /// Reuse the pointwise rows stored during sampling.
    pub fn from_stored(draws: &PosteriorDraws) -> Result<Self> {
        if !draws.has_pointwise() {
            return Err(Error::invalid(
                "draws carry no stored pointwise log-likelihood",
            ));
        }
        let n_draws = draws.n_draws();
        let n_obs = draws.n_obs;
        let mut values = Vec::with_capacity(n_draws * n_obs);
        for s in 0..n_draws {
            values.extend_from_slice(draws.pointwise_row(s));
        }
        PointwiseLogLik::new(values, n_draws, n_obs)
    }
}

/// Recompute ln p(y_i | theta_s) for every draw and observation.
pub fn pointwise_loglik(draws: &PosteriorDraws, ds: &Dataset) -> Result<PointwiseLogLik> {
    if draws.n_obs != 0 && draws.n_obs != ds.n() {
        return Err(Error::invalid(
            "dataset does not match the sampled data size",
        ));
    }
    let spec = draws.spec;
    let n_draws = draws.n_draws();
    let rows: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|s| {
            let params = draws.param_set(s);
            ds.observations()
                .iter()
                .map(|o| log_prob_of(&spec, &params, o.im.ln(), o.ds.get()).max(LOG_FLOOR))
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n_draws * ds.n());
    for r in rows {
        values.extend_from_slice(&r);
    }
    PointwiseLogLik::new(values, n_draws, ds.n())
}

/// WAIC and DIC summaries.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WaicDic {
    pub lppd: f64,
    pub p_waic: f64,
    pub waic: f64,
    pub dic: f64,
    pub p_dic: f64,
}

/// WAIC from the pointwise matrix and DIC from the deviance at the posterior
/// mean (taken on the unconstrained scale so threshold ordering survives the
/// averaging) plus the mean deviance over draws.
pub fn waic_dic(pll: &PointwiseLogLik, draws: &PosteriorDraws, ds: &Dataset) -> Result<WaicDic> {
    if pll.n_draws < 2 {
        return Err(Error::invalid("need >= 2 draws"));
    }
    if pll.n_obs != ds.n() {
        return Err(Error::invalid(
            "pointwise matrix does not match the dataset",
        ));
    }
    let s = pll.n_draws as f64;
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for i in 0..pll.n_obs {
        let col = pll.column(i);
        lppd += log_sum_exp(&col) - s.ln();
        let mean = col.iter().sum::<f64>() / s;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s - 1.0);
        p_waic += var;
    }
    let waic = -2.0 * (lppd - p_waic);

    // DIC: posterior mean on the unconstrained scale, then transformed back.
    let spec = draws.spec;
    let p = spec.n_params();
    let mut mean_unc = vec![0.0; p];
    for si in 0..draws.n_draws() {
        let params = draws.param_set(si);
        let v = model::to_unconstrained(&spec, &params)?;
        for (acc, x) in mean_unc.iter_mut().zip(&v) {
            *acc += x;
        }
    }
    mean_unc.iter_mut().for_each(|x| *x /= s);
    let at_mean = model::from_unconstrained(&spec, &mean_unc);
    let dev_at_mean = -2.0 * log_likelihood_floored(&spec, &at_mean, ds);
    let mean_dev = -2.0
        * (0..pll.n_draws)
            .map(|si| pll.row(si).iter().sum::<f64>())
            .sum::<f64>()
        / s;
    let p_dic = mean_dev - dev_at_mean;
    let dic = dev_at_mean + 2.0 * p_dic;
    Ok(WaicDic {
        lppd,
        p_waic,
        waic,
        dic,
        p_dic,
    })
}

// ---------------------------------------------------------------------------
// Generalized Pareto tail fit (Zhang-Stephens profile posterior mean).
// ---------------------------------------------------------------------------

/// Generalized Pareto tail utilities used by the PSIS smoother.
pub mod gpd {
    /// Fit (k, sigma) to positive exceedances by the Zhang-Stephens
    /// quantile-anchored profile posterior mean, with the usual weak prior
    /// regularization of k toward 0.5. `x` must be sorted ascending.
    pub fn fit(x: &[f64]) -> (f64, f64) {
        let n = x.len();
        debug_assert!(n >= 5);
        let m = 30 + (n as f64).sqrt().floor() as usize;
        let quart = x[(n as f64 / 4.0 + 0.5).floor() as usize - 1].max(f64::MIN_POSITIVE);
        let x_max = x[n - 1];
        let mut theta = Vec::with_capacity(m);
        let mut log_lik = Vec::with_capacity(m);
        for j in 1..=m {
            let t = 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / (3.0 * quart);
            let k = mean_log1p_neg(t, x);
            theta.push(t);
            log_lik.push(n as f64 * ((-t / k).ln() - k - 1.0));
        }
        let lse = crate::model::log_sum_exp(&log_lik);
        let mut theta_hat = 0.0;
        for j in 0..m {
            theta_hat += theta[j] * (log_lik[j] - lse).exp();
        }
        let k_hat = mean_log1p_neg(theta_hat, x);
        let sigma = -k_hat / theta_hat;
        // Weakly informative prior pull toward k = 0.5.
        let k_reg = (n as f64 * k_hat + 5.0 * 0.5) / (n as f64 + 10.0);
        (k_reg, sigma)
    }

    fn mean_log1p_neg(theta: f64, x: &[f64]) -> f64 {
        x.iter().map(|&v| (-theta * v).ln_1p()).sum::<f64>() / x.len() as f64
    }

    /// Quantile of the GPD with shape `k` and scale `sigma`.
    pub fn quantile(p: f64, k: f64, sigma: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&p));
        if k.abs() < 1e-12 {
            -sigma * (-p).ln_1p()
        } else {
            sigma * ((-k * (-p).ln_1p()).exp_m1()) / k
        }
    }
}

/// PSIS-LOO result.
#[derive(Debug, Clone)]
pub struct PsisLoo {
    pub elpd_loo: f64,
    pub se_elpd: f64,
    pub pointwise_elpd: Vec<f64>,
    /// Tail-shape diagnostic per observation; `PARETO_K_NOT_FITTED` when the
    /// ratios were degenerate and smoothing was skipped.
    pub pareto_k: Vec<f64>,
    pub warnings: Vec<Warning>,
}

/// Smooth one observation's log importance ratios in place.
/// Returns the fitted Pareto k (or the sentinel).
pub(crate) fn psis_smooth(log_ratios: &mut [f64]) -> f64 {
    let s = log_ratios.len();
    let cap = log_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail_len =
        ((0.2 * s as f64).ceil() as usize).min((3.0 * (s as f64).sqrt()).ceil() as usize);
    if tail_len < 5 || tail_len >= s {
        return PARETO_K_NOT_FITTED;
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| log_ratios[a].partial_cmp(&log_ratios[b]).unwrap());
    let cutoff_idx = order[s - tail_len - 1];
    let cut = log_ratios[cutoff_idx];
    // Exceedances on the ratio scale, shifted by the max for stability.
    let exceed: Vec<f64> = order[s - tail_len..]
        .iter()
        .map(|&i| (log_ratios[i] - cap).exp() - (cut - cap).exp())
        .collect();
    if exceed.last().copied().unwrap_or(0.0) <= 0.0
        || exceed.iter().all(|&e| e <= f64::EPSILON * 4.0)
    {
        return PARETO_K_NOT_FITTED;
    }
    let (k_hat, sigma) = gpd::fit(&exceed);
    if !k_hat.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
        return PARETO_K_NOT_FITTED;
    }
    // Replace tail values by expected order statistics of the fitted GPD,
    // capped at the raw maximum.
    let ucut = (cut - cap).exp();
    for (j, &i) in order[s - tail_len..].iter().enumerate() {
        let p = (j as f64 + 0.5) / tail_len as f64;
        let smoothed = ucut + gpd::quantile(p, k_hat, sigma);
        log_ratios[i] = (smoothed.ln() + cap).min(cap);
    }
    k_hat
}

/// Pareto-smoothed importance-sampling LOO from a pointwise log-likelihood
/// matrix.
pub fn psis_loo(pll: &PointwiseLogLik) -> Result<PsisLoo> {
    let s = pll.n_draws;
    let n = pll.n_obs;
    let mut warnings = Vec::new();
    if s < 100 {
        warnings.push(Warning::FewDraws { draws: s });
    }
    let results: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col = pll.column(i);
            // Raw log importance ratios are -pll.
            let mut lw: Vec<f64> = col.iter().map(|v| -v).collect();
            let k_hat = psis_smooth(&mut lw);
            // elpd_i = ln( sum w exp(pll) / sum w ).
            let num: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w + l).collect();
            let elpd = log_sum_exp(&num) - log_sum_exp(&lw);
            (elpd, k_hat)
        })
        .collect();

    let pointwise_elpd: Vec<f64> = results.iter().map(|r| r.0).collect();
    let pareto_k: Vec<f64> = results.iter().map(|r| r.1).collect();
    for (i, &k) in pareto_k.iter().enumerate() {
        if k.is_finite() && k > 0.7 {
            warnings.push(Warning::ParetoK {
                observation: i,
                khat: k,
            });
        }
    }
    let elpd_loo: f64 = pointwise_elpd.iter().sum();
    let mean = elpd_loo / n as f64;
    let var = pointwise_elpd
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n as f64 - 1.0).max(1.0);
    let se_elpd = (n as f64 * var).sqrt();
    Ok(PsisLoo {
        elpd_loo,
        se_elpd,
        pointwise_elpd,
        pareto_k,
        warnings,
    })
}

/// Exact leave-one-out cross-validation by refitting the posterior n times.
#[derive(Debug, Clone)]
pub struct ExactLoo {
    pub elpd_exact: f64,
    pub pointwise: Vec<f64>,
}

/// Test oracle, not a production path: guarded to small n. Each refit uses a
/// seed derived from (mcmc.seed, left-out index).
pub fn exact_loo_oracle(
    spec: &ModelSpec,
    ds: &Dataset,
    prior: &Prior,
    mcmc: &McmcOptions,
) -> Result<ExactLoo> {
    if ds.n() > 200 {
        return Err(Error::invalid(format!(
            "exact LOO refits the model n = {} times; use psis_loo instead (guard: n <= 200)",
            ds.n()
        )));
    }
    let spec = *spec;
    let pointwise: Vec<f64> = (0..ds.n())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let held = ds.observations()[i];
            let rest = ds.without(i)?;
            let mcmc_i = McmcOptions {
                seed: mcmc
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(i as u64 + 1),
                ..*mcmc
            };
            let draws = sample_posterior(&spec, &rest, prior, &mcmc_i)?;
            let lps: Vec<f64> = (0..draws.n_draws())
                .map(|s| {
                    let params = draws.param_set(s);
                    log_prob_of(&spec, &params, held.im.ln(), held.ds.get()).max(LOG_FLOOR)
                })
                .collect();
            Ok(log_sum_exp(&lps) - (lps.len() as f64).ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ExactLoo {
        elpd_exact: pointwise.iter().sum(),
        pointwise,
    })
}

/// Input to the model comparison: one evaluated model.
#[derive(Debug, Clone)]
pub struct ModelEval {
    pub name: String,
    pub n_params: usize,
    pub pointwise_elpd: Vec<f64>,
    pub pareto_k: Vec<f64>,
}

/// Summary of the Pareto k diagnostics of one model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ParetoKSummary {
    pub max: f64,
    pub n_above_07: usize,
    pub n_above_1: usize,
}

/// One row of the comparison table, ranked by elpd_loo.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonRow {
    pub model: String,
    pub n_params: usize,
    pub elpd_loo: f64,
    pub se_elpd: f64,
    pub elpd_diff: f64,
    pub se_diff: f64,
    pub rank: usize,
    pub significant: bool,
    pub pareto_k: ParetoKSummary,
}

/// Pairwise comparison against the best model: elpd differences with paired
/// standard errors, ranks, and the rule-of-thumb significance flag
/// (|elpd_diff| > 4 and > 2 se_diff).
pub fn compare_models(evals: &[ModelEval]) -> Result<Vec<ComparisonRow>> {
    if evals.is_empty() {
        return Err(Error::invalid("no models to compare"));
    }
    let n = evals[0].pointwise_elpd.len();
    if evals.iter().any(|e| e.pointwise_elpd.len() != n) {
        return Err(Error::invalid(
            "models were evaluated on different datasets (pointwise lengths differ)",
        ));
    }
    let totals: Vec<f64> = evals
        .iter()
        .map(|e| e.pointwise_elpd.iter().sum())
        .collect();
    let best = totals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();

    let mut rows: Vec<ComparisonRow> = evals
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let elpd = totals[j];
            let mean = elpd / n as f64;
            let var = e
                .pointwise_elpd
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n as f64 - 1.0).max(1.0);
            let (diff, se_diff) = if j == best {
                (0.0, 0.0)
            } else {
                let d: Vec<f64> = e
                    .pointwise_elpd
                    .iter()
                    .zip(&evals[best].pointwise_elpd)
                    .map(|(a, b)| a - b)
                    .collect();
                let dm = d.iter().sum::<f64>() / n as f64;
                let dvar =
                    d.iter().map(|v| (v - dm) * (v - dm)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
                (elpd - totals[best], (n as f64 * dvar).sqrt())
            };
            let finite_k: Vec<f64> = e
                .pareto_k
                .iter()
                .cloned()
                .filter(|k| k.is_finite())
                .collect();
            ComparisonRow {
                model: e.name.clone(),
                n_params: e.n_params,
                elpd_loo: elpd,
                se_elpd: (n as f64 * var).sqrt(),
                elpd_diff: diff,
                se_diff,
                rank: 0,
                significant: diff.abs() > 4.0 && diff.abs() > 2.0 * se_diff,
                pareto_k: ParetoKSummary {
                    max: finite_k.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    n_above_07: finite_k.iter().filter(|&&k| k > 0.7).count(),
                    n_above_1: finite_k.iter().filter(|&&k| k > 1.0).count(),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| b.elpd_loo.partial_cmp(&a.elpd_loo).unwrap());
    for (r, row) in rows.iter_mut().enumerate() {
        row.rank = r + 1;
    }
    Ok(rows)
}
