//! Surrogate-residual diagnostics for cumulative link models and the
//! split-sample parallel-assumption check.
//!
//! A surrogate S for an observation with category k is drawn from the latent
//! distribution centered at beta*x, truncated to (tau_{k-1}, tau_k]; the
//! residual is R = S - beta*x. Under the true model R is symmetric around
//! zero, homoscedastic, and distributed per the link's noise law, which
//! makes QQ and trend checks meaningful for ordinal outcomes.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::link::{normal_quantile, truncated_sample, Link};
use crate::mle::{fit_mle, FitOptions, MleFit};
use crate::model::{Family, Slope};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// One replicate of surrogate residuals, regenerable from (fit, seed).
#[derive(Debug, Clone)]
pub struct SurrogateResiduals {
    pub residuals: Vec<f64>,
    pub replicate: usize,
    pub seed: u64,
}

fn check_surrogate_scope(fit: &MleFit) -> Result<(f64, Option<f64>)> {
    if fit.spec.family() != Family::Cumulative {
        return Err(Error::unsupported(
            "surrogate residuals are defined for cumulative link models here",
        ));
    }
    if !fit.spec.link().is_symmetric() {
        return Err(Error::unsupported(
            "surrogate residuals require probit or logit",
        ));
    }
    let beta =
        match fit.estimates.beta {
            Slope::Shared(b) => b,
            Slope::PerCategory(_) => return Err(Error::unsupported(
                "surrogate residuals need a single latent variable (no category-specific slopes)",
            )),
        };
    Ok((beta, fit.estimates.gamma))
}

/// Draw surrogate residuals for every observation, one vector per replicate.
/// Deterministic per (seed, replicate index).
pub fn surrogate_residuals(
    fit: &MleFit,
    ds: &Dataset,
    seed: u64,
    replicates: usize,
) -> Result<Vec<SurrogateResiduals>> {
    if fit.data_fingerprint != ds.fingerprint() {
        return Err(Error::invalid("fit was computed on a different dataset"));
    }
    if replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    let (beta, gamma) = check_surrogate_scope(fit)?;
    let link = fit.spec.link();
    let tau = &fit.estimates.tau;
    let mut out = Vec::with_capacity(replicates);
    for rep in 0..replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        let mut r = Vec::with_capacity(ds.n());
        for o in ds.observations() {
            let x = o.im.ln();
            let m = beta * x;
            let scale = gamma.map_or(1.0, |g| (g * x).exp());
            let k = o.ds.get();
            let lo = if k == 1 {
                f64::NEG_INFINITY
            } else {
                (tau[k - 2] - m) / scale
            };
            let hi = if k == ds.k() {
                f64::INFINITY
            } else {
                (tau[k - 1] - m) / scale
            };
            let eps = truncated_sample(link, 0.0, lo, hi, &mut rng)?;
            r.push(scale * eps);
        }
        out.push(SurrogateResiduals {
            residuals: r,
            replicate: rep,
            seed,
        });
    }
    Ok(out)
}

/// QQ pairs (theoretical quantile, sample quantile) against the link's
/// reference distribution at plotting positions (i - 0.5)/n.
pub fn qq_reference(res: &SurrogateResiduals, link: Link) -> Result<Vec<(f64, f64)>> {
    let n = res.residuals.len();
    if n < 10 {
        return Err(Error::invalid("need at least 10 residuals for a QQ table"));
    }
    let mut sorted = res.residuals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = (i as f64 + 0.5) / n as f64;
            (link.quantile(p).expect("p in (0,1)"), s)
        })
        .collect())
}

/// One equal-count bin of the residual-vs-covariate trend.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrendBin {
    pub center: f64,
    pub mean_residual: f64,
    pub sd_residual: f64,
    pub count: usize,
}

/// Equal-count binned means and sds of residuals over ln(im); the
/// dependency-free stand-in for a nonparametric smoother.
pub fn covariate_trend(
    res: &SurrogateResiduals,
    ds: &Dataset,
    bins: usize,
) -> Result<Vec<TrendBin>> {
    if bins < 2 {
        return Err(Error::invalid("need at least 2 bins"));
    }
    let n = ds.n();
    if n < bins {
        return Err(Error::invalid(format!(
            "n = {n} observations cannot fill {bins} bins"
        )));
    }
    if res.residuals.len() != n {
        return Err(Error::invalid("residuals do not match the dataset"));
    }
    let xs = ds.ln_ims();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let base = n / bins;
    let extra = n % bins;
    let mut out = Vec::with_capacity(bins);
    let mut start = 0usize;
    for b in 0..bins {
        let size = base + usize::from(b < extra);
        let members = &idx[start..start + size];
        start += size;
        let center = members.iter().map(|&i| xs[i]).sum::<f64>() / size as f64;
        let mean = members.iter().map(|&i| res.residuals[i]).sum::<f64>() / size as f64;
        let sd = if size > 1 {
            (members
                .iter()
                .map(|&i| (res.residuals[i] - mean).powi(2))
                .sum::<f64>()
                / (size - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        out.push(TrendBin {
            center,
            mean_residual: mean,
            sd_residual: sd,
            count: size,
        });
    }
    Ok(out)
}

/// Category split for the parallel-assumption check: the low model uses
/// categories 1..=low_end, the high model high_start..=K, and the two must
/// overlap in at least one category.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CategorySplit {
    pub low_end: usize,
    pub high_start: usize,
}

impl CategorySplit {
    /// The standard five-state split {1,2,3} / {3,4,5}.
    pub fn default_for_k5() -> Self {
        CategorySplit {
            low_end: 3,
            high_start: 3,
        }
    }
}

/// Whether surrogates are drawn with latent noise or taken at their
/// conditional expectation (noise off).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DCheckMode {
    Sampled,
    Expectation,
}

/// Result of the parallel-assumption D-check.
#[derive(Debug, Clone)]
pub struct DCheck {
    /// ln(im) of every observation in the full dataset.
    pub x: Vec<f64>,
    /// D = S_2 - S_1 evaluated at each x.
    pub d: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub var_d: f64,
    pub beta_low: f64,
    pub beta_high: f64,
}

/// Collapse categories and fit the two cut-point-window models of the
/// parallel-assumption check on the full dataset:
/// the low model keeps categories 1..=low_end and merges everything above,
/// the high model keeps high_start..=K and merges everything below. Merging
/// categories of a cumulative model leaves the slope untouched, so both
/// fits estimate the same beta under the parallel assumption.
///
/// Surrogates S_1 ~ N(-beta_1 x, 1) and S_2 ~ N(-beta_2 x, 1) are drawn at
/// every observation and D = S_2 - S_1 is regressed on ln(im). The slope
/// standard error combines the regression noise with the sampling
/// covariance of (beta_1 - beta_2), estimated from the fits' influence
/// functions (the two models share the data, so their estimates are
/// strongly correlated and the naive OLS error would be miscalibrated).
/// Under parallelism D is independent of ln(im) and Var(D | x) = 2.
pub fn parallel_check(
    ds: &Dataset,
    split: CategorySplit,
    seed: u64,
    mode: DCheckMode,
) -> Result<DCheck> {
    let k = ds.k();
    if split.low_end < 2 || split.low_end >= k {
        return Err(Error::invalid("low_end must be in 2..K"));
    }
    if split.high_start < 2 || split.high_start > k - 1 {
        return Err(Error::invalid("high_start must be in 2..=K-1"));
    }
    if split.high_start > split.low_end {
        return Err(Error::invalid(
            "split subsets must overlap in at least one category",
        ));
    }

    // Low model: categories 1..=low_end plus one merged top category.
    let k_low = split.low_end + 1;
    let low_pairs: Vec<(f64, usize)> = ds
        .observations()
        .iter()
        .map(|o| (o.im, o.ds.get().min(k_low)))
        .collect();
    // High model: merged bottom category plus high_start..=K.
    let k_high = k - split.high_start + 1;
    let high_pairs: Vec<(f64, usize)> = ds
        .observations()
        .iter()
        .map(|o| {
            (
                o.im,
                o.ds.get().max(split.high_start) - split.high_start + 1,
            )
        })
        .collect();

    let (beta_low, if_low) = collapsed_slope_fit(&low_pairs, k_low, "low-category")?;
    let (beta_high, if_high) = collapsed_slope_fit(&high_pairs, k_high, "high-category")?;
    // Empirical variance of beta_low - beta_high from paired influence
    // contributions (covariance included since both fits see the same rows).
    let var_beta_diff: f64 = if_low
        .iter()
        .zip(&if_high)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let xs = ds.ln_ims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: Vec<f64> = xs
        .iter()
        .map(|&x| match mode {
            DCheckMode::Expectation => (beta_low - beta_high) * x,
            DCheckMode::Sampled => {
                let s1 = -beta_low * x + standard_normal_draw(&mut rng);
                let s2 = -beta_high * x + standard_normal_draw(&mut rng);
                s2 - s1
            }
        })
        .collect();

    // OLS of D on x; the slope estimates beta_low - beta_high.
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let dbar = d.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - xbar) * (x - xbar)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("covariate has no variation"));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&d)
        .map(|(&x, &y)| (x - xbar) * (y - dbar))
        .sum();
    let slope = sxy / sxx;
    let intercept = dbar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&d)
        .map(|(&x, &y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let df = n - 2.0;
    let ols_var = match mode {
        DCheckMode::Sampled => (rss / df) / sxx,
        DCheckMode::Expectation => 0.0,
    };
    let slope_se = (ols_var + var_beta_diff).sqrt();
    let t_value = if slope_se > 0.0 {
        slope / slope_se
    } else {
        0.0
    };
    let p_value = if slope_se > 0.0 {
        let t_dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::numerical(e.to_string()))?;
        2.0 * (1.0 - t_dist.cdf(t_value.abs()))
    } else {
        1.0
    };
    let var_d = d.iter().map(|&y| (y - dbar) * (y - dbar)).sum::<f64>() / (n - 1.0);

    Ok(DCheck {
        x: xs,
        d,
        slope,
        slope_se,
        t_value,
        p_value,
        var_d,
        beta_low,
        beta_high,
    })
}

/// Fit a collapsed cumulative probit model and return the slope estimate
/// together with its per-observation influence contributions.
fn collapsed_slope_fit(
    pairs: &[(f64, usize)],
    k_sub: usize,
    label: &str,
) -> Result<(f64, Vec<f64>)> {
    let sub =
        Dataset::from_pairs(pairs, k_sub).map_err(|e| Error::invalid(format!("{label}: {e}")))?;
    if sub.n_observed_categories() < 3 {
        return Err(Error::invalid(format!(
            "{label} window has fewer than 3 observed categories"
        )));
    }
    let spec = crate::model::ModelSpec::new(Family::Cumulative, Link::Probit, false, false, k_sub)?;
    let fit = fit_mle(&spec, &sub, FitOptions::default())
        .map_err(|e| Error::numerical(format!("{label} window fit failed: {e}")))?;
    let beta = match fit.estimates.beta {
        Slope::Shared(b) => b,
        _ => unreachable!("collapsed fits use a shared slope"),
    };

    // Influence functions on the unconstrained scale: IF_i = I^{-1} s_i with
    // s_i the per-observation score; only the slope component is needed.
    let v_hat = crate::model::to_unconstrained(&spec, &fit.estimates)?;
    let p = spec.n_params();
    let beta_idx = k_sub - 1;
    let obj = |v: &[f64]| {
        let params = crate::model::from_unconstrained(&spec, v);
        -crate::mle::log_likelihood_floored(&spec, &params, &sub) / sub.n() as f64
    };
    let h = crate::optim::fd_hessian(&obj, &v_hat, crate::optim::HESS_STEP);
    let mut info = nalgebra::DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            info[(i, j)] = h[i][j] * sub.n() as f64;
        }
    }
    let inv = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.clone().try_inverse())
        .ok_or_else(|| Error::numerical(format!("{label} window information is singular")))?;

    let mut iff = Vec::with_capacity(sub.n());
    let mut vp = v_hat.clone();
    for o in sub.observations() {
        let x = o.im.ln();
        let y = o.ds.get();
        let mut score = vec![0.0; p];
        for j in 0..p {
            let hstep = 1e-6 * (1.0 + v_hat[j].abs());
            vp[j] = v_hat[j] + hstep;
            let up = crate::model::log_prob_of(
                &spec,
                &crate::model::from_unconstrained(&spec, &vp),
                x,
                y,
            );
            vp[j] = v_hat[j] - hstep;
            let dn = crate::model::log_prob_of(
                &spec,
                &crate::model::from_unconstrained(&spec, &vp),
                x,
                y,
            );
            vp[j] = v_hat[j];
            score[j] = (up - dn) / (2.0 * hstep);
        }
        let mut v = 0.0;
        for j in 0..p {
            v += inv[(beta_idx, j)] * score[j];
        }
        iff.push(v);
    }
    Ok((beta, iff))
}

#[inline]
fn standard_normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    let u: f64 = rng.random();
    normal_quantile((1.0 - u).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d
            .max((f - i as f64 / n).abs())
            .max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Asymptotic KS critical value at level alpha.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{log_spaced_ims, simulate_dataset};
    use crate::model::{ModelSpec, ParamSet};
    use crate::testutil::{phi_oracle, reference_params, reference_spec};

    fn fitted_pair(n: usize, seed: u64) -> (MleFit, Dataset) {
        let spec = reference_spec();
        let truth = reference_params();
        let ims = log_spaced_ims(0.05, 2.0, n);
        let ds = simulate_dataset(&spec, &truth, &ims, seed).unwrap();
        let fit = fit_mle(&spec, &ds, FitOptions::default()).unwrap();
        (fit, ds)
    }

    #[test]
    fn well_specified_residuals_have_null_properties() {
        let (fit, ds) = fitted_pair(10_000, 3);
        let reps = surrogate_residuals(&fit, &ds, 7, 1).unwrap();
        let r = &reps[0].residuals;
        // (a) symmetry around zero.
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        assert!(mean.abs() < 0.03, "mean = {mean}");
        // (b) homogeneous variance across covariate bins.
        let trend = covariate_trend(&reps[0], &ds, 10).unwrap();
        let vars: Vec<f64> = trend.iter().map(|b| b.sd_residual.powi(2)).collect();
        let vmax = vars.iter().cloned().fold(f64::MIN, f64::max);
        let vmin = vars.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            vmax / vmin < 1.25 && vmax / vmin > 0.8,
            "ratio = {}",
            vmax / vmin
        );
        // (c) explicit standard-normal reference distribution.
        let d = ks_statistic(r, phi_oracle);
        assert!(d < ks_critical(r.len(), 0.01), "ks = {d}");
    }

    #[test]
    fn residuals_are_regenerable_and_scoped() {
        let (fit, ds) = fitted_pair(300, 5);
        let a = surrogate_residuals(&fit, &ds, 11, 2).unwrap();
        let b = surrogate_residuals(&fit, &ds, 11, 2).unwrap();
        assert_eq!(a[0].residuals, b[0].residuals);
        assert_eq!(a[1].residuals, b[1].residuals);
        assert_ne!(a[0].residuals, a[1].residuals);

        // Non-cumulative fits are rejected.
        let seq = ModelSpec::parse("seq", 5).unwrap();
        let seq_fit = fit_mle(&seq, &ds, FitOptions::default()).unwrap();
        assert!(matches!(
            surrogate_residuals(&seq_fit, &ds, 1, 1),
            Err(Error::Unsupported(_))
        ));
        // Mismatched dataset is rejected.
        let other =
            simulate_dataset(&reference_spec(), &reference_params(), &[0.3, 0.5, 0.7], 9).unwrap();
        assert!(surrogate_residuals(&fit, &other, 1, 1).is_err());
    }

    #[test]
    fn qq_table_is_monotone_and_diagonal_for_reference_draws() {
        let (fit, ds) = fitted_pair(2000, 13);
        let reps = surrogate_residuals(&fit, &ds, 3, 1).unwrap();
        let qq = qq_reference(&reps[0], Link::Probit).unwrap();
        for w in qq.windows(2) {
            assert!(w[1].1 >= w[0].1, "sample quantiles must be nondecreasing");
        }
        // Residuals constructed to equal reference quantiles sit exactly on
        // the diagonal.
        let n = 200;
        let exact = SurrogateResiduals {
            residuals: (0..n)
                .map(|i| Link::Probit.quantile((i as f64 + 0.5) / n as f64).unwrap())
                .collect(),
            replicate: 0,
            seed: 0,
        };
        for (t, s) in qq_reference(&exact, Link::Probit).unwrap() {
            assert!((t - s).abs() < 1e-12);
        }
        let tiny = SurrogateResiduals {
            residuals: vec![0.0; 5],
            replicate: 0,
            seed: 0,
        };
        assert!(qq_reference(&tiny, Link::Probit).is_err());
    }

    #[test]
    fn misspecified_link_shows_larger_qq_deviation() {
        // Generate from a cloglog latent law, fit probit; compare the maximal
        // QQ deviation against the well-specified baseline.
        let k = 5;
        let gen_spec = ModelSpec::new(Family::Cumulative, Link::Cloglog, false, false, k).unwrap();
        let gen_params = ParamSet::shared(vec![-1.8, -1.0, -0.2, 0.8], 1.3);
        let ims = log_spaced_ims(0.05, 2.0, 4000);
        let ds_bad = simulate_dataset(&gen_spec, &gen_params, &ims, 17).unwrap();
        let probit = reference_spec();
        let fit_bad = fit_mle(&probit, &ds_bad, FitOptions::default()).unwrap();
        let bad_qq = qq_reference(
            &surrogate_residuals(&fit_bad, &ds_bad, 23, 1).unwrap()[0],
            Link::Probit,
        )
        .unwrap();
        let (fit_good, ds_good) = fitted_pair(4000, 17);
        let good_qq = qq_reference(
            &surrogate_residuals(&fit_good, &ds_good, 23, 1).unwrap()[0],
            Link::Probit,
        )
        .unwrap();
        // Central-region mean absolute deviation; extreme order statistics
        // are noise-dominated even under the null.
        let mean_dev = |qq: &[(f64, f64)]| {
            let sel: Vec<f64> = qq
                .iter()
                .filter(|(t, _)| t.abs() < 2.0)
                .map(|(t, s)| (t - s).abs())
                .collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        assert!(
            mean_dev(&bad_qq) > 1.5 * mean_dev(&good_qq),
            "bad {} vs good {}",
            mean_dev(&bad_qq),
            mean_dev(&good_qq)
        );
        // The link misfit also shows up as a KS rejection of the reference
        // distribution while the well-specified fit passes.
        let bad_res = surrogate_residuals(&fit_bad, &ds_bad, 23, 1).unwrap();
        let good_res = surrogate_residuals(&fit_good, &ds_good, 23, 1).unwrap();
        let crit = ks_critical(4000, 0.01);
        assert!(ks_statistic(&bad_res[0].residuals, phi_oracle) > crit);
        assert!(ks_statistic(&good_res[0].residuals, phi_oracle) < crit);
    }

    #[test]
    fn trend_bins_detect_heteroscedastic_truth() {
        // Generate with variance heterogeneity, fit the homoscedastic model:
        // the bin standard deviations trend with the covariate.
        let k = 5;
        let vh_spec = ModelSpec::new(Family::Cumulative, Link::Probit, false, true, k).unwrap();
        let vh_params = reference_params().with_gamma(0.45);
        let ims = log_spaced_ims(0.05, 2.0, 10_000);
        let ds = simulate_dataset(&vh_spec, &vh_params, &ims, 29).unwrap();
        let fit = fit_mle(&reference_spec(), &ds, FitOptions::default()).unwrap();
        let reps = surrogate_residuals(&fit, &ds, 31, 1).unwrap();
        let trend = covariate_trend(&reps[0], &ds, 10).unwrap();
        // OLS slope of bin sd against bin center must be clearly positive.
        let n = trend.len() as f64;
        let cb = trend.iter().map(|b| b.center).sum::<f64>() / n;
        let sb = trend.iter().map(|b| b.sd_residual).sum::<f64>() / n;
        let slope: f64 = trend
            .iter()
            .map(|b| (b.center - cb) * (b.sd_residual - sb))
            .sum::<f64>()
            / trend
                .iter()
                .map(|b| (b.center - cb) * (b.center - cb))
                .sum::<f64>();
        assert!(slope > 0.02, "sd trend slope = {slope}");
        assert!(
            trend.last().unwrap().sd_residual > trend[0].sd_residual,
            "sd must grow across bins"
        );

        // Null case: bin means within 3 sd/sqrt(count).
        let (fit0, ds0) = fitted_pair(10_000, 37);
        let reps0 = surrogate_residuals(&fit0, &ds0, 41, 1).unwrap();
        for b in covariate_trend(&reps0[0], &ds0, 10).unwrap() {
            assert!(
                b.mean_residual.abs() <= 3.0 * b.sd_residual / (b.count as f64).sqrt(),
                "bin at {}: mean {}",
                b.center,
                b.mean_residual
            );
        }

        // Constant residuals give zero sd in every bin.
        let constant = SurrogateResiduals {
            residuals: vec![0.7; ds0.n()],
            replicate: 0,
            seed: 0,
        };
        for b in covariate_trend(&constant, &ds0, 10).unwrap() {
            assert!(b.sd_residual.abs() < 1e-12);
        }

        // Error paths.
        assert!(covariate_trend(&reps0[0], &ds0, 1).is_err());
        let small = simulate_dataset(&reference_spec(), &reference_params(), &[0.3; 5], 1).unwrap();
        let r_small = SurrogateResiduals {
            residuals: vec![0.0; 5],
            replicate: 0,
            seed: 0,
        };
        assert!(covariate_trend(&r_small, &small, 10).is_err());
    }

    #[test]
    fn d_check_is_null_under_shared_slope_and_detects_two_regimes() {
        // Null: single shared beta.
        let ims = log_spaced_ims(0.05, 2.0, 442);
        let ds = simulate_dataset(&reference_spec(), &reference_params(), &ims, 43).unwrap();
        let split = CategorySplit::default_for_k5();
        let null = parallel_check(&ds, split, 47, DCheckMode::Sampled).unwrap();
        assert!(
            null.slope.abs() <= 3.0 * null.slope_se,
            "null slope {} (se {})",
            null.slope,
            null.slope_se
        );

        // Power: two-regime generator via the gated cumulative+cs model,
        // slopes 1.0 for low cuts and 1.5 for high cuts (gap 0.5).
        let gen = ModelSpec::cumulative_with_cs(Link::Probit, false, 5).unwrap();
        let gen_params = ParamSet {
            tau: vec![-1.6, -1.0, -0.1, 0.6],
            beta: Slope::PerCategory(vec![1.0, 1.0, 1.5, 1.5]),
            gamma: None,
        };
        let ds2 = simulate_dataset(&gen, &gen_params, &ims, 7).unwrap();
        let power = parallel_check(&ds2, split, 2007, DCheckMode::Sampled).unwrap();
        assert!(power.p_value < 0.01, "p = {}", power.p_value);
        assert!(
            power.beta_low < power.beta_high,
            "regimes ordered as generated"
        );

        // Var(D) ~ 2 under the null at large n.
        let big = simulate_dataset(
            &reference_spec(),
            &reference_params(),
            &log_spaced_ims(0.05, 2.0, 10_000),
            57,
        )
        .unwrap();
        let vd = parallel_check(&big, split, 59, DCheckMode::Sampled).unwrap();
        assert!((vd.var_d - 2.0).abs() < 0.2, "var(D) = {}", vd.var_d);

        // Expectation mode: D is exactly (beta_low - beta_high) x.
        let exp_mode = parallel_check(&ds, split, 61, DCheckMode::Expectation).unwrap();
        for (x, d) in exp_mode.x.iter().zip(&exp_mode.d) {
            assert!((d - (exp_mode.beta_low - exp_mode.beta_high) * x).abs() < 1e-12);
        }
    }

    #[test]
    fn split_validation() {
        let ims = log_spaced_ims(0.05, 2.0, 200);
        let ds = simulate_dataset(&reference_spec(), &reference_params(), &ims, 63).unwrap();
        // Disjoint split: no overlap.
        assert!(parallel_check(
            &ds,
            CategorySplit {
                low_end: 2,
                high_start: 3
            },
            1,
            DCheckMode::Sampled
        )
        .is_err());
        // Out-of-range bounds.
        assert!(parallel_check(
            &ds,
            CategorySplit {
                low_end: 5,
                high_start: 3
            },
            1,
            DCheckMode::Sampled
        )
        .is_err());
        assert!(parallel_check(
            &ds,
            CategorySplit {
                low_end: 3,
                high_start: 5
            },
            1,
            DCheckMode::Sampled
        )
        .is_err());
    }
}
