//! Maximum-likelihood fitting: multinomial log-likelihood, quasi-Newton
//! maximization on the unconstrained scale, observed-information standard
//! errors and the classical information criteria.

use crate::data::Dataset;
use crate::error::{Error, Result, Warning};
use crate::model::{
    from_unconstrained, log_prob_of, natural_flat, Family, ModelSpec, ParamSet, Slope,
};
use crate::optim::{self, fd_hessian, minimize};
use nalgebra::DMatrix;

/// ln(1e-300): likelihood floor applied inside the optimizer so a single
/// impossible observation cannot wipe out the objective.
pub const LOG_FLOOR: f64 = -690.77552789821368;

/// Optimizer settings.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Gradient-norm tolerance on the unconstrained scale of the mean
    /// log-likelihood objective.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub spec: ModelSpec,
    pub estimates: ParamSet,
    /// Standard errors on the natural scale, report order.
    pub se: Vec<f64>,
    /// Parameter covariance on the natural scale, report order.
    pub cov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub warnings: Vec<Warning>,
    pub data_fingerprint: u64,
}

impl MleFit {
    pub fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }

    /// Point estimates in report order.
    pub fn estimates_flat(&self) -> Vec<f64> {
        natural_flat(&self.spec, &self.estimates)
    }

    /// z-values estimate/se (reported for every parameter, thresholds
    /// included).
    pub fn z_values(&self) -> Vec<f64> {
        self.estimates_flat()
            .iter()
            .zip(&self.se)
            .map(|(e, s)| if *s > 0.0 { e / s } else { f64::NAN })
            .collect()
    }
}

/// Per-observation log-likelihood contributions ln pi_{y_i}(x_i).
pub fn pointwise_log_likelihood(spec: &ModelSpec, params: &ParamSet, ds: &Dataset) -> Vec<f64> {
    ds.observations()
        .iter()
        .map(|o| log_prob_of(spec, params, o.im.ln(), o.ds.get()))
        .collect()
}

/// Multinomial log-likelihood. Returns -inf (sentinel) if the model assigns
/// probability zero to any observed category.
pub fn log_likelihood(spec: &ModelSpec, params: &ParamSet, ds: &Dataset) -> f64 {
    pointwise_log_likelihood(spec, params, ds).iter().sum()
}

/// Sum with the per-observation floor used by the optimizer and sampler.
pub(crate) fn log_likelihood_floored(spec: &ModelSpec, params: &ParamSet, ds: &Dataset) -> f64 {
    ds.observations()
        .iter()
        .map(|o| log_prob_of(spec, params, o.im.ln(), o.ds.get()).max(LOG_FLOOR))
        .sum()
}

/// Initial unconstrained vector: thresholds from the empirical cumulative
/// frequencies (the exact intercept-only MLE), slopes at zero.
fn initial_vector(spec: &ModelSpec, ds: &Dataset) -> Vec<f64> {
    let cuts = spec.n_cuts();
    let n = ds.n() as f64;
    let eps = (0.5 / n).min(1e-3);
    let mut v = Vec::with_capacity(spec.n_params());
    if spec.family() == Family::Mlogit {
        let counts = ds.counts();
        for k in 1..=cuts {
            v.push(((counts[k] as f64 + 0.5) / (counts[0] as f64 + 0.5)).ln());
        }
        v.resize(v.len() + cuts, 0.0);
        return v;
    }
    let mut freq = ds.empirical_cum_freq();
    let mut prev = 0.0;
    for f in freq.iter_mut() {
        *f = f.clamp(eps, 1.0 - eps).max(prev + 1e-6);
        prev = *f;
    }
    let tau: Vec<f64> = freq
        .iter()
        .map(|&p| {
            spec.link()
                .quantile(p.min(1.0 - 1e-12))
                .expect("clamped into (0,1)")
        })
        .collect();
    v.push(tau[0]);
    for w in tau.windows(2) {
        v.push((w[1] - w[0]).max(1e-6).ln());
    }
    let n_slopes = if spec.category_specific() { cuts } else { 1 };
    v.resize(v.len() + n_slopes, 0.0);
    if spec.variance_heterogeneity() {
        v.push(0.0);
    }
    v
}

/// Jacobian of the natural parameters with respect to the unconstrained
/// vector, used to map the covariance onto the reporting scale.
fn natural_jacobian(spec: &ModelSpec, v: &[f64]) -> DMatrix<f64> {
    let p = spec.n_params();
    let mut j = DMatrix::zeros(p, p);
    if spec.family() == Family::Mlogit {
        return DMatrix::identity(p, p);
    }
    let cuts = spec.n_cuts();
    for k in 0..cuts {
        j[(k, 0)] = 1.0;
        for d in 1..=k {
            j[(k, d)] = v[d].exp();
        }
    }
    for i in cuts..p {
        j[(i, i)] = 1.0;
    }
    j
}

fn check_preconditions(spec: &ModelSpec, ds: &Dataset) -> Result<()> {
    if ds.k() != spec.k() {
        return Err(Error::invalid(format!(
            "dataset has K = {}, spec has K = {}",
            ds.k(),
            spec.k()
        )));
    }
    if ds.n() < spec.n_params() {
        return Err(Error::invalid(format!(
            "need at least {} observations for {} parameters, got {}",
            spec.n_params(),
            spec.n_params(),
            ds.n()
        )));
    }
    if ds.n_observed_categories() < 2 {
        return Err(Error::invalid(
            "need at least 2 distinct observed categories",
        ));
    }
    Ok(())
}

fn zero_count_warnings(ds: &Dataset) -> Vec<Warning> {
    ds.counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(j, _)| Warning::ZeroCountCategory { category: j + 1 })
        .collect()
}

/// Fit a model by maximum likelihood.
///
/// Threshold ordering is enforced by the log-increment reparameterization,
/// the optimizer objective is the mean negative log-likelihood (so the
/// gradient tolerance does not scale with n), and the covariance is the
/// inverse of the finite-difference observed information at the optimum.
/// Non-convergence yields `converged = false` with diagnostics rather than
/// an error; a singular information matrix is an error naming the weakly
/// identified parameters unless it is explained by zero-count categories, in
/// which case a pseudo-inverse is used and a warning attached.
pub fn fit_mle(spec: &ModelSpec, ds: &Dataset, opts: FitOptions) -> Result<MleFit> {
    check_preconditions(spec, ds)?;
    let mut warnings = zero_count_warnings(ds);

    let n = ds.n() as f64;
    let objective = |v: &[f64]| {
        if v.iter().any(|x| !x.is_finite()) {
            return f64::INFINITY;
        }
        let params = from_unconstrained(spec, v);
        -log_likelihood_floored(spec, &params, ds) / n
    };

    let init = initial_vector(spec, ds);
    let res = minimize(&objective, &init, opts.tol, opts.max_iter);
    let estimates = from_unconstrained(spec, &res.x);
    let loglik = log_likelihood(spec, &estimates, ds);

    let floored = pointwise_log_likelihood(spec, &estimates, ds)
        .iter()
        .filter(|&&lp| lp < LOG_FLOOR)
        .count();
    if floored > 0 {
        warnings.push(Warning::LogFloor {
            observations: floored,
        });
    }

    // Observed information of the summed log-likelihood.
    let h_mean = fd_hessian(&objective, &res.x, optim::HESS_STEP);
    let p = spec.n_params();
    let mut info = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            info[(i, j)] = h_mean[i][j] * n;
        }
    }
    let cov_unc = invert_information(spec, &info, ds.n(), res.f, &mut warnings)?;
    let jac = natural_jacobian(spec, &res.x);
    let cov_nat = &jac * cov_unc * jac.transpose();
    let se: Vec<f64> = (0..p).map(|i| cov_nat[(i, i)].max(0.0).sqrt()).collect();
    let cov = (0..p)
        .map(|i| (0..p).map(|j| cov_nat[(i, j)]).collect())
        .collect();

    Ok(MleFit {
        spec: *spec,
        estimates,
        se,
        cov,
        loglik,
        n_params: p,
        n_obs: ds.n(),
        converged: res.converged,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        warnings,
        data_fingerprint: ds.fingerprint(),
    })
}

fn invert_information(
    spec: &ModelSpec,
    info: &DMatrix<f64>,
    n_obs: usize,
    f_mean: f64,
    warnings: &mut Vec<Warning>,
) -> Result<DMatrix<f64>> {
    let p = info.nrows();
    let eig = nalgebra::SymmetricEigen::new(info.clone());
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    // Curvature below the finite-difference measurement resolution counts as
    // zero: second differences of the summed objective carry rounding of
    // order n * eps * (1 + |f|) / h^2.
    let noise_floor = n_obs as f64 * 100.0 * f64::EPSILON * (1.0 + f_mean.abs())
        / (optim::HESS_STEP * optim::HESS_STEP);
    let cut = noise_floor.max(1e-8 * max_eig.max(1e-300));
    let weakly_identified: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] <= cut).collect();
    if weakly_identified.is_empty() {
        if let Some(chol) = info.clone().cholesky() {
            return Ok(chol.inverse());
        }
    }

    // Split the near-null directions into threshold-gap components (the
    // log-increment coordinates, which collapse when a fit lands on the
    // ordering boundary) and structural components (tau_1, slopes, gamma).
    let names = spec.param_names();
    let gap_range = if spec.family() == Family::Mlogit {
        0..0
    } else {
        1..spec.n_cuts()
    };
    let mut structural = false;
    let mut weak_names: Vec<String> = Vec::new();
    for &col in &weakly_identified {
        let mut gap_mass = 0.0;
        for row in 0..p {
            let w = eig.eigenvectors[(row, col)].powi(2);
            if gap_range.contains(&row) {
                gap_mass += w;
            }
            if eig.eigenvectors[(row, col)].abs() > 0.4 && !weak_names.contains(&names[row]) {
                weak_names.push(names[row].clone());
            }
        }
        if gap_mass < 0.5 {
            structural = true;
        }
    }
    if weak_names.is_empty() {
        weak_names = names.clone();
    }
    let zero_count = warnings
        .iter()
        .any(|w| matches!(w, Warning::ZeroCountCategory { .. }));
    if structural && !zero_count {
        return Err(Error::numerical(format!(
            "singular observed information; weakly identified parameters: {}",
            weak_names.join(", ")
        )));
    }
    // Boundary or zero-count degeneracy: pseudo-invert and warn.
    warnings.push(Warning::PseudoInverse { params: weak_names });
    let floor = cut.max(1e-300);
    let mut cov = DMatrix::zeros(p, p);
    for k in 0..p {
        let lambda = eig.eigenvalues[k].max(floor);
        let v = eig.eigenvectors.column(k);
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] += v[i] * v[j] / lambda;
            }
        }
    }
    Ok(cov)
}

/// Intercept-only fit of the plain counterpart of `spec` (beta = 0 fixed,
/// no scale equation). The thresholds are the exact analytic MLE.
pub fn fit_null(spec: &ModelSpec, ds: &Dataset) -> Result<MleFit> {
    if ds.k() != spec.k() {
        return Err(Error::invalid("dataset K does not match spec"));
    }
    let plain = match spec.family() {
        Family::Mlogit => *spec,
        f => ModelSpec::new(f, spec.link(), false, false, spec.k())?,
    };
    let warnings = zero_count_warnings(ds);
    let cuts = plain.n_cuts();
    let estimates = if plain.family() == Family::Mlogit {
        let counts = ds.counts();
        let a: Vec<f64> = (1..=cuts)
            .map(|k| ((counts[k] as f64 + 0.5) / (counts[0] as f64 + 0.5)).ln())
            .collect();
        ParamSet {
            tau: a,
            beta: Slope::PerCategory(vec![0.0; cuts]),
            gamma: None,
        }
    } else {
        let n = ds.n() as f64;
        let eps = (0.5 / n).min(1e-3);
        let mut freq = ds.empirical_cum_freq();
        let mut prev = 0.0;
        for f in freq.iter_mut() {
            *f = f.clamp(eps, 1.0 - eps).max(prev + 1e-6);
            prev = *f;
        }
        let tau: Vec<f64> = freq
            .iter()
            .map(|&p| plain.link().quantile(p.min(1.0 - 1e-12)).unwrap())
            .collect();
        ParamSet::shared(tau, 0.0)
    };
    let loglik = log_likelihood(&plain, &estimates, ds);
    let p = plain.n_params();
    Ok(MleFit {
        spec: plain,
        estimates,
        se: vec![0.0; p],
        cov: vec![vec![0.0; p]; p],
        loglik,
        n_params: cuts,
        n_obs: ds.n(),
        converged: true,
        iterations: 0,
        grad_norm: 0.0,
        warnings,
        data_fingerprint: ds.fingerprint(),
    })
}

/// Classical fit indices relative to the intercept-only model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct InfoCriteria {
    pub aic: f64,
    pub bic: f64,
    pub mcfadden_r2: f64,
    pub coxsnell_r2: f64,
}

/// AIC, BIC and pseudo-R2 statistics. `null_fit` must be an intercept-only
/// fit of the same dataset.
pub fn info_criteria(fit: &MleFit, null_fit: &MleFit) -> Result<InfoCriteria> {
    if fit.data_fingerprint != null_fit.data_fingerprint {
        return Err(Error::invalid("fits were computed on different datasets"));
    }
    if !fit.converged || !null_fit.converged {
        return Err(Error::invalid("both fits must have converged"));
    }
    let is_null = match &null_fit.estimates.beta {
        Slope::Shared(b) => *b == 0.0,
        Slope::PerCategory(v) => v.iter().all(|&b| b == 0.0),
    } && null_fit.estimates.gamma.is_none();
    if !is_null {
        return Err(Error::invalid("null_fit is not an intercept-only fit"));
    }
    let n = fit.n_obs as f64;
    let p = fit.n_params as f64;
    Ok(InfoCriteria {
        aic: -2.0 * fit.loglik + 2.0 * p,
        bic: -2.0 * fit.loglik + p * n.ln(),
        mcfadden_r2: 1.0 - fit.loglik / null_fit.loglik,
        coxsnell_r2: 1.0 - (2.0 * (null_fit.loglik - fit.loglik) / n).exp(),
    })
}

/// Precondition checks shared with the Bayesian module.
pub(crate) fn model_checks(spec: &ModelSpec, ds: &Dataset) -> Result<()> {
    check_preconditions(spec, ds)
}

/// Unconstrained starting vector shared with the Bayesian module.
pub(crate) fn mle_style_init(spec: &ModelSpec, ds: &Dataset) -> Vec<f64> {
    initial_vector(spec, ds)
}
