//! Command implementations.

use crate::output::{
    config_hash, emit, print_estimate_table, resolve_out_dir, write_csv, write_json, ENGINE_VERSION,
};
use crate::{CliError, Command, GridArgs, McmcArgs};
use fragfit_core::bayes::{convergence_stats, fragility_bands, sample_posterior};
use fragfit_core::diagnostics::{
    covariate_trend, parallel_check, qq_reference, surrogate_residuals,
};
use fragfit_core::eval::{compare_models, psis_loo, waic_dic, ModelEval, PointwiseLogLik};
use fragfit_core::mle::{fit_mle, fit_null, info_criteria, FitOptions};
use fragfit_core::model::{self, ModelSpec, ParamSet, Slope};
use fragfit_core::{
    analytic, CategorySplit, DCheckMode, Dataset, McmcOptions, PosteriorDraws, Prior,
};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Fit {
            input,
            models,
            mode,
            k,
            seed,
            mcmc,
            out,
        } => cmd_fit(&input, &models, &mode, k, seed, &mcmc, &out),
        Command::Compare {
            input,
            models,
            k,
            seed,
            mcmc,
            out,
        } => cmd_compare(&input, &models, k, seed, &mcmc, &out),
        Command::Diagnose {
            input,
            model,
            k,
            seed,
            replicates,
            bins,
            low_end,
            high_start,
            out,
        } => cmd_diagnose(
            &input, &model, k, seed, replicates, bins, low_end, high_start, &out,
        ),
        Command::Curves {
            input,
            model,
            mode,
            k,
            seed,
            mcmc,
            grid,
            level,
            convention,
            out,
        } => cmd_curves(
            &input,
            &model,
            &mode,
            k,
            seed,
            &mcmc,
            &grid,
            level,
            &convention,
            &out,
        ),
        Command::Simulate {
            model,
            k,
            params,
            grid,
            replicate,
            seed,
            out,
        } => cmd_simulate(&model, k, &params, &grid, replicate, seed, &out),
        Command::Analytic {
            config,
            grid,
            seed,
            out,
        } => cmd_analytic(&config, &grid, seed, &out),
    }
}

fn parse_models(arg: &str, k: usize) -> Result<Vec<ModelSpec>, CliError> {
    if arg.trim() == "all" {
        return Ok(ModelSpec::catalog(k));
    }
    arg.split(',')
        .map(|name| ModelSpec::parse(name.trim(), k).map_err(|e| CliError::usage(e.to_string())))
        .collect()
}

fn parse_grid(grid: &GridArgs) -> Result<Vec<f64>, CliError> {
    let ims: Vec<f64> = if let Some(list) = &grid.ims {
        list.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("cannot parse im '{s}'")))
            })
            .collect::<Result<_, _>>()?
    } else if let Some(spec) = &grid.grid {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::usage("grid must be start:stop:count"));
        }
        let start: f64 = parts[0]
            .parse()
            .map_err(|_| CliError::usage("bad grid start"))?;
        let stop: f64 = parts[1]
            .parse()
            .map_err(|_| CliError::usage("bad grid stop"))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| CliError::usage("bad grid count"))?;
        if count < 2 || !(stop > start) {
            return Err(CliError::usage("grid needs count >= 2 and stop > start"));
        }
        (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect()
    } else {
        return Err(CliError::usage("im grid is empty: pass --grid or --ims"));
    };
    if ims.is_empty() {
        return Err(CliError::usage("im grid is empty"));
    }
    if ims.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(CliError::usage("im grid values must be positive"));
    }
    Ok(ims)
}

fn mcmc_options(mcmc: &McmcArgs, seed: u64) -> McmcOptions {
    McmcOptions {
        chains: mcmc.chains,
        warmup: mcmc.warmup,
        iters: mcmc.iters,
        seed,
    }
}

fn prior_of(mcmc: &McmcArgs) -> Result<Prior, CliError> {
    Prior::new(0.0, mcmc.prior_sd).map_err(CliError::from)
}

fn file_stem(name: &str) -> String {
    name.replace('+', "-")
}

#[derive(Serialize)]
struct ParamRow {
    term: String,
    estimate: f64,
    std_error: f64,
    z_value: f64,
}

#[derive(Serialize)]
struct BayesParamRow {
    term: String,
    estimate: f64,
    std_error: f64,
    conf_low: f64,
    conf_high: f64,
    rhat: f64,
    ess: f64,
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitConfig<'a> {
    command: &'static str,
    input: &'a str,
    models: Vec<String>,
    mode: &'a str,
    k: usize,
    seed: Option<u64>,
    chains: usize,
    warmup: usize,
    iters: usize,
    prior_sd: f64,
}

fn cmd_fit(
    input: &str,
    models: &str,
    mode: &str,
    k: usize,
    seed: Option<u64>,
    mcmc: &McmcArgs,
    out: &Option<String>,
) -> Result<(), CliError> {
    if mode != "mle" && mode != "bayes" {
        return Err(CliError::usage(format!(
            "unknown mode '{mode}' (mle|bayes)"
        )));
    }
    let specs = parse_models(models, k)?;
    if mode == "bayes" && seed.is_none() {
        return Err(CliError::usage("--seed is mandatory for bayes mode"));
    }
    let ds = Dataset::load_csv(input, k)?;
    let dir = resolve_out_dir(out)?;
    let config = FitConfig {
        command: "fit",
        input,
        models: specs.iter().map(|s| s.name()).collect(),
        mode,
        k,
        seed,
        chains: mcmc.chains,
        warmup: mcmc.warmup,
        iters: mcmc.iters,
        prior_sd: mcmc.prior_sd,
    };
    let hash = config_hash(&config);

    #[derive(Serialize)]
    struct SummaryEntry {
        model: String,
        status: String,
        warnings: Vec<String>,
    }
    let mut summary = Vec::new();
    let mut any_error = false;

    if mode == "mle" {
        let null_fit = fit_null(&specs[0], &ds).map_err(CliError::from)?;
        let results: Vec<(ModelSpec, fragfit_core::Result<fragfit_core::MleFit>)> = specs
            .par_iter()
            .map(|spec| (*spec, fit_mle(spec, &ds, FitOptions::default())))
            .collect();
        for (spec, res) in results {
            let name = spec.name();
            match res {
                Ok(fit) => {
                    let ic = info_criteria(&fit, &null_fit).map_err(CliError::from)?;
                    let rows: Vec<ParamRow> = fit
                        .param_names()
                        .into_iter()
                        .zip(fit.estimates_flat())
                        .zip(fit.se.iter())
                        .zip(fit.z_values())
                        .map(|(((term, estimate), &std_error), z_value)| ParamRow {
                            term,
                            estimate,
                            std_error,
                            z_value,
                        })
                        .collect();
                    print_estimate_table(
                        &name,
                        "mle",
                        &rows
                            .iter()
                            .map(|r| (r.term.clone(), r.estimate, r.std_error, r.z_value))
                            .collect::<Vec<_>>(),
                    );
                    #[derive(Serialize)]
                    struct FitReport<'a> {
                        model: String,
                        mode: &'static str,
                        n_obs: usize,
                        n_params: usize,
                        params: &'a [ParamRow],
                        cov: &'a [Vec<f64>],
                        loglik: f64,
                        aic: f64,
                        bic: f64,
                        mcfadden_r2: f64,
                        coxsnell_r2: f64,
                        converged: bool,
                        iterations: usize,
                        grad_norm: f64,
                        warnings: &'a [fragfit_core::Warning],
                    }
                    write_json(
                        &dir.join(format!("fit_{}.json", file_stem(&name))),
                        &hash,
                        &FitReport {
                            model: name.clone(),
                            mode: "mle",
                            n_obs: fit.n_obs,
                            n_params: fit.n_params,
                            params: &rows,
                            cov: &fit.cov,
                            loglik: fit.loglik,
                            aic: ic.aic,
                            bic: ic.bic,
                            mcfadden_r2: ic.mcfadden_r2,
                            coxsnell_r2: ic.coxsnell_r2,
                            converged: fit.converged,
                            iterations: fit.iterations,
                            grad_norm: fit.grad_norm,
                            warnings: &fit.warnings,
                        },
                    )?;
                    summary.push(SummaryEntry {
                        model: name,
                        status: if fit.converged { "ok" } else { "not-converged" }.into(),
                        warnings: fit.warnings.iter().map(|w| w.to_string()).collect(),
                    });
                }
                Err(e) => {
                    any_error = true;
                    summary.push(SummaryEntry {
                        model: name,
                        status: format!("error: {e}"),
                        warnings: vec![],
                    });
                }
            }
        }
    } else {
        let prior = prior_of(mcmc)?;
        let opts = mcmc_options(mcmc, seed.unwrap());
        let results: Vec<(ModelSpec, fragfit_core::Result<PosteriorDraws>)> = specs
            .par_iter()
            .map(|spec| (*spec, sample_posterior(spec, &ds, &prior, &opts)))
            .collect();
        for (spec, res) in results {
            let name = spec.name();
            match res {
                Ok(draws) => {
                    write_bayes_report(&dir, &hash, &name, &draws, &ds)?;
                    write_draws_csv(&dir, &hash, &name, &draws)?;
                    summary.push(SummaryEntry {
                        model: name,
                        status: "ok".into(),
                        warnings: draws.warnings.iter().map(|w| w.to_string()).collect(),
                    });
                }
                Err(e) => {
                    any_error = true;
                    summary.push(SummaryEntry {
                        model: name,
                        status: format!("error: {e}"),
                        warnings: vec![],
                    });
                }
            }
        }
    }

    #[derive(Serialize)]
    struct Summary {
        input: String,
        mode: String,
        results: Vec<SummaryEntry>,
    }
    write_json(
        &dir.join("summary.json"),
        &hash,
        &Summary {
            input: input.to_string(),
            mode: mode.to_string(),
            results: summary,
        },
    )?;
    if any_error {
        return Err(CliError::compute(
            "one or more fits failed; see summary.json",
        ));
    }
    Ok(())
}

fn write_bayes_report(
    dir: &Path,
    hash: &str,
    name: &str,
    draws: &PosteriorDraws,
    ds: &Dataset,
) -> Result<(), CliError> {
    let stats = convergence_stats(draws).map_err(CliError::from)?;
    let mean = draws.posterior_mean();
    let sd = draws.posterior_sd();
    let names = draws.param_names();
    let rows: Vec<BayesParamRow> = (0..draws.n_params)
        .map(|p| BayesParamRow {
            term: names[p].clone(),
            estimate: mean[p],
            std_error: sd[p],
            conf_low: draws.quantile(p, 0.025),
            conf_high: draws.quantile(p, 0.975),
            rhat: stats[p].rhat,
            ess: stats[p].ess,
        })
        .collect();
    print_estimate_table(
        name,
        "bayes",
        &rows
            .iter()
            .map(|r| {
                (
                    r.term.clone(),
                    r.estimate,
                    r.std_error,
                    r.estimate / r.std_error,
                )
            })
            .collect::<Vec<_>>(),
    );
    let pll = PointwiseLogLik::from_stored(draws).map_err(CliError::from)?;
    let w = waic_dic(&pll, draws, ds).map_err(CliError::from)?;
    #[derive(Serialize)]
    struct BayesReport<'a> {
        model: &'a str,
        mode: &'static str,
        n_obs: usize,
        n_params: usize,
        chains: usize,
        iters: usize,
        seed: u64,
        params: &'a [BayesParamRow],
        accept_rate: &'a [f64],
        lppd: f64,
        p_waic: f64,
        waic: f64,
        dic: f64,
        p_dic: f64,
        warnings: &'a [fragfit_core::Warning],
    }
    write_json(
        &dir.join(format!("fit_{}.json", file_stem(name))),
        hash,
        &BayesReport {
            model: name,
            mode: "bayes",
            n_obs: ds.n(),
            n_params: draws.n_params,
            chains: draws.chains,
            iters: draws.iters,
            seed: draws.seed,
            params: &rows,
            accept_rate: &draws.accept_rate,
            lppd: w.lppd,
            p_waic: w.p_waic,
            waic: w.waic,
            dic: w.dic,
            p_dic: w.p_dic,
            warnings: &draws.warnings,
        },
    )
}

fn write_draws_csv(
    dir: &Path,
    hash: &str,
    name: &str,
    draws: &PosteriorDraws,
) -> Result<(), CliError> {
    let names = draws.param_names();
    let mut rows = Vec::with_capacity(draws.n_draws() * draws.n_params);
    for c in 0..draws.chains {
        for i in 0..draws.iters {
            let v = draws.draw_at(c, i);
            for (p, term) in names.iter().enumerate() {
                rows.push(format!("{},{},{},{}", c + 1, i + 1, term, v[p]));
            }
        }
    }
    write_csv(
        &dir.join(format!("draws_{}.csv", file_stem(name))),
        hash,
        "chain,iter,param,value",
        &rows,
    )
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CompareConfig<'a> {
    command: &'static str,
    input: &'a str,
    models: Vec<String>,
    k: usize,
    seed: u64,
    chains: usize,
    warmup: usize,
    iters: usize,
    prior_sd: f64,
}

fn cmd_compare(
    input: &str,
    models: &str,
    k: usize,
    seed: u64,
    mcmc: &McmcArgs,
    out: &Option<String>,
) -> Result<(), CliError> {
    let specs = parse_models(models, k)?;
    if specs.len() < 2 {
        return Err(CliError::usage("compare needs at least 2 models"));
    }
    let ds = Dataset::load_csv(input, k)?;
    let dir = resolve_out_dir(out)?;
    let config = CompareConfig {
        command: "compare",
        input,
        models: specs.iter().map(|s| s.name()).collect(),
        k,
        seed,
        chains: mcmc.chains,
        warmup: mcmc.warmup,
        iters: mcmc.iters,
        prior_sd: mcmc.prior_sd,
    };
    let hash = config_hash(&config);
    let prior = prior_of(mcmc)?;
    let opts = mcmc_options(mcmc, seed);

    let evals: Vec<ModelEval> = specs
        .par_iter()
        .map(|spec| -> fragfit_core::Result<ModelEval> {
            let draws = sample_posterior(spec, &ds, &prior, &opts)?;
            let pll = PointwiseLogLik::from_stored(&draws)?;
            let loo = psis_loo(&pll)?;
            Ok(ModelEval {
                name: spec.name(),
                n_params: spec.n_params(),
                pointwise_elpd: loo.pointwise_elpd,
                pareto_k: loo.pareto_k,
            })
        })
        .collect::<fragfit_core::Result<Vec<_>>>()
        .map_err(CliError::from)?;
    let rows = compare_models(&evals).map_err(CliError::from)?;

    emit(&format!(
        "{:<12} {:>8} {:>10} {:>10} {:>8} {:>5}",
        "model", "n_params", "elpd_loo", "elpd_diff", "se_diff", "rank"
    ));
    for r in &rows {
        emit(&format!(
            "{:<12} {:>8} {:>10.1} {:>10.1} {:>8.1} {:>5}",
            r.model, r.n_params, r.elpd_loo, r.elpd_diff, r.se_diff, r.rank
        ));
    }

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.model, r.n_params, r.elpd_loo, r.elpd_diff, r.se_diff, r.rank
            )
        })
        .collect();
    write_csv(
        &dir.join("comparison.csv"),
        &hash,
        "model,n_params,elpd_loo,elpd_diff,se_diff,rank",
        &csv_rows,
    )?;
    #[derive(Serialize)]
    struct CompareReport<'a> {
        input: &'a str,
        n_obs: usize,
        rows: &'a [fragfit_core::ComparisonRow],
    }
    write_json(
        &dir.join("comparison.json"),
        &hash,
        &CompareReport {
            input,
            n_obs: ds.n(),
            rows: &rows,
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DiagnoseConfig<'a> {
    command: &'static str,
    input: &'a str,
    model: &'a str,
    k: usize,
    seed: u64,
    replicates: usize,
    bins: usize,
    low_end: usize,
    high_start: usize,
}

#[allow(clippy::too_many_arguments)]
fn cmd_diagnose(
    input: &str,
    model: &str,
    k: usize,
    seed: u64,
    replicates: usize,
    bins: usize,
    low_end: usize,
    high_start: usize,
    out: &Option<String>,
) -> Result<(), CliError> {
    let spec = ModelSpec::parse(model, k).map_err(|e| CliError::usage(e.to_string()))?;
    if spec.family() != fragfit_core::Family::Cumulative {
        return Err(CliError::usage(
            "diagnose is defined for the cumulative family (surrogate residuals \
             require a single latent variable)",
        ));
    }
    let ds = Dataset::load_csv(input, k)?;
    let dir = resolve_out_dir(out)?;
    let config = DiagnoseConfig {
        command: "diagnose",
        input,
        model,
        k,
        seed,
        replicates,
        bins,
        low_end,
        high_start,
    };
    let hash = config_hash(&config);

    let fit = fit_mle(&spec, &ds, FitOptions::default()).map_err(CliError::from)?;
    let reps = surrogate_residuals(&fit, &ds, seed, replicates).map_err(CliError::from)?;

    let mut rows = Vec::new();
    for rep in &reps {
        for (i, (o, r)) in ds.observations().iter().zip(&rep.residuals).enumerate() {
            rows.push(format!(
                "{},{},{},{},{}",
                i,
                o.im.ln(),
                o.ds.get(),
                r,
                rep.replicate
            ));
        }
    }
    write_csv(
        &dir.join("residuals.csv"),
        &hash,
        "index,ln_im,ds,residual,replicate",
        &rows,
    )?;

    let qq = qq_reference(&reps[0], spec.link()).map_err(CliError::from)?;
    let qq_rows: Vec<String> = qq.iter().map(|(t, s)| format!("{t},{s}")).collect();
    write_csv(
        &dir.join("qq.csv"),
        &hash,
        "theoretical_quantile,sample_quantile",
        &qq_rows,
    )?;

    let trend = covariate_trend(&reps[0], &ds, bins).map_err(CliError::from)?;
    let trend_rows: Vec<String> = trend
        .iter()
        .map(|b| {
            format!(
                "{},{},{},{}",
                b.center, b.mean_residual, b.sd_residual, b.count
            )
        })
        .collect();
    write_csv(
        &dir.join("trend.csv"),
        &hash,
        "bin_center,mean_residual,sd_residual,count",
        &trend_rows,
    )?;

    let split = CategorySplit {
        low_end,
        high_start,
    };
    let dcheck =
        parallel_check(&ds, split, seed ^ 0x5EED, DCheckMode::Sampled).map_err(CliError::from)?;
    let d_rows: Vec<String> = dcheck
        .x
        .iter()
        .zip(&dcheck.d)
        .map(|(x, d)| format!("{x},{d}"))
        .collect();
    write_csv(&dir.join("dcheck.csv"), &hash, "ln_im,D", &d_rows)?;

    #[derive(Serialize)]
    struct DiagnoseSummary<'a> {
        model: &'a str,
        n_obs: usize,
        slope: f64,
        slope_se: f64,
        t_value: f64,
        p_value: f64,
        var_d: f64,
        beta_low: f64,
        beta_high: f64,
        fit_warnings: &'a [fragfit_core::Warning],
    }
    write_json(
        &dir.join("diagnose_summary.json"),
        &hash,
        &DiagnoseSummary {
            model,
            n_obs: ds.n(),
            slope: dcheck.slope,
            slope_se: dcheck.slope_se,
            t_value: dcheck.t_value,
            p_value: dcheck.p_value,
            var_d: dcheck.var_d,
            beta_low: dcheck.beta_low,
            beta_high: dcheck.beta_high,
            fit_warnings: &fit.warnings,
        },
    )?;
    emit(&format!(
        "D-check: slope {:.4} (se {:.4}), t = {:.3}, p = {:.4}, Var(D) = {:.3}",
        dcheck.slope, dcheck.slope_se, dcheck.t_value, dcheck.p_value, dcheck.var_d
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CurvesConfig<'a> {
    command: &'static str,
    input: &'a str,
    model: &'a str,
    mode: &'a str,
    k: usize,
    seed: Option<u64>,
    chains: usize,
    warmup: usize,
    iters: usize,
    prior_sd: f64,
    ims: Vec<f64>,
    level: f64,
    convention: &'a str,
}

#[allow(clippy::too_many_arguments)]
fn cmd_curves(
    input: &str,
    model: &str,
    mode: &str,
    k: usize,
    seed: Option<u64>,
    mcmc: &McmcArgs,
    grid: &GridArgs,
    level: f64,
    convention: &str,
    out: &Option<String>,
) -> Result<(), CliError> {
    if mode != "mle" && mode != "bayes" {
        return Err(CliError::usage(format!(
            "unknown mode '{mode}' (mle|bayes)"
        )));
    }
    if convention != "gt" && convention != "geq" {
        return Err(CliError::usage("convention must be gt or geq"));
    }
    if mode == "bayes" && seed.is_none() {
        return Err(CliError::usage("--seed is mandatory for bayes mode"));
    }
    let spec = ModelSpec::parse(model, k).map_err(|e| CliError::usage(e.to_string()))?;
    let ims = parse_grid(grid)?;
    let ds = Dataset::load_csv(input, k)?;
    let dir = resolve_out_dir(out)?;
    let config = CurvesConfig {
        command: "curves",
        input,
        model,
        mode,
        k,
        seed,
        chains: mcmc.chains,
        warmup: mcmc.warmup,
        iters: mcmc.iters,
        prior_sd: mcmc.prior_sd,
        ims: ims.clone(),
        level,
        convention,
    };
    let hash = config_hash(&config);

    // Strict rows (im, k, value) -> optionally shifted to the geq convention:
    // P(DS >= j) = P(DS > j-1), with P(DS >= 1) = 1.
    let shift_geq = |rows: &[(f64, usize, f64)]| -> Vec<(f64, usize, f64)> {
        let mut out = Vec::with_capacity(rows.len() + ims.len());
        for &im in &ims {
            out.push((im, 1, 1.0));
        }
        for &(im, kk, v) in rows {
            out.push((im, kk + 1, v));
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out
    };

    if mode == "mle" {
        let fit = fit_mle(&spec, &ds, FitOptions::default()).map_err(CliError::from)?;
        let table = model::exceedance_curve(&spec, &fit.estimates, &ims).map_err(CliError::from)?;
        let mut exc: Vec<(f64, usize, f64)> = table
            .exceedance
            .iter()
            .map(|r| (r.im, r.k, r.value))
            .collect();
        if convention == "geq" {
            exc = shift_geq(&exc);
        }
        write_csv(
            &dir.join("curves_exceedance.csv"),
            &hash,
            "im,k,exceedance_prob",
            &exc.iter()
                .map(|(im, kk, v)| format!("{im},{kk},{v}"))
                .collect::<Vec<_>>(),
        )?;
        write_csv(
            &dir.join("curves_category.csv"),
            &hash,
            "im,k,category_prob",
            &table
                .category
                .iter()
                .map(|r| format!("{},{},{}", r.im, r.k, r.value))
                .collect::<Vec<_>>(),
        )?;
        #[derive(Serialize)]
        struct CurvesReport<'a> {
            model: &'a str,
            mode: &'a str,
            convention: &'a str,
            estimates: &'a ParamSet,
            ims: &'a [f64],
            exceedance: Vec<(f64, usize, f64)>,
            category: Vec<(f64, usize, f64)>,
        }
        write_json(
            &dir.join("curves.json"),
            &hash,
            &CurvesReport {
                model,
                mode,
                convention,
                estimates: &fit.estimates,
                ims: &ims,
                exceedance: exc,
                category: table
                    .category
                    .iter()
                    .map(|r| (r.im, r.k, r.value))
                    .collect(),
            },
        )?;
    } else {
        let prior = prior_of(mcmc)?;
        let opts = mcmc_options(mcmc, seed.unwrap());
        let draws = sample_posterior(&spec, &ds, &prior, &opts).map_err(CliError::from)?;
        let bands = fragility_bands(&draws, &ims, level).map_err(CliError::from)?;
        let band_rows = |rows: &[fragfit_core::bayes::BandRow], geq: bool| -> Vec<String> {
            let mut out = Vec::new();
            if geq {
                for &im in &ims {
                    for stat in ["median", "lower", "upper"] {
                        out.push(format!("{im},1,{stat},1"));
                    }
                }
            }
            for r in rows {
                let kk = if geq { r.k + 1 } else { r.k };
                out.push(format!("{},{},median,{}", r.im, kk, r.median));
                out.push(format!("{},{},lower,{}", r.im, kk, r.lower));
                out.push(format!("{},{},upper,{}", r.im, kk, r.upper));
            }
            out
        };
        write_csv(
            &dir.join("bands_exceedance.csv"),
            &hash,
            "im,k,stat,value",
            &band_rows(&bands.exceedance, convention == "geq"),
        )?;
        write_csv(
            &dir.join("bands_category.csv"),
            &hash,
            "im,k,stat,value",
            &band_rows(&bands.category, false),
        )?;
        #[derive(Serialize)]
        struct BandsReport<'a> {
            model: &'a str,
            mode: &'a str,
            convention: &'a str,
            level: f64,
            posterior_mean: Vec<f64>,
            param_names: Vec<String>,
            ims: &'a [f64],
            exceedance: &'a [fragfit_core::bayes::BandRow],
            category: &'a [fragfit_core::bayes::BandRow],
        }
        write_json(
            &dir.join("curves.json"),
            &hash,
            &BandsReport {
                model,
                mode,
                convention,
                level,
                posterior_mean: draws.posterior_mean(),
                param_names: draws.param_names(),
                ims: &ims,
                exceedance: &bands.exceedance,
                category: &bands.category,
            },
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct ParamsFile {
    tau: Vec<f64>,
    beta: serde_json::Value,
    #[serde(default)]
    gamma: Option<f64>,
}

fn params_from_file(path: &str, spec: &ModelSpec) -> Result<ParamSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {path}: {e}")))?;
    let pf: ParamsFile = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad params file {path}: {e}")))?;
    let beta = match &pf.beta {
        serde_json::Value::Number(n) => {
            Slope::Shared(n.as_f64().ok_or_else(|| CliError::usage("bad beta"))?)
        }
        serde_json::Value::Array(v) => Slope::PerCategory(
            v.iter()
                .map(|x| x.as_f64().ok_or_else(|| CliError::usage("bad beta entry")))
                .collect::<Result<_, _>>()?,
        ),
        _ => return Err(CliError::usage("beta must be a number or an array")),
    };
    let params = ParamSet {
        tau: pf.tau,
        beta,
        gamma: pf.gamma,
    };
    params
        .validate(spec)
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(params)
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    command: &'static str,
    model: &'a str,
    k: usize,
    params_file: &'a str,
    ims: Vec<f64>,
    replicate: usize,
    seed: u64,
}

fn cmd_simulate(
    model: &str,
    k: usize,
    params_path: &str,
    grid: &GridArgs,
    replicate: usize,
    seed: u64,
    out: &Option<String>,
) -> Result<(), CliError> {
    let spec = ModelSpec::parse(model, k).map_err(|e| CliError::usage(e.to_string()))?;
    let params = params_from_file(params_path, &spec)?;
    let base = parse_grid(grid)?;
    if replicate == 0 {
        return Err(CliError::usage("replicate must be >= 1"));
    }
    let ims: Vec<f64> = base
        .iter()
        .cycle()
        .take(base.len() * replicate)
        .cloned()
        .collect();
    let dir = resolve_out_dir(out)?;
    let config = SimulateConfig {
        command: "simulate",
        model,
        k,
        params_file: params_path,
        ims: ims.clone(),
        replicate,
        seed,
    };
    let hash = config_hash(&config);
    let ds = fragfit_core::simulate_dataset(&spec, &params, &ims, seed).map_err(CliError::from)?;
    let rows: Vec<String> = ds
        .observations()
        .iter()
        .map(|o| format!("{},{}", o.im, o.ds.get()))
        .collect();
    write_csv(&dir.join("simulated.csv"), &hash, "im,ds", &rows)?;
    emit(&format!(
        "wrote {} observations to {}",
        ds.n(),
        dir.join("simulated.csv").display()
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// analytic
// ---------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct AnalyticFile {
    psdm: PsdmFile,
    capacity: Vec<fragfit_core::LimitState>,
    #[serde(default = "default_rho")]
    rho: f64,
}

#[derive(serde::Deserialize)]
struct PsdmFile {
    ln_a0: f64,
    a1: f64,
    beta_d: f64,
}

fn default_rho() -> f64 {
    0.8
}

#[derive(Serialize)]
struct AnalyticConfig<'a> {
    command: &'static str,
    config_file: &'a str,
    ims: Vec<f64>,
    seed: u64,
    rho: f64,
}

fn cmd_analytic(
    config_path: &str,
    grid: &GridArgs,
    seed: u64,
    out: &Option<String>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::usage(format!("cannot read {config_path}: {e}")))?;
    let af: AnalyticFile = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad analytic config {config_path}: {e}")))?;
    let psdm =
        analytic::Psdm::new(af.psdm.ln_a0, af.psdm.a1, af.psdm.beta_d).map_err(CliError::from)?;
    let cap = analytic::CapacityModel::new(af.capacity).map_err(CliError::from)?;
    let ims = parse_grid(grid)?;
    let dir = resolve_out_dir(out)?;
    let config = AnalyticConfig {
        command: "analytic",
        config_file: config_path,
        ims: ims.clone(),
        seed,
        rho: af.rho,
    };
    let hash = config_hash(&config);

    let mut rows = Vec::with_capacity(ims.len() * cap.n_states());
    for &im in &ims {
        for k in 1..=cap.n_states() {
            let p = analytic::closed_form_fragility(&psdm, &cap, im, k).map_err(CliError::from)?;
            rows.push(format!("{im},{k},{p}"));
        }
    }
    write_csv(
        &dir.join("closed_form.csv"),
        &hash,
        "im,k,exceedance_prob",
        &rows,
    )?;

    let ds =
        analytic::sample_damage_states(&psdm, &cap, &ims, af.rho, seed).map_err(CliError::from)?;
    let data_rows: Vec<String> = ds
        .observations()
        .iter()
        .map(|o| format!("{},{}", o.im, o.ds.get()))
        .collect();
    write_csv(&dir.join("sampled.csv"), &hash, "im,ds", &data_rows)?;

    #[derive(Serialize)]
    struct AnalyticReport<'a> {
        psdm: &'a analytic::Psdm,
        capacity: &'a analytic::CapacityModel,
        rho: f64,
        n_sampled: usize,
        k: usize,
    }
    write_json(
        &dir.join("analytic.json"),
        &hash,
        &AnalyticReport {
            psdm: &psdm,
            capacity: &cap,
            rho: af.rho,
            n_sampled: ds.n(),
            k: ds.k(),
        },
    )?;
    emit(&format!(
        "engine v{ENGINE_VERSION}: wrote closed-form curves and {} sampled rows",
        ds.n()
    ));
    Ok(())
}
