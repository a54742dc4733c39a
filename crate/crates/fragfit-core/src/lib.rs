// `!(a < b)` comparisons are NaN guards in validation paths; index loops
// mirror the matrix algebra they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![allow(clippy::excessive_precision, clippy::needless_borrows_for_generic_args)]

//! Seismic fragility curves via ordinal regression.
//!
//! The crate fits fragility models to (intensity measure, damage state)
//! samples with the full ordinal toolkit: Cumulative, Sequential and
//! Adjacent Category families, category-specific effects and variance
//! heterogeneity, under both maximum likelihood and MCMC. It provides
//! surrogate-residual diagnostics, WAIC/DIC/PSIS-LOO model comparison and a
//! demand/capacity sampling pipeline for analytical fragility studies.

pub mod analytic;
pub mod bayes;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod link;
pub mod mle;
pub mod model;
pub mod optim;

#[cfg(test)]
pub(crate) mod testutil;

pub use analytic::{
    closed_form_fragility, fit_psdm, sample_damage_states, CapacityModel, LimitState, Psdm,
};
pub use bayes::{
    convergence_stats, fragility_bands, sample_posterior, sample_prior, ConvStat, FragilityBands,
    McmcOptions, PosteriorDraws, Prior,
};
pub use data::{simulate_dataset, DamageState, Dataset, Observation};
pub use diagnostics::{
    covariate_trend, parallel_check, qq_reference, surrogate_residuals, CategorySplit, DCheck,
    DCheckMode, SurrogateResiduals, TrendBin,
};
pub use error::{Error, Result, Warning};
pub use eval::{
    compare_models, exact_loo_oracle, pointwise_loglik, psis_loo, waic_dic, ComparisonRow,
    ExactLoo, ModelEval, PointwiseLogLik, PsisLoo, WaicDic,
};
pub use link::{truncated_sample, truncated_sample_seeded, Link};
pub use mle::{fit_mle, fit_null, info_criteria, log_likelihood, FitOptions, InfoCriteria, MleFit};
pub use model::{
    category_log_probs, category_probs, exceedance_curve, exceedance_probs, CategoryProbs,
    CurveRow, CurveTable, Family, ModelSpec, ParamSet, Slope,
};
