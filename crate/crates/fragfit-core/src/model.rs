//! Category-probability and fragility-curve laws for the Cumulative,
//! Sequential and Adjacent Category families, their category-specific (CS)
//! and variance-heterogeneity (VH) generalizations, and the multinomial
//! logistic reference model.
//!
//! All product/ratio laws are evaluated in log space and normalized with
//! log-sum-exp, so products of many CDF values cannot underflow to zero
//! probabilities in the tails.

use crate::error::{Error, Result};
use crate::link::Link;

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cumulative,
    Sequential,
    Adjacent,
    Mlogit,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Cumulative => write!(f, "cum"),
            Family::Sequential => write!(f, "seq"),
            Family::Adjacent => write!(f, "acat"),
            Family::Mlogit => write!(f, "mlogit"),
        }
    }
}

/// Identifies one model of the catalog: family x link x {cs, vh} x K.
///
/// Invariants are enforced at construction: `Mlogit` forces the logit link
/// and takes no cs/vh flags, and Cumulative + category-specific effects is
/// only constructible through [`ModelSpec::cumulative_with_cs`] because the
/// construction can produce negative probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ModelSpec {
    family: Family,
    link: Link,
    cs: bool,
    vh: bool,
    k: usize,
}

impl ModelSpec {
    pub fn new(family: Family, link: Link, cs: bool, vh: bool, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("K must be >= 2, got {k}")));
        }
        match family {
            Family::Mlogit => {
                if link != Link::Logit {
                    return Err(Error::invalid("mlogit requires the logit link"));
                }
                if cs || vh {
                    return Err(Error::invalid(
                        "mlogit takes no cs/vh flags; slopes are category-specific by definition",
                    ));
                }
            }
            Family::Cumulative if cs => {
                return Err(Error::invalid(
                    "cumulative + category-specific effects can produce negative probabilities; \
                     use ModelSpec::cumulative_with_cs to opt in",
                ));
            }
            _ => {}
        }
        Ok(ModelSpec {
            family,
            link,
            cs,
            vh,
            k,
        })
    }

    /// Explicit opt-in for the Cumulative model with category-specific
    /// slopes. Probability evaluation errors if any category probability
    /// falls below -1e-12.
    pub fn cumulative_with_cs(link: Link, vh: bool, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("K must be >= 2, got {k}")));
        }
        Ok(ModelSpec {
            family: Family::Cumulative,
            link,
            cs: true,
            vh,
            k,
        })
    }

    /// Parse a catalog name such as `cum`, `seq+vh+cs` or `mlogit`.
    /// The default link is probit (logit for `mlogit`).
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        let mut parts = name.split('+');
        let family = match parts.next().unwrap_or("") {
            "cum" => Family::Cumulative,
            "seq" => Family::Sequential,
            "acat" => Family::Adjacent,
            "mlogit" => Family::Mlogit,
            other => {
                return Err(Error::invalid(format!(
                    "unknown model '{other}'; valid names: {}",
                    Self::catalog_names().join(", ")
                )))
            }
        };
        let (mut cs, mut vh) = (false, false);
        for part in parts {
            match part {
                "cs" => cs = true,
                "vh" => vh = true,
                other => {
                    return Err(Error::invalid(format!(
                        "unknown model flag '+{other}' in '{name}'; valid names: {}",
                        Self::catalog_names().join(", ")
                    )))
                }
            }
        }
        let link = if family == Family::Mlogit {
            Link::Logit
        } else {
            Link::Probit
        };
        Self::new(family, link, cs, vh, k)
    }

    /// Canonical name (`family[+vh][+cs]`).
    pub fn name(&self) -> String {
        let mut s = self.family.to_string();
        if self.vh {
            s.push_str("+vh");
        }
        if self.cs {
            s.push_str("+cs");
        }
        s
    }

    /// The eleven-model catalog, in the standard comparison order.
    pub fn catalog(k: usize) -> Vec<ModelSpec> {
        Self::catalog_names()
            .iter()
            .map(|n| ModelSpec::parse(n, k).expect("catalog names are valid"))
            .collect()
    }

    pub fn catalog_names() -> Vec<&'static str> {
        vec![
            "cum",
            "seq",
            "acat",
            "cum+vh",
            "seq+vh",
            "acat+vh",
            "seq+vh+cs",
            "acat+vh+cs",
            "seq+cs",
            "acat+cs",
            "mlogit",
        ]
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn category_specific(&self) -> bool {
        self.cs
    }

    pub fn variance_heterogeneity(&self) -> bool {
        self.vh
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_cuts(&self) -> usize {
        self.k - 1
    }

    /// Number of free parameters.
    pub fn n_params(&self) -> usize {
        match self.family {
            Family::Mlogit => 2 * (self.k - 1),
            _ => {
                let slopes = if self.cs { self.k - 1 } else { 1 };
                (self.k - 1) + slopes + usize::from(self.vh)
            }
        }
    }

    /// Report-order parameter names on the natural scale.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        match self.family {
            Family::Mlogit => {
                for k in 2..=self.k {
                    names.push(format!("a_{k}"));
                }
                for k in 2..=self.k {
                    names.push(format!("b_{k}"));
                }
            }
            _ => {
                for j in 1..self.k {
                    names.push(format!("tau_{j}"));
                }
                if self.cs {
                    for j in 1..self.k {
                        names.push(format!("beta_{j}"));
                    }
                } else {
                    names.push("beta".to_string());
                }
                if self.vh {
                    names.push("gamma".to_string());
                }
            }
        }
        names
    }
}

/// Location slope: shared across cut-point equations or category-specific.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(untagged)]
pub enum Slope {
    Shared(f64),
    PerCategory(Vec<f64>),
}

impl Slope {
    pub fn at(&self, cut: usize) -> f64 {
        match self {
            Slope::Shared(b) => *b,
            Slope::PerCategory(v) => v[cut],
        }
    }
}

/// Parameters of one model: thresholds, slope(s) and optional scale slope.
///
/// For `Mlogit`, `tau` holds the K-1 intercepts of categories 2..K (category
/// 1 is the reference and no ordering applies) and `beta` must be
/// `PerCategory` with the K-1 slopes.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ParamSet {
    pub tau: Vec<f64>,
    pub beta: Slope,
    pub gamma: Option<f64>,
}

impl ParamSet {
    pub fn shared(tau: Vec<f64>, beta: f64) -> Self {
        ParamSet {
            tau,
            beta: Slope::Shared(beta),
            gamma: None,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    /// Validate against a spec: dimensions, finiteness and threshold order.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let cuts = spec.n_cuts();
        if self.tau.len() != cuts {
            return Err(Error::invalid(format!(
                "expected {} thresholds, got {}",
                cuts,
                self.tau.len()
            )));
        }
        if self.tau.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        if spec.family() != Family::Mlogit {
            for w in self.tau.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::invalid(format!(
                        "thresholds must be strictly increasing, got {:?}",
                        self.tau
                    )));
                }
            }
        }
        let want_cs = spec.category_specific() || spec.family() == Family::Mlogit;
        match (&self.beta, want_cs) {
            (Slope::Shared(b), false) => {
                if !b.is_finite() {
                    return Err(Error::invalid("slope must be finite"));
                }
            }
            (Slope::PerCategory(v), true) => {
                if v.len() != cuts {
                    return Err(Error::invalid(format!(
                        "expected {} category-specific slopes, got {}",
                        cuts,
                        v.len()
                    )));
                }
                if v.iter().any(|b| !b.is_finite()) {
                    return Err(Error::invalid("slopes must be finite"));
                }
            }
            (Slope::Shared(_), true) => {
                return Err(Error::invalid("spec requires category-specific slopes"))
            }
            (Slope::PerCategory(_), false) => {
                return Err(Error::invalid("spec requires a single shared slope"))
            }
        }
        match (self.gamma, spec.variance_heterogeneity()) {
            (Some(g), true) => {
                if !g.is_finite() {
                    return Err(Error::invalid("gamma must be finite"));
                }
            }
            (None, false) => {}
            (Some(_), false) => return Err(Error::invalid("gamma given but spec has no vh flag")),
            (None, true) => return Err(Error::invalid("spec requires a scale slope gamma")),
        }
        Ok(())
    }
}

/// Probabilities of the K categories at one covariate value.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryProbs(Vec<f64>);

impl CategoryProbs {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Probability of category `k` (1-based).
    pub fn prob(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Cut-point predictor eta_j = (tau_j - beta_j x) / exp(gamma x), 0-based cut.
#[inline]
pub(crate) fn eta(params: &ParamSet, x: f64, cut: usize) -> f64 {
    let raw = params.tau[cut] - params.beta.at(cut) * x;
    match params.gamma {
        Some(g) => raw / (g * x).exp(),
        None => raw,
    }
}

/// Linear predictor of cut-point equation `cut` (1-based), combining the
/// location and scale equations. Not defined for the multinomial model.
pub fn linear_predictor(spec: &ModelSpec, params: &ParamSet, x: f64, cut: usize) -> Result<f64> {
    if spec.family() == Family::Mlogit {
        return Err(Error::unsupported("mlogit has no cut-point predictor"));
    }
    params.validate(spec)?;
    if cut == 0 || cut > spec.n_cuts() {
        return Err(Error::invalid(format!(
            "cut index {cut} outside 1..={}",
            spec.n_cuts()
        )));
    }
    Ok(eta(params, x, cut - 1))
}

/// ln(1 - e^x) for x <= 0.
#[inline]
fn ln_1m_exp(x: f64) -> f64 {
    const LN_HALF: f64 = -std::f64::consts::LN_2;
    if x >= 0.0 {
        if x == 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        }
    } else if x < LN_HALF {
        (-x.exp()).ln_1p()
    } else {
        (-x.exp_m1()).ln()
    }
}

/// log-sum-exp over a slice, ignoring -inf entries.
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

fn etas(spec: &ModelSpec, params: &ParamSet, x: f64) -> Vec<f64> {
    (0..spec.n_cuts()).map(|j| eta(params, x, j)).collect()
}

/// Log category probabilities ln p_1..ln p_K, unnormalized only up to
/// floating-point rounding (the natural-space accessors renormalize).
pub fn category_log_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<Vec<f64>> {
    params.validate(spec)?;
    if !x.is_finite() {
        return Err(Error::invalid("covariate must be finite"));
    }
    let k = spec.k();
    let link = spec.link();
    let out = match spec.family() {
        Family::Cumulative => {
            if spec.category_specific() {
                // Gated path: compute in natural space and guard negatives.
                let cdf: Vec<f64> = etas(spec, params, x).iter().map(|&e| link.cdf(e)).collect();
                let mut lp = Vec::with_capacity(k);
                for j in 0..k {
                    let hi = if j == k - 1 { 1.0 } else { cdf[j] };
                    let lo = if j == 0 { 0.0 } else { cdf[j - 1] };
                    let p = hi - lo;
                    if p < -1e-12 {
                        return Err(Error::numerical(format!(
                            "negative probability {p:.3e} for category {} in cumulative+cs model",
                            j + 1
                        )));
                    }
                    lp.push(p.max(0.0).ln());
                }
                lp
            } else {
                let es = etas(spec, params, x);
                let mut lp = Vec::with_capacity(k);
                for j in 0..k {
                    let v = if j == 0 {
                        link.log_cdf(es[0])
                    } else if j == k - 1 {
                        link.log_survival(es[k - 2])
                    } else {
                        // p_j = F(e_hi) - F(e_lo); take the difference on the
                        // side where the values are small.
                        let (lo, hi) = (es[j - 1], es[j]);
                        if lo + hi > 0.0 {
                            let sb = link.log_survival(lo);
                            let sa = link.log_survival(hi);
                            sb + ln_1m_exp((sa - sb).min(0.0))
                        } else {
                            let fa = link.log_cdf(hi);
                            let fb = link.log_cdf(lo);
                            fa + ln_1m_exp((fb - fa).min(0.0))
                        }
                    };
                    lp.push(v);
                }
                lp
            }
        }
        Family::Sequential => {
            let es = etas(spec, params, x);
            let mut lp = Vec::with_capacity(k);
            let mut continue_sum = 0.0; // sum of ln(1 - F(eta_j)) for passed cuts
            for &e in &es {
                lp.push(link.log_cdf(e) + continue_sum);
                continue_sum += link.log_survival(e);
            }
            lp.push(continue_sum);
            lp
        }
        Family::Adjacent => {
            // ln num_k = sum_{j<k} ln(1-F(eta_j)) + sum_{j>=k} ln F(eta_j);
            // the boundary factor F(tau_K - ...) is 1 by convention.
            let es = etas(spec, params, x);
            let mut prefix = vec![0.0; k]; // prefix[j] = sum_{i<j} log_survival
            for j in 1..k {
                prefix[j] = prefix[j - 1] + link.log_survival(es[j - 1]);
            }
            let mut suffix = vec![0.0; k + 1]; // suffix[j] = sum_{i>=j} log_cdf
            for j in (0..k - 1).rev() {
                suffix[j] = suffix[j + 1] + link.log_cdf(es[j]);
            }
            let nums: Vec<f64> = (0..k).map(|j| prefix[j] + suffix[j]).collect();
            let lse = log_sum_exp(&nums);
            if !lse.is_finite() {
                return Err(Error::numerical(
                    "all adjacent-category numerators underflowed",
                ));
            }
            nums.iter().map(|v| v - lse).collect()
        }
        Family::Mlogit => {
            let slopes = match &params.beta {
                Slope::PerCategory(v) => v,
                Slope::Shared(_) => unreachable!("validated above"),
            };
            let mut scores = Vec::with_capacity(k);
            scores.push(0.0);
            for j in 0..k - 1 {
                scores.push(params.tau[j] + slopes[j] * x);
            }
            let lse = log_sum_exp(&scores);
            scores.iter().map(|s| s - lse).collect()
        }
    };
    Ok(out)
}

/// Category probabilities, renormalized so they sum to one exactly up to
/// floating-point rounding.
pub fn category_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<CategoryProbs> {
    let lp = category_log_probs(spec, params, x)?;
    let lse = log_sum_exp(&lp);
    if !lse.is_finite() {
        return Err(Error::numerical("category probabilities underflowed"));
    }
    Ok(CategoryProbs(lp.iter().map(|v| (v - lse).exp()).collect()))
}

/// ln p_k for one observed category (1-based), skipping work on categories
/// that are not needed. This is the likelihood hot path; inputs are assumed
/// validated by the caller. For the gated cumulative+cs construction only the
/// observed category is guarded against negativity (curve evaluation checks
/// the full law).
pub fn log_prob_of(spec: &ModelSpec, params: &ParamSet, x: f64, k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= spec.k());
    let link = spec.link();
    let last = spec.k() - 1;
    match spec.family() {
        Family::Cumulative => {
            if spec.category_specific() {
                let hi = if k - 1 == last {
                    1.0
                } else {
                    link.cdf(eta(params, x, k - 1))
                };
                let lo = if k == 1 {
                    0.0
                } else {
                    link.cdf(eta(params, x, k - 2))
                };
                let p = hi - lo;
                if p <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    p.ln()
                }
            } else if k == 1 {
                link.log_cdf(eta(params, x, 0))
            } else if k - 1 == last {
                link.log_survival(eta(params, x, last - 1))
            } else {
                let lo = eta(params, x, k - 2);
                let hi = eta(params, x, k - 1);
                if lo + hi > 0.0 {
                    let sb = link.log_survival(lo);
                    let sa = link.log_survival(hi);
                    sb + ln_1m_exp((sa - sb).min(0.0))
                } else {
                    let fa = link.log_cdf(hi);
                    let fb = link.log_cdf(lo);
                    fa + ln_1m_exp((fb - fa).min(0.0))
                }
            }
        }
        Family::Sequential => {
            let mut acc = 0.0;
            for j in 0..k - 1 {
                acc += link.log_survival(eta(params, x, j));
            }
            if k <= last {
                acc + link.log_cdf(eta(params, x, k - 1))
            } else {
                acc
            }
        }
        Family::Adjacent | Family::Mlogit => match category_log_probs(spec, params, x) {
            Ok(lp) => lp[k - 1],
            Err(_) => f64::NEG_INFINITY,
        },
    }
}

fn expect_family(spec: &ModelSpec, family: Family, op: &str) -> Result<()> {
    if spec.family() != family {
        return Err(Error::invalid(format!(
            "{op} requires the {family:?} family, got {:?}",
            spec.family()
        )));
    }
    Ok(())
}

/// Cumulative-model category probabilities.
pub fn cum_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<CategoryProbs> {
    expect_family(spec, Family::Cumulative, "cum_probs")?;
    category_probs(spec, params, x)
}

/// Sequential-model (stopping ratio) category probabilities.
pub fn seq_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<CategoryProbs> {
    expect_family(spec, Family::Sequential, "seq_probs")?;
    category_probs(spec, params, x)
}

/// Adjacent-category probabilities.
pub fn acat_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<CategoryProbs> {
    expect_family(spec, Family::Adjacent, "acat_probs")?;
    category_probs(spec, params, x)
}

/// Adjacent-category probabilities built directly from the local logits
/// ln(p_k/p_{k+1}) = tau_k - beta_k x. Logit link only.
pub fn acat_logit_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<CategoryProbs> {
    expect_family(spec, Family::Adjacent, "acat_logit_probs")?;
    if spec.link() != Link::Logit {
        return Err(Error::unsupported(
            "acat_logit_probs requires the logit link",
        ));
    }
    params.validate(spec)?;
    let k = spec.k();
    // ln p_k proportional to sum_{j=k..K-1} eta_j (empty sum for k = K).
    let mut scores = vec![0.0; k];
    for j in (0..k - 1).rev() {
        scores[j] = scores[j + 1] + eta(params, x, j);
    }
    let lse = log_sum_exp(&scores);
    Ok(CategoryProbs(
        scores.iter().map(|s| (s - lse).exp()).collect(),
    ))
}

/// Multinomial-logistic category probabilities (category 1 is the reference).
pub fn mlogit_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<CategoryProbs> {
    expect_family(spec, Family::Mlogit, "mlogit_probs")?;
    category_probs(spec, params, x)
}

/// Two-parameter lognormal form of one cumulative-probit fragility curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LognormalCurve {
    /// Median intensity theta_k = exp(tau_k / beta).
    pub median: f64,
    /// Log standard deviation 1/beta, shared across damage states.
    pub log_sd: f64,
}

/// Convert a cumulative probit model with shared positive slope and no
/// variance heterogeneity to its closed lognormal fragility form.
pub fn cum_to_lognormal(spec: &ModelSpec, params: &ParamSet) -> Result<Vec<LognormalCurve>> {
    expect_family(spec, Family::Cumulative, "cum_to_lognormal")?;
    if spec.link() != Link::Probit {
        return Err(Error::unsupported(
            "lognormal form requires the probit link",
        ));
    }
    if spec.variance_heterogeneity() {
        return Err(Error::unsupported(
            "no closed lognormal form with variance heterogeneity",
        ));
    }
    params.validate(spec)?;
    let beta = match params.beta {
        Slope::Shared(b) => b,
        Slope::PerCategory(_) => {
            return Err(Error::unsupported("lognormal form requires a shared slope"))
        }
    };
    if beta <= 0.0 {
        return Err(Error::invalid(format!(
            "fragility must increase with IM; slope {beta} <= 0"
        )));
    }
    Ok(params
        .tau
        .iter()
        .map(|&t| LognormalCurve {
            median: (t / beta).exp(),
            log_sd: 1.0 / beta,
        })
        .collect())
}

/// Exceedance probability Fr_k = P(DS > k) of the sequential model computed
/// by concatenated multiplication of the continuation probabilities.
/// Only valid for symmetric links; cloglog callers must use the
/// complement-sum form because the two constructions differ there.
pub fn seq_exceedance_chain(spec: &ModelSpec, params: &ParamSet, x: f64, k: usize) -> Result<f64> {
    expect_family(spec, Family::Sequential, "seq_exceedance_chain")?;
    if !spec.link().is_symmetric() {
        return Err(Error::unsupported(
            "the product form requires a symmetric link; for cloglog use \
             1 - cumulative sum of seq_probs (the two differ for asymmetric links)",
        ));
    }
    params.validate(spec)?;
    if k == 0 || k > spec.n_cuts() {
        return Err(Error::invalid(format!(
            "k must be in 1..={}",
            spec.n_cuts()
        )));
    }
    let link = spec.link();
    let mut log_fr = 0.0;
    for j in 0..k {
        log_fr += link.log_cdf(-eta(params, x, j));
    }
    Ok(log_fr.exp())
}

/// Exceedance probabilities Fr_k = P(DS > k) for k = 1..K-1 under the strict
/// convention (Fr_K is identically zero and omitted).
pub fn exceedance_probs(spec: &ModelSpec, params: &ParamSet, x: f64) -> Result<Vec<f64>> {
    if spec.family() == Family::Cumulative && !spec.category_specific() {
        params.validate(spec)?;
        let link = spec.link();
        return Ok((0..spec.n_cuts())
            .map(|j| link.survival(eta(params, x, j)))
            .collect());
    }
    let p = category_probs(spec, params, x)?;
    let p = p.as_slice();
    // Suffix sums keep upper-tail exceedances accurate.
    let mut fr = vec![0.0; spec.n_cuts()];
    let mut acc = p[spec.k() - 1];
    for j in (0..spec.n_cuts()).rev() {
        fr[j] = acc.min(1.0);
        acc += p[j];
    }
    Ok(fr)
}

/// One row of an exported fragility-curve table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CurveRow {
    pub im: f64,
    pub k: usize,
    pub value: f64,
}

/// Fragility curves over an intensity grid: exceedance probabilities for
/// k = 1..K-1 and category probabilities for k = 1..K, rows ordered by im.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurveTable {
    pub exceedance: Vec<CurveRow>,
    pub category: Vec<CurveRow>,
}

pub fn exceedance_curve(
    spec: &ModelSpec,
    params: &ParamSet,
    im_grid: &[f64],
) -> Result<CurveTable> {
    if im_grid.is_empty() {
        return Err(Error::invalid("im grid is empty"));
    }
    if im_grid.iter().any(|&im| !(im > 0.0) || !im.is_finite()) {
        return Err(Error::invalid("im grid values must be positive and finite"));
    }
    let mut exceedance = Vec::with_capacity(im_grid.len() * spec.n_cuts());
    let mut category = Vec::with_capacity(im_grid.len() * spec.k());
    for &im in im_grid {
        let x = im.ln();
        let fr = exceedance_probs(spec, params, x)?;
        for (j, &v) in fr.iter().enumerate() {
            exceedance.push(CurveRow {
                im,
                k: j + 1,
                value: v,
            });
        }
        let p = category_probs(spec, params, x)?;
        for (j, &v) in p.as_slice().iter().enumerate() {
            category.push(CurveRow {
                im,
                k: j + 1,
                value: v,
            });
        }
    }
    Ok(CurveTable {
        exceedance,
        category,
    })
}

// ---------------------------------------------------------------------------
// Unconstrained parameterization shared by the ML and MCMC fitters.
//
// Ordinal families: v = [tau_1, d_2..d_{K-1}, beta..., gamma?] with
// tau_j = tau_{j-1} + exp(d_j), which enforces strict threshold ordering.
// Mlogit: v = [a_2..a_K, b_2..b_K], already unconstrained.
// ---------------------------------------------------------------------------

/// Map a valid ParamSet to the unconstrained vector.
pub fn to_unconstrained(spec: &ModelSpec, params: &ParamSet) -> Result<Vec<f64>> {
    params.validate(spec)?;
    let mut v = Vec::with_capacity(spec.n_params());
    if spec.family() == Family::Mlogit {
        v.extend_from_slice(&params.tau);
    } else {
        v.push(params.tau[0]);
        for w in params.tau.windows(2) {
            v.push((w[1] - w[0]).ln());
        }
    }
    match &params.beta {
        Slope::Shared(b) => v.push(*b),
        Slope::PerCategory(bs) => v.extend_from_slice(bs),
    }
    if let Some(g) = params.gamma {
        v.push(g);
    }
    Ok(v)
}

/// Map an unconstrained vector back to a ParamSet. Always yields strictly
/// ordered thresholds for the ordinal families.
pub fn from_unconstrained(spec: &ModelSpec, v: &[f64]) -> ParamSet {
    assert_eq!(v.len(), spec.n_params(), "unconstrained vector length");
    let cuts = spec.n_cuts();
    let mut tau = Vec::with_capacity(cuts);
    if spec.family() == Family::Mlogit {
        tau.extend_from_slice(&v[..cuts]);
    } else {
        tau.push(v[0]);
        for j in 1..cuts {
            tau.push(tau[j - 1] + v[j].exp());
        }
    }
    let slope_cs = spec.category_specific() || spec.family() == Family::Mlogit;
    let n_slopes = if slope_cs { cuts } else { 1 };
    let beta = if slope_cs {
        Slope::PerCategory(v[cuts..cuts + n_slopes].to_vec())
    } else {
        Slope::Shared(v[cuts])
    };
    let gamma = spec.variance_heterogeneity().then(|| v[cuts + n_slopes]);
    ParamSet { tau, beta, gamma }
}

/// log |d natural / d unconstrained| of the threshold transform, needed when
/// a prior is stated on the natural scale.
pub fn unconstrained_log_jacobian(spec: &ModelSpec, v: &[f64]) -> f64 {
    if spec.family() == Family::Mlogit {
        0.0
    } else {
        v[1..spec.n_cuts()].iter().sum()
    }
}

/// Flatten to the report layout [tau.., beta.., gamma?] / [a.., b..].
pub fn natural_flat(spec: &ModelSpec, params: &ParamSet) -> Vec<f64> {
    let mut v = Vec::with_capacity(spec.n_params());
    v.extend_from_slice(&params.tau);
    match &params.beta {
        Slope::Shared(b) => v.push(*b),
        Slope::PerCategory(bs) => v.extend_from_slice(bs),
    }
    if let Some(g) = params.gamma {
        v.push(g);
    }
    v
}

/// Rebuild a ParamSet from the report layout, validating invariants.
pub fn params_from_natural_flat(spec: &ModelSpec, flat: &[f64]) -> Result<ParamSet> {
    if flat.len() != spec.n_params() {
        return Err(Error::invalid(format!(
            "expected {} parameters, got {}",
            spec.n_params(),
            flat.len()
        )));
    }
    let cuts = spec.n_cuts();
    let slope_cs = spec.category_specific() || spec.family() == Family::Mlogit;
    let n_slopes = if slope_cs { cuts } else { 1 };
    let beta = if slope_cs {
        Slope::PerCategory(flat[cuts..cuts + n_slopes].to_vec())
    } else {
        Slope::Shared(flat[cuts])
    };
    let gamma = spec.variance_heterogeneity().then(|| flat[cuts + n_slopes]);
    let params = ParamSet {
        tau: flat[..cuts].to_vec(),
        beta,
        gamma,
    };
    params.validate(spec)?;
    Ok(params)
}
