//! Dataset representation, CSV ingestion, empirical summaries and synthetic
//! data generation.
//!
//! A dataset is an immutable list of (intensity measure, damage state)
//! observations with K ordered categories. The covariate used by every model
//! downstream is ln(im), so intensities must be strictly positive. Units are
//! whatever the file provides; the engine never rescales, and fitted
//! thresholds and medians are expressed in the chosen unit.

use crate::error::{Error, Result};
use crate::model::{category_probs, ModelSpec, ParamSet};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// Ordinal damage category, 1 = none ... K = complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct DamageState(usize);

impl DamageState {
    pub fn new(k: usize, n_categories: usize) -> Result<Self> {
        if k == 0 || k > n_categories {
            return Err(Error::invalid(format!(
                "damage state {k} outside 1..={n_categories}"
            )));
        }
        Ok(DamageState(k))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// One (intensity, damage state) observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub im: f64,
    pub ds: DamageState,
}

/// Immutable set of observations with K ordered categories.
///
/// Safe to share across threads; all member operations are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    k: usize,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("K must be >= 2, got {k}")));
        }
        if observations.is_empty() {
            return Err(Error::invalid("dataset must be non-empty"));
        }
        for (i, o) in observations.iter().enumerate() {
            if !(o.im > 0.0) || !o.im.is_finite() {
                return Err(Error::invalid(format!(
                    "observation {i}: im must be positive and finite, got {}",
                    o.im
                )));
            }
            if o.ds.get() > k {
                return Err(Error::invalid(format!(
                    "observation {i}: damage state {} exceeds K = {k}",
                    o.ds.get()
                )));
            }
        }
        Ok(Dataset { observations, k })
    }

    /// Build from raw (im, ds) pairs.
    pub fn from_pairs(pairs: &[(f64, usize)], k: usize) -> Result<Self> {
        let obs = pairs
            .iter()
            .map(|&(im, ds)| {
                Ok(Observation {
                    im,
                    ds: DamageState::new(ds, k)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(obs, k)
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// ln(im) covariate values, in observation order.
    pub fn ln_ims(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.im.ln()).collect()
    }

    /// Per-category observation counts (index 0 = category 1).
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.k];
        for o in &self.observations {
            c[o.ds.get() - 1] += 1;
        }
        c
    }

    /// Number of distinct categories observed.
    pub fn n_observed_categories(&self) -> usize {
        self.counts().iter().filter(|&&c| c > 0).count()
    }

    /// Empirical cumulative frequencies p_k = #(ds <= k)/n for k = 1..K-1.
    pub fn empirical_cum_freq(&self) -> Vec<f64> {
        let counts = self.counts();
        let n = self.n() as f64;
        let mut acc = 0usize;
        counts[..self.k - 1]
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / n
            })
            .collect()
    }

    /// Stable fingerprint for same-dataset checks between fits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(self.k as u64).to_le_bytes());
        for o in &self.observations {
            eat(&o.im.to_bits().to_le_bytes());
            eat(&(o.ds.get() as u64).to_le_bytes());
        }
        h
    }

    /// Copy of the dataset without observation `index`.
    pub fn without(&self, index: usize) -> Result<Dataset> {
        if index >= self.n() {
            return Err(Error::invalid(format!("index {index} out of range")));
        }
        if self.n() == 1 {
            return Err(Error::invalid("cannot remove the only observation"));
        }
        let mut obs = self.observations.clone();
        obs.remove(index);
        Dataset::new(obs, self.k)
    }

    /// Load a dataset from a CSV file with header `im,ds`.
    ///
    /// Rows failing validation abort the load with the 1-based row number
    /// (counting the header); partial datasets would silently bias fits.
    /// Lines starting with `#` are treated as comments and skipped.
    pub fn load_csv(path: impl AsRef<Path>, k: usize) -> Result<Dataset> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text, k, &path.display().to_string())
    }

    fn parse_csv(text: &str, k: usize, path: &str) -> Result<Dataset> {
        let mut obs = Vec::new();
        let mut saw_header = false;
        for (idx, line) in text.lines().enumerate() {
            let row = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "im,ds" {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        row,
                        msg: format!("expected header 'im,ds', got '{line}'"),
                    });
                }
                saw_header = true;
                continue;
            }
            let mut fields = line.split(',');
            let (im_s, ds_s) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), None) => (a.trim(), b.trim()),
                _ => {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        row,
                        msg: "expected exactly two fields".to_string(),
                    })
                }
            };
            let im: f64 = im_s.parse().map_err(|_| Error::Parse {
                path: path.to_string(),
                row,
                msg: format!("cannot parse im '{im_s}'"),
            })?;
            if !(im > 0.0) || !im.is_finite() {
                return Err(Error::Parse {
                    path: path.to_string(),
                    row,
                    msg: format!("im must be positive and finite, got {im_s}"),
                });
            }
            let ds: usize = ds_s.parse().map_err(|_| Error::Parse {
                path: path.to_string(),
                row,
                msg: format!("cannot parse ds '{ds_s}'"),
            })?;
            let ds = DamageState::new(ds, k).map_err(|e| Error::Parse {
                path: path.to_string(),
                row,
                msg: e.to_string(),
            })?;
            obs.push(Observation { im, ds });
        }
        if !saw_header {
            return Err(Error::Parse {
                path: path.to_string(),
                row: 1,
                msg: "empty file".to_string(),
            });
        }
        if obs.is_empty() {
            return Err(Error::Parse {
                path: path.to_string(),
                row: 1,
                msg: "no data rows".to_string(),
            });
        }
        Dataset::new(obs, k)
    }

    /// Write the dataset as CSV (`im,ds` header, shortest round-trip floats).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut buf = String::from("im,ds\n");
        for o in &self.observations {
            buf.push_str(&format!("{},{}\n", o.im, o.ds.get()));
        }
        f.write_all(buf.as_bytes()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Draw one dataset from a model's category-probability law: one observation
/// per intensity value, deterministic given the seed.
pub fn simulate_dataset(
    spec: &ModelSpec,
    params: &ParamSet,
    im_values: &[f64],
    seed: u64,
) -> Result<Dataset> {
    params.validate(spec)?;
    if im_values.is_empty() {
        return Err(Error::invalid("im_values must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::with_capacity(im_values.len());
    for &im in im_values {
        if !(im > 0.0) || !im.is_finite() {
            return Err(Error::invalid(format!("im must be positive, got {im}")));
        }
        let p = category_probs(spec, params, im.ln())?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cat = spec.k();
        for (j, &pj) in p.as_slice().iter().enumerate() {
            acc += pj;
            if u < acc {
                cat = j + 1;
                break;
            }
        }
        obs.push(Observation {
            im,
            ds: DamageState::new(cat, spec.k())?,
        });
    }
    Dataset::new(obs, spec.k())
}

/// Log-spaced intensity grid, handy for synthetic designs.
pub fn log_spaced_ims(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Link;
    use crate::model::Family;
    use crate::testutil::{reference_params, reference_spec};

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_parses_rows_in_order() {
        let f = write_temp("im,ds\n0.2,1\n0.4,3\n");
        let ds = Dataset::load_csv(f.path(), 5).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.k(), 5);
        assert_eq!(ds.observations()[0].im, 0.2);
        assert_eq!(ds.observations()[1].ds.get(), 3);
    }

    #[test]
    fn load_csv_rejects_bad_rows_with_row_numbers() {
        let f = write_temp("im,ds\n0.2,1\n0,2\n");
        let err = Dataset::load_csv(f.path(), 5).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected: {other}"),
        }

        let f = write_temp("im,ds\n0.2,9\n");
        assert!(matches!(
            Dataset::load_csv(f.path(), 5),
            Err(Error::Parse { row: 2, .. })
        ));

        let f = write_temp("");
        assert!(Dataset::load_csv(f.path(), 5).is_err());

        let f = write_temp("im,ds\n");
        assert!(Dataset::load_csv(f.path(), 5).is_err());

        let f = write_temp("pga,damage\n0.2,1\n");
        assert!(Dataset::load_csv(f.path(), 5).is_err());

        assert!(Dataset::load_csv("/nonexistent/path.csv", 5).is_err());
    }

    #[test]
    fn load_csv_preserves_row_count_at_catalog_scale() {
        let mut text = String::from("im,ds\n");
        for i in 0..442 {
            text.push_str(&format!("{},{}\n", 0.05 + (i as f64) * 0.004, 1 + i % 5));
        }
        let f = write_temp(&text);
        let ds = Dataset::load_csv(f.path(), 5).unwrap();
        assert_eq!(ds.n(), 442);
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let f = write_temp("im,ds\n0.2,1\n0.45,3\n1.125,5\n");
        let ds = Dataset::load_csv(f.path(), 5).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(out.path()).unwrap();
        let round = std::fs::read_to_string(out.path()).unwrap();
        assert_eq!(round, "im,ds\n0.2,1\n0.45,3\n1.125,5\n");
    }

    #[test]
    fn empirical_cum_freq_examples() {
        let mut pairs = Vec::new();
        for k in 1..=5 {
            for _ in 0..10 {
                pairs.push((0.3, k));
            }
        }
        let ds = Dataset::from_pairs(&pairs, 5).unwrap();
        let f = ds.empirical_cum_freq();
        for (got, want) in f.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((got - want).abs() < 1e-15);
        }

        let ones = Dataset::from_pairs(&[(0.1, 1), (0.2, 1), (0.3, 1)], 5).unwrap();
        assert_eq!(ones.empirical_cum_freq(), vec![1.0, 1.0, 1.0, 1.0]);

        let small = Dataset::from_pairs(&[(0.1, 1), (0.2, 1), (0.3, 2), (0.4, 3)], 3).unwrap();
        assert_eq!(small.empirical_cum_freq(), vec![0.5, 0.75]);
    }

    #[test]
    fn simulate_is_deterministic_and_respects_degenerate_thresholds() {
        let spec = reference_spec();
        let params = reference_params();
        let ims = log_spaced_ims(0.05, 2.0, 200);
        let a = simulate_dataset(&spec, &params, &ims, 7).unwrap();
        let b = simulate_dataset(&spec, &params, &ims, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_dataset(&spec, &params, &ims, 8).unwrap();
        assert_ne!(a, c);

        // A huge first threshold with beta = 0 pins everything in category 1.
        let spec2 = ModelSpec::new(Family::Cumulative, Link::Probit, false, false, 3).unwrap();
        let far = ParamSet::shared(vec![40.0, 41.0], 0.0);
        let ds = simulate_dataset(&spec2, &far, &ims, 3).unwrap();
        assert!(ds.observations().iter().all(|o| o.ds.get() == 1));

        // Unordered thresholds are rejected.
        let bad = ParamSet::shared(vec![1.0, 0.0], 1.0);
        assert!(simulate_dataset(&spec2, &bad, &ims, 3).is_err());
    }

    #[test]
    fn simulated_frequencies_match_category_law_chi_square() {
        // chi^2 goodness of fit against Poisson-binomial expected counts,
        // alpha = 0.01, df = K-1 = 4 (critical value 13.2767).
        let spec = reference_spec();
        let params = reference_params();
        let ims = log_spaced_ims(0.05, 2.0, 442);
        let ds = simulate_dataset(&spec, &params, &ims, 42).unwrap();
        let mut expected = vec![0.0; 5];
        for &im in &ims {
            let p = category_probs(&spec, &params, im.ln()).unwrap();
            for (j, &pj) in p.as_slice().iter().enumerate() {
                expected[j] += pj;
            }
        }
        let observed = ds.counts();
        let chi2: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
            .sum();
        assert!(chi2 < 13.2767, "chi2={chi2}");
    }

    #[test]
    fn simulated_frequencies_obey_law_of_large_numbers() {
        // Single intensity so every draw shares one categorical law;
        // 3-sigma binomial tolerance at n = 1e5.
        let spec = reference_spec();
        let params = reference_params();
        let n = 100_000;
        let ims = vec![0.4; n];
        let ds = simulate_dataset(&spec, &params, &ims, 11).unwrap();
        let p = category_probs(&spec, &params, 0.4f64.ln()).unwrap();
        for (j, &pj) in p.as_slice().iter().enumerate() {
            let freq = ds.counts()[j] as f64 / n as f64;
            let sd = (pj * (1.0 - pj) / n as f64).sqrt();
            assert!((freq - pj).abs() <= 3.0 * sd + 1e-12, "cat {}", j + 1);
        }
    }

    #[test]
    fn fingerprint_distinguishes_datasets() {
        let a = Dataset::from_pairs(&[(0.1, 1), (0.2, 2)], 5).unwrap();
        let b = Dataset::from_pairs(&[(0.1, 1), (0.2, 3)], 5).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }

    #[test]
    fn without_removes_one_observation() {
        let a = Dataset::from_pairs(&[(0.1, 1), (0.2, 2), (0.3, 3)], 5).unwrap();
        let b = a.without(1).unwrap();
        assert_eq!(b.n(), 2);
        assert_eq!(b.observations()[1].im, 0.3);
        assert!(a.without(3).is_err());
    }
}
