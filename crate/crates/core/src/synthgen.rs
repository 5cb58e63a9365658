//! Gaussian-mixture benchmark with a sensitive attribute correlated with
//! class 0, plus label bias injection.
//!
//! Every draw comes from a seeded ChaCha8 stream, so datasets are identical
//! across platforms for the same configuration.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{one_hot_encode, GroupVector, TabularDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_features: usize,
    pub n_per_class: usize,
    pub n_groups: usize,
    pub seed: u64,
    /// Variance of the class-mean prior; `None` means `1/d`.
    pub mean_variance: Option<f64>,
    /// Variance of each mixture component; `None` means `1/d`.
    pub component_variance: Option<f64>,
}

impl SynthConfig {
    pub fn new(n_classes: usize, n_features: usize, n_per_class: usize, seed: u64) -> Self {
        Self {
            n_classes,
            n_features,
            n_per_class,
            n_groups: 5,
            seed,
            mean_variance: None,
            component_variance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig("n_classes must be >= 2".into()));
        }
        if self.n_features < 1 || self.n_per_class < 1 {
            return Err(Error::InvalidConfig(
                "n_features and n_per_class must be >= 1".into(),
            ));
        }
        if self.n_groups < 2 {
            return Err(Error::InvalidConfig("n_groups must be >= 2".into()));
        }
        for v in [self.mean_variance, self.component_variance]
            .into_iter()
            .flatten()
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig("variances must be > 0".into()));
            }
        }
        Ok(())
    }

    fn default_variance(&self) -> f64 {
        1.0 / self.n_features as f64
    }
}

/// Draws the mixture. Rows are ordered by class; class `k` occupies rows
/// `k * n_per_class .. (k + 1) * n_per_class`.
///
/// The sensitive attribute equals `1{y = 0}` with probability 1/2 and is
/// uniform over the groups otherwise.
pub fn generate(config: &SynthConfig) -> Result<TabularDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.n_features;
    let mean_sd = config
        .mean_variance
        .unwrap_or(config.default_variance())
        .sqrt();
    let comp_sd = config
        .component_variance
        .unwrap_or(config.default_variance())
        .sqrt();
    let prior = Normal::new(0.0, mean_sd).expect("finite sd");
    let noise = Normal::new(0.0, comp_sd).expect("finite sd");

    let means: Vec<Vec<f64>> = (0..config.n_classes)
        .map(|_| (0..d).map(|_| prior.sample(&mut rng)).collect())
        .collect();

    let n = config.n_classes * config.n_per_class;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..config.n_per_class {
            let i = labels.len();
            for (j, &m) in mean.iter().enumerate() {
                features[[i, j]] = m + noise.sample(&mut rng);
            }
            labels.push(k);
            let s = if rng.random_bool(0.5) {
                usize::from(k == 0)
            } else {
                rng.random_range(0..config.n_groups)
            };
            groups.push(s);
        }
    }
    TabularDataset::new(
        features,
        one_hot_encode(&labels, config.n_classes)?,
        GroupVector::new(groups, config.n_groups)?,
    )
}

/// With probability `p`, independently per example, replaces the label with
/// the one-hot encoding of the example's group id.
pub fn inject_bias(dataset: &TabularDataset, p: f64, seed: u64) -> Result<TabularDataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "p must lie in [0, 1], got {p}"
        )));
    }
    let labels = dataset.labels();
    let groups = dataset.groups();
    let l = labels.n_classes();
    if groups.n_groups() > l {
        return Err(Error::InvalidArgument(format!(
            "{} groups cannot be mapped onto {l} classes",
            groups.n_groups()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = labels.view().to_owned();
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        if rng.random_bool(p) {
            let s = groups.group_of(i);
            row.fill(0.0);
            row[s] = 1.0;
        }
    }
    TabularDataset::new(
        dataset.features().to_owned(),
        crate::data::LabelMatrix::new(data)?,
        groups.clone(),
    )
}
