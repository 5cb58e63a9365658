//! Train-on-debiased, test-on-held-out evaluation with a soft-label kNN, and
//! seeded sweeps with Student-t confidence intervals.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::baselines::{
    default_bins, dpr_transform, dpr_transform_assigned, fit_quantiles, multilabel_debias, r2b0,
};
use crate::config::DebiasConfig;
use crate::data::{GroupVector, LabelMatrix, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, error_parity, multiclass_dp, top_k_accuracy, tv_accuracy, MetricReport,
};
use crate::r2b::{r2b_debias, DebiasReport};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TEST_FRACTION: f64 = 0.25;
/// Top-k levels reported alongside plain accuracy.
pub const REPORTED_TOP_K: [usize; 3] = [1, 2, 3];

/// Brute-force kNN over soft label rows. Holds no group information, so a
/// trained model cannot condition on the sensitive attribute.
#[derive(Debug, Clone)]
pub struct KnnModel {
    train_features: Array2<f64>,
    train_labels: LabelMatrix,
    k: usize,
}

impl KnnModel {
    pub fn new(train_features: Array2<f64>, train_labels: LabelMatrix, k: usize) -> Result<Self> {
        let n = train_labels.n_examples();
        if train_features.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "training feature rows",
                expected: n,
                actual: train_features.nrows(),
            });
        }
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "k must lie in [1, {n}], got {k}"
            )));
        }
        Ok(Self {
            train_features,
            train_labels,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the `k` nearest training rows, nearest first. Equal
    /// distances resolve to the smaller training index.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .train_features
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Averages the label rows of each query's neighbors.
    pub fn predict(&self, query_features: ArrayView2<'_, f64>) -> Result<LabelMatrix> {
        if query_features.ncols() != self.train_features.ncols() {
            return Err(Error::LengthMismatch {
                what: "query feature columns",
                expected: self.train_features.ncols(),
                actual: query_features.ncols(),
            });
        }
        let l = self.train_labels.n_classes();
        let rows: Vec<Vec<f64>> = (0..query_features.nrows())
            .into_par_iter()
            .map(|i| {
                let q = query_features.row(i).to_vec();
                let mut acc = vec![0.0; l];
                for i in self.neighbors(&q) {
                    for (a, v) in acc.iter_mut().zip(self.train_labels.row(i)) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= self.k as f64);
                acc
            })
            .collect();
        let mut out = Array2::zeros((rows.len(), l));
        for (i, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                out[[i, k]] = v;
            }
        }
        LabelMatrix::new(out)
    }
}

/// Pre-training treatment applied to the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// No debiasing.
    Baseline,
    /// Quantile-matching feature repair.
    FeatureRepair,
    /// Independent per-class label debiasing, then row normalization.
    MultiLabel,
    /// One R2B round.
    R2b0,
    R2b,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Baseline,
        Method::FeatureRepair,
        Method::MultiLabel,
        Method::R2b0,
        Method::R2b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "bl",
            Method::FeatureRepair => "dpr",
            Method::MultiLabel => "ml",
            Method::R2b0 => "r2b0",
            Method::R2b => "r2b",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Random train/test partition. Returns `(train, test)` row indices; the test
/// side gets `round(n * test_fraction)` rows.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let test = idx[..n_test].to_vec();
    let train = idx[n_test..].to_vec();
    (train, test)
}

/// Settings of one evaluation run, apart from the split seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSpec {
    pub method: Method,
    pub config: DebiasConfig,
    pub k: usize,
    pub test_fraction: f64,
    /// Bin count for feature repair; `None` picks [`default_bins`].
    pub n_bins: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(method: Method, config: DebiasConfig) -> Self {
        Self {
            method,
            config,
            k: DEFAULT_K,
            test_fraction: DEFAULT_TEST_FRACTION,
            n_bins: None,
        }
    }
}

/// Everything measured in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metrics: MetricReport,
    /// Multiclass DP of the (possibly debiased) training labels.
    pub train_label_dp: f64,
    /// Present for R2B runs.
    pub debias_report: Option<DebiasReport>,
}

fn split_groups(
    dataset: &TabularDataset,
    rows: &[usize],
    seed: u64,
    side: &'static str,
) -> Result<GroupVector> {
    let all = dataset.groups();
    all.select(rows).map_err(|e| match e {
        Error::EmptyGroup(group) => {
            let mut sizes = vec![0; all.n_groups()];
            for &i in rows {
                sizes[all.group_of(i)] += 1;
            }
            Error::EmptySplitGroup {
                seed,
                side,
                group,
                sizes,
            }
        }
        other => other,
    })
}

/// Splits, treats the training side, fits kNN and scores the test side.
///
/// Only feature repair looks at test-side group ids (to pick each row's
/// quantile table); the classifier never sees them.
pub fn run_experiment_detailed(
    dataset: &TabularDataset,
    spec: &ExperimentSpec,
    split_seed: u64,
) -> Result<RunOutcome> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let (train_rows, test_rows) = split_indices(dataset.len(), spec.test_fraction, split_seed);
    let train_g = split_groups(dataset, &train_rows, split_seed, "training")?;
    let test_g = split_groups(dataset, &test_rows, split_seed, "test")?;
    let mut train_x = dataset.features().select(Axis(0), &train_rows);
    let mut test_x = dataset.features().select(Axis(0), &test_rows);
    let train_y = dataset.labels().select(&train_rows);

    let mut debias_report = None;
    let train_labels = match spec.method {
        Method::Baseline => train_y,
        Method::FeatureRepair => {
            let bins = spec.n_bins.unwrap_or_else(|| default_bins(&train_g));
            let table = fit_quantiles(train_x.view(), &train_g, bins)?;
            train_x = dpr_transform(train_x.view(), &train_g, &table)?;
            test_x = dpr_transform_assigned(test_x.view(), test_g.assignment(), &table)?;
            train_y
        }
        Method::MultiLabel => multilabel_debias(&train_y, &train_g, &spec.config)?,
        Method::R2b0 => r2b0(&train_y, &train_g, &spec.config)?,
        Method::R2b => {
            let (out, report) = r2b_debias(&train_y, &train_g, &spec.config)?;
            debias_report = Some(report);
            out
        }
    };
    let train_label_dp = multiclass_dp(train_labels.view(), &train_g)?;
    let model = KnnModel::new(train_x, train_labels, spec.k)?;
    let predicted = model.predict(test_x.view())?;

    // Test labels are read only from here on.
    let test_y = dataset.labels().select(&test_rows);
    let truth = test_y.argmax();
    let l = predicted.n_classes();
    let mut top_k_accuracy_by_k = BTreeMap::new();
    for k in REPORTED_TOP_K.into_iter().filter(|&k| k <= l) {
        top_k_accuracy_by_k.insert(k, top_k_accuracy(&predicted, &truth, k)?);
    }
    let metrics = MetricReport {
        dp: multiclass_dp(predicted.view(), &test_g)?,
        accuracy: accuracy(&predicted, &truth)?,
        top_k_accuracy: top_k_accuracy_by_k,
        tv_accuracy: tv_accuracy(&predicted, &test_y)?,
        error_parity: error_parity(&predicted, &truth, &test_g)?,
    };
    Ok(RunOutcome {
        metrics,
        train_label_dp,
        debias_report,
    })
}

pub fn run_experiment(
    dataset: &TabularDataset,
    spec: &ExperimentSpec,
    split_seed: u64,
) -> Result<MetricReport> {
    run_experiment_detailed(dataset, spec, split_seed).map(|o| o.metrics)
}

/// Mean and 99% Student-t half-width of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `None` with fewer than two samples.
    pub half_width: Option<f64>,
}

impl Summary {
    pub fn from_samples(samples: &[f64]) -> Summary {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Summary {
                mean,
                half_width: None,
            };
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("n >= 2")
            .inverse_cdf(0.995);
        Summary {
            mean,
            half_width: Some(t * var.sqrt() / (n as f64).sqrt()),
        }
    }
}

/// Metric names in reporting order.
pub const METRIC_COLUMNS: [&str; 6] = ["dp", "acc", "top2", "top3", "tv_acc", "error_parity"];

/// Looks up a named metric; top-k entries missing for small `L` yield NaN.
pub fn metric_value(report: &MetricReport, name: &str) -> f64 {
    let top = |k| report.top_k_accuracy.get(&k).copied().unwrap_or(f64::NAN);
    match name {
        "dp" => report.dp,
        "acc" => report.accuracy,
        "top2" => top(2),
        "top3" => top(3),
        "tv_acc" => report.tv_accuracy,
        "error_parity" => report.error_parity,
        _ => f64::NAN,
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub name: String,
    pub spec: ExperimentSpec,
}

impl SweepPoint {
    pub fn new(spec: ExperimentSpec) -> Self {
        Self {
            name: spec.method.name().to_string(),
            spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricReport>,
    /// Per entry of [`METRIC_COLUMNS`].
    pub summaries: Vec<(String, Summary)>,
}

impl ExperimentResult {
    pub fn from_runs(
        name: String,
        method: Method,
        seeds: Vec<u64>,
        runs: Vec<MetricReport>,
    ) -> Self {
        let summaries = METRIC_COLUMNS
            .iter()
            .map(|&m| {
                let samples: Vec<f64> = runs.iter().map(|r| metric_value(r, m)).collect();
                (m.to_string(), Summary::from_samples(&samples))
            })
            .collect();
        Self {
            name,
            method,
            seeds,
            runs,
            summaries,
        }
    }

    pub fn summary(&self, metric: &str) -> Option<Summary> {
        self.summaries
            .iter()
            .find(|(m, _)| m == metric)
            .map(|(_, s)| *s)
    }
}

/// Runs every grid point on split seeds `0..n_seeds`. All points share the
/// same seeds and therefore the same splits.
pub fn sweep(
    dataset: &TabularDataset,
    grid: &[SweepPoint],
    n_seeds: usize,
) -> Result<Vec<ExperimentResult>> {
    sweep_with(grid, n_seeds, |_| Ok(Cow::Borrowed(dataset)))
}

/// Like [`sweep`], with a per-seed dataset (e.g. a freshly generated
/// synthetic sample for each seed).
pub fn sweep_with<'d, F>(
    grid: &[SweepPoint],
    n_seeds: usize,
    dataset_for_seed: F,
) -> Result<Vec<ExperimentResult>>
where
    F: Fn(u64) -> Result<Cow<'d, TabularDataset>> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("n_seeds must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).collect();
    let datasets = seeds
        .par_iter()
        .map(|&seed| dataset_for_seed(seed))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..seeds.len()).map(move |s| (g, s)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(g, s)| {
            run_experiment(&datasets[s], &grid[g].spec, seeds[s]).map_err(|e| Error::Run {
                context: format!("{} seed {}", grid[g].name, seeds[s]),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = reports.into_iter();
    Ok(grid
        .iter()
        .map(|point| {
            let runs: Vec<MetricReport> = reports.by_ref().take(seeds.len()).collect();
            ExperimentResult::from_runs(point.name.clone(), point.spec.method, seeds.clone(), runs)
        })
        .collect())
}

/// R2B training-label traces for several tolerances.
pub fn convergence_curves(
    labels: &LabelMatrix,
    groups: &GroupVector,
    epsilons: &[f64],
    base: &DebiasConfig,
) -> Result<Vec<(f64, DebiasReport)>> {
    epsilons
        .par_iter()
        .map(|&epsilon| {
            let config = DebiasConfig { epsilon, ..*base };
            r2b_debias(labels, groups, &config).map(|(_, report)| (epsilon, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::one_hot_encode;
    use crate::synthgen::{generate, SynthConfig};
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn brute_force_neighbors(x: &Array2<f64>, q: &[f64], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..x.nrows())
            .map(|i| {
                let d = x
                    .row(i)
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn knn_single_neighbor_returns_its_label() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let y = LabelMatrix::new(array![[0.2, 0.8], [0.9, 0.1], [0.5, 0.5]]).unwrap();
        let model = KnnModel::new(x, y.clone(), 1).unwrap();
        let out = model.predict(array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(out.row(0), y.row(1));
    }

    #[test]
    fn knn_all_neighbors_gives_global_mean() {
        let x = array![[0.0], [1.0], [5.0], [9.0]];
        let y = one_hot_encode(&[0, 1, 1, 2], 3).unwrap();
        let model = KnnModel::new(x, y, 4).unwrap();
        let out = model.predict(array![[3.0], [-100.0]].view()).unwrap();
        for row in out.view().rows() {
            assert_eq!(row.to_vec(), vec![0.25, 0.5, 0.25]);
        }
    }

    #[test]
    fn knn_matches_exhaustive_oracle() {
        let x = array![
            [0.0, 0.0],
            [1.0, 1.0],
            [2.0, 0.0],
            [0.0, 2.0],
            [1.0, 0.0],
            [3.0, 3.0],
            [1.0, 2.0]
        ];
        let y = one_hot_encode(&[0, 1, 2, 0, 1, 2, 0], 3).unwrap();
        let model = KnnModel::new(x.clone(), y.clone(), 3).unwrap();
        let queries = array![[0.5, 0.5], [2.0, 2.0], [1.0, 1.0], [0.0, 1.0]];
        let out = model.predict(queries.view()).unwrap();
        for (qi, q) in queries.rows().into_iter().enumerate() {
            let nn = brute_force_neighbors(&x, &q.to_vec(), 3);
            assert_eq!(model.neighbors(&q.to_vec()), nn);
            for k in 0..3 {
                let expected = nn.iter().map(|&i| y.row(i)[k]).sum::<f64>() / 3.0;
                assert!((out.row(qi)[k] - expected).abs() < 1e-15);
            }
        }
        // (0.5, 0.5) is equidistant from rows 0, 1, 4 and row 2 is farther
        assert_eq!(model.neighbors(&[0.5, 0.5]), vec![0, 1, 4]);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let x = array![[0.0], [1.0]];
        let y = one_hot_encode(&[0, 1], 2).unwrap();
        assert!(KnnModel::new(x.clone(), y.clone(), 3).is_err());
        assert!(KnnModel::new(x, y, 0).is_err());
    }

    #[test]
    fn knn_is_permutation_invariant_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((30, 3), |_| rng.random_range(-1.0..1.0));
        let hard: Vec<usize> = (0..30).map(|_| rng.random_range(0..4)).collect();
        let y = one_hot_encode(&hard, 4).unwrap();
        let q = Array2::from_shape_fn((10, 3), |_| rng.random_range(-1.0..1.0));
        let a = KnnModel::new(x.clone(), y.clone(), 5)
            .unwrap()
            .predict(q.view())
            .unwrap();
        let perm: Vec<usize> = (0..30).rev().collect();
        let b = KnnModel::new(x.select(Axis(0), &perm), y.select(&perm), 5)
            .unwrap()
            .predict(q.view())
            .unwrap();
        for (u, v) in a.view().iter().zip(b.view().iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!(
            "ost".parse::<Method>(),
            Err(Error::UnknownMethod(_))
        ));
    }

    #[test]
    fn split_sizes() {
        let (train, test) = split_indices(100, 0.25, 3);
        assert_eq!((train.len(), test.len()), (75, 25));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.25, 3), (train, test));
    }

    #[test]
    fn split_reports_empty_group() {
        let labels = one_hot_encode(&[0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap();
        let groups = GroupVector::from_assignment(vec![0, 0, 0, 0, 0, 0, 0, 1]).unwrap();
        let ds = TabularDataset::new(Array2::zeros((8, 1)), labels, groups).unwrap();
        let spec = ExperimentSpec {
            k: 1,
            ..ExperimentSpec::new(Method::Baseline, DebiasConfig::default())
        };
        let err = (0..20)
            .find_map(|seed| run_experiment(&ds, &spec, seed).err())
            .expect("some split drops the singleton group");
        assert!(matches!(err, Error::EmptySplitGroup { .. }));
        assert_eq!(err.kind(), crate::error::ErrorKind::Split);
    }

    #[test]
    fn summary_uses_student_t() {
        let s = Summary::from_samples(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(s.mean, 5.5);
        let sd = (82.5f64 / 9.0).sqrt();
        // t quantile 0.995 with 9 degrees of freedom
        let expected = 3.249_835_541_592 * sd / 10f64.sqrt();
        assert!((s.half_width.unwrap() - expected).abs() < 1e-9);
        assert_eq!(Summary::from_samples(&[0.3]).half_width, None);
    }

    #[test]
    fn small_sweep_aggregates_per_seed_runs() {
        let ds = generate(&SynthConfig::new(3, 4, 40, 1)).unwrap();
        let config = DebiasConfig {
            max_rounds: 20,
            ..DebiasConfig::with_epsilon(0.0)
        };
        let grid = vec![
            SweepPoint::new(ExperimentSpec::new(Method::Baseline, config)),
            SweepPoint::new(ExperimentSpec::new(Method::R2b, config)),
        ];
        let results = sweep(&ds, &grid, 3).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert_eq!(r.runs.len(), 3);
            let dp = r.summary("dp").unwrap();
            let mean = r.runs.iter().map(|m| m.dp).sum::<f64>() / 3.0;
            assert!((dp.mean - mean).abs() < 1e-15);
            assert!(dp.half_width.unwrap() >= 0.0);
            for m in &r.runs {
                assert!(m.top_k_accuracy.contains_key(&3));
            }
        }
        // identical splits: baseline runs are reproducible one by one
        let again = run_experiment(&ds, &grid[0].spec, 1).unwrap();
        assert_eq!(again, results[0].runs[1]);
    }

    #[test]
    fn every_method_produces_valid_metrics() {
        let ds = generate(&SynthConfig::new(4, 5, 30, 8)).unwrap();
        for m in Method::ALL {
            let spec = ExperimentSpec::new(
                m,
                DebiasConfig {
                    max_rounds: 10,
                    ..Default::default()
                },
            );
            let out = run_experiment_detailed(&ds, &spec, 4).unwrap();
            let r = &out.metrics;
            for v in [r.dp, r.accuracy, r.tv_accuracy, r.error_parity] {
                assert!((0.0..=1.0).contains(&v), "{m}: {r:?}");
            }
            assert_eq!(out.debias_report.is_some(), m == Method::R2b);
        }
    }
}
