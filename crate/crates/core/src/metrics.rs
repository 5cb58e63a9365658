//! Fairness and performance metrics.
//!
//! Demographic parity for multiclass scores is the worst class-wise spread of
//! group-conditional means: `max_k (max_s E[f_k | s] - min_s E[f_k | s])`.
//! Every argmax in this module breaks ties towards the smallest class index.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{argmax, GroupVector, LabelMatrix};
use crate::error::{Error, Result};

/// `R x L` table whose entry `(s, k)` is the mean score of class `k` in group `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMeansTable {
    pub means: Array2<f64>,
}

impl GroupMeansTable {
    /// Largest spread of a single class column across groups.
    pub fn max_spread(&self) -> f64 {
        self.means
            .columns()
            .into_iter()
            .map(|col| {
                let (lo, hi) = col
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

/// Summary of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dp: f64,
    pub accuracy: f64,
    pub top_k_accuracy: BTreeMap<usize, f64>,
    pub tv_accuracy: f64,
    pub error_parity: f64,
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Group-conditional class means. Accepts any score matrix, including the
/// unnormalized intermediates of the debiasers.
pub fn group_means(scores: ArrayView2<'_, f64>, groups: &GroupVector) -> Result<GroupMeansTable> {
    check_len("group vector", scores.nrows(), groups.len())?;
    let mut means = Array2::zeros((groups.n_groups(), scores.ncols()));
    for s in 0..groups.n_groups() {
        let members = groups.members(s);
        if members.is_empty() {
            return Err(Error::EmptyGroup(s));
        }
        let mut row = means.row_mut(s);
        for &i in members {
            row += &scores.row(i);
        }
        row /= members.len() as f64;
    }
    Ok(GroupMeansTable { means })
}

pub fn multiclass_dp(scores: ArrayView2<'_, f64>, groups: &GroupVector) -> Result<f64> {
    Ok(group_means(scores, groups)?.max_spread())
}

/// Fraction of rows whose argmax is the true class.
pub fn accuracy(predicted: &LabelMatrix, truth: &[usize]) -> Result<f64> {
    check_len("truth", predicted.n_examples(), truth.len())?;
    let hits = predicted
        .argmax()
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction of rows whose true class ranks among the `k` largest scores.
pub fn top_k_accuracy(predicted: &LabelMatrix, truth: &[usize], k: usize) -> Result<f64> {
    check_len("truth", predicted.n_examples(), truth.len())?;
    let l = predicted.n_classes();
    if k == 0 || k > l {
        return Err(Error::InvalidArgument(format!(
            "top-k needs 1 <= k <= {l}, got {k}"
        )));
    }
    let mut hits = 0usize;
    for (i, &t) in truth.iter().enumerate() {
        if t >= l {
            return Err(Error::ClassOutOfRange {
                row: i,
                class: t,
                n_classes: l,
            });
        }
        let row = predicted.row(i);
        let st = row[t];
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > st || (v == st && j < t))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean of `1 - ||p - q||_1 / 2` over rows.
pub fn tv_accuracy(predicted: &LabelMatrix, truth: &LabelMatrix) -> Result<f64> {
    check_len("truth rows", predicted.n_examples(), truth.n_examples())?;
    check_len("truth columns", predicted.n_classes(), truth.n_classes())?;
    let total: f64 = predicted
        .view()
        .rows()
        .into_iter()
        .zip(truth.view().rows())
        .map(|(p, q)| {
            let l1: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum();
            1.0 - 0.5 * l1
        })
        .sum();
    Ok(total / predicted.n_examples() as f64)
}

/// Spread of the per-group 0-1 loss of argmax predictions.
pub fn error_parity(predicted: &LabelMatrix, truth: &[usize], groups: &GroupVector) -> Result<f64> {
    check_len("truth", predicted.n_examples(), truth.len())?;
    check_len("group vector", predicted.n_examples(), groups.len())?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in 0..groups.n_groups() {
        let members = groups.members(s);
        if members.is_empty() {
            return Err(Error::EmptyGroup(s));
        }
        let errors = members
            .iter()
            .filter(|&&i| argmax(predicted.row(i)) != truth[i])
            .count();
        let loss = errors as f64 / members.len() as f64;
        lo = lo.min(loss);
        hi = hi.max(loss);
    }
    Ok(hi - lo)
}
