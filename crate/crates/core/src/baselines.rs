//! Comparison methods: independent per-class debiasing followed by row
//! normalization, single-round R2B, and a quantile-matching feature repairer.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::config::DebiasConfig;
use crate::data::{validate_pair, GroupVector, LabelMatrix};
use crate::error::{Error, Result};
use crate::r2b::r2b_debias;
use crate::subsolver::{solve_class, ClassSubproblem};

/// Rows whose debiased scores sum to at most this cannot be normalized.
const DEGENERATE_ROW_SUM: f64 = 1e-12;
/// Upper bound on the number of equal-mass bins.
pub const MAX_BINS: usize = 256;

/// Debiases each class column on its own, then divides every row by its sum.
/// The normalization step can reintroduce bias, so the output carries no
/// parity guarantee.
pub fn multilabel_debias(
    labels: &LabelMatrix,
    groups: &GroupVector,
    config: &DebiasConfig,
) -> Result<LabelMatrix> {
    config.validate()?;
    validate_pair(labels, groups)?;
    let columns: Vec<Vec<f64>> = labels
        .view()
        .columns()
        .into_iter()
        .map(|c| c.to_vec())
        .collect();
    let solved = columns
        .par_iter()
        .map(|scores| {
            let problem = ClassSubproblem {
                scores,
                groups,
                epsilon: config.epsilon,
                quad_weight: config.lambda,
            };
            solve_class(&problem, config.outer_tol, config.inner_tol).map(|s| s.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let (n, l) = labels.view().dim();
    let mut out = Array2::from_shape_fn((n, l), |(i, k)| solved[k][i]);
    for (row, mut r) in out.rows_mut().into_iter().enumerate() {
        let sum = r.sum();
        if !(sum > DEGENERATE_ROW_SUM) {
            return Err(Error::DegenerateRow { row, sum });
        }
        r.mapv_inplace(|v| v / sum);
    }
    LabelMatrix::new(out)
}

/// One R2B round with the same output repair as the full method.
pub fn r2b0(
    labels: &LabelMatrix,
    groups: &GroupVector,
    config: &DebiasConfig,
) -> Result<LabelMatrix> {
    let config = DebiasConfig {
        max_rounds: 1,
        ..*config
    };
    r2b_debias(labels, groups, &config).map(|(out, _)| out)
}

/// Equal-mass quantile knots per feature and group.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    n_bins: usize,
    /// `knots[feature][group]` holds `n_bins + 1` nondecreasing values at
    /// probabilities `0, 1/B, ..., 1`.
    knots: Vec<Vec<Vec<f64>>>,
}

impl QuantileTable {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_features(&self) -> usize {
        self.knots.len()
    }

    pub fn n_groups(&self) -> usize {
        self.knots.first().map_or(0, Vec::len)
    }

    pub fn knots(&self, feature: usize, group: usize) -> &[f64] {
        &self.knots[feature][group]
    }
}

/// Bin count used when none is configured: the smallest group size, capped.
pub fn default_bins(groups: &GroupVector) -> usize {
    groups.smallest_group().clamp(1, MAX_BINS)
}

/// Empirical quantile of sorted data at probability `p`, interpolating
/// linearly between order statistics.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn fit_quantiles(
    features: ArrayView2<'_, f64>,
    groups: &GroupVector,
    n_bins: usize,
) -> Result<QuantileTable> {
    if n_bins < 1 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    if features.nrows() != groups.len() {
        return Err(Error::LengthMismatch {
            what: "feature rows",
            expected: groups.len(),
            actual: features.nrows(),
        });
    }
    let knots = features
        .columns()
        .into_iter()
        .map(|col| {
            (0..groups.n_groups())
                .map(|s| {
                    let mut values: Vec<f64> = groups.members(s).iter().map(|&i| col[i]).collect();
                    values.sort_by(f64::total_cmp);
                    (0..=n_bins)
                        .map(|j| quantile_sorted(&values, j as f64 / n_bins as f64))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(QuantileTable { n_bins, knots })
}

/// Rank of `x` under the piecewise-linear CDF through `knots`. Values outside
/// the fitted range map to rank 0 or 1; on flat stretches the middle of the
/// tied probability range is used.
fn rank(knots: &[f64], x: f64) -> f64 {
    let last = knots.len() - 1;
    if x < knots[0] {
        return 0.0;
    }
    if x > knots[last] {
        return 1.0;
    }
    let b = last as f64;
    // position of x on the segment ending at knot j
    let on_segment = |j: usize| {
        let (q0, q1) = (knots[j - 1], knots[j]);
        ((j - 1) as f64 + (x - q0) / (q1 - q0)) / b
    };
    // smallest p with Q(p) >= x
    let j = knots.partition_point(|&q| q < x);
    let lower = if j == 0 { 0.0 } else { on_segment(j) };
    // largest p with Q(p) <= x
    let j = knots.partition_point(|&q| q <= x);
    let upper = if j == knots.len() { 1.0 } else { on_segment(j) };
    0.5 * (lower + upper)
}

/// Quantile function through `knots` at probability `p`.
fn inverse(knots: &[f64], p: f64) -> f64 {
    let b = (knots.len() - 1) as f64;
    let h = p.clamp(0.0, 1.0) * b;
    let lo = (h.floor() as usize).min(knots.len() - 1);
    let hi = (lo + 1).min(knots.len() - 1);
    knots[lo] + (h - lo as f64) * (knots[hi] - knots[lo])
}

/// Full repair: each value is mapped to the average, over groups, of the
/// group quantile functions evaluated at its rank within its own group.
pub fn dpr_transform(
    features: ArrayView2<'_, f64>,
    groups: &GroupVector,
    table: &QuantileTable,
) -> Result<Array2<f64>> {
    if groups.n_groups() != table.n_groups() {
        return Err(Error::LengthMismatch {
            what: "quantile table groups",
            expected: table.n_groups(),
            actual: groups.n_groups(),
        });
    }
    dpr_transform_assigned(features, groups.assignment(), table)
}

/// [`dpr_transform`] for a raw group assignment, which need not cover every
/// group (e.g. a small held-out split).
pub fn dpr_transform_assigned(
    features: ArrayView2<'_, f64>,
    assignment: &[usize],
    table: &QuantileTable,
) -> Result<Array2<f64>> {
    if features.ncols() != table.n_features() {
        return Err(Error::LengthMismatch {
            what: "feature columns",
            expected: table.n_features(),
            actual: features.ncols(),
        });
    }
    if features.nrows() != assignment.len() {
        return Err(Error::LengthMismatch {
            what: "feature rows",
            expected: assignment.len(),
            actual: features.nrows(),
        });
    }
    let n_groups = table.n_groups();
    if let Some((row, &id)) = assignment.iter().enumerate().find(|(_, &s)| s >= n_groups) {
        return Err(Error::GroupOutOfRange { row, id, n_groups });
    }
    let r = n_groups as f64;
    let mut out = Array2::zeros(features.dim());
    for ((i, j), value) in out.indexed_iter_mut() {
        let knots = &table.knots[j];
        let p = rank(&knots[assignment[i]], features[[i, j]]);
        *value = knots.iter().map(|k| inverse(k, p)).sum::<f64>() / r;
    }
    Ok(out)
}
