//! Label matrices, group assignments and the validation rules shared by every
//! stage of the pipeline.
//!
//! Hard labels are always one-hot encoded before they reach a debiaser, so the
//! rest of the crate only ever sees row-stochastic score matrices.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Entries may sit this far outside `[0, 1]` before they are rejected.
pub const ENTRY_TOL: f64 = 1e-9;
/// Rows may miss a unit sum by this much before they are rejected.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// An `N x L` matrix of per-example class scores whose rows are distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    data: Array2<f64>,
}

impl LabelMatrix {
    /// Validates `data` and renormalizes each row by its sum.
    ///
    /// Entries within [`ENTRY_TOL`] of the unit interval are clamped first, so
    /// matrices that went through a text round trip are accepted. Rows whose
    /// sum is already 1 up to summation round-off are left untouched, which
    /// makes construction idempotent.
    pub fn new(mut data: Array2<f64>) -> Result<Self> {
        check_scores(data.view())?;
        data.mapv_inplace(|v| v.clamp(0.0, 1.0));
        let round_off = 2.0 * data.ncols() as f64 * f64::EPSILON;
        for mut row in data.rows_mut() {
            let sum = row.sum();
            if (sum - 1.0).abs() > round_off {
                row.mapv_inplace(|v| v / sum);
            }
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let l = rows.first().map_or(0, Vec::len);
        let mut data = Array2::zeros((n, l));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != l {
                return Err(Error::LengthMismatch {
                    what: "label row",
                    expected: l,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                data[[i, j]] = v;
            }
        }
        Self::new(data)
    }

    /// Uniform scores `1/L` for every example.
    pub fn uniform(n_examples: usize, n_classes: usize) -> Result<Self> {
        Self::new(Array2::from_elem(
            (n_examples, n_classes),
            1.0 / n_classes as f64,
        ))
    }

    pub fn n_examples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn column(&self, k: usize) -> ArrayView1<'_, f64> {
        self.data.column(k)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Index of the largest score in each row; ties go to the smallest class.
    pub fn argmax(&self) -> Vec<usize> {
        self.data.rows().into_iter().map(|r| argmax(r)).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabelMatrix {
        LabelMatrix {
            data: self.data.select(Axis(0), indices),
        }
    }
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Assignment of each example to one of `R` sensitive groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupVector {
    assignment: Vec<usize>,
    n_groups: usize,
    members: Vec<Vec<usize>>,
}

impl GroupVector {
    /// Builds a group vector with an explicit group count.
    pub fn new(assignment: Vec<usize>, n_groups: usize) -> Result<Self> {
        check_groups(&assignment, n_groups)?;
        let mut members = vec![Vec::new(); n_groups];
        for (i, &g) in assignment.iter().enumerate() {
            members[g].push(i);
        }
        Ok(Self {
            assignment,
            n_groups,
            members,
        })
    }

    /// Builds a group vector whose group count is `max(assignment) + 1`.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let n_groups = inferred_group_count(&assignment);
        Self::new(assignment, n_groups)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Row indices belonging to group `s`, ascending.
    pub fn members(&self, s: usize) -> &[usize] {
        &self.members[s]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Size of the smallest group.
    pub fn smallest_group(&self) -> usize {
        self.members.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Restricts to the rows at `indices`, keeping the group count.
    pub fn select(&self, indices: &[usize]) -> Result<GroupVector> {
        let assignment = indices.iter().map(|&i| self.assignment[i]).collect();
        GroupVector::new(assignment, self.n_groups)
    }
}

fn inferred_group_count(assignment: &[usize]) -> usize {
    assignment.iter().max().map_or(0, |&m| m + 1)
}

/// Features, labels and groups for the same `N` examples.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Array2<f64>,
    labels: LabelMatrix,
    groups: GroupVector,
}

impl TabularDataset {
    pub fn new(features: Array2<f64>, labels: LabelMatrix, groups: GroupVector) -> Result<Self> {
        let n = labels.n_examples();
        if features.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "feature rows",
                expected: n,
                actual: features.nrows(),
            });
        }
        if groups.len() != n {
            return Err(Error::LengthMismatch {
                what: "group vector",
                expected: n,
                actual: groups.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            groups,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn groups(&self) -> &GroupVector {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.labels.n_examples()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, LabelMatrix, GroupVector) {
        (self.features, self.labels, self.groups)
    }
}

/// Expands hard class ids into degenerate (one-hot) distributions.
pub fn one_hot_encode(hard_labels: &[usize], n_classes: usize) -> Result<LabelMatrix> {
    let mut data = Array2::zeros((hard_labels.len(), n_classes));
    for (row, &class) in hard_labels.iter().enumerate() {
        if class >= n_classes {
            return Err(Error::ClassOutOfRange {
                row,
                class,
                n_classes,
            });
        }
        data[[row, class]] = 1.0;
    }
    LabelMatrix::new(data)
}

/// Checks raw label scores and a raw group assignment against every
/// [`LabelMatrix`] and [`GroupVector`] invariant. The group count is taken to
/// be `max(groups) + 1`.
pub fn validate(labels: ArrayView2<'_, f64>, groups: &[usize]) -> Result<()> {
    check_groups(groups, inferred_group_count(groups))?;
    check_scores(labels)?;
    if labels.nrows() != groups.len() {
        return Err(Error::LengthMismatch {
            what: "group vector",
            expected: labels.nrows(),
            actual: groups.len(),
        });
    }
    Ok(())
}

/// Same as [`validate`] for already-constructed values; only the lengths can
/// disagree.
pub fn validate_pair(labels: &LabelMatrix, groups: &GroupVector) -> Result<()> {
    if labels.n_examples() != groups.len() {
        return Err(Error::LengthMismatch {
            what: "group vector",
            expected: labels.n_examples(),
            actual: groups.len(),
        });
    }
    Ok(())
}

fn check_scores(data: ArrayView2<'_, f64>) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::Empty);
    }
    if data.ncols() < 2 {
        return Err(Error::TooFewClasses(data.ncols()));
    }
    for (row, r) in data.rows().into_iter().enumerate() {
        for (col, &value) in r.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
            if value < -ENTRY_TOL {
                return Err(Error::NegativeEntry { row, col, value });
            }
            if value > 1.0 + ENTRY_TOL {
                return Err(Error::EntryOutOfRange { row, col, value });
            }
        }
        let sum = r.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::RowSum { row, sum });
        }
    }
    Ok(())
}

fn check_groups(assignment: &[usize], n_groups: usize) -> Result<()> {
    if assignment.is_empty() {
        return Err(Error::Empty);
    }
    if n_groups < 2 {
        return Err(Error::TooFewGroups(n_groups));
    }
    let mut counts = vec![0usize; n_groups];
    for (row, &id) in assignment.iter().enumerate() {
        if id >= n_groups {
            return Err(Error::GroupOutOfRange { row, id, n_groups });
        }
        counts[id] += 1;
    }
    if let Some(s) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyGroup(s));
    }
    Ok(())
}
