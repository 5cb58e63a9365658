//! Reduction-to-binary debiasing: scaled-form ADMM over the per-class
//! subproblems.
//!
//! Each round solves one range-constrained subproblem per class (in
//! parallel), projects `H + U` onto the affine set of unit row sums, and
//! updates the scaled duals:
//!
//! ```text
//! F  = Y + tau (Z - U)
//! H  = [solve_class(f_k, lambda + tau, eps)]_k
//! Z' = normalize_rows(H + U)
//! U' = U + H - Z'
//! ```

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DebiasConfig;
use crate::data::{validate_pair, GroupVector, LabelMatrix};
use crate::error::{Error, Result};
use crate::metrics::multiclass_dp;
use crate::subsolver::{solve_class, ClassSubproblem};

/// Euclidean projection onto matrices whose rows sum to one:
/// `M - (1/L) (M 1 - 1) 1'`. Entries may leave `[0, 1]`.
pub fn normalize_rows(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let l = m.ncols() as f64;
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let shift = (row.sum() - 1.0) / l;
        row.mapv_inplace(|v| v - shift);
    }
    out
}

/// `sum_i (lambda/2) ||c_i||^2 - c_i' y_i`.
pub fn objective_value(
    candidate: ArrayView2<'_, f64>,
    labels: &LabelMatrix,
    lambda: f64,
) -> Result<f64> {
    if candidate.dim() != labels.view().dim() {
        return Err(Error::LengthMismatch {
            what: "candidate elements",
            expected: labels.n_examples() * labels.n_classes(),
            actual: candidate.len(),
        });
    }
    let mut total = 0.0;
    Zip::from(candidate).and(labels.view()).for_each(|&c, &y| {
        total += 0.5 * lambda * c * c - c * y;
    });
    Ok(total)
}

/// Clamps to `[0, 1]` and divides each row by its sum. Returns the repaired
/// matrix and the largest absolute entry change.
pub fn repair_rows(z: ArrayView2<'_, f64>) -> Result<(LabelMatrix, f64)> {
    let mut out = z.mapv(|v| v.clamp(0.0, 1.0));
    for (row_idx, mut row) in out.rows_mut().into_iter().enumerate() {
        let sum = row.sum();
        if !(sum > 0.0) {
            return Err(Error::DegenerateRow { row: row_idx, sum });
        }
        row.mapv_inplace(|v| v / sum);
    }
    let adjustment = Zip::from(&out)
        .and(z)
        .fold(0.0f64, |acc, &a, &b| acc.max((a - b).abs()));
    Ok((LabelMatrix::new(out)?, adjustment))
}

fn frobenius_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y))
        .sqrt()
}

/// Iterates of the scaled-form ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    /// Per-class solutions, unnormalized.
    pub h: Array2<f64>,
    /// Row-normalized consensus scores.
    pub z: Array2<f64>,
    /// Scaled dual variables.
    pub u: Array2<f64>,
    pub round: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl AdmmState {
    pub fn new(n_examples: usize, n_classes: usize) -> Self {
        let zeros = Array2::zeros((n_examples, n_classes));
        Self {
            h: zeros.clone(),
            z: zeros.clone(),
            u: zeros,
            round: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
        }
    }

    /// Runs one round in place.
    pub fn step(
        &mut self,
        labels: &LabelMatrix,
        groups: &GroupVector,
        config: &DebiasConfig,
    ) -> Result<()> {
        let round = self.round + 1;
        let tau = config.tau;
        let targets = &labels.view() + &((&self.z - &self.u) * tau);
        let columns: Vec<Vec<f64>> = targets.columns().into_iter().map(|c| c.to_vec()).collect();
        let solved = columns
            .par_iter()
            .map(|scores| {
                let problem = ClassSubproblem {
                    scores,
                    groups,
                    epsilon: config.epsilon,
                    quad_weight: config.lambda + tau,
                };
                solve_class(&problem, config.outer_tol, config.inner_tol).map(|s| s.values)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, values) in solved.into_iter().enumerate() {
            for (i, v) in values.into_iter().enumerate() {
                self.h[[i, k]] = v;
            }
        }
        let z_new = normalize_rows((&self.h + &self.u).view());
        self.u = &self.u + &self.h - &z_new;
        self.primal_residual = frobenius_distance(z_new.view(), self.h.view());
        self.dual_residual = frobenius_distance(z_new.view(), self.z.view());
        self.z = z_new;
        self.round = round;
        let finite = self.z.iter().chain(self.u.iter()).all(|v| v.is_finite());
        if !finite || !self.primal_residual.is_finite() || !self.dual_residual.is_finite() {
            return Err(Error::NonFinite { round });
        }
        Ok(())
    }
}

/// Per-round diagnostics of a debiasing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasReport {
    pub rounds_run: usize,
    /// Training DP of the repaired view of `Z` after each round.
    pub dp_trace: Vec<f64>,
    pub primal_trace: Vec<f64>,
    pub dual_trace: Vec<f64>,
    /// Objective of the repaired view of `Z` after each round.
    pub objective_trace: Vec<f64>,
    pub final_dp: f64,
    pub max_clamp_adjustment: f64,
    pub config: DebiasConfig,
    pub elapsed_ms: f64,
}

/// Debiases `labels` so every class's group means differ by at most
/// `config.epsilon`.
///
/// The returned matrix is `Z` after the last round, clamped to `[0, 1]` and
/// renormalized; at convergence that repair is a no-op up to round-off.
pub fn r2b_debias(
    labels: &LabelMatrix,
    groups: &GroupVector,
    config: &DebiasConfig,
) -> Result<(LabelMatrix, DebiasReport)> {
    r2b_debias_with(labels, groups, config, |_| {})
}

/// Like [`r2b_debias`], calling `observer` after every round.
pub fn r2b_debias_with(
    labels: &LabelMatrix,
    groups: &GroupVector,
    config: &DebiasConfig,
    mut observer: impl FnMut(&AdmmState),
) -> Result<(LabelMatrix, DebiasReport)> {
    config.validate()?;
    validate_pair(labels, groups)?;
    let started = Instant::now();
    let (n, l) = labels.view().dim();
    let threshold = config.residual_tol * ((n * l) as f64).sqrt();

    let mut state = AdmmState::new(n, l);
    let mut report = DebiasReport {
        rounds_run: 0,
        dp_trace: Vec::with_capacity(config.max_rounds),
        primal_trace: Vec::with_capacity(config.max_rounds),
        dual_trace: Vec::with_capacity(config.max_rounds),
        objective_trace: Vec::with_capacity(config.max_rounds),
        final_dp: f64::NAN,
        max_clamp_adjustment: 0.0,
        config: *config,
        elapsed_ms: 0.0,
    };
    let mut output = None;
    while state.round < config.max_rounds {
        state.step(labels, groups, config)?;
        observer(&state);
        let (view, adjustment) = repair_rows(state.z.view())?;
        report.dp_trace.push(multiclass_dp(view.view(), groups)?);
        report
            .objective_trace
            .push(objective_value(view.view(), labels, config.lambda)?);
        report.primal_trace.push(state.primal_residual);
        report.dual_trace.push(state.dual_residual);
        report.rounds_run = state.round;
        report.max_clamp_adjustment = adjustment;
        output = Some(view);
        if state.primal_residual + state.dual_residual <= threshold {
            break;
        }
    }
    let output = output.expect("max_rounds >= 1");
    report.final_dp = *report.dp_trace.last().expect("at least one round");
    report.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((output, report))
}
