//! Exact solver for the per-class debiasing subproblem of an R2B round:
//!
//! ```text
//! minimize    (w/2) ||y||^2 - y'f
//! subject to  0 <= y <= 1
//!             max_s mean_s(y) - min_s mean_s(y) <= eps
//! ```
//!
//! The range constraint is rewritten with a free anchor `a` as
//! `a <= mean_s(y) <= a + eps` for every group `s`. For fixed `a` the groups
//! decouple, and each group's minimizer has the form
//! `y_i = clip((f_i - mu) / w, 0, 1)` for a scalar shift `mu` found by
//! bisection. The optimal value `V(a)` is convex in `a`, so the anchor is found
//! by golden-section search.

use crate::data::GroupVector;
use crate::error::{Error, Result};

/// Bracket width below which the shift bisection gives up refining.
const SHIFT_BRACKET_FLOOR: f64 = 1e-14;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// One class column of an R2B round.
#[derive(Debug, Clone, Copy)]
pub struct ClassSubproblem<'a> {
    /// Target scores `f_k`; any real values.
    pub scores: &'a [f64],
    pub groups: &'a GroupVector,
    pub epsilon: f64,
    /// Coefficient of the quadratic term, `lambda + tau` inside R2B.
    pub quad_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub values: Vec<f64>,
    pub anchor: f64,
    pub group_means: Vec<f64>,
    pub objective: f64,
}

impl SubproblemSolution {
    pub fn mean_range(&self) -> f64 {
        let hi = self
            .group_means
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = self
            .group_means
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolution {
    pub values: Vec<f64>,
    pub mean: f64,
    pub shift: f64,
}

#[inline]
fn clipped(f: f64, shift: f64, w: f64) -> f64 {
    ((f - shift) / w).clamp(0.0, 1.0)
}

fn mean_at(scores: &[f64], shift: f64, w: f64) -> f64 {
    scores.iter().map(|&f| clipped(f, shift, w)).sum::<f64>() / scores.len() as f64
}

fn objective_at(scores: &[f64], shift: f64, w: f64) -> f64 {
    scores
        .iter()
        .map(|&f| {
            let y = clipped(f, shift, w);
            0.5 * w * y * y - y * f
        })
        .sum()
}

/// Shift `mu` whose clipped mean lands in `[lo, hi]`, together with that mean.
/// Caller guarantees `lo <= hi` and that both lie in `[0, 1]`.
fn find_shift(scores: &[f64], lo: f64, hi: f64, w: f64, tol: f64) -> (f64, f64) {
    let free = mean_at(scores, 0.0, w);
    if free >= lo && free <= hi {
        return (0.0, free);
    }
    let target = if free < lo { lo } else { hi };
    let fmin = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // The mean is nonincreasing in the shift: 1 at `fmin - w`, 0 at `fmax`.
    let (mut left, mut right) = if free < lo {
        ((fmin - w).min(0.0), 0.0)
    } else {
        (0.0, fmax.max(0.0))
    };
    let mut shift = 0.5 * (left + right);
    let mut mean = mean_at(scores, shift, w);
    while (mean - target).abs() > tol && right - left > SHIFT_BRACKET_FLOOR {
        if mean > target {
            left = shift;
        } else {
            right = shift;
        }
        shift = 0.5 * (left + right);
        mean = mean_at(scores, shift, w);
    }
    (shift, mean)
}

/// Minimizes `(w/2)||y||^2 - y'f` over the box with `mean(y)` restricted to
/// `[lo, hi] ∩ [0, 1]`.
pub fn solve_group(
    scores: &[f64],
    interval: (f64, f64),
    quad_weight: f64,
    inner_tol: f64,
) -> Result<GroupSolution> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("group has no scores".into()));
    }
    if !(quad_weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quad_weight must be > 0, got {quad_weight}"
        )));
    }
    let (lo, hi) = interval;
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "empty interval [{lo}, {hi}]"
        )));
    }
    let (clo, chi) = (lo.max(0.0), hi.min(1.0));
    if clo > chi {
        return Err(Error::Infeasible { lo, hi });
    }
    let (shift, mean) = find_shift(scores, clo, chi, quad_weight, inner_tol);
    let values = scores
        .iter()
        .map(|&f| clipped(f, shift, quad_weight))
        .collect();
    Ok(GroupSolution {
        values,
        mean,
        shift,
    })
}

struct Split {
    scores: Vec<Vec<f64>>,
}

impl Split {
    fn new(problem: &ClassSubproblem<'_>) -> Self {
        let scores = (0..problem.groups.n_groups())
            .map(|s| {
                problem
                    .groups
                    .members(s)
                    .iter()
                    .map(|&i| problem.scores[i])
                    .collect()
            })
            .collect();
        Self { scores }
    }

    /// Optimal inner value at anchor `a`, and the per-group shifts.
    fn value(&self, a: f64, eps: f64, w: f64, tol: f64) -> (f64, Vec<f64>) {
        let lo = a.clamp(0.0, 1.0);
        let hi = (a + eps).clamp(lo, 1.0);
        let mut total = 0.0;
        let shifts = self
            .scores
            .iter()
            .map(|g| {
                let (shift, _) = find_shift(g, lo, hi, w, tol);
                total += objective_at(g, shift, w);
                shift
            })
            .collect();
        (total, shifts)
    }
}

fn assemble(problem: &ClassSubproblem<'_>, shifts: &[f64], anchor: f64) -> SubproblemSolution {
    let w = problem.quad_weight;
    let groups = problem.groups;
    let mut values = vec![0.0; problem.scores.len()];
    let mut group_means = vec![0.0; groups.n_groups()];
    let mut objective = 0.0;
    for (s, &shift) in shifts.iter().enumerate() {
        let members = groups.members(s);
        for &i in members {
            let f = problem.scores[i];
            let y = clipped(f, shift, w);
            values[i] = y;
            group_means[s] += y;
            objective += 0.5 * w * y * y - y * f;
        }
        group_means[s] /= members.len() as f64;
    }
    SubproblemSolution {
        values,
        anchor,
        group_means,
        objective,
    }
}

/// Solves one class column exactly.
pub fn solve_class(
    problem: &ClassSubproblem<'_>,
    outer_tol: f64,
    inner_tol: f64,
) -> Result<SubproblemSolution> {
    let groups = problem.groups;
    if problem.scores.len() != groups.len() {
        return Err(Error::LengthMismatch {
            what: "class scores",
            expected: groups.len(),
            actual: problem.scores.len(),
        });
    }
    if !(problem.quad_weight > 0.0) || !(problem.epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need quad_weight > 0 and epsilon >= 0, got {} and {}",
            problem.quad_weight, problem.epsilon
        )));
    }
    let w = problem.quad_weight;
    let eps = problem.epsilon;
    let split = Split::new(problem);

    let free: Vec<f64> = split.scores.iter().map(|g| mean_at(g, 0.0, w)).collect();
    let free_lo = free.iter().copied().fold(f64::INFINITY, f64::min);
    let free_hi = free.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if free_hi - free_lo <= eps {
        let zeros = vec![0.0; free.len()];
        return Ok(assemble(problem, &zeros, free_lo));
    }

    // V(a) is nonincreasing below `free_lo - eps` and nondecreasing above
    // `free_hi`, so the minimizer lies in between.
    let mut left = (free_lo - eps).clamp(0.0, 1.0);
    let mut right = free_hi.clamp(0.0, 1.0);
    let eval = |a: f64| split.value(a, eps, w, inner_tol);

    let mut best = (left, eval(left));
    let consider = |a: f64, v: (f64, Vec<f64>), best: &mut (f64, (f64, Vec<f64>))| {
        if v.0 < best.1 .0 {
            *best = (a, v);
        }
    };
    let r = eval(right);
    consider(right, r, &mut best);

    let mut x1 = right - INV_PHI * (right - left);
    let mut x2 = left + INV_PHI * (right - left);
    let (mut v1, mut v2) = (eval(x1), eval(x2));
    while right - left > outer_tol {
        if v1.0 <= v2.0 {
            right = x2;
            x2 = x1;
            consider(x1, v1.clone(), &mut best);
            v2 = v1;
            x1 = right - INV_PHI * (right - left);
            v1 = eval(x1);
        } else {
            left = x1;
            x1 = x2;
            consider(x2, v2.clone(), &mut best);
            v1 = v2;
            x2 = left + INV_PHI * (right - left);
            v2 = eval(x2);
        }
    }
    consider(x1, v1, &mut best);
    consider(x2, v2, &mut best);
    let (anchor, (_, shifts)) = best;
    Ok(assemble(problem, &shifts, anchor))
}

/// `V(a)` for the given problem; exposed for convexity diagnostics.
pub fn anchor_value(problem: &ClassSubproblem<'_>, anchor: f64, inner_tol: f64) -> f64 {
    Split::new(problem)
        .value(anchor, problem.epsilon, problem.quad_weight, inner_tol)
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-10;

    fn qp_objective(y: &[f64], f: &[f64], w: f64) -> f64 {
        y.iter()
            .zip(f)
            .map(|(&y, &f)| 0.5 * w * y * y - y * f)
            .sum()
    }

    #[test]
    fn unconstrained_clip_is_kept() {
        let sol = solve_group(&[0.5, 0.5], (0.0, 1.0), 1.0, TOL).unwrap();
        assert_eq!(sol.values, vec![0.5, 0.5]);
        assert_eq!(sol.shift, 0.0);
    }

    #[test]
    fn shift_equalizes_mean() {
        let sol = solve_group(&[1.0, 0.5], (0.5, 0.5), 1.0, TOL).unwrap();
        assert!((sol.values[0] - 0.75).abs() < 1e-9);
        assert!((sol.values[1] - 0.25).abs() < 1e-9);
        assert!((sol.mean - 0.5).abs() <= TOL);
        // Stationarity: w*y_i - f_i + mu = 0 on the free coordinates.
        assert!((sol.shift - 0.25).abs() < 1e-9);
        for (y, f) in sol.values.iter().zip([1.0, 0.5]) {
            assert!((y - f + sol.shift).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_interval() {
        assert!(matches!(
            solve_group(&[0.2], (1.5, 2.0), 1.0, TOL),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(
            solve_group(&[0.2], (0.6, 0.5), 1.0, TOL),
            Err(Error::InvalidArgument(_))
        ));
    }

    /// Dykstra projection onto box ∩ {lo <= mean <= hi}, used as the projection
    /// step of a projected-gradient oracle.
    fn project_box_slab(v: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let n = v.len() as f64;
        let mut x = v.to_vec();
        let mut p = vec![0.0; v.len()];
        let mut q = vec![0.0; v.len()];
        for _ in 0..5000 {
            let yb: Vec<f64> = x
                .iter()
                .zip(&p)
                .map(|(a, b)| (a + b).clamp(0.0, 1.0))
                .collect();
            p = x
                .iter()
                .zip(&p)
                .zip(&yb)
                .map(|((a, b), c)| a + b - c)
                .collect();
            let t: Vec<f64> = yb.iter().zip(&q).map(|(a, b)| a + b).collect();
            let m = t.iter().sum::<f64>() / n;
            let d = m.clamp(lo, hi) - m;
            let ys: Vec<f64> = t.iter().map(|a| a + d).collect();
            q = t.iter().zip(&ys).map(|(a, b)| a - b).collect();
            x = ys;
        }
        x
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let f: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..1.5)).collect();
            let w = 1.5;
            let sol = solve_group(&f, (0.3, 0.4), w, TOL).unwrap();
            let mut y = vec![0.5; 5];
            let step = 1.0 / w;
            for _ in 0..400 {
                let g: Vec<f64> = y
                    .iter()
                    .zip(&f)
                    .map(|(y, f)| y - step * (w * y - f))
                    .collect();
                y = project_box_slab(&g, 0.3, 0.4);
            }
            let oracle = qp_objective(&y, &f, w);
            let ours = qp_objective(&sol.values, &f, w);
            assert!((ours - oracle).abs() < 1e-6, "{ours} vs {oracle}");
        }
    }

    fn groups(assign: &[usize]) -> GroupVector {
        GroupVector::from_assignment(assign.to_vec()).unwrap()
    }

    #[test]
    fn loose_epsilon_returns_clip() {
        let g = groups(&[0, 1, 0, 1]);
        let f = [0.3, 1.7, -0.2, 0.4];
        let p = ClassSubproblem {
            scores: &f,
            groups: &g,
            epsilon: 1.0,
            quad_weight: 1.5,
        };
        let sol = solve_class(&p, 1e-9, TOL).unwrap();
        let expected: Vec<f64> = f.iter().map(|v| (v / 1.5_f64).clamp(0.0, 1.0)).collect();
        assert_eq!(sol.values, expected);
    }

    #[test]
    fn two_points_zero_epsilon() {
        let g = groups(&[0, 1]);
        let f = [1.0, 0.0];
        let p = ClassSubproblem {
            scores: &f,
            groups: &g,
            epsilon: 0.0,
            quad_weight: 1.0,
        };
        let sol = solve_class(&p, 1e-9, TOL).unwrap();
        assert!((sol.anchor - 0.5).abs() < 1e-6);
        assert!((sol.values[0] - 0.5).abs() < 1e-6);
        assert!((sol.values[1] - 0.5).abs() < 1e-6);
        // a^2 - a at a = 1/2
        assert!((sol.objective + 0.25).abs() < 1e-9);
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, r: usize) -> (Vec<f64>, GroupVector) {
        let mut assign: Vec<usize> = (0..n).map(|i| i % r).collect();
        for i in r..n {
            assign[i] = rng.random_range(0..r);
        }
        let f = (0..n).map(|_| rng.random_range(-0.5..2.0)).collect();
        (f, groups(&assign))
    }

    #[test]
    fn invariants_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..40 {
            let (f, g) = random_problem(&mut rng, 30, 3);
            let eps = [0.0, 0.03, 0.1][case % 3];
            let p = ClassSubproblem {
                scores: &f,
                groups: &g,
                epsilon: eps,
                quad_weight: 1.5,
            };
            let sol = solve_class(&p, 1e-9, TOL).unwrap();
            assert!(sol.values.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(sol.mean_range() <= eps + 2.0 * TOL, "{}", sol.mean_range());
            for s in 0..3 {
                let m = g.members(s);
                for &i in m {
                    for &j in m {
                        if f[i] >= f[j] {
                            assert!(sol.values[i] >= sol.values[j]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn anchor_value_is_convex_on_a_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let (f, g) = random_problem(&mut rng, 20, 3);
            let p = ClassSubproblem {
                scores: &f,
                groups: &g,
                epsilon: 0.05,
                quad_weight: 1.5,
            };
            let v: Vec<f64> = (0..100)
                .map(|i| anchor_value(&p, i as f64 / 99.0, 1e-13))
                .collect();
            for w in v.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9, "{w:?}");
            }
        }
    }
}
