//! Independent reference solvers used by the integration tests. None of them
//! call into the library's optimization code.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Euclidean projection of `v` onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn window_cost(means: &[f64], sizes: &[f64], epsilon: f64, a: f64) -> f64 {
    means
        .iter()
        .zip(sizes)
        .map(|(&m, &n)| n * (m.clamp(a, a + epsilon) - m).powi(2))
        .sum()
}

/// Minimizer over `a` of `sum_s n_s (clamp(m_s, a, a + eps) - m_s)^2`.
///
/// Between consecutive breakpoints (`m_s - eps` and `m_s`) the cost is one
/// quadratic; its vertex, clamped to the piece, is the piece's minimizer.
pub fn parity_window_base(means: &[f64], sizes: &[f64], epsilon: f64) -> f64 {
    let mut knots: Vec<f64> = means.iter().flat_map(|&m| [m - epsilon, m]).collect();
    knots.sort_by(f64::total_cmp);
    let mut best = (knots[0], window_cost(means, sizes, epsilon, knots[0]));
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let (mut weight, mut target) = (0.0, 0.0);
        for (&m, &n) in means.iter().zip(sizes) {
            if m < mid {
                weight += n;
                target += n * m;
            } else if m > mid + epsilon {
                weight += n;
                target += n * (m - epsilon);
            }
        }
        let a = if weight > 0.0 {
            (target / weight).clamp(lo, hi)
        } else {
            lo
        };
        let cost = window_cost(means, sizes, epsilon, a);
        if cost < best.1 {
            best = (a, cost);
        }
    }
    best.0
}

/// Euclidean projection of a matrix onto the set where, in every column, the
/// group means fit inside a window of width `epsilon`. The projection moves
/// each group's entries by a common shift.
pub fn project_parity(
    x: &Array2<f64>,
    groups: &[usize],
    n_groups: usize,
    epsilon: f64,
) -> Array2<f64> {
    let mut out = x.clone();
    let mut sizes = vec![0.0; n_groups];
    for &s in groups {
        sizes[s] += 1.0;
    }
    for k in 0..x.ncols() {
        let mut means = vec![0.0; n_groups];
        for (i, &s) in groups.iter().enumerate() {
            means[s] += x[[i, k]];
        }
        for s in 0..n_groups {
            means[s] /= sizes[s];
        }
        let a = parity_window_base(&means, &sizes, epsilon);
        for (i, &s) in groups.iter().enumerate() {
            out[[i, k]] += means[s].clamp(a, a + epsilon) - means[s];
        }
    }
    out
}

/// Projection onto (row simplex) ∩ (parity set) by Dykstra's alternating
/// projections.
pub fn dykstra(x0: &Array2<f64>, groups: &[usize], n_groups: usize, epsilon: f64) -> Array2<f64> {
    let mut x = x0.clone();
    let mut p = Array2::<f64>::zeros(x.dim());
    let mut q = Array2::<f64>::zeros(x.dim());
    for _ in 0..1_000_000 {
        let xp = &x + &p;
        let mut a = xp.clone();
        for mut row in a.rows_mut() {
            let proj = project_simplex(&row.to_vec());
            row.iter_mut().zip(proj).for_each(|(r, v)| *r = v);
        }
        p = &xp - &a;
        let aq = &a + &q;
        let next = project_parity(&aq, groups, n_groups, epsilon);
        q = &aq - &next;
        // stop once the two projections agree, so the point lies in both sets
        let gap = (&next - &a).mapv(|v| v * v).sum().sqrt();
        x = next;
        if gap < 1e-11 {
            break;
        }
    }
    x
}

/// `sum (lambda/2) c^2 - c y` over all entries.
pub fn eq5_objective(c: &Array2<f64>, y: &Array2<f64>, lambda: f64) -> f64 {
    c.iter()
        .zip(y.iter())
        .map(|(&c, &y)| 0.5 * lambda * c * c - c * y)
        .sum()
}

/// Projected gradient on the constrained label objective with step `1/lambda`;
/// the projection onto the feasible set is computed by [`dykstra`].
pub fn projected_gradient_oracle(
    y: &Array2<f64>,
    groups: &[usize],
    n_groups: usize,
    epsilon: f64,
    lambda: f64,
) -> Array2<f64> {
    let step = 1.0 / lambda;
    let mut c = Array2::from_elem(y.dim(), 1.0 / y.ncols() as f64);
    for _ in 0..3 {
        let grad = c.mapv(|v| lambda * v) - y;
        let next = dykstra(&(&c - &grad.mapv(|g| step * g)), groups, n_groups, epsilon);
        let change = (&next - &c).mapv(|v| v.abs()).sum();
        c = next;
        if change < 1e-12 {
            break;
        }
    }
    c
}

/// Minimum of `(w/2)||y||^2 - y'f` over the box with `mean(y) = t`, sampled
/// on a dense grid of dual shifts and interpolated linearly in `t`.
pub struct GroupProfile {
    means: Vec<f64>,
    values: Vec<f64>,
    best: usize,
}

impl GroupProfile {
    pub fn new(f: &[f64], w: f64, samples: usize) -> Self {
        let fmin = f.iter().copied().fold(f64::INFINITY, f64::min);
        let fmax = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = (fmin - w - 1.0, fmax + 1.0);
        let mut pts: Vec<(f64, f64)> = (0..=samples)
            .map(|j| {
                let mu = hi - (hi - lo) * j as f64 / samples as f64;
                let y: Vec<f64> = f
                    .iter()
                    .map(|&fi| ((fi - mu) / w).clamp(0.0, 1.0))
                    .collect();
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                let obj: f64 = y
                    .iter()
                    .zip(f)
                    .map(|(&y, &f)| 0.5 * w * y * y - y * f)
                    .sum();
                (mean, obj)
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
        let best = (0..pts.len())
            .min_by(|&i, &j| pts[i].1.total_cmp(&pts[j].1))
            .unwrap();
        Self {
            means: pts.iter().map(|p| p.0).collect(),
            values: pts.iter().map(|p| p.1).collect(),
            best,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let j = self.means.partition_point(|&m| m < t);
        if j == 0 {
            return self.values[0];
        }
        if j == self.means.len() {
            return self.values[j - 1];
        }
        let (m0, m1) = (self.means[j - 1], self.means[j]);
        let r = (t - m0) / (m1 - m0);
        self.values[j - 1] + r * (self.values[j] - self.values[j - 1])
    }

    /// Minimum over means in `[lo, hi]`.
    pub fn min_on(&self, lo: f64, hi: f64) -> f64 {
        self.at(self.means[self.best].clamp(lo, hi))
    }
}

/// Grid search over the window base on top of per-group grid profiles.
pub fn nested_grid_class_objective(
    f: &[f64],
    groups: &[usize],
    n_groups: usize,
    epsilon: f64,
    w: f64,
) -> f64 {
    let profiles: Vec<GroupProfile> = (0..n_groups)
        .map(|s| {
            let fs: Vec<f64> = f
                .iter()
                .zip(groups)
                .filter(|(_, &g)| g == s)
                .map(|(&v, _)| v)
                .collect();
            GroupProfile::new(&fs, w, 20_000)
        })
        .collect();
    let total = |a: f64| -> f64 {
        profiles
            .iter()
            .map(|p| p.min_on(a.max(0.0), (a + epsilon).min(1.0)))
            .sum()
    };
    let (mut lo, mut hi) = (-epsilon, 1.0);
    let mut best = f64::INFINITY;
    for _ in 0..4 {
        let n = 2000;
        let step = (hi - lo) / n as f64;
        let mut arg = lo;
        for j in 0..=n {
            let a = lo + step * j as f64;
            let v = total(a);
            if v < best {
                best = v;
                arg = a;
            }
        }
        lo = (arg - 2.0 * step).max(-epsilon);
        hi = (arg + 2.0 * step).min(1.0);
    }
    best
}

/// Random soft labels whose dominant class leans toward the group id.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    l: usize,
    r: usize,
) -> (Array2<f64>, Vec<usize>) {
    let groups: Vec<usize> = (0..n)
        .map(|i| if i < r { i } else { rng.random_range(0..r) })
        .collect();
    let mut y = Array2::zeros((n, l));
    for i in 0..n {
        let hard = rng.random_bool(0.3);
        let lean = if rng.random_bool(0.6) {
            groups[i] % l
        } else {
            rng.random_range(0..l)
        };
        if hard {
            y[[i, lean]] = 1.0;
        } else {
            let raw: Vec<f64> = (0..l)
                .map(|k| -rng.random_range(1e-6f64..1.0).ln() + if k == lean { 1.0 } else { 0.0 })
                .collect();
            let total: f64 = raw.iter().sum();
            for k in 0..l {
                y[[i, k]] = raw[k] / total;
            }
        }
    }
    (y, groups)
}

/// Group-mean range of one column.
pub fn column_dp(x: &Array2<f64>, groups: &[usize], n_groups: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..x.ncols() {
        let mut sum = vec![0.0; n_groups];
        let mut cnt = vec![0.0; n_groups];
        for (i, &s) in groups.iter().enumerate() {
            sum[s] += x[[i, k]];
            cnt[s] += 1.0;
        }
        let means: Vec<f64> = sum.iter().zip(&cnt).map(|(s, c)| s / c).collect();
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max(hi - lo);
    }
    worst
}
