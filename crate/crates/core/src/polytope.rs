//! The relaxed matching polytope
//! `{Q : 0 <= q <= 1, sum_j q[k][j] >= q_l, sum_k q[k][j] <= q_s}`,
//! Euclidean projection onto it, and projected-gradient ascent over it.
//!
//! Projection works on the dual. Given one price per column cap, the best
//! shift for each row floor is exact, so only `J` prices remain and Newton's
//! method finds them in a few steps.
//!
//! Dykstra's alternating scheme is kept as a fallback. It alternates over two
//! families: the box intersected with each row floor, and the box intersected
//! with each column cap. Both split into independent per-row / per-column
//! problems that are solved exactly. When `K q_l == J q_s` every floor and cap
//! must be tight, and both methods treat them as equalities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingPolytope {
    num_users: usize,
    num_sats: usize,
    q_s: f64,
    q_l: f64,
    /// `K q_l == J q_s`: every floor and cap must hold with equality.
    tight: bool,
}

impl MatchingPolytope {
    /// Fails unless `K q_l <= J q_s`, `q_l <= J` and both bounds are non-negative.
    pub fn new(num_users: usize, num_sats: usize, q_s: f64, q_l: f64) -> Result<Self> {
        if !(q_s >= 0.0) || !(q_l >= 0.0) || !q_s.is_finite() || !q_l.is_finite() {
            return Err(Error::Config(format!("bounds must be non-negative, got q_s={q_s} q_l={q_l}")));
        }
        if q_l > num_sats as f64 {
            return Err(Error::Infeasible(format!("q_l = {q_l} exceeds J = {num_sats}")));
        }
        if num_users as f64 * q_l > num_sats as f64 * q_s + 1e-12 {
            return Err(Error::Infeasible(format!(
                "K q_l = {} exceeds J q_s = {}",
                num_users as f64 * q_l,
                num_sats as f64 * q_s
            )));
        }
        let tight = num_users as f64 * q_l == num_sats as f64 * q_s && q_s > 0.0;
        Ok(Self {
            num_users,
            num_sats,
            q_s,
            q_l,
            tight,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_sats(&self) -> usize {
        self.num_sats
    }

    /// Largest violation of any constraint (0 when feasible).
    pub fn violation(&self, x: &Matrix) -> f64 {
        let mut worst = 0f64;
        for &v in x.as_slice() {
            worst = worst.max(-v).max(v - 1.0);
        }
        for k in 0..self.num_users {
            worst = worst.max(self.q_l - x.row_sum(k));
        }
        for j in 0..self.num_sats {
            worst = worst.max(x.col_sum(j) - self.q_s);
        }
        worst
    }

    pub fn contains(&self, x: &Matrix, tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// A symmetric interior-ish point: every entry `min(1, q_s / K)`, raised
    /// uniformly if needed to meet the row floor.
    pub fn uniform_point(&self) -> Matrix {
        let v = (self.q_s / self.num_users as f64)
            .max(self.q_l / self.num_sats as f64)
            .min(1.0);
        Matrix::filled(self.num_users, self.num_sats, v)
    }

    fn row_side(&self) -> Side {
        if self.tight {
            Side::Exactly
        } else {
            Side::AtLeast
        }
    }

    fn col_side(&self) -> Side {
        if self.tight {
            Side::Exactly
        } else {
            Side::AtMost
        }
    }

    fn project_rows(&self, x: &mut Matrix) {
        let cols = self.num_sats;
        for row in x.as_mut_slice().chunks_mut(cols) {
            project_box_sum(row, self.q_l, self.row_side());
        }
    }

    fn project_cols(&self, x: &mut Matrix) {
        let mut col = vec![0.0; self.num_users];
        for j in 0..self.num_sats {
            for (k, c) in col.iter_mut().enumerate() {
                *c = x[(k, j)];
            }
            project_box_sum(&mut col, self.q_s, self.col_side());
            for (k, c) in col.iter().enumerate() {
                x[(k, j)] = *c;
            }
        }
    }

    /// Euclidean projection of `point` onto the polytope. The box and row
    /// floors hold exactly; iteration stops once every column is within `tol`
    /// of its cap (and of optimality for its price). The Dykstra fallback
    /// instead keeps the caps exact and stops on `tol` for the floors.
    pub fn project(&self, point: &Matrix, tol: f64) -> Matrix {
        self.project_with_stats(point, tol).0
    }

    /// Like [`project`](Self::project), also returning the iteration count
    /// (Newton steps, or Dykstra sweeps if the fallback ran).
    pub fn project_with_stats(&self, point: &Matrix, tol: f64) -> (Matrix, usize) {
        self.project_dual(point, tol)
            .unwrap_or_else(|| self.dykstra(point, tol))
    }

    fn dykstra(&self, point: &Matrix, tol: f64) -> (Matrix, usize) {
        const MAX_SWEEPS: usize = 100_000;
        let mut x = point.clone();
        let mut p = Matrix::zeros(point.rows(), point.cols());
        let mut q = Matrix::zeros(point.rows(), point.cols());
        for sweep in 1..=MAX_SWEEPS {
            // y = P_rows(x + p); p <- x + p - y
            let xp = x.axpy(1.0, &p);
            let mut y = xp.clone();
            self.project_rows(&mut y);
            p = xp.sub(&y);
            // x' = P_cols(y + q); q <- y + q - x'
            let yq = y.axpy(1.0, &q);
            let mut next = yq.clone();
            self.project_cols(&mut next);
            q = yq.sub(&next);
            let moved = next.max_abs_diff(&x);
            x = next;
            if moved < tol && self.violation(&x) < tol {
                return (x, sweep);
            }
        }
        (x, MAX_SWEEPS)
    }

    /// Projection through the dual. The solution is
    /// `x[k][j] = clamp(v[k][j] + a[k] - b[j])` with row shifts `a >= 0` and
    /// column prices `b >= 0` (both free of sign when the polytope is tight).
    /// For fixed `b` each `a[k]` is exact, which leaves a concave piecewise
    /// quadratic dual in `b` alone; projected semismooth Newton on it usually
    /// finishes in a handful of steps where Dykstra needs hundreds of sweeps.
    /// Returns `None` if the line search stalls.
    fn project_dual(&self, v: &Matrix, tol: f64) -> Option<(Matrix, usize)> {
        const MAX_STEPS: usize = 200;
        let (kk, jj) = (self.num_users, self.num_sats);
        let bounded = !self.tight;
        let eval = |b: &[f64]| {
            let mut x = Matrix::zeros(kk, jj);
            let mut row_active = vec![false; kk];
            let mut w = vec![0.0; jj];
            let mut dual = 0.0;
            for k in 0..kk {
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj = v[(k, j)] - b[j];
                }
                let a = box_sum_shift(&w, self.q_l, self.row_side());
                row_active[k] = self.tight || a != 0.0;
                let mut row = 0.0;
                for j in 0..jj {
                    let xkj = (w[j] + a).clamp(0.0, 1.0);
                    x[(k, j)] = xkj;
                    row += xkj;
                    dual += 0.5 * (xkj - v[(k, j)]).powi(2) + b[j] * xkj;
                }
                dual -= a * (row - self.q_l);
            }
            let grad: Vec<f64> = (0..jj).map(|j| x.col_sum(j) - self.q_s).collect();
            dual -= self.q_s * b.iter().sum::<f64>();
            (x, row_active, dual, grad)
        };
        // a price at its bound with the cap slack is optimal as it is
        let pinned = |b: &[f64], g: &[f64], j: usize| bounded && b[j] <= 0.0 && g[j] <= 0.0;
        let residual = |b: &[f64], g: &[f64]| {
            (0..jj)
                .filter(|&j| !pinned(b, g, j))
                .fold(0f64, |m, j| m.max(g[j].abs()))
        };

        let mut b = vec![0.0; jj];
        let (mut x, mut row_active, mut dual, mut grad) = eval(&b);
        for step in 0..MAX_STEPS {
            let res = residual(&b, &grad);
            if res <= tol {
                return Some((x, step));
            }
            let free_cols: Vec<usize> = (0..jj).filter(|&j| !pinned(&b, &grad, j)).collect();
            let n = free_cols.len();
            let mut slot = vec![usize::MAX; jj];
            for (s, &j) in free_cols.iter().enumerate() {
                slot[j] = s;
            }
            // generalized Hessian of -dual over the free prices: per row, the
            // identity on its interior entries, centred when the row is binding
            let mut h = vec![0.0; n * n];
            let mut interior = Vec::with_capacity(jj);
            for k in 0..kk {
                interior.clear();
                interior.extend((0..jj).filter(|&j| x[(k, j)] > 0.0 && x[(k, j)] < 1.0));
                let inv = if row_active[k] { 1.0 / interior.len().max(1) as f64 } else { 0.0 };
                for &i in &interior {
                    if slot[i] == usize::MAX {
                        continue;
                    }
                    h[slot[i] * n + slot[i]] += 1.0;
                    for &j in &interior {
                        if slot[j] != usize::MAX {
                            h[slot[i] * n + slot[j]] -= inv;
                        }
                    }
                }
            }
            let ridge = 1e-10 * (1.0 + (0..n).map(|i| h[i * n + i]).fold(0.0, f64::max));
            (0..n).for_each(|i| h[i * n + i] += ridge);
            let g_free: Vec<f64> = free_cols.iter().map(|&j| grad[j]).collect();
            let mut dir = vec![0.0; jj];
            match cholesky_solve(&mut h, &g_free, n) {
                Some(d) if d.iter().zip(&g_free).map(|(d, g)| d * g).sum::<f64>() > 0.0 => {
                    free_cols.iter().zip(d).for_each(|(&j, d)| dir[j] = d);
                }
                _ => free_cols.iter().for_each(|&j| dir[j] = grad[j]),
            }
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = b
                    .iter()
                    .zip(&dir)
                    .map(|(b, d)| if bounded { (b + t * d).max(0.0) } else { b + t * d })
                    .collect();
                let gain: f64 = trial.iter().zip(&b).zip(&grad).map(|((p, b), g)| (p - b) * g).sum();
                let (tx, ta, td, tg) = eval(&trial);
                // near the optimum the dual gain drops below its rounding
                // error; a shrinking residual is then the better witness
                let flat = td >= dual - 1e-14 * dual.abs().max(1.0) && residual(&trial, &tg) < res;
                if gain > 0.0 && (td >= dual + 1e-4 * gain || flat) {
                    (b, x, row_active, dual, grad) = (trial, tx, ta, td, tg);
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    return None;
                }
            }
        }
        None
    }

    /// Projected-gradient ascent of a concave `objective` from a feasible `start`.
    pub fn maximize<F: ConcaveObjective + ?Sized>(
        &self,
        objective: &F,
        start: &Matrix,
        cfg: &PgaConfig,
    ) -> Result<Ascent> {
        let mut x = if self.contains(start, cfg.projection_tol) {
            start.clone()
        } else {
            self.project(start, cfg.projection_tol)
        };
        let mut fx = objective.value(&x);
        check_finite(fx, &x, "objective")?;
        let mut trace = vec![fx];
        let mut step: Option<f64> = None;
        let mut converged = false;
        let mut iterations = 0;

        while iterations < cfg.max_iters {
            iterations += 1;
            let grad = objective.gradient(&x);
            if !grad.is_finite() {
                return Err(Error::Numerical {
                    message: "non-finite gradient".into(),
                    iterate: x.into_vec(),
                });
            }
            let scale = grad.as_slice().iter().fold(0f64, |m, g| m.max(g.abs()));
            if scale == 0.0 {
                converged = true;
                break;
            }
            let mut alpha = step.unwrap_or(1.0 / scale);
            let accepted = loop {
                let y = self.project(&x.axpy(alpha, &grad), cfg.projection_tol);
                let d = y.sub(&x);
                let predicted = grad.dot(&d);
                if d.norm() == 0.0 || predicted <= 0.0 {
                    break None;
                }
                let fy = objective.value(&y);
                check_finite(fy, &y, "objective")?;
                if fy >= fx + cfg.sufficient_increase * predicted {
                    break Some((y, fy, d));
                }
                alpha *= cfg.shrink;
                if alpha * scale < 1e-16 {
                    break None;
                }
            };
            let Some((y, fy, d)) = accepted else {
                converged = true;
                break;
            };
            let pg_norm = d.norm() / alpha;
            x = y;
            fx = fy;
            trace.push(fx);
            step = Some(alpha * 2.0);
            if pg_norm < cfg.grad_tol {
                converged = true;
                break;
            }
        }
        Ok(Ascent {
            argmax: x,
            value: fx,
            trace,
            iterations,
            converged,
        })
    }
}

fn check_finite(v: f64, x: &Matrix, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical {
            message: format!("non-finite {what} ({v})"),
            iterate: x.as_slice().to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    AtLeast,
    AtMost,
    Exactly,
}

/// Exact projection of `v` onto `{0 <= x <= 1, sum x >= target}` (or `<=`, `==`).
///
/// The solution is `clamp(v + t)` for the shift `t` that makes the sum hit
/// the target; `sum clamp(v + t)` is piecewise linear in `t` with kinks at
/// `-v_i` and `1 - v_i`, so `t` is found exactly between adjacent kinks.
fn project_box_sum(v: &mut [f64], target: f64, side: Side) {
    let t = box_sum_shift(v, target, side);
    v.iter_mut().for_each(|x| *x = (*x + t).clamp(0.0, 1.0));
}

/// The shift `t` of [`project_box_sum`]; zero when the sum constraint is
/// slack after clamping.
fn box_sum_shift(v: &[f64], target: f64, side: Side) -> f64 {
    let clamped_sum: f64 = v.iter().map(|x| x.clamp(0.0, 1.0)).sum();
    let active = match side {
        Side::AtLeast => clamped_sum < target,
        Side::AtMost => clamped_sum > target,
        Side::Exactly => clamped_sum != target,
    };
    if !active {
        return 0.0;
    }
    let target = target.clamp(0.0, v.len() as f64);
    let total = |t: f64| -> f64 { v.iter().map(|x| (x + t).clamp(0.0, 1.0)).sum() };
    let mut kinks: Vec<f64> = v.iter().flat_map(|&x| [-x, 1.0 - x]).collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    // total() is non-decreasing in t; bracket the target between two kinks.
    let idx = kinks.partition_point(|&t| total(t) < target);
    if idx == 0 {
        kinks[0]
    } else if idx == kinks.len() {
        kinks[kinks.len() - 1]
    } else {
        let (lo, hi) = (kinks[idx - 1], kinks[idx]);
        let (flo, fhi) = (total(lo), total(hi));
        if fhi == flo {
            hi
        } else {
            lo + (target - flo) * (hi - lo) / (fhi - flo)
        }
    }
}

/// Solves `A x = rhs` for symmetric positive definite `A` (`n x n`, row
/// major, overwritten by its factor).
fn cholesky_solve(a: &mut [f64], rhs: &[f64], n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let d = a[j * n + j] - (0..j).map(|p| a[j * n + p].powi(2)).sum::<f64>();
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|p| a[i * n + p] * a[j * n + p]).sum::<f64>();
            a[i * n + j] = s / d;
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        y[i] = (y[i] - (0..i).map(|p| a[i * n + p] * y[p]).sum::<f64>()) / a[i * n + i];
    }
    for i in (0..n).rev() {
        y[i] = (y[i] - (i + 1..n).map(|p| a[p * n + i] * y[p]).sum::<f64>()) / a[i * n + i];
    }
    Some(y)
}

/// A concave, differentiable objective over `K x J` matrices.
pub trait ConcaveObjective {
    fn value(&self, x: &Matrix) -> f64;
    fn gradient(&self, x: &Matrix) -> Matrix;
}

/// Adapter for closures: `(value, gradient)`.
pub struct FnObjective<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> ConcaveObjective for FnObjective<V, G>
where
    V: Fn(&Matrix) -> f64,
    G: Fn(&Matrix) -> Matrix,
{
    fn value(&self, x: &Matrix) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Matrix) -> Matrix {
        (self.gradient)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgaConfig {
    pub max_iters: usize,
    pub shrink: f64,
    pub sufficient_increase: f64,
    pub grad_tol: f64,
    pub projection_tol: f64,
}

impl Default for PgaConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            grad_tol: 1e-6,
            projection_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ascent {
    pub argmax: Matrix,
    pub value: f64,
    /// Objective after every accepted step, starting at the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}
