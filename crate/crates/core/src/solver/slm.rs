//! Concave lower bound of the quadratic-transform objective used by the
//! inner loop. With `gamma` and `theta` frozen the objective is
//! `sum a_kj sqrt(q_kj) + (affine in Q) + p(Q)`; replacing the convex
//! penalty by its tangent plane at the anchor leaves a separable concave
//! function `sum a sqrt(q) + sum b q + c` that touches the original at the
//! anchor and lies below it everywhere else.

use std::f64::consts::LN_2;

use crate::matrix::{Matrix, Tensor3};
use crate::polytope::ConcaveObjective;
use crate::rate::{InterferenceVariant, RateModelParams};
use crate::scenario::Scenario;

use super::penalty::{penalty, penalty_gradient};
use super::transform::{gamma_offset, LinkTable};

/// Below this, `sqrt(q)` is differentiated as if `q` were this value.
pub const SQRT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SlmSurrogate {
    /// Coefficients `a >= 0` of `sqrt(q)`.
    pub sqrt_coef: Matrix,
    /// Coefficients `b` of `q`, tangent plane of the penalty included.
    pub lin_coef: Matrix,
    pub constant: f64,
}

impl SlmSurrogate {
    /// The surrogate without the tangent-plane penalty terms; `lin_coef`
    /// then equals the rate part only.
    pub(crate) fn assemble(table: &LinkTable<'_>, gamma: &Tensor3, theta: &Tensor3) -> Self {
        let (nn, kk, jj) = table.dims();
        let sigma2 = table.scenario.sigma2();
        let eps = table.params.epsilon;
        let sic = table.scenario.sic_order();
        let mut a = Matrix::zeros(kk, jj);
        let mut b = Matrix::zeros(kk, jj);
        let mut constant = 0.0;

        // suffix[t] = sum_{s >= t} theta^2; strong[t] = prefix over s < t of
        // theta^2 (times gain for the `AsPrinted` residual term).
        let mut suffix = vec![0.0; kk + 1];
        let mut strong = vec![0.0; kk + 1];
        for n in 0..nn {
            for j in 0..jj {
                let order = sic.order(n, j);
                suffix[kk] = 0.0;
                for t in (0..kk).rev() {
                    let th = theta.get(n, order[t], j);
                    suffix[t] = suffix[t + 1] + th * th;
                }
                strong[0] = 0.0;
                for (t, &k) in order.iter().enumerate() {
                    let th = theta.get(n, k, j);
                    let w = match table.params.interference_variant {
                        InterferenceVariant::AsPrinted => th * th * table.gain.get(n, k, j),
                        InterferenceVariant::Complement => th * th,
                    };
                    strong[t + 1] = strong[t] + w;
                }
                for (t, &i) in order.iter().enumerate() {
                    let p = table.power.get(n, i, j);
                    let th = theta.get(n, i, j);
                    let g = gamma.get(n, i, j);
                    a[(i, j)] += 2.0 * th * (p * (1.0 + g)).sqrt();
                    constant += gamma_offset(g) - th * th * sigma2 * LN_2;

                    // i appears in the SIC prefix of itself and every later user
                    b[(i, j)] -= LN_2 * p * suffix[t];
                    // and in the residual term of every strictly stronger user
                    let (start, _) = table.group(n, j, t);
                    match table.params.interference_variant {
                        InterferenceVariant::AsPrinted => {
                            b[(i, j)] -= LN_2 * eps * table.sig2[(n, i)] * strong[start];
                        }
                        InterferenceVariant::Complement => {
                            b[(i, j)] += LN_2 * eps * p * strong[start];
                            constant -= LN_2 * eps * p * strong[start];
                        }
                    }
                }
            }
        }
        Self {
            sqrt_coef: a,
            lin_coef: b,
            constant,
        }
    }

    /// Adds the tangent plane of `p` at `anchor`.
    pub(crate) fn with_penalty_tangent(mut self, anchor: &Matrix, lambda: f64) -> Self {
        let grad = penalty_gradient(anchor, lambda);
        self.constant += penalty(anchor, lambda) - grad.dot(anchor);
        self.lin_coef = self.lin_coef.axpy(1.0, &grad);
        self
    }
}

impl ConcaveObjective for SlmSurrogate {
    fn value(&self, x: &Matrix) -> f64 {
        let mut total = self.constant;
        for ((&a, &b), &q) in self
            .sqrt_coef
            .as_slice()
            .iter()
            .zip(self.lin_coef.as_slice())
            .zip(x.as_slice())
        {
            total += a * q.max(0.0).sqrt() + b * q;
        }
        total
    }

    fn gradient(&self, x: &Matrix) -> Matrix {
        let data = self
            .sqrt_coef
            .as_slice()
            .iter()
            .zip(self.lin_coef.as_slice())
            .zip(x.as_slice())
            .map(|((&a, &b), &q)| {
                if a == 0.0 {
                    b
                } else {
                    a / (2.0 * q.max(SQRT_FLOOR).sqrt()) + b
                }
            })
            .collect();
        Matrix::from_vec(x.rows(), x.cols(), data)
    }
}

/// Concave surrogate of the quadratic-transform objective at `anchor`.
pub fn build_slm_subproblem(
    scenario: &Scenario,
    params: &RateModelParams,
    gamma: &Tensor3,
    theta: &Tensor3,
    anchor: &Matrix,
    lambda: f64,
) -> SlmSurrogate {
    let table = LinkTable::new(scenario, params);
    SlmSurrogate::assemble(&table, gamma, theta).with_penalty_tangent(anchor, lambda)
}
