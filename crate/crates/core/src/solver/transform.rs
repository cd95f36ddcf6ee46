//! Fractional-programming reformulation of the sum-rate: the auxiliary SINRs
//! `gamma`, their dual variables `mu`, and the quadratic-transform weights
//! `theta`, all in closed form.
//!
//! For each `(n, k, j)` write `A = P q_k` for the useful power and
//! `B = sigma^2 + sum_{stronger i} P_i q_i + I` for noise plus interference.
//! The dual form of the rate is
//! `log2(1 + gamma) - gamma / ln2 + A (1 + gamma) / (ln2 (A + B))`,
//! maximised at `gamma = A / B` where it equals `log2(1 + A / B)`. Its
//! quadratic transform replaces the ratio by
//! `2 theta sqrt(A (1 + gamma)) - theta^2 (A + B) ln2`, tight at
//! `theta = sqrt(A (1 + gamma)) / (ln2 (A + B))`.

use std::f64::consts::LN_2;

use crate::matrix::{Matrix, Tensor3};
use crate::rate::{InterferenceVariant, RateModelParams};
use crate::scenario::Scenario;

use super::penalty::penalty;

/// Per-scenario lookup tables for evaluating `A` and `B` with prefix sums.
pub(crate) struct LinkTable<'a> {
    pub(crate) scenario: &'a Scenario,
    pub(crate) params: RateModelParams,
    /// `P[n][k][j] = |h s|^2`
    pub(crate) power: Tensor3,
    /// `|h[n][k][j]|^2`
    pub(crate) gain: Tensor3,
    /// `|s[n][k]|^2`, `N x K`
    pub(crate) sig2: Matrix,
    /// For each `(n, j)` and order position: `[start, end)` of its run of
    /// equal gains.
    pub(crate) groups: Vec<(usize, usize)>,
}

impl<'a> LinkTable<'a> {
    pub(crate) fn new(scenario: &'a Scenario, params: &RateModelParams) -> Self {
        let (nn, kk, jj) = (scenario.num_res(), scenario.num_users(), scenario.num_sats());
        let mut power = Tensor3::zeros(nn, kk, jj);
        let mut gain = Tensor3::zeros(nn, kk, jj);
        let sig2 = Matrix::from_fn(nn, kk, |n, k| scenario.signatures().get(n, k).norm_sqr());
        for n in 0..nn {
            for k in 0..kk {
                for j in 0..jj {
                    let g = scenario.gain(n, k, j);
                    gain.set(n, k, j, g);
                    power.set(n, k, j, g * sig2[(n, k)]);
                }
            }
        }
        let mut groups = vec![(0, 0); nn * jj * kk];
        for n in 0..nn {
            for j in 0..jj {
                let order = scenario.sic_order().order(n, j);
                let base = (n * jj + j) * kk;
                let mut start = 0;
                while start < kk {
                    let g0 = gain.get(n, order[start], j);
                    let mut end = start + 1;
                    while end < kk && gain.get(n, order[end], j) == g0 {
                        end += 1;
                    }
                    for pos in start..end {
                        groups[base + pos] = (start, end);
                    }
                    start = end;
                }
            }
        }
        Self {
            scenario,
            params: *params,
            power,
            gain,
            sig2,
            groups,
        }
    }

    pub(crate) fn dims(&self) -> (usize, usize, usize) {
        self.power.dims()
    }

    #[inline]
    pub(crate) fn group(&self, n: usize, j: usize, pos: usize) -> (usize, usize) {
        let (_, kk, jj) = self.dims();
        self.groups[(n * jj + j) * kk + pos]
    }

    /// `B[n][k][j]`: noise, detected stronger users and residual interference.
    pub(crate) fn interference(&self, q: &Matrix) -> Tensor3 {
        let (nn, kk, jj) = self.dims();
        let sigma2 = self.scenario.sigma2();
        let eps = self.params.epsilon;
        let mut out = Tensor3::zeros(nn, kk, jj);
        let mut weaker = vec![0.0; kk + 1];
        for n in 0..nn {
            for j in 0..jj {
                let order = self.scenario.sic_order().order(n, j);
                // weaker[t] = residual weight summed over positions >= t
                weaker[kk] = 0.0;
                for t in (0..kk).rev() {
                    let i = order[t];
                    let w = match self.params.interference_variant {
                        InterferenceVariant::AsPrinted => self.sig2[(n, i)] * q[(i, j)],
                        InterferenceVariant::Complement => self.power.get(n, i, j) * (1.0 - q[(i, j)]),
                    };
                    weaker[t] = weaker[t + 1] + w;
                }
                let mut stronger = 0.0;
                for (t, &k) in order.iter().enumerate() {
                    let (_, end) = self.group(n, j, t);
                    let residual = match self.params.interference_variant {
                        InterferenceVariant::AsPrinted => eps * self.gain.get(n, k, j) * weaker[end],
                        InterferenceVariant::Complement => eps * weaker[end],
                    };
                    out.set(n, k, j, sigma2 + stronger + residual);
                    stronger += self.power.get(n, k, j) * q[(k, j)];
                }
            }
        }
        out
    }

    pub(crate) fn gamma(&self, q: &Matrix) -> Tensor3 {
        let b = self.interference(q);
        let (nn, kk, jj) = self.dims();
        let mut out = Tensor3::zeros(nn, kk, jj);
        for n in 0..nn {
            for k in 0..kk {
                for j in 0..jj {
                    let a = self.power.get(n, k, j) * q[(k, j)];
                    if a > 0.0 {
                        out.set(n, k, j, a / b.get(n, k, j));
                    }
                }
            }
        }
        out
    }

    pub(crate) fn theta(&self, q: &Matrix, gamma: &Tensor3) -> Tensor3 {
        let b = self.interference(q);
        let (nn, kk, jj) = self.dims();
        let mut out = Tensor3::zeros(nn, kk, jj);
        for n in 0..nn {
            for k in 0..kk {
                for j in 0..jj {
                    let a = self.power.get(n, k, j) * q[(k, j)].max(0.0);
                    if a > 0.0 {
                        let num = (a * (1.0 + gamma.get(n, k, j))).sqrt();
                        out.set(n, k, j, num / (LN_2 * (a + b.get(n, k, j))));
                    }
                }
            }
        }
        out
    }

    /// Dual form of the sum-rate at `(Q, gamma)`, plus the penalty.
    pub(crate) fn p2_prime(&self, q: &Matrix, gamma: &Tensor3, lambda: f64) -> f64 {
        let b = self.interference(q);
        let (nn, kk, jj) = self.dims();
        let mut total = 0.0;
        for n in 0..nn {
            for k in 0..kk {
                for j in 0..jj {
                    let g = gamma.get(n, k, j);
                    let a = self.power.get(n, k, j) * q[(k, j)];
                    total += gamma_offset(g) + a * (1.0 + g) / (LN_2 * (a + b.get(n, k, j)));
                }
            }
        }
        total + penalty(q, lambda)
    }

    /// Quadratic-transform objective at `(Q, gamma, theta)`, plus the penalty.
    pub(crate) fn p3(&self, q: &Matrix, gamma: &Tensor3, theta: &Tensor3, lambda: f64) -> f64 {
        let b = self.interference(q);
        let (nn, kk, jj) = self.dims();
        let mut total = 0.0;
        for n in 0..nn {
            for k in 0..kk {
                for j in 0..jj {
                    let g = gamma.get(n, k, j);
                    let th = theta.get(n, k, j);
                    let a = self.power.get(n, k, j) * q[(k, j)].max(0.0);
                    total += 2.0 * th * (a * (1.0 + g)).sqrt() - th * th * (a + b.get(n, k, j)) * LN_2
                        + gamma_offset(g);
                }
            }
        }
        total + penalty(q, lambda)
    }
}

/// `log2(1 + gamma) - gamma / ln2`, the part of the dual form free of `Q`.
pub(crate) fn gamma_offset(gamma: f64) -> f64 {
    (gamma.ln_1p() - gamma) / LN_2
}

/// Closed-form optimal auxiliary SINRs: the SINR of every `(n, k, j)` at `q`.
pub fn update_gamma(scenario: &Scenario, params: &RateModelParams, q: &Matrix) -> Tensor3 {
    LinkTable::new(scenario, params).gamma(q)
}

/// `mu = 1 / (ln2 (1 + gamma))`.
pub fn update_mu(gamma: &Tensor3) -> Tensor3 {
    gamma.map(|g| 1.0 / (LN_2 * (1.0 + g)))
}

/// Maximiser of the quadratic transform in `theta` for fixed `(Q, gamma)`.
pub fn update_theta(scenario: &Scenario, params: &RateModelParams, q: &Matrix, gamma: &Tensor3) -> Tensor3 {
    LinkTable::new(scenario, params).theta(q, gamma)
}

pub fn p2_prime_objective(
    scenario: &Scenario,
    params: &RateModelParams,
    q: &Matrix,
    gamma: &Tensor3,
    lambda: f64,
) -> f64 {
    LinkTable::new(scenario, params).p2_prime(q, gamma, lambda)
}

pub fn p3_objective(
    scenario: &Scenario,
    params: &RateModelParams,
    q: &Matrix,
    gamma: &Tensor3,
    theta: &Tensor3,
    lambda: f64,
) -> f64 {
    LinkTable::new(scenario, params).p3(q, gamma, theta, lambda)
}

/// `sum log2(1 + gamma)` over every entry.
pub fn rate_from_gamma(gamma: &Tensor3) -> f64 {
    gamma.as_slice().iter().map(|g| g.ln_1p()).sum::<f64>() / LN_2
}
