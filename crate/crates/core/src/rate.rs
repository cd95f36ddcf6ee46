//! Closed-form performance models: residual interference from imperfect
//! cancellation, the SIC sum-rate, and the traversal-count processing load.
//!
//! The functions here evaluate every sum term by term from its definition.
//! The solver keeps its own prefix-sum evaluation of the same quantities,
//! and the two are cross-checked in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scenario::{ChannelTensor, Scenario};

/// Which reading of the residual-interference term to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceVariant {
    /// `eps * sum_{weaker i} |h_k|^2 |s_i|^2 q_i`: victim gain, assigned users.
    #[default]
    AsPrinted,
    /// `eps * sum_{weaker i} |h_i|^2 |s_i|^2 (1 - q_i)`: each non-target
    /// user's own power, weighted by it not being detected here.
    Complement,
}

impl std::str::FromStr for InterferenceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_printed" => Ok(Self::AsPrinted),
            "complement" => Ok(Self::Complement),
            other => Err(Error::Config(format!(
                "unknown interference variant {other:?} (expected as_printed or complement)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateModelParams {
    /// Expected residual power of an imperfectly cancelled symbol.
    pub epsilon: f64,
    pub interference_variant: InterferenceVariant,
}

impl Default for RateModelParams {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            interference_variant: InterferenceVariant::AsPrinted,
        }
    }
}

impl RateModelParams {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Per `(n, j)` decoding order: users sorted by descending `|h[n][k][j]|^2`,
/// ties broken by user index.
#[derive(Debug, Clone, PartialEq)]
pub struct SicOrder {
    num_users: usize,
    num_sats: usize,
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl SicOrder {
    pub fn new(channel: &ChannelTensor) -> Self {
        let (nn, kk, jj) = channel.dims();
        let mut order = Vec::with_capacity(nn * jj * kk);
        let mut rank = vec![0; nn * jj * kk];
        for n in 0..nn {
            for j in 0..jj {
                let mut users: Vec<usize> = (0..kk).collect();
                users.sort_by(|&a, &b| {
                    let (ga, gb) = (channel.get(n, a, j).norm_sqr(), channel.get(n, b, j).norm_sqr());
                    gb.total_cmp(&ga).then(a.cmp(&b))
                });
                let base = (n * jj + j) * kk;
                for (pos, &k) in users.iter().enumerate() {
                    rank[base + k] = pos;
                }
                order.extend(users);
            }
        }
        Self {
            num_users: kk,
            num_sats: jj,
            order,
            rank,
        }
    }

    /// Users on `(n, j)`, strongest first.
    pub fn order(&self, n: usize, j: usize) -> &[usize] {
        let base = (n * self.num_sats + j) * self.num_users;
        &self.order[base..base + self.num_users]
    }

    /// Position of user `k` in the `(n, j)` order (0 = strongest).
    pub fn rank(&self, n: usize, k: usize, j: usize) -> usize {
        self.rank[(n * self.num_sats + j) * self.num_users + k]
    }
}

/// Constraint parameters of the matching problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Most users a satellite may detect.
    pub q_s: usize,
    /// Fewest satellites each user must be detected by.
    pub q_l: f64,
}

impl Constraints {
    pub fn new(q_s: usize, q_l: f64) -> Self {
        Self { q_s, q_l }
    }

    /// Smallest integer row sum satisfying `row >= q_l`.
    pub fn min_row_count(&self) -> usize {
        (self.q_l - 1e-12).ceil().max(0.0) as usize
    }

    /// Counting certificate for the binary problem: `K ceil(q_l) <= J q_s`
    /// and `ceil(q_l) <= J`. Failing it proves no feasible binary matrix exists.
    pub fn certify(&self, num_users: usize, num_sats: usize) -> Result<()> {
        if !(self.q_l >= 0.0 && self.q_l.is_finite()) {
            return Err(Error::Config(format!("q_l must be >= 0, got {}", self.q_l)));
        }
        let need = self.min_row_count();
        if need > num_sats {
            return Err(Error::Infeasible(format!(
                "q_l = {} exceeds the number of satellites {num_sats}",
                self.q_l
            )));
        }
        if num_users * need > num_sats * self.q_s {
            return Err(Error::Infeasible(format!(
                "K * q_l = {} exceeds J * q_s = {}",
                num_users * need,
                num_sats * self.q_s
            )));
        }
        Ok(())
    }
}

/// The nominal `q_l = q_s K / J` coupling between the two bounds.
pub fn nominal_q_l(q_s: usize, num_users: usize, num_sats: usize) -> f64 {
    q_s as f64 * num_users as f64 / num_sats as f64
}

/// [`nominal_q_l`], clamped to `floor(J q_s / K)` (and to `J`) whenever the
/// nominal value would violate the counting bound.
pub fn clamped_q_l(q_s: usize, num_users: usize, num_sats: usize) -> f64 {
    let nominal = nominal_q_l(q_s, num_users, num_sats);
    if Constraints::new(q_s, nominal).certify(num_users, num_sats).is_ok() {
        nominal
    } else {
        ((num_sats * q_s) / num_users).min(num_sats) as f64
    }
}

/// A satellite–user matching with the constraint parameters it answers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingMatrix {
    q: Matrix,
    constraints: Constraints,
}

impl MatchingMatrix {
    /// Entries must lie in `[0, 1]`.
    pub fn new(q: Matrix, constraints: Constraints) -> Result<Self> {
        if let Some(bad) = q.as_slice().iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Contract(format!("matching entry {bad} outside [0, 1]")));
        }
        Ok(Self { q, constraints })
    }

    pub fn values(&self) -> &Matrix {
        &self.q
    }

    pub fn constraints(&self) -> Constraints {
        self.constraints
    }

    pub fn is_binary(&self) -> bool {
        is_binary(&self.q)
    }

    /// `G_j`, the users detected on satellite `j`.
    pub fn targets(&self, j: usize) -> Vec<usize> {
        (0..self.q.rows()).filter(|&k| self.q[(k, j)] >= 0.5).collect()
    }

    pub fn feasibility(&self) -> FeasibilityReport {
        check_feasibility(&self.q, self.constraints)
    }

    /// Row-major `0`/`1` string, as used in serialized reports.
    pub fn bit_string(&self) -> String {
        self.q
            .as_slice()
            .iter()
            .map(|&x| if x >= 0.5 { '1' } else { '0' })
            .collect()
    }
}

pub fn is_binary(q: &Matrix) -> bool {
    q.as_slice().iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Largest distance of any entry to `{0, 1}`.
pub fn max_nonintegrality(q: &Matrix) -> f64 {
    q.as_slice()
        .iter()
        .map(|&x| x.min(1.0 - x).max(0.0))
        .fold(0.0, f64::max)
}

fn check_q(scenario: &Scenario, q: &Matrix) -> Result<()> {
    if q.rows() != scenario.num_users() || q.cols() != scenario.num_sats() {
        return Err(Error::Contract(format!(
            "matching is {}x{}, scenario needs {}x{}",
            q.rows(),
            q.cols(),
            scenario.num_users(),
            scenario.num_sats()
        )));
    }
    Ok(())
}

/// Interference on user `k`, element `n`, satellite `j` left behind by the
/// imperfect cancellation of strictly weaker users.
pub fn residual_interference(
    scenario: &Scenario,
    params: &RateModelParams,
    q: &Matrix,
    n: usize,
    k: usize,
    j: usize,
) -> Result<f64> {
    check_q(scenario, q)?;
    for (what, index, limit) in [
        ("n", n, scenario.num_res()),
        ("k", k, scenario.num_users()),
        ("j", j, scenario.num_sats()),
    ] {
        if index >= limit {
            return Err(Error::Index { what, index, limit });
        }
    }
    Ok(residual_unchecked(scenario, params, q, n, k, j))
}

fn residual_unchecked(
    scenario: &Scenario,
    params: &RateModelParams,
    q: &Matrix,
    n: usize,
    k: usize,
    j: usize,
) -> f64 {
    if params.epsilon == 0.0 {
        return 0.0;
    }
    let gk = scenario.gain(n, k, j);
    let sigs = scenario.signatures();
    let mut acc = 0.0;
    for i in 0..scenario.num_users() {
        let gi = scenario.gain(n, i, j);
        if gi >= gk {
            continue;
        }
        let si2 = sigs.get(n, i).norm_sqr();
        acc += match params.interference_variant {
            InterferenceVariant::AsPrinted => gk * si2 * q[(i, j)],
            InterferenceVariant::Complement => gi * si2 * (1.0 - q[(i, j)]),
        };
    }
    params.epsilon * acc
}

/// SINR of user `k` on element `n` at satellite `j`: stronger users that are
/// detected on `j` count as interference, plus the residual term.
pub fn sinr(scenario: &Scenario, params: &RateModelParams, q: &Matrix, n: usize, k: usize, j: usize) -> f64 {
    let num = scenario.rx_power(n, k, j) * q[(k, j)];
    if num == 0.0 {
        return 0.0;
    }
    let rank_k = scenario.sic_order().rank(n, k, j);
    let stronger: f64 = scenario.sic_order().order(n, j)[..rank_k]
        .iter()
        .map(|&i| scenario.rx_power(n, i, j) * q[(i, j)])
        .sum();
    num / (scenario.sigma2() + stronger + residual_unchecked(scenario, params, q, n, k, j))
}

/// Sum-rate contribution of satellite `j`, bits/s/Hz.
pub fn satellite_rate(scenario: &Scenario, params: &RateModelParams, q: &Matrix, j: usize) -> f64 {
    let mut total = 0.0;
    for n in 0..scenario.num_res() {
        for &k in scenario.signatures().occupancy(n) {
            let s = sinr(scenario, params, q, n, k, j);
            if s > 0.0 {
                total += s.ln_1p() / std::f64::consts::LN_2;
            }
        }
    }
    total
}

/// System sum-rate `C_SUM` over all elements, satellites and users.
pub fn sum_rate(scenario: &Scenario, params: &RateModelParams, q: &Matrix) -> Result<f64> {
    check_q(scenario, q)?;
    if q.as_slice().iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Contract("matching entries must lie in [0, 1]".into()));
    }
    Ok((0..scenario.num_sats())
        .map(|j| satellite_rate(scenario, params, q, j))
        .sum())
}

/// Traversal counts per satellite: for every element, each target user
/// sharing it costs `M^(c - 1)` joint hypotheses, `c` being the number of
/// target users on that element.
pub fn processing_load(scenario: &Scenario, q: &Matrix) -> Result<Vec<f64>> {
    check_q(scenario, q)?;
    if !is_binary(q) {
        return Err(Error::Contract("processing load needs a binary matching".into()));
    }
    let m = scenario.config().modulation_order as f64;
    Ok((0..scenario.num_sats())
        .map(|j| {
            (0..scenario.num_res())
                .map(|n| {
                    let c = scenario
                        .signatures()
                        .occupancy(n)
                        .iter()
                        .filter(|&&k| q[(k, j)] == 1.0)
                        .count();
                    if c == 0 {
                        0.0
                    } else {
                        c as f64 * m.powi(c as i32 - 1)
                    }
                })
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Entry outside `[0, 1]`.
    Box { user: usize, sat: usize, value: f64 },
    /// Entry not in `{0, 1}`.
    Binary { user: usize, sat: usize, value: f64 },
    /// `sum_j q[k][j] < q_l`; `margin` is the (negative) slack.
    MinSats { user: usize, row_sum: f64, margin: f64 },
    /// `sum_k q[k][j] > q_s`; `margin` is the (negative) slack.
    MaxUsers { sat: usize, col_sum: f64, margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    /// Set when the counting bound alone rules out every binary matrix.
    pub certified_infeasible: bool,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty() && !self.certified_infeasible
    }
}

/// Checks `q` against the row floor, column cap and binary constraints.
pub fn check_feasibility(q: &Matrix, constraints: Constraints) -> FeasibilityReport {
    const TOL: f64 = 1e-9;
    let mut violations = Vec::new();
    for k in 0..q.rows() {
        for j in 0..q.cols() {
            let v = q[(k, j)];
            if !(-TOL..=1.0 + TOL).contains(&v) {
                violations.push(Violation::Box { user: k, sat: j, value: v });
            } else if v != 0.0 && v != 1.0 {
                violations.push(Violation::Binary { user: k, sat: j, value: v });
            }
        }
    }
    for k in 0..q.rows() {
        let row_sum = q.row_sum(k);
        if row_sum < constraints.q_l - TOL {
            violations.push(Violation::MinSats {
                user: k,
                row_sum,
                margin: row_sum - constraints.q_l,
            });
        }
    }
    for j in 0..q.cols() {
        let col_sum = q.col_sum(j);
        if col_sum > constraints.q_s as f64 + TOL {
            violations.push(Violation::MaxUsers {
                sat: j,
                col_sum,
                margin: constraints.q_s as f64 - col_sum,
            });
        }
    }
    FeasibilityReport {
        violations,
        certified_infeasible: constraints.certify(q.rows(), q.cols()).is_err(),
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use num_complex::Complex64;

    use crate::matrix::Matrix;
    use crate::scenario::{ChannelTensor, FadingModel, Scenario, ScenarioConfig, SignatureMatrix};

    /// Builds a scenario from explicit real gains `|h|` (indexed `[n][k][j]`)
    /// and signature magnitudes (`[n][k]`).
    pub fn hand_scenario(h: &[Vec<Vec<f64>>], s: &[Vec<f64>], sigma2: f64, m: u32) -> Scenario {
        let (nn, kk, jj) = (h.len(), h[0].len(), h[0][0].len());
        let cfg = ScenarioConfig {
            num_res: nn,
            num_users: kk,
            num_sats: jj,
            modulation_order: m,
            signature_column_weight: 1,
            fading: FadingModel::None,
            ..Default::default()
        };
        let mut hv = Vec::new();
        for row in h {
            for user in row {
                hv.extend(user.iter().map(|&x| Complex64::new(x, 0.0)));
            }
        }
        let sv = s
            .iter()
            .flat_map(|row| row.iter().map(|&x| Complex64::new(x, 0.0)))
            .collect();
        let sig = SignatureMatrix::new(nn, kk, sv).unwrap();
        let ch = ChannelTensor::new((nn, kk, jj), hv, Matrix::filled(kk, jj, 600e3), sigma2).unwrap();
        Scenario::from_parts(cfg, sig, ch).unwrap()
    }
}
