//! Reference allocators: greedy by channel quality, channel-oblivious round
//! robin, the all-ones centralized bound, and an exhaustive oracle for tiny
//! instances.
//!
//! Greedy and round robin first bring every user to `ceil(q_l)` satellites
//! and then keep handing out seats, in the same user order, until no
//! satellite has spare capacity or every user is on every satellite.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rate::{sum_rate, Constraints, MatchingMatrix, RateModelParams};
use crate::scenario::Scenario;
use crate::solver::repair_rows;

/// Default ceiling on candidate matchings for [`exhaustive_allocate`].
pub const DEFAULT_ENUMERATION_BUDGET: f64 = 1e7;

struct Seats {
    q: Matrix,
    load: Vec<usize>,
    q_s: usize,
}

impl Seats {
    fn new(num_users: usize, num_sats: usize, q_s: usize) -> Self {
        Self {
            q: Matrix::zeros(num_users, num_sats),
            load: vec![0; num_sats],
            q_s,
        }
    }

    fn open(&self, k: usize, j: usize) -> bool {
        self.q[(k, j)] == 0.0 && self.load[j] < self.q_s
    }

    fn take(&mut self, k: usize, j: usize) {
        self.q[(k, j)] = 1.0;
        self.load[j] += 1;
    }

    fn any_open(&self) -> bool {
        self.load.iter().any(|&l| l < self.q_s)
    }
}

/// Each user, in random order, picks the satellites with the largest
/// aggregate gain `sum_n |h|^2` that still have capacity.
pub fn greedy_allocate<R: Rng + ?Sized>(
    scenario: &Scenario,
    constraints: Constraints,
    rng: &mut R,
) -> Result<MatchingMatrix> {
    let (kk, jj) = (scenario.num_users(), scenario.num_sats());
    constraints.certify(kk, jj)?;
    let mut users: Vec<usize> = (0..kk).collect();
    users.shuffle(rng);
    let preference: Vec<Vec<usize>> = (0..kk)
        .map(|k| {
            let mut sats: Vec<usize> = (0..jj).collect();
            sats.sort_by(|&a, &b| {
                scenario
                    .aggregate_gain(k, b)
                    .total_cmp(&scenario.aggregate_gain(k, a))
                    .then(a.cmp(&b))
            });
            sats
        })
        .collect();
    let pick = |seats: &Seats, k: usize| preference[k].iter().copied().find(|&j| seats.open(k, j));
    fill(scenario, constraints, &users, pick)
}

/// Users in random order are dealt satellites cyclically, starting from a
/// random satellite and skipping full ones. Ignores channel state.
pub fn round_robin_allocate<R: Rng + ?Sized>(
    scenario: &Scenario,
    constraints: Constraints,
    rng: &mut R,
) -> Result<MatchingMatrix> {
    let (kk, jj) = (scenario.num_users(), scenario.num_sats());
    constraints.certify(kk, jj)?;
    let mut users: Vec<usize> = (0..kk).collect();
    users.shuffle(rng);
    let cursor = std::cell::Cell::new(rng.random_range(0..jj));
    let pick = |seats: &Seats, k: usize| {
        for step in 0..jj {
            let j = (cursor.get() + step) % jj;
            if seats.open(k, j) {
                cursor.set((j + 1) % jj);
                return Some(j);
            }
        }
        None
    };
    fill(scenario, constraints, &users, pick)
}

/// Shared two-phase seat assignment driven by a per-user satellite picker.
fn fill(
    scenario: &Scenario,
    constraints: Constraints,
    users: &[usize],
    mut pick: impl FnMut(&Seats, usize) -> Option<usize>,
) -> Result<MatchingMatrix> {
    let (kk, jj) = (scenario.num_users(), scenario.num_sats());
    let mut seats = Seats::new(kk, jj, constraints.q_s);
    let need = constraints.min_row_count();
    for &k in users {
        for _ in 0..need {
            match pick(&seats, k) {
                Some(j) => seats.take(k, j),
                None => break,
            }
        }
    }
    let mut q = seats.q;
    // a late user may find its remaining satellites full; reshuffle seats
    repair_rows(scenario, &RateModelParams::new(0.0), &mut q, constraints)?;
    let mut seats = Seats {
        load: (0..jj).map(|j| q.col_sum(j) as usize).collect(),
        q,
        q_s: constraints.q_s,
    };
    loop {
        let mut progressed = false;
        for &k in users {
            if !seats.any_open() {
                break;
            }
            if let Some(j) = pick(&seats, k) {
                seats.take(k, j);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    MatchingMatrix::new(seats.q, constraints)
}

/// Every satellite detects every user. Ignores the column cap on purpose:
/// this is the rate (and load) upper bound, not a feasible competitor.
pub fn centralized_allocate(num_users: usize, num_sats: usize) -> Matrix {
    Matrix::filled(num_users, num_sats, 1.0)
}

/// Number of binary rows with at least `need` ones, raised to the `K`-th
/// power: the size of the search space before column pruning.
pub fn enumeration_size(num_users: usize, num_sats: usize, need: usize) -> f64 {
    let rows: f64 = (need..=num_sats).map(|r| binomial(num_sats, r)).sum();
    rows.powi(num_users as i32)
}

fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Global optimum over every binary matching meeting the constraints. Ties
/// go to the lexicographically smallest row-major matrix.
pub fn exhaustive_allocate(
    scenario: &Scenario,
    params: &RateModelParams,
    constraints: Constraints,
    budget: f64,
) -> Result<MatchingMatrix> {
    let (kk, jj) = (scenario.num_users(), scenario.num_sats());
    constraints.certify(kk, jj)?;
    let need = constraints.min_row_count();
    let candidates = enumeration_size(kk, jj, need);
    if candidates > budget {
        return Err(Error::BudgetExceeded { candidates, budget });
    }
    // row patterns as bit masks, ordered so that the row-major 0/1 string
    // (satellite 0 is the most significant digit) increases
    let mut patterns: Vec<u32> = (0u32..1 << jj)
        .filter(|m| m.count_ones() as usize >= need)
        .collect();
    patterns.sort_by_key(|&m| m.reverse_bits());

    let mut search = Search {
        scenario,
        params,
        patterns: &patterns,
        q_s: constraints.q_s,
        q: Matrix::zeros(kk, jj),
        load: vec![0; jj],
        best: None,
    };
    search.descend(0)?;
    let (_, best) = search
        .best
        .ok_or_else(|| Error::Infeasible("no binary matching satisfies the constraints".into()))?;
    MatchingMatrix::new(best, constraints)
}

struct Search<'a> {
    scenario: &'a Scenario,
    params: &'a RateModelParams,
    patterns: &'a [u32],
    q_s: usize,
    q: Matrix,
    load: Vec<usize>,
    best: Option<(f64, Matrix)>,
}

impl Search<'_> {
    fn descend(&mut self, k: usize) -> Result<()> {
        let jj = self.q.cols();
        if k == self.q.rows() {
            let value = sum_rate(self.scenario, self.params, &self.q)?;
            if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                self.best = Some((value, self.q.clone()));
            }
            return Ok(());
        }
        for &mask in self.patterns {
            if (0..jj).any(|j| mask & (1 << j) != 0 && self.load[j] >= self.q_s) {
                continue;
            }
            for j in 0..jj {
                if mask & (1 << j) != 0 {
                    self.q[(k, j)] = 1.0;
                    self.load[j] += 1;
                }
            }
            self.descend(k + 1)?;
            for j in 0..jj {
                if mask & (1 << j) != 0 {
                    self.q[(k, j)] = 0.0;
                    self.load[j] -= 1;
                }
            }
        }
        Ok(())
    }
}
