//! Thresholding of the relaxed matching and greedy repair of the row floor
//! and column cap.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rate::{check_feasibility, satellite_rate, Constraints, MatchingMatrix, RateModelParams};
use crate::scenario::Scenario;

/// Rate change on satellite `j` from flipping `q[k][j]` to `value`.
fn flip_gain(scenario: &Scenario, params: &RateModelParams, q: &mut Matrix, k: usize, j: usize, value: f64) -> f64 {
    let old = q[(k, j)];
    let before = satellite_rate(scenario, params, q, j);
    q[(k, j)] = value;
    let after = satellite_rate(scenario, params, q, j);
    q[(k, j)] = old;
    after - before
}

/// Drops users from over-full satellites, lowest marginal contribution first.
fn repair_columns(scenario: &Scenario, params: &RateModelParams, q: &mut Matrix, q_s: usize) {
    for j in 0..q.cols() {
        while q.col_sum(j) > q_s as f64 {
            let assigned: Vec<usize> = (0..q.rows()).filter(|&k| q[(k, j)] == 1.0).collect();
            let victim = assigned
                .into_iter()
                .map(|k| (k, -flip_gain(scenario, params, q, k, j, 0.0)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
                .expect("over-full column has assigned users");
            q[(victim, j)] = 0.0;
        }
    }
}

/// Brings every user up to `ceil(q_l)` satellites, preferring the satellite
/// with the largest marginal gain among those with spare capacity.
pub(crate) fn repair_rows(
    scenario: &Scenario,
    params: &RateModelParams,
    q: &mut Matrix,
    constraints: Constraints,
) -> Result<()> {
    let need = constraints.min_row_count();
    for k in 0..q.rows() {
        while (q.row_sum(k) as usize) < need {
            let open: Vec<usize> = (0..q.cols())
                .filter(|&j| q[(k, j)] == 0.0 && q.col_sum(j) < constraints.q_s as f64)
                .collect();
            let best = open
                .into_iter()
                .map(|j| (j, flip_gain(scenario, params, q, k, j, 1.0)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(j, _)| j);
            match best {
                Some(j) => q[(k, j)] = 1.0,
                None => {
                    if !augment(q, k, need, constraints.q_s) {
                        return Err(Error::Infeasible(format!(
                            "cannot find a satellite for user {k} without breaking the column caps"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Frees a slot for user `k` along a chain of reassignments: `k` takes a
/// seat on a full satellite, whose displaced user either has seats to spare
/// or moves on to another satellite, until a satellite with spare capacity
/// absorbs the chain.
fn augment(q: &mut Matrix, k: usize, need: usize, q_s: usize) -> bool {
    let (kk, jj) = (q.rows(), q.cols());
    // parent[j] = (previous satellite, user moved from previous into j)
    let mut parent: Vec<Option<(Option<usize>, usize)>> = vec![None; jj];
    let mut queue = VecDeque::new();
    for j in 0..jj {
        if q[(k, j)] == 0.0 {
            parent[j] = Some((None, k));
            queue.push_back(j);
        }
    }
    while let Some(j) = queue.pop_front() {
        let mover = parent[j].expect("queued satellites have parents").1;
        if q.col_sum(j) < q_s as f64 {
            apply_chain(q, &parent, j, None);
            return true;
        }
        for u in (0..kk).filter(|&u| u != mover && q[(u, j)] == 1.0) {
            if q.row_sum(u) as usize > need {
                apply_chain(q, &parent, j, Some(u));
                return true;
            }
            for next in 0..jj {
                if parent[next].is_none() && q[(u, next)] == 0.0 {
                    parent[next] = Some((Some(j), u));
                    queue.push_back(next);
                }
            }
        }
    }
    false
}

fn apply_chain(q: &mut Matrix, parent: &[Option<(Option<usize>, usize)>], end: usize, evict: Option<usize>) {
    if let Some(u) = evict {
        q[(u, end)] = 0.0;
    }
    let mut j = end;
    loop {
        let (prev, mover) = parent[j].expect("chain is connected");
        q[(mover, j)] = 1.0;
        match prev {
            Some(p) => {
                q[(mover, p)] = 0.0;
                j = p;
            }
            None => break,
        }
    }
}

/// Thresholds `relaxed` at `threshold`, then repairs the column caps and row
/// floors. The result always passes [`check_feasibility`].
pub fn round_and_repair(
    relaxed: &Matrix,
    constraints: Constraints,
    scenario: &Scenario,
    params: &RateModelParams,
    threshold: f64,
) -> Result<MatchingMatrix> {
    if relaxed.as_slice().iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Contract("relaxed matching must lie in [0, 1]".into()));
    }
    constraints.certify(relaxed.rows(), relaxed.cols())?;
    let mut q = relaxed.map(|x| if x >= threshold { 1.0 } else { 0.0 });
    repair_columns(scenario, params, &mut q, constraints.q_s);
    repair_rows(scenario, params, &mut q, constraints)?;
    let report = check_feasibility(&q, constraints);
    if !report.is_feasible() {
        return Err(Error::Infeasible(format!("repair left violations: {:?}", report.violations)));
    }
    MatchingMatrix::new(q, constraints)
}
