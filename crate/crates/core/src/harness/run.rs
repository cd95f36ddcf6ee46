use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{
    centralized_allocate, exhaustive_allocate, greedy_allocate, round_robin_allocate,
};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::rate::{processing_load, sum_rate, Constraints, RateModelParams};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::solver::{solve, AllocationReport, SolverConfig};

use super::plan::{Allocator, ExperimentPlan, ProblemConfig, SweepPoint};

/// One allocator on one trial of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub sweep: &'static str,
    pub value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub allocator: Allocator,
    pub num_sats: usize,
    pub epsilon: f64,
    pub q_s: usize,
    pub q_l: f64,
    pub sum_rate: f64,
    pub load: f64,
    /// Sum rate over the centralized bound's on the same instance.
    pub rate_ratio: f64,
    pub load_ratio: f64,
    pub outer_iterations: Option<usize>,
    pub converged: Option<bool>,
}

/// Mean and standard error over the trials of one (sweep point, allocator).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub sweep: &'static str,
    pub value: Option<f64>,
    pub allocator: Allocator,
    pub q_s: usize,
    pub q_l: f64,
    pub trials: usize,
    pub mean_sum_rate: f64,
    pub stderr_sum_rate: f64,
    pub mean_load: f64,
    pub mean_rate_ratio: f64,
    pub stderr_rate_ratio: f64,
    pub mean_load_ratio: f64,
    pub stderr_load_ratio: f64,
}

/// Wall-clock time, kept apart from the deterministic tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub value: Option<f64>,
    pub trial: usize,
    pub allocator: Allocator,
    pub wall_time_s: f64,
}

/// Per-trial seeds shared by every sweep value, so that sweep points are
/// compared on the same instances.
pub fn trial_seeds(seed: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).map(|_| rng.next_u64()).collect()
}

/// Independent stream for an allocator's own randomness on a trial.
fn allocator_rng(trial_seed: u64, allocator: Allocator) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(1 + allocator as u64);
    rng
}

fn instance(point: &SweepPoint, seed: u64) -> Result<Scenario> {
    Scenario::generate(&ScenarioConfig {
        rng_seed: seed,
        ..point.scenario.clone()
    })
}

/// Solves the problem of a `solve` config file on its own seed.
pub fn solve_problem(cfg: &ProblemConfig) -> Result<AllocationReport> {
    cfg.validate()?;
    let scenario = Scenario::generate(&cfg.scenario)?;
    let constraints = cfg
        .constraints
        .resolve(cfg.scenario.num_users, cfg.scenario.num_sats);
    solve(&scenario, &cfg.model, constraints, &cfg.solver)
}

struct Outcome {
    matrix: Matrix,
    outer_iterations: Option<usize>,
    converged: Option<bool>,
    wall_time_s: f64,
}

fn allocate(
    allocator: Allocator,
    scenario: &Scenario,
    params: &RateModelParams,
    constraints: Constraints,
    solver: &SolverConfig,
    budget: f64,
    trial_seed: u64,
) -> Result<Outcome> {
    let started = web_time::Instant::now();
    let mut rng = allocator_rng(trial_seed, allocator);
    let (matrix, outer_iterations, converged) = match allocator {
        Allocator::Proposed => {
            let report = solve(scenario, params, constraints, solver)?;
            (
                report.matching.values().clone(),
                Some(report.outer_iterations),
                Some(report.converged),
            )
        }
        Allocator::Greedy => (greedy_allocate(scenario, constraints, &mut rng)?.values().clone(), None, None),
        Allocator::RoundRobin => (
            round_robin_allocate(scenario, constraints, &mut rng)?.values().clone(),
            None,
            None,
        ),
        Allocator::Centralized => (centralized_allocate(scenario.num_users(), scenario.num_sats()), None, None),
        Allocator::Exhaustive => (
            exhaustive_allocate(scenario, params, constraints, budget)?.values().clone(),
            None,
            None,
        ),
    };
    Ok(Outcome {
        matrix,
        outer_iterations,
        converged,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(feature = "parallel")]
fn ordered_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn ordered_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Runs every allocator on every (sweep point, trial) pair. Rows come back
/// in (sweep point, trial, allocator) order whatever the scheduling.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<(Vec<TrialRow>, Vec<SummaryRow>, Vec<TimingRow>)> {
    plan.validate()?;
    let exp = &plan.experiment;
    let points = plan.points()?;
    let seeds = trial_seeds(exp.seed, exp.trials);
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..exp.trials).map(move |t| (p, t)))
        .collect();

    let results = ordered_map(&jobs, |&(p, t)| -> Result<Vec<(TrialRow, TimingRow)>> {
        let point = &points[p];
        let scenario = instance(point, seeds[t])?;
        let central = centralized_allocate(scenario.num_users(), scenario.num_sats());
        let central_rate = sum_rate(&scenario, &point.model, &central)?;
        let central_load: f64 = processing_load(&scenario, &central)?.iter().sum();
        exp.allocators
            .iter()
            .map(|&allocator| {
                let out = allocate(
                    allocator,
                    &scenario,
                    &point.model,
                    point.constraints,
                    &plan.solver,
                    exp.enumeration_budget,
                    seeds[t],
                )?;
                let rate = sum_rate(&scenario, &point.model, &out.matrix)?;
                let load: f64 = processing_load(&scenario, &out.matrix)?.iter().sum();
                let row = TrialRow {
                    sweep: exp.sweep.name(),
                    value: point.value,
                    trial: t,
                    seed: seeds[t],
                    allocator,
                    num_sats: point.scenario.num_sats,
                    epsilon: point.model.epsilon,
                    q_s: point.constraints.q_s,
                    q_l: point.constraints.q_l,
                    sum_rate: rate,
                    load,
                    rate_ratio: ratio(rate, central_rate),
                    load_ratio: ratio(load, central_load),
                    outer_iterations: out.outer_iterations,
                    converged: out.converged,
                };
                let timing = TimingRow {
                    value: point.value,
                    trial: t,
                    allocator,
                    wall_time_s: out.wall_time_s,
                };
                Ok((row, timing))
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(jobs.len() * exp.allocators.len());
    let mut timings = Vec::with_capacity(rows.capacity());
    for batch in results {
        for (row, timing) in batch? {
            rows.push(row);
            timings.push(timing);
        }
    }
    let summary = summarize(plan, &points, &rows);
    Ok((rows, summary, timings))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(plan: &ExperimentPlan, points: &[SweepPoint], rows: &[TrialRow]) -> Vec<SummaryRow> {
    let exp = &plan.experiment;
    let per_point = exp.trials * exp.allocators.len();
    let mut out = Vec::new();
    for (p, point) in points.iter().enumerate() {
        let block = &rows[p * per_point..(p + 1) * per_point];
        for (a, &allocator) in exp.allocators.iter().enumerate() {
            let pick = |f: fn(&TrialRow) -> f64| -> Vec<f64> {
                block.iter().skip(a).step_by(exp.allocators.len()).map(f).collect()
            };
            let (mean_sum_rate, stderr_sum_rate) = mean_stderr(&pick(|r| r.sum_rate));
            let (mean_load, _) = mean_stderr(&pick(|r| r.load));
            let (mean_rate_ratio, stderr_rate_ratio) = mean_stderr(&pick(|r| r.rate_ratio));
            let (mean_load_ratio, stderr_load_ratio) = mean_stderr(&pick(|r| r.load_ratio));
            out.push(SummaryRow {
                sweep: exp.sweep.name(),
                value: point.value,
                allocator,
                q_s: point.constraints.q_s,
                q_l: point.constraints.q_l,
                trials: exp.trials,
                mean_sum_rate,
                stderr_sum_rate,
                mean_load,
                mean_rate_ratio,
                stderr_rate_ratio,
                mean_load_ratio,
                stderr_load_ratio,
            });
        }
    }
    out
}

/// One outer iteration of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeRow {
    pub trial: usize,
    pub seed: u64,
    pub iteration: usize,
    pub lambda: f64,
    pub objective_start: f64,
    pub relaxed_objective: f64,
    pub sum_rate: f64,
    pub max_nonintegrality: f64,
    pub inner_steps: usize,
    pub identity_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeResult {
    pub rows: Vec<ConvergeRow>,
    /// `(outer iterations, converged)` per trial.
    pub trials: Vec<(usize, bool)>,
}

impl ConvergeResult {
    /// Fraction of trials that met the outer tolerance within `limit` outer iterations.
    pub fn fraction_within(&self, limit: usize) -> f64 {
        let hits = self.trials.iter().filter(|&&(n, ok)| ok && n <= limit).count();
        hits as f64 / self.trials.len() as f64
    }
}

/// Outer-loop traces of the proposed solver at the plan's base point.
pub fn converge(plan: &ExperimentPlan) -> Result<ConvergeResult> {
    plan.validate()?;
    let exp = &plan.experiment;
    let point = SweepPoint {
        value: None,
        scenario: plan.scenario.clone(),
        model: plan.model,
        constraints: plan.constraints.resolve(plan.scenario.num_users, plan.scenario.num_sats),
    };
    let seeds = trial_seeds(exp.seed, exp.trials);
    let trials: Vec<usize> = (0..exp.trials).collect();
    let reports = ordered_map(&trials, |&t| -> Result<AllocationReport> {
        let scenario = instance(&point, seeds[t])?;
        solve(&scenario, &point.model, point.constraints, &plan.solver)
    });
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (t, report) in reports.into_iter().enumerate() {
        let report = report?;
        summary.push((report.outer_iterations, report.converged));
        rows.extend(report.trace.iter().map(|r| ConvergeRow {
            trial: t,
            seed: seeds[t],
            iteration: r.iteration,
            lambda: r.lambda,
            objective_start: r.objective_start,
            relaxed_objective: r.relaxed_objective,
            sum_rate: r.sum_rate,
            max_nonintegrality: r.max_nonintegrality,
            inner_steps: r.inner_trace.len() - 1,
            identity_gap: r.identity_gap,
        }));
    }
    Ok(ConvergeResult { rows, trials: summary })
}

/// One point of the load/rate trade-off curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub q_s: usize,
    pub q_l: f64,
    pub trials: usize,
    pub mean_rate_ratio: f64,
    pub stderr_rate_ratio: f64,
    pub mean_load_ratio: f64,
    pub stderr_load_ratio: f64,
}

/// Proposed-versus-centralized rate and load ratios over `q_s`. Uses the
/// plan's `q_s` values when it sweeps `q_s`, otherwise every `q_s` in `1..=K`.
pub fn tradeoff(plan: &ExperimentPlan) -> Result<Vec<TradeoffRow>> {
    let mut plan = plan.clone();
    if plan.experiment.sweep != super::SweepVariable::QS {
        plan.experiment.sweep = super::SweepVariable::QS;
        plan.experiment.values = (1..=plan.scenario.num_users).map(|q| q as f64).collect();
    }
    plan.experiment.allocators = vec![Allocator::Proposed];
    let (_, summary, _) = run_experiment(&plan)?;
    Ok(summary
        .into_iter()
        .map(|s| TradeoffRow {
            q_s: s.q_s,
            q_l: s.q_l,
            trials: s.trials,
            mean_rate_ratio: s.mean_rate_ratio,
            stderr_rate_ratio: s.stderr_rate_ratio,
            mean_load_ratio: s.mean_load_ratio,
            stderr_load_ratio: s.stderr_load_ratio,
        })
        .collect())
}
