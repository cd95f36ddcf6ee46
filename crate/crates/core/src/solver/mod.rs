//! The load-allocation solver: penalty relaxation of the binary matching,
//! closed-form `gamma` / `theta` updates, and successive concave lower
//! bounds maximised over the relaxed polytope, followed by rounding.

mod penalty;
mod rounding;
mod slm;
mod transform;

use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::polytope::{ConcaveObjective, MatchingPolytope, PgaConfig};
use crate::rate::{max_nonintegrality, processing_load, sum_rate, Constraints, MatchingMatrix, RateModelParams};
use crate::scenario::Scenario;

pub use penalty::{penalty, penalty_gradient};
pub(crate) use rounding::repair_rows;
pub use rounding::round_and_repair;
pub use slm::{build_slm_subproblem, SlmSurrogate, SQRT_FLOOR};
pub use transform::{
    p2_prime_objective, p3_objective, rate_from_gamma, update_gamma, update_mu, update_theta,
};

use transform::LinkTable;

/// How the penalty weight evolves across outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSchedule {
    /// `lambda_0 = factor * mean |dC_SUM/dq|` at the starting point, then
    /// multiplied by `growth` after every outer iteration that ends with the
    /// matching still fractional.
    Adaptive { factor: f64, growth: f64 },
    /// Constant weight.
    Fixed { lambda: f64 },
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Adaptive {
            factor: 0.1,
            growth: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Every entry `q_s / K` (raised to meet the row floor if needed).
    #[default]
    Uniform,
    /// Cyclic binary assignment meeting the row floor, then projected.
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: LambdaSchedule,
    /// Relative change of the penalised objective ending the outer loop.
    pub eps_outer: f64,
    /// Relative change of the surrogate value ending the inner loop.
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rounding_threshold: f64,
    /// Largest distance to `{0, 1}` tolerated at outer convergence.
    pub integrality_tol: f64,
    pub init: InitKind,
    /// Refresh `theta` before every inner step instead of once per outer step.
    pub theta_in_inner_loop: bool,
    pub pga: PgaConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaSchedule::default(),
            eps_outer: 1e-4,
            eps_inner: 1e-5,
            max_outer: 50,
            max_inner: 30,
            rounding_threshold: 0.5,
            integrality_tol: 1e-3,
            init: InitKind::default(),
            theta_in_inner_loop: true,
            // each subproblem only needs to improve on its anchor; the
            // surrogate is rebuilt right after, so polishing it is wasted work
            pga: PgaConfig {
                max_iters: 50,
                ..PgaConfig::default()
            },
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_outer > 0.0
            && self.eps_inner > 0.0
            && self.integrality_tol > 0.0
            && self.max_outer > 0
            && self.max_inner > 0
            && (0.0..=1.0).contains(&self.rounding_threshold)
            && self.pga.max_iters > 0
            && self.pga.grad_tol > 0.0
            && self.pga.projection_tol > 0.0
            && (0.0..1.0).contains(&self.pga.shrink)
            && self.pga.sufficient_increase > 0.0;
        let lambda_ok = match self.lambda {
            LambdaSchedule::Adaptive { factor, growth } => factor > 0.0 && growth >= 1.0,
            LambdaSchedule::Fixed { lambda } => lambda > 0.0,
        };
        if ok && lambda_ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver config: {self:?}")))
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub lambda: f64,
    /// `C_SUM + p` at the start of the iteration, under this iteration's lambda.
    pub objective_start: f64,
    /// `C_SUM + p` at the end of the iteration, same lambda.
    pub relaxed_objective: f64,
    /// `C_SUM` of the current relaxed matching.
    pub sum_rate: f64,
    pub max_nonintegrality: f64,
    /// Quadratic-transform objective after each inner step (fixed gamma).
    pub inner_trace: Vec<f64>,
    /// Largest deviation among `sum log2(1+gamma*) = C_SUM` and
    /// `P3(theta*) = P2'` at the start of the iteration.
    pub identity_gap: f64,
}

/// Mutable state of one solve.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub q: Matrix,
    pub lambda: f64,
    pub outer: usize,
    pub trace: Vec<OuterRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationReport {
    pub num_users: usize,
    pub num_res: usize,
    pub num_sats: usize,
    pub matching: MatchingMatrix,
    pub relaxed: Matrix,
    /// `C_SUM + p` of the relaxed matching at the final lambda.
    pub relaxed_objective: f64,
    pub rounded_sum_rate: f64,
    pub load: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
    pub trace: Vec<OuterRecord>,
    pub wall_time_s: f64,
}

impl AllocationReport {
    pub fn total_load(&self) -> f64 {
        self.load.iter().sum()
    }

    /// JSON document: dimensions, row-major binary matching, objective
    /// values, traces and per-satellite load.
    pub fn to_json(&self) -> serde_json::Value {
        let c = self.matching.constraints();
        serde_json::json!({
            "dimensions": { "users": self.num_users, "res": self.num_res, "sats": self.num_sats },
            "constraints": { "q_s": c.q_s, "q_l": c.q_l },
            "matching": self.matching.bit_string(),
            "relaxed_objective": self.relaxed_objective,
            "rounded_sum_rate": self.rounded_sum_rate,
            "load": self.load,
            "outer_iterations": self.outer_iterations,
            "converged": self.converged,
            "warning": self.warning,
            "trace": {
                "lambda": self.trace.iter().map(|r| r.lambda).collect::<Vec<_>>(),
                "relaxed_objective": self.trace.iter().map(|r| r.relaxed_objective).collect::<Vec<_>>(),
                "sum_rate": self.trace.iter().map(|r| r.sum_rate).collect::<Vec<_>>(),
                "max_nonintegrality": self.trace.iter().map(|r| r.max_nonintegrality).collect::<Vec<_>>(),
                "inner": self.trace.iter().map(|r| r.inner_trace.clone()).collect::<Vec<_>>(),
            },
            "wall_time_s": self.wall_time_s,
        })
    }
}

/// Cyclic binary start: user `k` takes satellites `k, k+1, ... (mod J)`,
/// skipping full ones, until it meets the row floor.
fn round_robin_start(num_users: usize, num_sats: usize, constraints: Constraints) -> Matrix {
    let need = constraints.min_row_count();
    let mut q = Matrix::zeros(num_users, num_sats);
    let mut load = vec![0usize; num_sats];
    for k in 0..num_users {
        let mut got = 0;
        for step in 0..num_sats {
            if got == need {
                break;
            }
            let j = (k + step) % num_sats;
            if load[j] < constraints.q_s {
                q[(k, j)] = 1.0;
                load[j] += 1;
                got += 1;
            }
        }
    }
    q
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-300)
}

/// Runs the full solver and rounds the result.
pub fn solve(
    scenario: &Scenario,
    params: &RateModelParams,
    constraints: Constraints,
    cfg: &SolverConfig,
) -> Result<AllocationReport> {
    let started = Instant::now();
    params.validate()?;
    cfg.validate()?;
    let (kk, jj) = (scenario.num_users(), scenario.num_sats());
    constraints.certify(kk, jj)?;
    let polytope = MatchingPolytope::new(kk, jj, constraints.q_s as f64, constraints.q_l)?;
    let table = LinkTable::new(scenario, params);

    let start = match cfg.init {
        InitKind::Uniform => polytope.uniform_point(),
        InitKind::RoundRobin => round_robin_start(kk, jj, constraints),
    };
    let start = polytope.project(&start, cfg.pga.projection_tol);

    let lambda0 = match cfg.lambda {
        LambdaSchedule::Fixed { lambda } => lambda,
        LambdaSchedule::Adaptive { factor, .. } => {
            let gamma = table.gamma(&start);
            let theta = table.theta(&start, &gamma);
            let grad = SlmSurrogate::assemble(&table, &gamma, &theta).gradient(&start);
            let mean = grad.as_slice().iter().map(|g| g.abs()).sum::<f64>() / (kk * jj) as f64;
            (factor * mean).max(f64::MIN_POSITIVE)
        }
    };

    let mut state = SolverState {
        q: start,
        lambda: lambda0,
        outer: 0,
        trace: Vec::new(),
    };
    let mut converged = false;
    let mut previous = sum_rate(scenario, params, &state.q)? + penalty(&state.q, state.lambda);

    while state.outer < cfg.max_outer {
        state.outer += 1;
        let lambda = state.lambda;
        let objective_start = sum_rate(scenario, params, &state.q)? + penalty(&state.q, lambda);

        let gamma = table.gamma(&state.q);
        let mut theta = table.theta(&state.q, &gamma);
        let identity_gap = {
            let p2 = table.p2_prime(&state.q, &gamma, lambda);
            let p3 = table.p3(&state.q, &gamma, &theta, lambda);
            (p3 - p2).abs().max((p2 - objective_start).abs())
        };

        let base = SlmSurrogate::assemble(&table, &gamma, &theta);
        let mut inner_trace = vec![table.p3(&state.q, &gamma, &theta, lambda)];
        let mut last_value = inner_trace[0];
        for _ in 0..cfg.max_inner {
            let surrogate = if cfg.theta_in_inner_loop {
                theta = table.theta(&state.q, &gamma);
                SlmSurrogate::assemble(&table, &gamma, &theta).with_penalty_tangent(&state.q, lambda)
            } else {
                base.clone().with_penalty_tangent(&state.q, lambda)
            };
            let ascent = polytope.maximize(&surrogate, &state.q, &cfg.pga)?;
            state.q = ascent.argmax;
            inner_trace.push(table.p3(&state.q, &gamma, &theta, lambda));
            let done = relative_change(ascent.value, last_value) < cfg.eps_inner;
            last_value = ascent.value;
            if done {
                break;
            }
        }

        let c_sum = sum_rate(scenario, params, &state.q)?;
        let relaxed_objective = c_sum + penalty(&state.q, lambda);
        let nonint = max_nonintegrality(&state.q);
        state.trace.push(OuterRecord {
            iteration: state.outer,
            lambda,
            objective_start,
            relaxed_objective,
            sum_rate: c_sum,
            max_nonintegrality: nonint,
            inner_trace,
            identity_gap,
        });

        if relative_change(relaxed_objective, previous) < cfg.eps_outer && nonint < cfg.integrality_tol {
            converged = true;
            break;
        }
        previous = relaxed_objective;
        if let LambdaSchedule::Adaptive { growth, .. } = cfg.lambda {
            if nonint >= cfg.integrality_tol {
                state.lambda *= growth;
            }
        }
    }

    let matching = round_and_repair(&state.q, constraints, scenario, params, cfg.rounding_threshold)?;
    let rounded_sum_rate = sum_rate(scenario, params, matching.values())?;
    let load = processing_load(scenario, matching.values())?;
    let relaxed_objective = state
        .trace
        .last()
        .map(|r| r.relaxed_objective)
        .unwrap_or(previous);
    let warning = (!converged).then(|| format!("outer loop hit max_outer = {}", cfg.max_outer));
    Ok(AllocationReport {
        num_users: kk,
        num_res: scenario.num_res(),
        num_sats: jj,
        matching,
        relaxed: state.q,
        relaxed_objective,
        rounded_sum_rate,
        load,
        outer_iterations: state.outer,
        converged,
        warning,
        trace: state.trace,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
