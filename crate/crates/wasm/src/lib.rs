//! Browser bindings for the allocator. Every export takes and returns a JSON
//! string so the page needs no generated glue beyond `wasm-bindgen`'s.

use mudalloc::baselines::{centralized_allocate, greedy_allocate, round_robin_allocate};
use mudalloc::polytope::MatchingPolytope;
use mudalloc::rate::{clamped_q_l, processing_load, sum_rate, Constraints, RateModelParams};
use mudalloc::scenario::{Scenario, ScenarioConfig};
use mudalloc::solver::{solve, SolverConfig};
use mudalloc::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// A small instance the page can describe with a handful of sliders.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Instance {
    pub users: usize,
    pub res: usize,
    pub sats: usize,
    pub q_s: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for Instance {
    fn default() -> Self {
        Self {
            users: 8,
            res: 4,
            sats: 3,
            q_s: 3,
            epsilon: 0.2,
            seed: 1,
        }
    }
}

impl Instance {
    fn config(&self) -> ScenarioConfig {
        ScenarioConfig {
            num_users: self.users,
            num_res: self.res,
            num_sats: self.sats,
            rng_seed: self.seed,
            ..ScenarioConfig::default()
        }
    }
}

#[derive(Debug, Serialize)]
struct Allocation {
    allocator: &'static str,
    sum_rate: f64,
    load: f64,
    /// Row-major `K x J` 0/1 matrix.
    matching: Vec<Vec<u8>>,
}

fn allocation(name: &'static str, scenario: &Scenario, params: &RateModelParams, q: &Matrix) -> Result<Allocation, String> {
    let rate = sum_rate(scenario, params, q).map_err(|e| e.to_string())?;
    let load = processing_load(scenario, q).map_err(|e| e.to_string())?.iter().sum();
    let matching = (0..q.rows())
        .map(|k| q.row(k).iter().map(|&v| (v > 0.5) as u8).collect())
        .collect();
    Ok(Allocation {
        allocator: name,
        sum_rate: rate,
        load,
        matching,
    })
}

fn compare_inner(input: &str) -> Result<Value, String> {
    let inst: Instance = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let (scenario, geometry) = Scenario::generate_with_geometry(&inst.config()).map_err(|e| e.to_string())?;
    let params = RateModelParams::new(inst.epsilon);
    params.validate().map_err(|e| e.to_string())?;
    let constraints = Constraints::new(inst.q_s, clamped_q_l(inst.q_s, inst.users, inst.sats));
    let mut rng = ChaCha8Rng::seed_from_u64(inst.seed);

    let report = solve(&scenario, &params, constraints, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let greedy = greedy_allocate(&scenario, constraints, &mut rng).map_err(|e| e.to_string())?;
    let rr = round_robin_allocate(&scenario, constraints, &mut rng).map_err(|e| e.to_string())?;
    let full = centralized_allocate(inst.users, inst.sats);

    let allocations = vec![
        allocation("proposed", &scenario, &params, report.matching.values())?,
        allocation("greedy", &scenario, &params, greedy.values())?,
        allocation("round_robin", &scenario, &params, rr.values())?,
        allocation("centralized", &scenario, &params, &full)?,
    ];
    let xy = |p: &[f64; 3]| [p[0], p[1]];
    Ok(json!({
        "q_s": constraints.q_s,
        "q_l": constraints.q_l,
        "users": geometry.users.iter().map(xy).collect::<Vec<_>>(),
        "sats": geometry.sats.iter().map(xy).collect::<Vec<_>>(),
        "outer_iterations": report.outer_iterations,
        "allocations": allocations,
    }))
}

fn tradeoff_inner(input: &str) -> Result<Value, String> {
    let inst: Instance = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let scenario = Scenario::generate(&inst.config()).map_err(|e| e.to_string())?;
    let params = RateModelParams::new(inst.epsilon);
    params.validate().map_err(|e| e.to_string())?;
    let full = centralized_allocate(inst.users, inst.sats);
    let full_rate = sum_rate(&scenario, &params, &full).map_err(|e| e.to_string())?;
    let full_load: f64 = processing_load(&scenario, &full).map_err(|e| e.to_string())?.iter().sum();

    let mut points = Vec::new();
    for q_s in 1..=inst.users {
        let constraints = Constraints::new(q_s, clamped_q_l(q_s, inst.users, inst.sats));
        let report = solve(&scenario, &params, constraints, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let q = report.matching.values();
        let load: f64 = processing_load(&scenario, q).map_err(|e| e.to_string())?.iter().sum();
        points.push(json!({
            "q_s": q_s,
            "q_l": constraints.q_l,
            "rate_ratio": report.rounded_sum_rate / full_rate,
            "load_ratio": load / full_load,
        }));
    }
    Ok(json!({ "points": points }))
}

#[derive(Debug, Deserialize)]
struct ProjectionInput {
    q_s: f64,
    q_l: f64,
    /// Row-major `K x J` point to project.
    point: Vec<Vec<f64>>,
}

fn project_inner(input: &str) -> Result<Value, String> {
    let req: ProjectionInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let rows = req.point.len();
    let cols = req.point.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || req.point.iter().any(|r| r.len() != cols) {
        return Err("point must be a non-empty rectangular matrix".into());
    }
    let polytope = MatchingPolytope::new(rows, cols, req.q_s, req.q_l).map_err(|e| e.to_string())?;
    let x = Matrix::from_vec(rows, cols, req.point.concat());
    let (y, sweeps) = polytope.project_with_stats(&x, 1e-10);
    Ok(json!({
        "projection": (0..rows).map(|k| y.row(k).to_vec()).collect::<Vec<_>>(),
        "sweeps": sweeps,
        "distance": x.distance(&y),
        "violation_before": polytope.violation(&x),
        "violation_after": polytope.violation(&y),
    }))
}

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Runs the solver and the three baselines on one instance.
///
/// Input: `{users, res, sats, q_s, epsilon, seed}`; missing fields default.
/// Output: node positions plus rate, load and matching per allocator, or
/// `{error}`.
#[wasm_bindgen]
pub fn compare(input: &str) -> String {
    respond(compare_inner(input))
}

/// Rate and load relative to detecting every user everywhere, for each
/// `q_s` from 1 to K on one instance.
#[wasm_bindgen]
pub fn tradeoff(input: &str) -> String {
    respond(tradeoff_inner(input))
}

/// Projects `{q_s, q_l, point}` onto the relaxed matching polytope.
#[wasm_bindgen]
pub fn project(input: &str) -> String {
    respond(project_inner(input))
}
