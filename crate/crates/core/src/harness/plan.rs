use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::DEFAULT_ENUMERATION_BUDGET;
use crate::error::{Error, Result};
use crate::rate::{clamped_q_l, Constraints, RateModelParams};
use crate::scenario::ScenarioConfig;
use crate::solver::SolverConfig;

/// `q_s` plus an optional explicit `q_l`; without one, `q_l` follows the
/// clamp rule of [`clamped_q_l`] at every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSpec {
    pub q_s: usize,
    pub q_l: Option<f64>,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self { q_s: 3, q_l: None }
    }
}

impl ConstraintSpec {
    pub fn resolve(&self, num_users: usize, num_sats: usize) -> Constraints {
        let q_l = self.q_l.unwrap_or_else(|| clamped_q_l(self.q_s, num_users, num_sats));
        Constraints::new(self.q_s, q_l)
    }
}

/// Everything a single solve needs. This is also the `solve` config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub scenario: ScenarioConfig,
    pub model: RateModelParams,
    pub constraints: ConstraintSpec,
    pub solver: SolverConfig,
}

impl ProblemConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.model.validate()?;
        self.solver.validate()?;
        check_q_s(self.constraints.q_s, self.scenario.num_users)
    }
}

fn check_q_s(q_s: usize, num_users: usize) -> Result<()> {
    if q_s == 0 || q_s > num_users {
        return Err(Error::Config(format!("q_s must lie in 1..={num_users}, got {q_s}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocator {
    Proposed,
    Greedy,
    RoundRobin,
    Centralized,
    Exhaustive,
}

impl Allocator {
    pub fn name(self) -> &'static str {
        match self {
            Allocator::Proposed => "proposed",
            Allocator::Greedy => "greedy",
            Allocator::RoundRobin => "round_robin",
            Allocator::Centralized => "centralized",
            Allocator::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Allocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    #[default]
    None,
    Epsilon,
    QS,
    #[serde(alias = "j")]
    NumSats,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::None => "none",
            SweepVariable::Epsilon => "epsilon",
            SweepVariable::QS => "q_s",
            SweepVariable::NumSats => "num_sats",
        }
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "epsilon" => Ok(Self::Epsilon),
            "q_s" => Ok(Self::QS),
            "num_sats" | "j" => Ok(Self::NumSats),
            other => Err(Error::Config(format!("unknown sweep variable `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub allocators: Vec<Allocator>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Ceiling on candidate matchings for the exhaustive allocator.
    pub enumeration_budget: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            sweep: SweepVariable::None,
            values: Vec::new(),
            allocators: vec![
                Allocator::Proposed,
                Allocator::Greedy,
                Allocator::RoundRobin,
                Allocator::Centralized,
            ],
            trials: 50,
            seed: 0,
            output_dir: PathBuf::from("out"),
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }
}

/// A resolved sweep point: the swept value and the problem it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub scenario: ScenarioConfig,
    pub model: RateModelParams,
    pub constraints: Constraints,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioConfig,
    pub model: RateModelParams,
    pub constraints: ConstraintSpec,
    pub solver: SolverConfig,
    pub experiment: ExperimentSpec,
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn problem(&self) -> ProblemConfig {
        ProblemConfig {
            scenario: self.scenario.clone(),
            model: self.model,
            constraints: self.constraints,
            solver: self.solver,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem().validate()?;
        let exp = &self.experiment;
        if exp.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if exp.allocators.is_empty() {
            return Err(Error::Config("no allocators selected".into()));
        }
        if exp.sweep != SweepVariable::None && exp.values.is_empty() {
            return Err(Error::Config(format!("sweep over {} has no values", exp.sweep.name())));
        }
        if !(exp.enumeration_budget > 0.0) {
            return Err(Error::Config("enumeration_budget must be positive".into()));
        }
        for point in self.points()? {
            point.scenario.validate()?;
            point.model.validate()?;
            check_q_s(point.constraints.q_s, point.scenario.num_users)?;
        }
        Ok(())
    }

    /// One point per sweep value, or the base problem alone.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let exp = &self.experiment;
        let base = |value: Option<f64>| SweepPoint {
            value,
            scenario: self.scenario.clone(),
            model: self.model,
            constraints: self
                .constraints
                .resolve(self.scenario.num_users, self.scenario.num_sats),
        };
        if exp.sweep == SweepVariable::None {
            return Ok(vec![base(None)]);
        }
        exp.values
            .iter()
            .map(|&v| {
                let mut p = base(Some(v));
                match exp.sweep {
                    SweepVariable::None => unreachable!(),
                    SweepVariable::Epsilon => {
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(Error::Config(format!("epsilon sweep value {v} must be >= 0")));
                        }
                        p.model.epsilon = v;
                    }
                    SweepVariable::QS => {
                        let q_s = integer(v, "q_s")?;
                        p.constraints = ConstraintSpec {
                            q_s,
                            q_l: self.constraints.q_l,
                        }
                        .resolve(p.scenario.num_users, p.scenario.num_sats);
                    }
                    SweepVariable::NumSats => {
                        let j = integer(v, "num_sats")?;
                        if j == 0 {
                            return Err(Error::Config("num_sats sweep value must be >= 1".into()));
                        }
                        p.scenario.num_sats = j;
                        p.constraints = self.constraints.resolve(p.scenario.num_users, j);
                    }
                }
                Ok(p)
            })
            .collect()
    }
}

fn integer(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{what} sweep value {v} is not a non-negative integer")))
    }
}
