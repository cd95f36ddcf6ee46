//! Seeded Monte-Carlo experiments: plan files, sweep execution, CSV tables,
//! convergence traces and the load/rate trade-off curve.

mod output;
mod plan;
mod run;

pub use output::{write_csv, ExperimentOutput};
pub use plan::{
    Allocator, ConstraintSpec, ExperimentPlan, ExperimentSpec, ProblemConfig, SweepPoint, SweepVariable,
};
pub use run::{
    converge, run_experiment, solve_problem, tradeoff, trial_seeds, ConvergeResult, ConvergeRow, SummaryRow,
    TimingRow, TradeoffRow, TrialRow,
};
