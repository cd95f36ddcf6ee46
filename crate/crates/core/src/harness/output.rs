use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::plan::{ExperimentPlan, SweepPoint};
use super::run::{SummaryRow, TimingRow, TrialRow};

/// Serializes `rows` as CSV with a header row.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// The files a sweep leaves in its output directory.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trials: PathBuf,
    pub summary: PathBuf,
    pub timings: PathBuf,
    pub metadata: PathBuf,
}

impl ExperimentOutput {
    /// Writes `trials.csv`, `summary.csv`, `timings.csv` and `plan.json`
    /// into `dir`, creating it if needed.
    pub fn write(
        dir: &Path,
        plan: &ExperimentPlan,
        rows: &[TrialRow],
        summary: &[SummaryRow],
        timings: &[TimingRow],
    ) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let out = Self {
            trials: dir.join("trials.csv"),
            summary: dir.join("summary.csv"),
            timings: dir.join("timings.csv"),
            metadata: dir.join("plan.json"),
        };
        write_csv(fs::File::create(&out.trials)?, rows)?;
        write_csv(fs::File::create(&out.summary)?, summary)?;
        write_csv(fs::File::create(&out.timings)?, timings)?;
        let points: Vec<serde_json::Value> = plan.points()?.iter().map(point_json).collect();
        let meta = serde_json::json!({ "plan": plan, "points": points });
        fs::write(&out.metadata, serde_json::to_string_pretty(&meta)?)?;
        Ok(out)
    }
}

fn point_json(p: &SweepPoint) -> serde_json::Value {
    serde_json::json!({
        "value": p.value,
        "num_sats": p.scenario.num_sats,
        "epsilon": p.model.epsilon,
        "q_s": p.constraints.q_s,
        "q_l": p.constraints.q_l,
    })
}
