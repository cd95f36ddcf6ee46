use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mudalloc::harness::{
    converge, run_experiment, solve_problem, tradeoff, write_csv, ExperimentOutput, ExperimentPlan, ProblemConfig,
};
use mudalloc::rate::InterferenceVariant;
use mudalloc::scenario::Scenario;
use mudalloc::Result;

/// Multi-user detection load allocation across cooperating satellites.
#[derive(Debug, Parser)]
#[command(name = "mudalloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and print the allocation report as JSON.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo sweep; writes trials.csv, summary.csv, timings.csv, plan.json.
    Sweep {
        plan: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Outer-loop traces of the solver at the plan's base point.
    Converge {
        plan: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rate and load relative to the centralized bound, over q_s.
    Tradeoff {
        plan: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Scenario utilities.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioAction {
    /// Write the channel tensor and signature matrix of a config as CSV.
    Dump {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Overrides the scenario seed (solve, dump) or the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of Monte-Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Output file (solve) or directory (everything else).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `as_printed` or `complement`.
    #[arg(long)]
    interference_variant: Option<InterferenceVariant>,
}

impl Common {
    fn apply_problem(&self, cfg: &mut ProblemConfig) {
        if let Some(seed) = self.seed {
            cfg.scenario.rng_seed = seed;
        }
        if let Some(v) = self.interference_variant {
            cfg.model.interference_variant = v;
        }
    }

    fn apply_plan(&self, plan: &mut ExperimentPlan) {
        if let Some(seed) = self.seed {
            plan.experiment.seed = seed;
        }
        if let Some(trials) = self.trials {
            plan.experiment.trials = trials;
        }
        if let Some(v) = self.interference_variant {
            plan.model.interference_variant = v;
        }
        if let Some(dir) = &self.out {
            plan.experiment.output_dir = dir.clone();
        }
    }
}

fn load_plan(path: &Path, common: &Common) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::load(path)?;
    common.apply_plan(&mut plan);
    plan.validate()?;
    Ok(plan)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { config, common } => {
            let mut cfg = ProblemConfig::load(&config)?;
            common.apply_problem(&mut cfg);
            let report = solve_problem(&cfg)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            let text = serde_json::to_string_pretty(&report.to_json())?;
            match &common.out {
                Some(path) => fs::write(path, text + "\n")?,
                None => println!("{text}"),
            }
        }
        Command::Sweep { plan, common } => {
            let plan = load_plan(&plan, &common)?;
            let (rows, summary, timings) = run_experiment(&plan)?;
            let out = ExperimentOutput::write(&plan.experiment.output_dir, &plan, &rows, &summary, &timings)?;
            write_csv(std::io::stdout().lock(), &summary)?;
            eprintln!("wrote {}", out.trials.parent().unwrap_or(Path::new(".")).display());
        }
        Command::Converge { plan, common } => {
            let plan = load_plan(&plan, &common)?;
            let result = converge(&plan)?;
            let dir = &plan.experiment.output_dir;
            fs::create_dir_all(dir)?;
            write_csv(fs::File::create(dir.join("converge.csv"))?, &result.rows)?;
            let mut stdout = std::io::stdout().lock();
            for limit in [5, 10, 20] {
                writeln!(stdout, "within {limit} outer iterations: {:.3}", result.fraction_within(limit))?;
            }
        }
        Command::Tradeoff { plan, common } => {
            let plan = load_plan(&plan, &common)?;
            let curve = tradeoff(&plan)?;
            let dir = &plan.experiment.output_dir;
            fs::create_dir_all(dir)?;
            write_csv(fs::File::create(dir.join("tradeoff.csv"))?, &curve)?;
            write_csv(std::io::stdout().lock(), &curve)?;
        }
        Command::Scenario {
            action: ScenarioAction::Dump { config, common },
        } => {
            let mut cfg = ProblemConfig::load(&config)?;
            common.apply_problem(&mut cfg);
            let scenario = Scenario::generate(&cfg.scenario)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            scenario.write_channel_csv(fs::File::create(dir.join("channels.csv"))?)?;
            scenario.write_signature_csv(fs::File::create(dir.join("signatures.csv"))?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
