//! Command-line front end.

mod commands;
pub mod output;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{GradientsFile, ScenarioFile};
pub use output::{Format, Report};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "fedsched",
    version,
    about = "Workload scheduling for federated training on heterogeneous devices"
)]
pub struct Cli {
    /// Seed for randomized schedulers and campaigns.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit linear cost models from a profiling trace.
    Profile(ProfileArgs),
    /// Schedule a task on a fleet.
    Schedule(ScheduleArgs),
    /// Run a multi-scheduler campaign.
    Simulate(SimulateArgs),
    /// Gradient diversity per user.
    Diversity(DiversityArgs),
    /// Exhaustive optimum of a small instance.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// JSON array of training-time samples.
    pub trace: PathBuf,
    /// Convolutional parameters of the target architecture.
    #[arg(long)]
    pub conv: f64,
    /// Dense parameters of the target architecture.
    #[arg(long)]
    pub dense: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Iid,
    Noniid,
}

/// Inclusive `LO:HI:STEP` range of alpha values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl AlphaGrid {
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

impl FromStr for AlphaGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err("expected LO:HI:STEP".into());
        };
        let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
        let grid = AlphaGrid {
            lo: parse(lo)?,
            hi: parse(hi)?,
            step: parse(step)?,
        };
        if !(grid.lo.is_finite() && grid.hi.is_finite() && grid.step.is_finite()) {
            return Err("grid bounds must be finite".into());
        }
        if grid.step <= 0.0 || grid.hi < grid.lo {
            return Err("need STEP > 0 and HI >= LO".into());
        }
        if (grid.hi - grid.lo) / grid.step > 1e5 {
            return Err("grid has too many points".into());
        }
        Ok(grid)
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Scenario file with `profiles` and `task`.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    /// Bundled fleet (`t1` to `t5`) with the bundled task.
    #[arg(long)]
    pub preset: Option<String>,
    /// Data distribution; picks the default scheduler.
    #[arg(long, value_enum, default_value_t = Mode::Iid)]
    pub mode: Mode,
    /// fed_lbap, analytical, mincost, equal_split, proportional or random.
    #[arg(long)]
    pub scheduler: Option<String>,
    /// Override the accuracy-cost base.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sweep the non-IID scheduler over alpha values.
    #[arg(long, value_name = "LO:HI:STEP")]
    pub alpha_grid: Option<AlphaGrid>,
    /// Cross-check against the exhaustive oracle.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Campaign file.
    pub campaign: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    /// File with `users` gradients and an optional `global` gradient.
    pub gradients: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Minmax,
    Mincost,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_enum, default_value_t = Objective::Minmax)]
    pub objective: Objective,
    #[arg(long, default_value_t = 4)]
    pub max_users: usize,
    #[arg(long, default_value_t = 12)]
    pub max_shards: usize,
}

/// Runs a parsed command and renders its output.
pub fn run(cli: &Cli) -> Result<String> {
    let report = match &cli.command {
        Command::Profile(args) => commands::profile(args)?,
        Command::Schedule(args) => commands::schedule(args, cli.seed.unwrap_or(0))?,
        Command::Simulate(args) => commands::simulate(args, cli.seed)?,
        Command::Diversity(args) => commands::diversity(args)?,
        Command::Oracle(args) => commands::oracle(args)?,
    };
    let text = report.render(cli.format)?;
    if let Some(path) = &cli.out {
        std::fs::write(path, &text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        return Ok(String::new());
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_grid_parsing() {
        let g: AlphaGrid = "1:2:0.25".parse().unwrap();
        assert_eq!(g.values(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        let g: AlphaGrid = "1.1:1.3:0.1".parse().unwrap();
        assert_eq!(g.values().len(), 3);
        assert!("1:2".parse::<AlphaGrid>().is_err());
        assert!("2:1:0.1".parse::<AlphaGrid>().is_err());
        assert!("1:2:0".parse::<AlphaGrid>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
