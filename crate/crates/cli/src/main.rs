mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use edgesim::baselines::Scheme;

#[derive(Debug, Parser)]
#[command(
    name = "edgesim",
    version,
    about = "Trust-aware coalition formation among small-cell edge servers"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Where a simulation config comes from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    /// Config JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in preset name (paper-fig4).
    #[arg(long)]
    pub preset: Option<String>,
}

/// Game settings for commands that start from a scenario file.
#[derive(Debug, Args)]
pub struct SettingsArgs {
    /// Config JSON whose `game` section is used (defaults otherwise).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Largest buyer count searched exhaustively.
    #[arg(long)]
    pub exhaustive_threshold: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Proposed,
    Noncoop,
    Cloudmin,
    Central,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Proposed => Scheme::Proposed,
            SchemeArg::Noncoop => Scheme::NonCooperative,
            SchemeArg::Cloudmin => Scheme::CloudMin,
            SchemeArg::Central => Scheme::Centralized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hp,
    C,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario (placements and trust network) from a config.
    Generate {
        #[command(flatten)]
        source: ConfigSource,
        /// Overrides the config seed (and EDGESIM_SEED).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run one scheme on a scenario and write cost, ledger and trace CSVs.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "proposed")]
        scheme: SchemeArg,
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a parameter sweep into results/<name>/<run id>/.
    Sweep {
        spec: PathBuf,
        #[arg(long, short, default_value = "results")]
        out: PathBuf,
        /// Run directory name (default: current epoch seconds).
        #[arg(long)]
        run_id: Option<String>,
        /// Skip cells already recorded in the run directory.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        exhaustive_threshold: Option<usize>,
    },
    /// Multi-slot run with MUE churn and periodic trust refresh.
    Dynamic {
        #[command(flatten)]
        source: ConfigSource,
        /// Dynamic run parameters as JSON (defaults otherwise).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Certify stability of the formed partition and check invariants.
    Verify {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "hp")]
        mode: ModeArg,
        /// Also check an allocation file written by `run`.
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Aggregate sweep tables into summary.csv in each run directory.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Generate { source, seed, out } => commands::generate(&source, seed, &out).map(|()| true),
        Command::Run {
            scenario,
            scheme,
            settings,
            out,
        } => commands::run(&scenario, scheme.into(), &settings, &out).map(|()| true),
        Command::Sweep {
            spec,
            out,
            run_id,
            resume,
            exhaustive_threshold,
        } => commands::sweep(&spec, &out, run_id, resume, exhaustive_threshold).map(|()| true),
        Command::Dynamic {
            source,
            spec,
            slots,
            seed,
            out,
        } => commands::dynamic(&source, spec.as_deref(), slots, seed, &out).map(|()| true),
        Command::Verify {
            scenario,
            mode,
            allocation,
            settings,
        } => commands::verify(&scenario, mode, allocation.as_deref(), &settings),
        Command::Report { dirs } => commands::report(&dirs).map(|()| true),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
