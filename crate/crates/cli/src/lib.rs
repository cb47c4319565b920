//! Experiment runner for the segment-cluster drift simulator.
//!
//! The `segclust` binary is a thin wrapper over [`main_with_args`]; the
//! subcommand bodies are exposed as [`cmd_gen_world`], [`cmd_run`] and
//! [`cmd_eval`] so they can be driven from tests.

pub mod experiment;
pub mod spec;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use segclust_core::metrics::{evaluate_files, AlignMode, EvalError, MetricsReport, DEFAULT_RPE_DELTA};
use segclust_core::pipeline::PipelineError;
use segclust_core::world::WorldError;
use segclust_core::{generate_corridor, Mode, WorldSpec};
use thiserror::Error;

pub use experiment::{cmd_run, CellOutcome, ModeSummary, RunOutput, SUMMARY_HEADER};
pub use spec::{parse_seeds, ExperimentSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Metrics(#[from] segclust_core::metrics::MetricsError),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for bad input from the user, 2 for failures while doing the work.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::World(WorldError::InvalidSpec(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "segclust", version, about = "Segment-cluster scale drift simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a corridor world and write it as JSON.
    GenWorld(GenWorldArgs),
    /// Run an experiment grid of modes and seeds.
    Run(RunArgs),
    /// Score an estimated TUM trajectory against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenWorldArgs {
    /// Output world file.
    #[arg(short, long, default_value = "world.json")]
    pub out: PathBuf,
    /// TOML file with a world spec; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corridor_length: Option<f64>,
    #[arg(long)]
    pub door_spacing: Option<f64>,
    #[arg(long)]
    pub door_height: Option<f64>,
    #[arg(long)]
    pub door_width: Option<f64>,
    #[arg(long)]
    pub n_turns: Option<u32>,
    #[arg(long)]
    pub turn_angle: Option<f64>,
    #[arg(long)]
    pub extra_unique_segments: Option<u32>,
    /// Seed for clutter placement.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl GenWorldArgs {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            config: None,
            corridor_length: None,
            door_spacing: None,
            door_height: None,
            door_width: None,
            n_turns: None,
            turn_angle: None,
            extra_unique_segments: None,
            seed: None,
        }
    }

    pub fn world_spec(&self) -> Result<WorldSpec, CliError> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => WorldSpec::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { spec.$target = v; })*
            };
        }
        set!(
            corridor_length => corridor_length,
            door_spacing => door_spacing,
            door_height => door_height,
            door_width => door_width,
            n_turns => n_turns,
            turn_angle => turn_angle,
            extra_unique_segments => extra_unique_segments,
            seed => rng_seed
        );
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList)
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment spec (TOML). Defaults apply when omitted.
    #[arg(short, long)]
    pub spec: Option<PathBuf>,
    /// Output directory, overriding the spec.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Seeds such as `0-19` or `1,4,9`, overriding the spec.
    #[arg(long, value_parser = parse_seed_list)]
    pub seeds: Option<SeedList>,
    /// Comma-separated modes, overriding the spec.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<Mode>>,
    /// World file, overriding the spec's world.
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(short, long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    pub fn experiment_spec(&self) -> Result<ExperimentSpec, CliError> {
        let mut spec = match &self.spec {
            Some(path) => ExperimentSpec::read(path)?,
            None => ExperimentSpec::default(),
        };
        if let Some(out) = &self.out {
            spec.output_dir = out.clone();
        }
        if let Some(SeedList(seeds)) = &self.seeds {
            spec.seeds = seeds.clone();
        }
        if let Some(modes) = &self.modes {
            spec.modes = modes.clone();
        }
        if let Some(world) = &self.world {
            spec.world_file = Some(world.clone());
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Estimated trajectory (TUM).
    pub est: PathBuf,
    /// Ground-truth trajectory (TUM).
    pub gt: PathBuf,
    #[arg(long, default_value_t = AlignMode::Similarity, value_parser = parse_align)]
    pub align: AlignMode,
    /// Frame offset for relative pose error.
    #[arg(long, default_value_t = DEFAULT_RPE_DELTA)]
    pub rpe_delta: usize,
    /// Spline-interpolate ground truth at the estimate's timestamps.
    #[arg(long)]
    pub interpolate_gt: bool,
    /// Also write the report here.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

impl EvalArgs {
    pub fn new(est: impl Into<PathBuf>, gt: impl Into<PathBuf>) -> Self {
        Self {
            est: est.into(),
            gt: gt.into(),
            align: AlignMode::Similarity,
            rpe_delta: DEFAULT_RPE_DELTA,
            interpolate_gt: false,
            out: None,
        }
    }
}

fn parse_align(s: &str) -> Result<AlignMode, String> {
    s.parse().map_err(|e: segclust_core::metrics::MetricsError| e.to_string())
}

/// Generates a world from the flags and writes it to `args.out`.
pub fn cmd_gen_world(args: &GenWorldArgs) -> Result<PathBuf, CliError> {
    let spec = args.world_spec()?;
    let world = generate_corridor(&spec)?;
    world.write_file(&args.out)?;
    Ok(args.out.clone())
}

/// Scores `args.est` against `args.gt`, writing JSON to `args.out` if set.
pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport, CliError> {
    if args.rpe_delta == 0 {
        return Err(CliError::Usage("--rpe-delta must be at least 1".into()));
    }
    let report = evaluate_files(&args.est, &args.gt, args.align, args.rpe_delta, args.interpolate_gt)?;
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json_string()).map_err(|e| CliError::io(out, e))?;
    }
    Ok(report)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenWorld(args) => {
            let path = cmd_gen_world(&args)?;
            println!("wrote {}", path.display());
        }
        Command::Run(args) => {
            let spec = args.experiment_spec()?;
            let output = match args.jobs {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?
                    .install(|| cmd_run(&spec))?,
                None => cmd_run(&spec)?,
            };
            for s in &output.summary {
                let win = s
                    .win_rate_vs_baseline
                    .map_or(String::new(), |w| format!("  win rate {w:.2}"));
                println!(
                    "{:<10} {:<10} median ATE {:.6}  median RPE {:.6}{win}",
                    s.mode.to_string(),
                    s.align_mode.to_string(),
                    s.ate_median,
                    s.rpe_median
                );
            }
            let failed = output.failed_cells();
            if failed == output.cells.len() {
                return Err(CliError::Failed(format!(
                    "all {failed} cells failed; see {}",
                    output.output_dir.join("failures.txt").display()
                )));
            }
            if failed > 0 {
                eprintln!("{failed} cell(s) failed; see failures.txt");
            }
            println!("results in {}", output.output_dir.display());
        }
        Command::Eval(args) => {
            let report = cmd_eval(&args)?;
            print!("{}", report.to_json_string());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
