use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use segclust_core::metrics::{AlignMode, MetricsReport, CSV_HEADER};
use segclust_core::pipeline::RoundReport;
use segclust_core::{generate_corridor, run, Mode, RunResult, World};
use serde::Serialize;

use crate::spec::ExperimentSpec;
use crate::CliError;

/// Header of the per-mode summary table.
pub const SUMMARY_HEADER: &str =
    "mode,align_mode,cells,failed,ate_mean,ate_median,rpe_mean,rpe_median,win_rate_vs_baseline";

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub mode: Mode,
    pub seed: u64,
    /// One report per configured alignment mode, or the failure message.
    pub result: Result<Vec<MetricsReport>, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub align_mode: AlignMode,
    pub cells: usize,
    pub failed: usize,
    pub ate_mean: f64,
    pub ate_median: f64,
    pub rpe_mean: f64,
    pub rpe_median: f64,
    /// Share of seeds where this mode's ATE is strictly below Baseline's.
    /// `None` for Baseline itself or when Baseline was not run.
    pub win_rate_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub cells: Vec<CellOutcome>,
    pub summary: Vec<ModeSummary>,
}

impl RunOutput {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }

    pub fn summary_for(&self, mode: Mode, align: AlignMode) -> Option<&ModeSummary> {
        self.summary
            .iter()
            .find(|s| s.mode == mode && s.align_mode == align)
    }
}

#[derive(Serialize)]
struct ClusterStats {
    count: usize,
    cardinalities: Vec<usize>,
    discarded_observations: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    mode: Mode,
    seed: u64,
    drift: segclust_core::DriftConfig,
    observation: segclust_core::ObservationConfig,
    schedule: segclust_core::ScheduleConfig,
    frames: usize,
    map_points: usize,
    observations: usize,
    clusters: ClusterStats,
    final_scale_error: f64,
    rounds: &'a [RoundReport],
    propagation_log: &'a [String],
}

fn cell_dir(root: &Path, mode: Mode, seed: u64) -> PathBuf {
    root.join("cells").join(format!("{mode}_seed{seed:04}"))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn run_cell(
    spec: &ExperimentSpec,
    world: &World,
    mode: Mode,
    seed: u64,
) -> Result<Vec<MetricsReport>, CliError> {
    let (drift, observation, schedule) = spec.cell_configs(mode, seed);
    let result: RunResult = run(world, drift, observation, schedule)?;
    let dir = cell_dir(&spec.output_dir, mode, seed);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    write(&dir.join("trajectory_corrected.tum"), &result.trajectory.to_tum_string())?;
    write(&dir.join("trajectory_raw.tum"), &result.raw_trajectory.to_tum_string())?;
    write(&dir.join("trajectory_gt.tum"), &world.gt_trajectory.to_tum_string())?;

    let reports = spec
        .align_modes
        .iter()
        .map(|&a| MetricsReport::compute(&result.trajectory, &world.gt_trajectory, a, spec.rpe_delta))
        .collect::<Result<Vec<_>, _>>()?;
    let mut json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    json.push('\n');
    write(&dir.join("metrics.json"), &json)?;
    let mut csv = format!("{CSV_HEADER}\n");
    for r in &reports {
        let _ = writeln!(csv, "{}", r.csv_row(&mode.to_string(), seed));
    }
    write(&dir.join("metrics.csv"), &csv)?;

    let manifest = Manifest {
        mode,
        seed,
        drift,
        observation,
        schedule,
        frames: result.trajectory.len(),
        map_points: result.map.points.len(),
        observations: result.map.observations.len(),
        clusters: ClusterStats {
            count: result.clusters.len(),
            cardinalities: result.clusters.clusters().iter().map(|c| c.cardinality()).collect(),
            discarded_observations: result.clusters.discarded().len(),
        },
        final_scale_error: result.final_scale_error(),
        rounds: &result.rounds,
        propagation_log: &result.propagation_log,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write(&dir.join("manifest.json"), &json)?;
    Ok(reports)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn summarize(spec: &ExperimentSpec, cells: &[CellOutcome]) -> Vec<ModeSummary> {
    let ate_of = |mode: Mode, seed: u64, k: usize| {
        cells
            .iter()
            .find(|c| c.mode == mode && c.seed == seed)
            .and_then(|c| c.result.as_ref().ok())
            .map(|r| r[k].ate_rmse)
    };
    let mut out = Vec::new();
    for &mode in &spec.modes {
        for (k, &align_mode) in spec.align_modes.iter().enumerate() {
            let mine: Vec<&CellOutcome> = cells.iter().filter(|c| c.mode == mode).collect();
            let ok: Vec<&MetricsReport> = mine
                .iter()
                .filter_map(|c| c.result.as_ref().ok().map(|r| &r[k]))
                .collect();
            let ate: Vec<f64> = ok.iter().map(|r| r.ate_rmse).collect();
            let rpe: Vec<f64> = ok.iter().map(|r| r.rpe_rmse).collect();
            let win_rate_vs_baseline = if mode == Mode::Baseline || !spec.modes.contains(&Mode::Baseline) {
                None
            } else {
                let paired: Vec<bool> = spec
                    .seeds
                    .iter()
                    .filter_map(|&s| Some(ate_of(mode, s, k)? < ate_of(Mode::Baseline, s, k)?))
                    .collect();
                (!paired.is_empty())
                    .then(|| paired.iter().filter(|&&w| w).count() as f64 / paired.len() as f64)
            };
            out.push(ModeSummary {
                mode,
                align_mode,
                cells: mine.len(),
                failed: mine.len() - ok.len(),
                ate_mean: mean(&ate),
                ate_median: median(&ate),
                rpe_mean: mean(&rpe),
                rpe_median: median(&rpe),
                win_rate_vs_baseline,
            });
        }
    }
    out
}

fn aggregate_csv(spec: &ExperimentSpec, cells: &[CellOutcome]) -> String {
    let mut csv = format!("{CSV_HEADER}\n");
    for c in cells {
        match &c.result {
            Ok(reports) => {
                for r in reports {
                    let _ = writeln!(csv, "{}", r.csv_row(&c.mode.to_string(), c.seed));
                }
            }
            Err(_) => {
                for a in &spec.align_modes {
                    let _ = writeln!(csv, "{},{},NaN,NaN,{a},{}", c.mode, c.seed, spec.rpe_delta);
                }
            }
        }
    }
    csv
}

fn summary_csv(summary: &[ModeSummary]) -> String {
    let mut csv = format!("{SUMMARY_HEADER}\n");
    for s in summary {
        let win = s
            .win_rate_vs_baseline
            .map_or(String::new(), |w| format!("{w:.6}"));
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.9},{:.9},{:.9},{:.9},{win}",
            s.mode, s.align_mode, s.cells, s.failed, s.ate_mean, s.ate_median, s.rpe_mean, s.rpe_median
        );
    }
    csv
}

fn failures_text(cells: &[CellOutcome]) -> String {
    let mut out = String::new();
    for c in cells {
        if let Err(e) = &c.result {
            let _ = writeln!(out, "{} seed {}: {e}", c.mode, c.seed);
        }
    }
    out
}

/// Runs every `(mode, seed)` cell of `spec` and writes the output tree:
///
/// ```text
/// <output_dir>/experiment.toml   resolved spec
/// <output_dir>/world.json
/// <output_dir>/cells/<Mode>_seed<NNNN>/{trajectory_*.tum, manifest.json, metrics.json, metrics.csv}
/// <output_dir>/aggregate.csv     one row per cell and alignment mode
/// <output_dir>/summary.csv       per-mode statistics and win rate
/// <output_dir>/failures.txt      only when a cell failed
/// ```
///
/// A failing cell is recorded and does not stop the others.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<RunOutput, CliError> {
    spec.validate()?;
    let world = match &spec.world_file {
        Some(path) => World::read_file(path)?,
        None => generate_corridor(&spec.world)?,
    };
    let root = &spec.output_dir;
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    write(&root.join("experiment.toml"), &spec.to_toml_string())?;
    write(&root.join("world.json"), &world.to_json_string())?;

    let grid: Vec<(Mode, u64)> = spec
        .modes
        .iter()
        .flat_map(|&m| spec.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let cells: Vec<CellOutcome> = grid
        .par_iter()
        .map(|&(mode, seed)| {
            let result = run_cell(spec, &world, mode, seed).map_err(|e| e.to_string());
            match &result {
                Ok(r) => log::info!("{mode} seed {seed}: ATE {:.6}", r[0].ate_rmse),
                Err(e) => log::error!("{mode} seed {seed} failed: {e}"),
            }
            CellOutcome { mode, seed, result }
        })
        .collect();

    let summary = summarize(spec, &cells);
    write(&root.join("aggregate.csv"), &aggregate_csv(spec, &cells))?;
    write(&root.join("summary.csv"), &summary_csv(&summary))?;
    let failures = failures_text(&cells);
    let failures_path = root.join("failures.txt");
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(|e| CliError::io(&failures_path, e))?;
        }
    } else {
        write(&failures_path, &failures)?;
    }
    Ok(RunOutput {
        output_dir: root.clone(),
        cells,
        summary,
    })
}
