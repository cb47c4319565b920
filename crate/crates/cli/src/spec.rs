use std::path::{Path, PathBuf};

use segclust_core::metrics::{AlignMode, DEFAULT_RPE_DELTA};
use segclust_core::{DriftConfig, Mode, ObservationConfig, ScheduleConfig, WorldSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One experiment: a world, the front-end and schedule configs, and the grid
/// of modes and seeds to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Generated when `world_file` is absent.
    pub world: WorldSpec,
    pub world_file: Option<PathBuf>,
    /// `seed` is replaced per cell.
    pub drift: DriftConfig,
    /// `seed` is replaced per cell.
    pub observation: ObservationConfig,
    /// `mode` is replaced per cell.
    pub schedule: ScheduleConfig,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub align_modes: Vec<AlignMode>,
    pub rpe_delta: usize,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            world: WorldSpec::default(),
            world_file: None,
            drift: DriftConfig::default(),
            observation: ObservationConfig::default(),
            schedule: ScheduleConfig::default(),
            modes: Mode::ALL.to_vec(),
            seeds: (0..20).collect(),
            align_modes: vec![AlignMode::Similarity, AlignMode::Rigid],
            rpe_delta: DEFAULT_RPE_DELTA,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Offset between the drift and observation streams of one cell seed.
const OBSERVATION_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

impl ExperimentSpec {
    /// Parses a TOML spec. Relative paths inside it resolve against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("experiment spec: {e}")))?;
        if let Some(f) = &spec.world_file {
            if f.is_relative() {
                spec.world_file = Some(base.join(f));
            }
        }
        if spec.output_dir.is_relative() {
            spec.output_dir = base.join(&spec.output_dir);
        }
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Resolved spec as TOML, without the output directory.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.seeds.is_empty() {
            return usage("seed list must not be empty".into());
        }
        if self.modes.is_empty() {
            return usage("mode list must not be empty".into());
        }
        if self.align_modes.is_empty() {
            return usage("align_modes must not be empty".into());
        }
        if self.rpe_delta == 0 {
            return usage("rpe_delta must be at least 1".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return usage("seed list contains duplicates".into());
        }
        if self.world_file.is_none() {
            self.world.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        self.drift.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.observation
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.schedule
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    /// Configs for one `(mode, seed)` cell.
    pub fn cell_configs(&self, mode: Mode, seed: u64) -> (DriftConfig, ObservationConfig, ScheduleConfig) {
        let drift = DriftConfig {
            seed,
            ..self.drift
        };
        let observation = ObservationConfig {
            seed: seed.wrapping_add(OBSERVATION_STREAM),
            ..self.observation
        };
        let schedule = ScheduleConfig {
            mode,
            ..self.schedule
        };
        (drift, observation, schedule)
    }
}

/// Parses `3`, `0-19` or `1,4,9` (ranges are inclusive and may be mixed).
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| format!("bad seed `{s}`: {e}"))
        };
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if b < a {
                    return Err(format!("empty seed range `{part}`"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(num(part)?),
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}
