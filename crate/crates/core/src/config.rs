//! Run configuration: one JSON document that fully determines a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{BenchmarkSettings, GridSpec};
use crate::device::OperatingCondition;
use crate::error::{Error, Result};
use crate::generator::Architecture;
use crate::rcwa::Simulator;
use crate::trainer::TrainingConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub settings: BenchmarkSettings,
    /// Replaces `grid` by the 15 x 9 grid over 600-1300 nm and 40-80 deg.
    #[serde(default)]
    pub full_grid: bool,
}

impl BenchmarkConfig {
    pub fn effective_grid(&self) -> GridSpec {
        if self.full_grid {
            GridSpec::full()
        } else {
            self.grid.clone()
        }
    }
}

/// Generator sampling taken during training for design-space plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Take a snapshot every this many iterations (0 disables); iteration 1
    /// and the final iteration are always included when enabled.
    pub every: usize,
    pub count: usize,
    pub condition: OperatingCondition,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            every: 0,
            count: 100,
            condition: OperatingCondition::new(900.0, 60.0),
        }
    }
}

impl SnapshotConfig {
    pub fn due(&self, iteration: usize, last: usize) -> bool {
        self.every > 0 && (iteration == 1 || iteration == last || iteration.is_multiple_of(self.every))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Master seed; copied into every seeded component by `resolve`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub simulator: Simulator,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub snapshots: SnapshotConfig,
    /// Write a checkpoint every this many iterations (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: default_output_dir(),
            simulator: Simulator::default(),
            architecture: Architecture::default(),
            training: TrainingConfig::default(),
            benchmark: BenchmarkConfig::default(),
            snapshots: SnapshotConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Copies the master seed into the training and benchmark blocks.
    pub fn resolve(mut self) -> Self {
        self.training.seed = self.seed;
        self.benchmark.settings.seed = self.seed;
        self.benchmark.settings.topology.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.simulator.validate()?;
        self.architecture.validate()?;
        self.training.validate()?;
        self.benchmark.effective_grid().validate()?;
        self.benchmark.settings.topology.validate()?;
        if self.snapshots.every > 0 && self.snapshots.count == 0 {
            return Err(Error::Config("snapshots.count must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON serialization. The output directory is
    /// left out so identical runs written to different places agree.
    pub fn hash(&self) -> String {
        let keyed = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let compact = serde_json::to_string(&keyed).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }
}
