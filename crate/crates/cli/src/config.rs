//! JSON task configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use latprot_core::baselines::GreedyConfig;
use latprot_core::buffer::BufferConfig;
use latprot_core::env::EnvConfig;
use latprot_core::landscape::{MissPolicy, PredictorConfig};
use latprot_core::ppo::{AblationFlags, PpoConfig};
use latprot_core::ved::VedTrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Seeded NK landscape; the dataset is a pool of variants of a random
    /// wild type.
    Nk {
        length: usize,
        k: usize,
        vocab_size: usize,
        landscape_seed: u64,
        #[serde(default = "default_pool_size")]
        pool_size: usize,
        #[serde(default = "default_pool_mutations")]
        pool_mutations: f64,
    },
    /// Lookup in a `sequence,fitness` CSV.
    Csv {
        path: PathBuf,
        #[serde(default = "default_alphabet")]
        alphabet: String,
        #[serde(default)]
        normalize: bool,
        #[serde(default)]
        miss_policy: MissPolicy,
    },
    /// Surrogate network trained on a `sequence,fitness` CSV; the training
    /// seed is part of the task, not derived from the run seed.
    Predictor {
        path: PathBuf,
        #[serde(default = "default_alphabet")]
        alphabet: String,
        #[serde(default)]
        normalize: bool,
        #[serde(default)]
        training: PredictorConfig,
    },
}

fn default_pool_size() -> usize {
    10_000
}

fn default_pool_mutations() -> f64 {
    4.0
}

fn default_alphabet() -> String {
    latprot_core::sequence::PROTEIN_ALPHABET.to_string()
}

/// Fitness-rank band of the full dataset used as the task data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "band", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskBand {
    /// Ranks in [20%, 40%).
    Medium,
    /// Ranks in [10%, 30%).
    Hard,
    Custom { lo: f64, hi: f64 },
}

impl TaskBand {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            TaskBand::Medium => (20.0, 40.0),
            TaskBand::Hard => (10.0, 30.0),
            TaskBand::Custom { lo, hi } => (*lo, *hi),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "latprotrl")]
    LatProtRl,
    #[serde(rename = "cmaes-onehot")]
    CmaesOneHot,
    #[serde(rename = "cmaes-ved")]
    CmaesVed,
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "pex-style")]
    PexStyle,
    #[serde(rename = "random")]
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::LatProtRl,
        Method::CmaesOneHot,
        Method::CmaesVed,
        Method::Greedy,
        Method::PexStyle,
        Method::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LatProtRl => "latprotrl",
            Method::CmaesOneHot => "cmaes-onehot",
            Method::CmaesVed => "cmaes-ved",
            Method::Greedy => "greedy",
            Method::PexStyle => "pex-style",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CliError::validation(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub random_radius: usize,
    pub greedy: GreedyConfig,
    pub cmaes_sigma_onehot: f64,
    pub cmaes_sigma_latent: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            random_radius: 4,
            greedy: GreedyConfig::default(),
            cmaes_sigma_onehot: 0.5,
            cmaes_sigma_latent: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleLoopSettings {
    pub outer_rounds: usize,
    pub predictor_rounds: usize,
    pub final_predictor_rounds: usize,
    pub predictor: PredictorConfig,
}

impl Default for DoubleLoopSettings {
    fn default() -> Self {
        Self {
            outer_rounds: 5,
            predictor_rounds: 2,
            final_predictor_rounds: 10,
            predictor: PredictorConfig::default(),
        }
    }
}

/// Predictor-guided single-round optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorModeSettings {
    pub enabled: bool,
    pub total_timesteps: usize,
    pub rollout_steps: usize,
    pub predictor: PredictorConfig,
}

impl Default for PredictorModeSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            total_timesteps: 20_000,
            rollout_steps: 2_048,
            predictor: PredictorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub schema_version: u32,
    pub oracle: OracleSpec,
    pub task: TaskBand,
    /// Size `S_B` of the start set and of the result set.
    #[serde(default = "default_start_size")]
    pub start_size: usize,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub ved: VedTrainConfig,
    /// Pretrained VED to use instead of training one.
    #[serde(default)]
    pub ved_checkpoint: Option<PathBuf>,
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub buffer: Option<BufferConfig>,
    #[serde(default)]
    pub ablation: AblationFlags,
    #[serde(default)]
    pub baselines: BaselineSettings,
    #[serde(default)]
    pub double_loop: DoubleLoopSettings,
    #[serde(default)]
    pub predictor_mode: PredictorModeSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write per-round trajectory logs.
    #[serde(default = "default_true")]
    pub log_trajectories: bool,
    /// Write per-round policy/value checkpoints.
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
}

fn default_start_size() -> usize {
    128
}

fn default_workers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// Resolved configuration stored with every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub config: TaskConfig,
    pub oracle_calls: usize,
    pub evaluation_calls: usize,
    pub rounds_completed: usize,
    pub stalled_rounds: Vec<usize>,
    pub starved_rounds: Vec<usize>,
    pub clamp_events: usize,
}

impl TaskConfig {
    /// Parses a task config, or the config embedded in a `run_meta.json`.
    pub fn from_json(text: &str, origin: &str) -> CliResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::validation(format!("{origin}: {e}")))?;
        let body = match value.get("config") {
            Some(inner) if value.get("command").is_some() => inner.clone(),
            _ => value,
        };
        let config: TaskConfig = serde_json::from_value(body).map_err(|e| {
            // Re-parse the text for a located message.
            let located = serde_json::from_str::<TaskConfig>(text).err().map(|e| e.to_string());
            CliError::validation(format!("{origin}: {}", located.unwrap_or_else(|| e.to_string())))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn buffer_config(&self) -> BufferConfig {
        self.buffer.clone().unwrap_or(BufferConfig {
            capacity: self.start_size,
            ..BufferConfig::default()
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match &self.oracle {
            OracleSpec::Nk {
                length,
                k,
                vocab_size,
                pool_size,
                pool_mutations,
                ..
            } => {
                if *length == 0 || *k >= *length || *vocab_size < 2 || *vocab_size > 20 {
                    return Err(CliError::validation("nk oracle needs length > k and 2 <= vocab_size <= 20"));
                }
                if *pool_size == 0 || !(0.0..=*length as f64).contains(pool_mutations) {
                    return Err(CliError::validation("nk pool needs a positive size and 0 <= pool_mutations <= length"));
                }
            }
            OracleSpec::Csv { path, .. } | OracleSpec::Predictor { path, .. } => {
                if !path.is_file() {
                    return Err(CliError::validation(format!("dataset file not found: {}", path.display())));
                }
            }
        }
        if let Some(ckpt) = &self.ved_checkpoint {
            if !ckpt.is_file() {
                return Err(CliError::validation(format!("VED checkpoint not found: {}", ckpt.display())));
            }
        }
        let (lo, hi) = self.task.bounds();
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(CliError::validation(format!("task band [{lo}, {hi}) is not inside [0, 100]")));
        }
        if self.start_size == 0 || self.workers == 0 {
            return Err(CliError::validation("start_size and workers must be positive"));
        }
        invalid("env", self.env.validate())?;
        invalid("ppo", self.ppo.validate())?;
        let buffer = self.buffer_config();
        invalid("buffer", buffer.validate())?;
        if buffer.capacity > self.start_size {
            return Err(CliError::validation("buffer capacity cannot exceed start_size"));
        }
        if self.baselines.cmaes_sigma_onehot <= 0.0 || self.baselines.cmaes_sigma_latent <= 0.0 {
            return Err(CliError::validation("CMA-ES step sizes must be positive"));
        }
        Ok(())
    }
}
