//! Scenario file schema. Files are plain JSON objects; every field the core
//! simulator needs appears here, plus human-oriented `notes` strings and an
//! optional calibration section with the anchor values the configuration was
//! fitted to. Unknown fields are rejected so typos surface as errors with a
//! field path instead of silently falling back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fedhpc_core::algorithms::{AlgorithmConfig, AlgorithmKind};
use fedhpc_core::facility::{FacilityProfile, QueueModel};
use fedhpc_core::orchestrator::{ScenarioConfig, TaskSpec};
use fedhpc_core::trainer::TrainerConfig;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub notes: Vec<String>,
    pub seed: u64,
    pub algorithm: AlgorithmSection,
    pub facilities: Vec<FacilitySection>,
    pub task: TaskSection,
    pub partition_weights: Vec<f64>,
    #[serde(default)]
    pub total_rounds_budget: Option<u32>,
    #[serde(default)]
    pub wallclock_budget_s: Option<f64>,
    pub base_steps: u32,
    #[serde(default)]
    pub steps_override: Option<Vec<u32>>,
    #[serde(default = "default_true")]
    pub eval_every_aggregation: bool,
    pub trainer: TrainerSection,
    #[serde(default)]
    pub dropout_prob: f64,
    #[serde(default)]
    pub persistent_allocation: bool,
    /// Parameters of the model whose bytes move over the network; sets
    /// transfer sizes independently of the in-process proxy model.
    pub transfer_param_count: u64,
    /// Rough duration of one full round, seeding the group scheduler's
    /// default arrival window.
    pub expected_round_s: f64,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
}

fn default_true() -> bool {
    true
}

/// Algorithm selection plus optional overrides; omitted knobs take the
/// algorithm defaults derived from `base_steps` and `expected_round_s`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub kind: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub staleness_exponent: Option<f64>,
    #[serde(default)]
    pub buffer_size: Option<usize>,
    #[serde(default)]
    pub q_min: Option<u32>,
    #[serde(default)]
    pub q_max: Option<u32>,
    #[serde(default)]
    pub group_window_s: Option<f64>,
    #[serde(default)]
    pub server_lr: Option<f64>,
    #[serde(default)]
    pub speed_smoothing: Option<f64>,
    #[serde(default)]
    pub uniform_group_weights: Option<bool>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FacilitySection {
    pub name: String,
    #[serde(default)]
    pub notes: Option<String>,
    pub nodes: u32,
    pub gpus_per_node: u32,
    pub micro_batch: u32,
    /// (nodes, samples per second) calibration pairs.
    pub throughput_points: Vec<(u32, f64)>,
    pub init_overhead_s: f64,
    pub queue: QueueSection,
    pub rtt_ms: f64,
    pub bandwidth_asymptote_mb_s: f64,
    pub bandwidth_halfsize_mb: f64,
    #[serde(default)]
    pub reservation: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSection {
    pub median_s: f64,
    pub sigma: f64,
    #[serde(default)]
    pub node_scaling: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub n_features: usize,
    pub n_classes: usize,
    pub noise_sigma: f64,
    pub train_samples_total: usize,
    pub test_samples_total: usize,
    pub partition_skew: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub learning_rate: f64,
    pub micro_batch: usize,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub l2: f64,
}

/// Anchor values the configuration reproduces; `calibrate-check` re-derives
/// each from the configured models and reports pass/fail.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// Profiles used only for calibration checks, not in the scenario.
    #[serde(default)]
    pub extra_profiles: Vec<FacilitySection>,
    #[serde(default)]
    pub throughput_anchors: Vec<ThroughputAnchor>,
    #[serde(default)]
    pub model_size_anchors: Vec<ModelSizeAnchor>,
    #[serde(default)]
    pub rtt_anchors: Vec<RttAnchor>,
    #[serde(default)]
    pub queue_anchors: Vec<QueueAnchor>,
    #[serde(default)]
    pub effective_batch_anchors: Vec<EffectiveBatchAnchor>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputAnchor {
    pub facility: String,
    pub nodes: u32,
    pub samples_per_s: f64,
    pub tolerance_pct: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSizeAnchor {
    pub param_count: u64,
    pub size_mb: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RttAnchor {
    pub facility: String,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QueueAnchor {
    pub facility: String,
    pub nodes: u32,
    pub median_s: f64,
    pub tolerance_pct: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveBatchAnchor {
    pub facility: String,
    pub effective_batch: u64,
}

impl ScenarioFile {
    /// Parses a scenario from text; parse errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("scenario parse failed: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn algorithm_kind(&self) -> Result<AlgorithmKind, CliError> {
        parse_algorithm_name(&self.algorithm.kind)
    }

    /// Lowers the file to a validated core scenario, with optional algorithm
    /// and seed overrides from the command line.
    pub fn lower(
        &self,
        algorithm_override: Option<AlgorithmKind>,
        seed_override: Option<u64>,
    ) -> Result<ScenarioConfig, CliError> {
        let kind = match algorithm_override {
            Some(k) => k,
            None => self.algorithm_kind()?,
        };
        let mut algorithm =
            AlgorithmConfig::with_defaults(kind, self.base_steps, self.expected_round_s);
        let s = &self.algorithm;
        if let Some(v) = s.alpha {
            algorithm.alpha = v;
        }
        if let Some(v) = s.staleness_exponent {
            algorithm.staleness_exponent = v;
        }
        if let Some(v) = s.buffer_size {
            algorithm.buffer_size = v;
        }
        if let Some(v) = s.q_min {
            algorithm.q_min = v;
        }
        if let Some(v) = s.q_max {
            algorithm.q_max = v;
        }
        if let Some(v) = s.group_window_s {
            algorithm.group_window_s = v;
        }
        if let Some(v) = s.server_lr {
            algorithm.server_lr = v;
        }
        if let Some(v) = s.speed_smoothing {
            algorithm.speed_smoothing = v;
        }
        if let Some(v) = s.uniform_group_weights {
            algorithm.uniform_group_weights = v;
        }

        let facilities: Vec<FacilityProfile> =
            self.facilities.iter().map(FacilitySection::lower).collect();
        for f in &facilities {
            if f.name.contains(',') || f.name.contains('\n') {
                return Err(CliError::Config(format!(
                    "facility name {:?} cannot contain commas or newlines",
                    f.name
                )));
            }
        }

        let config = ScenarioConfig {
            algorithm,
            facilities,
            task: TaskSpec {
                n_features: self.task.n_features,
                n_classes: self.task.n_classes,
                noise_sigma: self.task.noise_sigma,
                train_samples_total: self.task.train_samples_total,
                test_samples_total: self.task.test_samples_total,
                partition_skew: self.task.partition_skew,
            },
            partition_weights: self.partition_weights.clone(),
            total_rounds_budget: self.total_rounds_budget,
            wallclock_budget_s: self.wallclock_budget_s,
            base_steps: self.base_steps,
            steps_override: self.steps_override.clone(),
            eval_every_aggregation: self.eval_every_aggregation,
            trainer: TrainerConfig {
                learning_rate: self.trainer.learning_rate,
                micro_batch: self.trainer.micro_batch,
                momentum: self.trainer.momentum,
                l2: self.trainer.l2,
            },
            dropout_prob: self.dropout_prob,
            persistent_allocation: self.persistent_allocation,
            transfer_param_count: self.transfer_param_count,
            seed: seed_override.unwrap_or(self.seed),
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn facility_names(&self) -> Vec<String> {
        self.facilities.iter().map(|f| f.name.clone()).collect()
    }
}

impl FacilitySection {
    pub fn lower(&self) -> FacilityProfile {
        FacilityProfile {
            name: self.name.clone(),
            nodes: self.nodes,
            gpus_per_node: self.gpus_per_node,
            micro_batch: self.micro_batch,
            throughput_points: self.throughput_points.clone(),
            init_overhead_s: self.init_overhead_s,
            queue: QueueModel {
                median_s: self.queue.median_s,
                sigma: self.queue.sigma,
                node_scaling: self.queue.node_scaling.clone(),
            },
            rtt_ms: self.rtt_ms,
            bandwidth_asymptote_mb_s: self.bandwidth_asymptote_mb_s,
            bandwidth_halfsize_mb: self.bandwidth_halfsize_mb,
            reservation: self.reservation,
        }
    }
}

/// Parses an algorithm name, listing the valid names on failure.
pub fn parse_algorithm_name(name: &str) -> Result<AlgorithmKind, CliError> {
    AlgorithmKind::from_name(name).ok_or_else(|| {
        let valid: Vec<&str> = AlgorithmKind::ALL.iter().map(|k| k.name()).collect();
        CliError::Config(format!(
            "unknown algorithm {name:?}; valid names: {}",
            valid.join(", ")
        ))
    })
}
