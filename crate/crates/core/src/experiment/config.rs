//! Resolved run configuration. Every field has a default; defaults follow
//! the published settings where those exist.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::metrics::AlignmentScope;
use crate::numeric::{Activation, EncoderConfig};
use crate::plrd::{InstanceRows, LossWeights, OptimConfig, PlrdConfig, SelectionStrategy, StageSchedule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plrd,
    Kmeans,
    Deepaligned,
    E2e,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Plrd, Method::Kmeans, Method::Deepaligned, Method::E2e];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Plrd => "plrd",
            Method::Kmeans => "kmeans",
            Method::Deepaligned => "deepaligned",
            Method::E2e => "e2e",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// Where each stage's class count comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    GroundTruth,
    /// Estimate from the current model's features.
    EstimateSelf,
    /// Estimate from the encoder frozen after in-domain training.
    EstimateIndFrozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Embedding corpus file; when set, the synthetic parameters are unused.
    pub path: Option<String>,
    pub num_classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub validation_per_class: usize,
    pub test_per_class: usize,
    pub class_separation: f64,
    pub within_class_std: f64,
    /// Defaults to a value derived from the run seed.
    pub corpus_seed: Option<u64>,
    pub ood_ratio: f64,
    pub num_stages: usize,
    /// Defaults to a value derived from the run seed.
    pub split_seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            num_classes: 20,
            dim: 16,
            train_per_class: 40,
            validation_per_class: 10,
            test_per_class: 20,
            class_separation: 4.0,
            within_class_std: 1.0,
            corpus_seed: None,
            ood_ratio: 0.6,
            num_stages: 3,
            split_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub projection_dim: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            feature_dim: 64,
            projection_dim: 128,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
}

impl Default for IndConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1.5e-4,
            warmup_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate; `None` picks the method default
    /// (e2e 0.1, every other method 0.01).
    pub lr: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub dropout: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr: None,
            momentum: 0.9,
            weight_decay: 1.5e-4,
            warmup_ratio: 0.1,
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlrdParams {
    pub tau: f64,
    /// `None`: 0.7 up to a 60% out-of-domain ratio, 0.9 above.
    pub gamma: Option<f64>,
    pub sk_epsilon: f64,
    pub sk_iterations: usize,
    pub weights: LossWeights,
    pub instance_rows: InstanceRows,
}

impl Default for PlrdParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            gamma: None,
            sk_epsilon: 0.05,
            sk_iterations: 3,
            weights: LossWeights::default(),
            instance_rows: InstanceRows::Mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Replay cross-entropy weight; `None`: 3 for the pipelines, 1 for e2e.
    pub lambda: Option<f64>,
    pub align_rounds: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_restarts: usize,
    pub e2e_temperature: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            lambda: None,
            align_rounds: 5,
            kmeans_max_iters: 300,
            kmeans_restarts: 10,
            e2e_temperature: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub per_class: usize,
    pub strategy: SelectionStrategy,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            per_class: 5,
            strategy: SelectionStrategy::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KConfig {
    pub mode: KMode,
    /// Explicit `K'`. When unset, `K' = round(k_prime_factor * |Y_t|)`,
    /// which presumes the true count is known.
    pub k_prime: Option<usize>,
    pub k_prime_factor: f64,
}

impl Default for KConfig {
    fn default() -> Self {
        Self {
            mode: KMode::GroundTruth,
            k_prime: None,
            k_prime_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub alignment: AlignmentScope,
    /// Rows used for the in-run head-merge check.
    pub probe_rows: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alignment: AlignmentScope::Joint,
            probe_rows: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub ind: IndConfig,
    pub training: TrainingConfig,
    pub plrd: PlrdParams,
    pub baseline: BaselineParams,
    pub memory: MemoryConfig,
    pub k: KConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Plrd,
            seed: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            ind: IndConfig::default(),
            training: TrainingConfig::default(),
            plrd: PlrdParams::default(),
            baseline: BaselineParams::default(),
            memory: MemoryConfig::default(),
            k: KConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

pub const PRESETS: [&str; 2] = ["reference", "desk-banking-like"];

fn err(path: &str, msg: impl core::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    /// Named presets: `reference` (the defaults) and `desk-banking-like`
    /// (20 classes, 60%, three stages, n = 5, 30 epochs, hidden width 64).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "reference" => Some(Self::default()),
            "desk-banking-like" => {
                let mut c = Self::default();
                c.model.hidden = vec![64, 64];
                c.training.epochs = 30;
                c.training.batch_size = 32;
                c.ind.epochs = 30;
                c.ind.batch_size = 32;
                c.plrd.sk_iterations = 10;
                c.training.lr = Some(0.01);
                Some(c)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.ood_ratio > 0.0 && d.ood_ratio < 1.0) {
            return Err(err("data.ood_ratio", "must lie in (0, 1)"));
        }
        if d.num_stages == 0 {
            return Err(err("data.num_stages", "must be at least 1"));
        }
        if d.path.is_none() {
            if d.num_classes < 2 {
                return Err(err("data.num_classes", "must be at least 2"));
            }
            if d.dim < 2 {
                return Err(err("data.dim", "must be at least 2"));
            }
            if d.train_per_class == 0 || d.validation_per_class == 0 || d.test_per_class == 0 {
                return Err(err("data.*_per_class", "every split needs samples"));
            }
            if !(d.class_separation > 0.0) || !(d.within_class_std > 0.0) {
                return Err(err("data.class_separation", "separation and std must be positive"));
            }
        }
        if self.model.hidden.contains(&0) || self.model.feature_dim == 0 || self.model.projection_dim == 0 {
            return Err(err("model", "layer widths must be positive"));
        }
        self.ind_schedule().validate().map_err(|e| err("ind", e))?;
        self.stage_schedule().validate().map_err(|e| err("training", e))?;
        if !(0.0..1.0).contains(&self.training.dropout) {
            return Err(err("training.dropout", "must lie in [0, 1)"));
        }
        let p = &self.plrd;
        if !(p.tau > 0.0) {
            return Err(err("plrd.tau", "must be positive"));
        }
        if let Some(g) = p.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(err("plrd.gamma", "must lie in [0, 1]"));
            }
        }
        if !(p.sk_epsilon > 0.0) {
            return Err(err("plrd.sk_epsilon", "must be positive"));
        }
        let b = &self.baseline;
        if b.lambda.is_some_and(|l| !(l >= 0.0)) {
            return Err(err("baseline.lambda", "must be non-negative"));
        }
        if b.align_rounds == 0 {
            return Err(err("baseline.align_rounds", "must be at least 1"));
        }
        if !(b.e2e_temperature > 0.0) {
            return Err(err("baseline.e2e_temperature", "must be positive"));
        }
        if self.k.k_prime == Some(0) || !(self.k.k_prime_factor > 0.0) {
            return Err(err("k", "K' must be positive"));
        }
        Ok(())
    }

    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            hidden: self.model.hidden.clone(),
            feature_dim: self.model.feature_dim,
            projection_dim: self.model.projection_dim,
            activation: self.model.activation,
        }
    }

    pub fn ind_schedule(&self) -> StageSchedule {
        let i = &self.ind;
        StageSchedule {
            epochs: i.epochs,
            batch_size: i.batch_size,
            optim: OptimConfig {
                lr: i.lr,
                momentum: i.momentum,
                weight_decay: i.weight_decay,
                warmup_ratio: i.warmup_ratio,
            },
        }
    }

    pub fn stage_lr(&self) -> f64 {
        self.training.lr.unwrap_or(match self.method {
            Method::E2e => 0.1,
            _ => 0.01,
        })
    }

    pub fn stage_schedule(&self) -> StageSchedule {
        let t = &self.training;
        StageSchedule {
            epochs: t.epochs,
            batch_size: t.batch_size,
            optim: OptimConfig {
                lr: self.stage_lr(),
                momentum: t.momentum,
                weight_decay: t.weight_decay,
                warmup_ratio: t.warmup_ratio,
            },
        }
    }

    pub fn gamma(&self) -> f64 {
        self.plrd
            .gamma
            .unwrap_or(if self.data.ood_ratio > 0.6 + 1e-9 { 0.9 } else { 0.7 })
    }

    pub fn plrd_config(&self) -> PlrdConfig {
        PlrdConfig {
            schedule: self.stage_schedule(),
            tau: self.plrd.tau,
            gamma: self.gamma(),
            sk_epsilon: self.plrd.sk_epsilon,
            sk_iterations: self.plrd.sk_iterations,
            dropout: self.training.dropout,
            weights: self.plrd.weights,
            instance_rows: self.plrd.instance_rows,
            memory_per_class: self.memory.per_class,
            selection: self.memory.strategy,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.baseline.lambda.unwrap_or(match self.method {
            Method::E2e => 1.0,
            _ => 3.0,
        })
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            schedule: self.stage_schedule(),
            lambda: self.lambda(),
            align_rounds: self.baseline.align_rounds,
            kmeans_max_iters: self.baseline.kmeans_max_iters,
            kmeans_restarts: self.baseline.kmeans_restarts,
            temperature: self.baseline.e2e_temperature,
            sk_epsilon: self.plrd.sk_epsilon,
            sk_iterations: self.plrd.sk_iterations,
            dropout: self.training.dropout,
            memory_per_class: self.memory.per_class,
            selection: self.memory.strategy,
        }
    }

    /// Short label for reports: the method name.
    pub fn method_name(&self) -> String {
        self.method.as_str().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            RunConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(RunConfig::preset("nope").is_none());
    }

    #[test]
    fn method_defaults() {
        let mut c = RunConfig::default();
        assert_eq!(c.gamma(), 0.7);
        c.data.ood_ratio = 0.8;
        assert_eq!(c.gamma(), 0.9);
        assert_eq!(c.lambda(), 3.0);
        assert_eq!(c.stage_lr(), 0.01);
        c.method = Method::E2e;
        assert_eq!(c.lambda(), 1.0);
        assert_eq!(c.stage_lr(), 0.1);
    }

    #[test]
    fn invalid_fields_name_their_path() {
        let mut c = RunConfig::default();
        c.data.ood_ratio = 1.5;
        match c.validate() {
            Err(Error::Config(msg)) => assert!(msg.starts_with("data.ood_ratio")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
