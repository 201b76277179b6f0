//! Drives one run: in-domain stage, then every unlabeled stage with the
//! configured method, evaluating after each stage.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{KMode, Method, RunConfig};
use crate::baselines::{run_deepaligned_stage, run_e2e_stage, run_kmeans_stage};
use crate::cluster::estimate_num_classes;
use crate::data::{build_cgid_split, generate_mixture_corpus, LabeledCorpus, MixtureConfig, SampleCounts, StagedSplit};
use crate::metrics::{evaluate_stage, AccuracyMatrix, FeatureDump, StageMetrics, StageReport};
use crate::numeric::matrix::DenseMatrix;
use crate::numeric::Encoder;
use crate::plrd::{
    embed, memory_select, train_ind_stage, train_ood_stage, JointModel, PrototypeBank, ReplayMemory,
    SelectionStrategy,
};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

/// Everything needed to continue a run after a completed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Stages completed so far (`t + 1` after stage `t`).
    pub completed: usize,
    pub model: JointModel,
    pub memory: ReplayMemory,
    pub bank: PrototypeBank,
    /// Encoder right after in-domain training.
    pub ind_encoder: Encoder,
    pub accuracy: AccuracyMatrix,
    pub reports: Vec<StageReport>,
}

/// What an observer sees after each stage.
pub struct StageContext<'a> {
    pub stage: usize,
    pub config: &'a RunConfig,
    pub split: &'a StagedSplit,
    pub state: &'a RunState,
    pub dump: &'a FeatureDump,
}

pub trait RunObserver {
    fn on_stage_end(&mut self, _ctx: &StageContext<'_>) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl RunObserver for NoObserver {}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<StageReport>,
    pub dumps: Vec<FeatureDump>,
    pub state: RunState,
    pub split_fingerprint: u64,
    /// How often the sealed labels were opened (once per evaluated stage).
    pub sealed_opens: usize,
    pub log: Vec<String>,
}

/// The synthetic corpus described by `config.data`.
pub fn synthetic_corpus(config: &RunConfig) -> Result<LabeledCorpus> {
    let d = &config.data;
    generate_mixture_corpus(&MixtureConfig {
        num_classes: d.num_classes,
        dim: d.dim,
        samples_per_class: SampleCounts {
            train: d.train_per_class,
            validation: d.validation_per_class,
            test: d.test_per_class,
        },
        per_class: None,
        class_separation: d.class_separation,
        within_class_std: d.within_class_std,
        seed: d.corpus_seed.unwrap_or(derive_seed(config.seed, &[tag::CORPUS])),
    })
}

pub fn prepare_split(config: &RunConfig, corpus: &LabeledCorpus) -> Result<StagedSplit> {
    let d = &config.data;
    build_cgid_split(
        corpus,
        d.ood_ratio,
        d.num_stages,
        d.split_seed.unwrap_or(derive_seed(config.seed, &[tag::SPLIT])),
    )
}

pub fn run_experiment(config: &RunConfig, corpus: &LabeledCorpus, observer: &mut dyn RunObserver) -> Result<RunOutput> {
    resume_experiment(config, corpus, None, observer)
}

/// Runs the remaining stages, starting from `state` when given.
pub fn resume_experiment(
    config: &RunConfig,
    corpus: &LabeledCorpus,
    state: Option<RunState>,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput> {
    config.validate()?;
    let split = prepare_split(config, corpus)?;
    let mut log = Vec::new();
    let mut dumps = Vec::new();
    let mut state = match state {
        Some(s) => {
            if s.completed == 0 || s.completed > split.num_stages() + 1 || s.reports.len() != s.completed {
                return Err(Error::contract("checkpoint does not match this run's stages"));
            }
            if s.reports[0].split_fingerprint != split.fingerprint() {
                return Err(Error::contract("checkpoint was taken on a different split"));
            }
            s
        }
        None => {
            let (s, dump) = ind_stage(config, &split, &mut log)?;
            observer.on_stage_end(&StageContext {
                stage: 0,
                config,
                split: &split,
                state: &s,
                dump: &dump,
            })?;
            dumps.push(dump);
            s
        }
    };
    for t in state.completed..=split.num_stages() {
        let dump = ood_stage(config, &split, &mut state, t, &mut log)?;
        observer.on_stage_end(&StageContext {
            stage: t,
            config,
            split: &split,
            state: &state,
            dump: &dump,
        })?;
        dumps.push(dump);
    }
    Ok(RunOutput {
        reports: state.reports.clone(),
        dumps,
        split_fingerprint: split.fingerprint(),
        sealed_opens: split.sealed_open_count(),
        state,
        log,
    })
}

fn ind_stage(config: &RunConfig, split: &StagedSplit, log: &mut Vec<String>) -> Result<(RunState, FeatureDump)> {
    let seed = config.seed;
    let ind = &split.ind;
    let encoder = Encoder::new(&config.encoder_config(split.input_dim()), derive_seed(seed, &[tag::INIT]))?;
    let mut model = JointModel::new(encoder);
    model.expand_classifier(ind.num_classes, derive_seed(seed, &[tag::HEAD, 0]))?;
    let outcome = train_ind_stage(&mut model, ind, &config.ind_schedule(), derive_seed(seed, &[tag::IND]))?;
    model.merge_heads()?;
    log.push(format!(
        "stage 0: validation accuracy {:.4} (epoch {:?})",
        outcome.val_accuracy, outcome.best_epoch
    ));

    let mut memory = ReplayMemory::new(config.memory.per_class, split.input_dim());
    let z;
    let bank;
    let guide = match config.memory.strategy {
        SelectionStrategy::Random => None,
        _ => {
            z = embed(&model, &ind.train.features)?;
            bank = class_means(&z, &ind.train.labels, ind.num_classes);
            Some((&z, &bank))
        }
    };
    let selection = memory_select(
        &ind.train.labels,
        config.memory.per_class,
        config.memory.strategy,
        guide,
        derive_seed(seed, &[tag::MEMORY, 0]),
    )?;
    memory.add_classes(0, ind.num_classes, &ind.train.features, &selection)?;

    let mut state = RunState {
        completed: 0,
        ind_encoder: model.encoder.clone(),
        bank: PrototypeBank::new(config.gamma(), config.model.projection_dim),
        model,
        memory,
        accuracy: AccuracyMatrix::new(split.stage_sizes().to_vec()),
        reports: Vec::new(),
    };
    let violations = usize::from(state.memory.check_invariants(state.model.num_classes()).is_err());
    let dump = record_stage(config, split, &mut state, 0, ind.num_classes, None, violations)?;
    Ok((state, dump))
}

fn class_means(z: &DenseMatrix, labels: &[usize], classes: usize) -> PrototypeBank {
    let mut sums = DenseMatrix::zeros(classes, z.cols());
    for (i, &l) in labels.iter().enumerate() {
        sums.row_mut(l).iter_mut().zip(z.row(i)).for_each(|(s, x)| *s += x);
    }
    let mut bank = PrototypeBank::new(0.0, z.cols());
    sums.row_iter().for_each(|r| bank.push(r));
    bank
}

fn ood_stage(
    config: &RunConfig,
    split: &StagedSplit,
    state: &mut RunState,
    t: usize,
    log: &mut Vec<String>,
) -> Result<FeatureDump> {
    let stage = &split.ood[t - 1];
    let stage_seed = derive_seed(config.seed, &[tag::STAGE, t as u64]);
    let k_true = stage.num_classes;
    let (k_used, k_estimated) = match config.k.mode {
        KMode::GroundTruth => (k_true, None),
        mode => {
            let encoder = match mode {
                KMode::EstimateSelf => &state.model.encoder,
                _ => &state.ind_encoder,
            };
            let features = encoder.features(&stage.train)?;
            let k_prime = config
                .k
                .k_prime
                .unwrap_or_else(|| crate::math::round(config.k.k_prime_factor * k_true as f64).max(1.0) as usize)
                .min(stage.train.rows());
            let est = estimate_num_classes(&features, k_prime, derive_seed(config.seed, &[tag::ESTIMATE, t as u64]))?;
            log.push(format!("stage {t}: estimated K = {} (K' = {k_prime}, true {k_true})", est.k));
            (est.k, Some(est.k))
        }
    };

    let mut violations = probe_head_merge(config, split, &state.model, k_used, stage_seed)?;
    let model = &mut state.model;
    let memory = &mut state.memory;
    match config.method {
        Method::Plrd => {
            let stage_log = train_ood_stage(
                model,
                memory,
                &mut state.bank,
                stage,
                k_used,
                &config.plrd_config(),
                stage_seed,
            )?;
            log.push(format!(
                "stage {t}: {} batches, mean losses {:?}, pseudo-label counts {:?}",
                stage_log.batches, stage_log.mean_losses, stage_log.pseudo_label_counts
            ));
            if k_used > 0 && (state.bank.len() != model.num_classes() || !state.bank.all_unit_norm(1e-9)) {
                violations += 1;
            }
        }
        Method::Kmeans | Method::Deepaligned | Method::E2e => {
            let run = match config.method {
                Method::Kmeans => run_kmeans_stage,
                Method::Deepaligned => run_deepaligned_stage,
                _ => run_e2e_stage,
            };
            let stage_log = run(model, memory, stage, k_used, &config.baseline_config(), stage_seed)?;
            log.push(format!(
                "stage {t}: {} batches, mean loss {:.6}, empty-cluster rounds {}",
                stage_log.batches, stage_log.mean_loss, stage_log.empty_cluster_rounds
            ));
        }
    }
    if !state.model.is_finite() {
        return Err(Error::contract(format!("stage {t} produced non-finite parameters")));
    }
    if state.memory.check_invariants(state.model.num_classes()).is_err() {
        violations += 1;
    }
    if state.model.frozen_encoder().is_some() {
        violations += 1;
    }
    record_stage(config, split, state, t, k_used, k_estimated, violations)
}

/// Expands a copy of the model the way the stage trainer will and checks
/// that the old-block logits of a fixed probe batch are unchanged.
fn probe_head_merge(
    config: &RunConfig,
    split: &StagedSplit,
    model: &JointModel,
    k_used: usize,
    stage_seed: u64,
) -> Result<usize> {
    let rows: Vec<usize> = (0..config.eval.probe_rows.min(split.ind.validation.len())).collect();
    let probe = split.ind.validation.features.select_rows(&rows);
    let before = model.logits_for(&probe)?;
    let mut expanded = model.clone();
    expanded.expand_classifier(k_used, derive_seed(stage_seed, &[tag::HEAD]))?;
    let after = expanded.logits_for(&probe)?;
    let same = after.cols() == model.num_classes() + k_used && after.select_cols(0, model.num_classes()) == before;
    Ok(usize::from(!same))
}

fn record_stage(
    config: &RunConfig,
    split: &StagedSplit,
    state: &mut RunState,
    t: usize,
    k_used: usize,
    k_estimated: Option<usize>,
    invariant_violations: usize,
) -> Result<FeatureDump> {
    let eval = evaluate_stage(&state.model, split, t, config.eval.alignment)?;
    state.accuracy.push_row(eval.score.row.clone())?;
    let metrics = StageMetrics::from_matrix(&state.accuracy, t)?;
    state.reports.push(StageReport {
        method: config.method_name(),
        ood_ratio: config.data.ood_ratio,
        stage: t,
        seed: config.seed,
        metrics,
        accuracy_row: eval.score.row,
        unaligned_row: eval.score.unaligned_row,
        class_sizes: split.stage_sizes()[..=t].to_vec(),
        head_sizes: state.model.head_sizes().to_vec(),
        compactness: eval.compactness,
        k_used,
        k_true: split.stage_sizes()[t],
        k_estimated,
        invariant_violations,
        split_fingerprint: split.fingerprint(),
        wall_clock_ms: None,
    });
    state.completed = t + 1;
    Ok(eval.dump)
}

