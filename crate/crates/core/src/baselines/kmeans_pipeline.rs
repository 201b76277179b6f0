use super::{close_stage, open_stage, train_epochs, trivial_stage, BaselineConfig, BaselineLog};
use crate::cluster::{kmeans_with, KMeansConfig};
use crate::data::OodStage;
use crate::plrd::{JointModel, ReplayMemory};
use crate::rng::{derive_seed, tag};
use crate::Result;

/// Clusters the stage's features once, then trains on the cluster ids
/// (offset past the known classes) together with replayed samples.
pub fn run_kmeans_stage(
    model: &mut JointModel,
    memory: &mut ReplayMemory,
    stage: &OodStage,
    num_new: usize,
    config: &BaselineConfig,
    seed: u64,
) -> Result<BaselineLog> {
    config.validate()?;
    let mut log = BaselineLog::default();
    if trivial_stage(model, memory, stage, num_new, &mut log)? {
        return Ok(log);
    }
    open_stage(model, num_new, seed)?;
    let known_old = model.num_old();
    let features = model.encoder.features(&stage.train)?;
    let clusters = kmeans_with(
        &features,
        &KMeansConfig {
            k: num_new,
            max_iters: config.kmeans_max_iters,
            n_init: config.kmeans_restarts,
            seed: derive_seed(seed, &[tag::ESTIMATE]),
        },
    )?;
    if clusters.cluster_sizes().contains(&0) {
        log.empty_cluster_rounds += 1;
        log::warn!("k-means left an empty cluster");
    }
    let labels: alloc::vec::Vec<usize> = clusters.assignments.iter().map(|&a| known_old + a).collect();
    log.cluster_labels = clusters.assignments;
    let mut sgd = config.schedule.sgd(stage.train.rows());
    train_epochs(
        model,
        memory,
        stage,
        &labels,
        0..config.schedule.epochs,
        config,
        &mut sgd,
        seed,
        &mut log,
    )?;
    log.mean_loss /= log.batches.max(1) as f64;
    close_stage(model, memory, stage, num_new, config, seed)?;
    Ok(log)
}
