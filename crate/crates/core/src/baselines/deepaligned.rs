use alloc::vec::Vec;

use super::{close_stage, open_stage, train_epochs, trivial_stage, BaselineConfig, BaselineLog};
use crate::cluster::{align_centroids, kmeans_with, KMeansConfig};
use crate::data::OodStage;
use crate::numeric::matrix::DenseMatrix;
use crate::plrd::{JointModel, ReplayMemory};
use crate::rng::{derive_seed, tag};
use crate::Result;

/// Alternates re-clustering and training for `align_rounds` rounds. Each
/// round's centroids are matched to the previous round's so that pseudo-label
/// ids stay consistent. The epoch budget is spread evenly over the rounds.
pub fn run_deepaligned_stage(
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
    let rounds = config.align_rounds;
    let epochs = config.schedule.epochs;
    let mut sgd = config.schedule.sgd(stage.train.rows());
    let mut previous: Option<DenseMatrix> = None;
    for round in 0..rounds {
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
            log::warn!("round {round}: k-means left an empty cluster");
        }
        let (assignments, centroids) = match &previous {
            None => (clusters.assignments, clusters.centroids),
            Some(prev) => {
                let map = align_centroids(prev, &clusters.centroids)?;
                let mut reordered = clusters.centroids.clone();
                let relabel: Vec<usize> = (0..num_new)
                    .map(|c| map.get(c).expect("square assignment maps every centroid"))
                    .collect();
                for (c, &to) in relabel.iter().enumerate() {
                    reordered.row_mut(to).copy_from_slice(clusters.centroids.row(c));
                }
                log.alignments.push(map.mapping);
                (clusters.assignments.iter().map(|&a| relabel[a]).collect(), reordered)
            }
        };
        let labels: Vec<usize> = assignments.iter().map(|&a| known_old + a).collect();
        log.cluster_labels = assignments;
        previous = Some(centroids);
        let span = (epochs * round / rounds)..(epochs * (round + 1) / rounds);
        train_epochs(model, memory, stage, &labels, span, config, &mut sgd, seed, &mut log)?;
    }
    log.mean_loss /= log.batches.max(1) as f64;
    close_stage(model, memory, stage, num_new, config, seed)?;
    Ok(log)
}
