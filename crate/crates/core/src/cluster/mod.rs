//! Clustering and assignment: k-means, cluster-count estimation, Hungarian
//! alignment and Sinkhorn–Knopp calibration.

mod hungarian;
mod kmeans;
mod sinkhorn;

pub use hungarian::{
    align_centroids, align_contingency, contingency, hungarian_align, solve_assignment, AssignmentMap,
};
pub use kmeans::{estimate_num_classes, kmeans, kmeans_with, ClusteringResult, KEstimate, KMeansConfig};
pub use sinkhorn::{sinkhorn_calibrate, sinkhorn_trace, PassKind, SinkhornPass};
