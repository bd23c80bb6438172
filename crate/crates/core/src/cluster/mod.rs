//! Pseudo-label discovery by k-means and per-cluster statistics.

pub mod io;
pub mod kmeans;
pub mod metrics;

pub use io::{read_cluster_model, write_cluster_model};
pub use kmeans::{
    assign_clusters, brute_force_kmeans, compute_cluster_stats, kmeans_fit, kmeans_fit_traced, ClusterModel,
    ClusteringOptions, Init, RunTrace, SIGMA_FLOOR,
};
pub use metrics::{clustering_metrics, ClusteringMetrics};
