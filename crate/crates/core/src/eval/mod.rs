//! Metrics, splits, ablation runs, and embedding projection.

pub mod ablation;
pub mod metrics;
pub mod pca;
pub mod report;
pub mod split;
