//! Rollout error metrics by stability category and representation
//! diagnostics of the transformer stack.

mod diagnostics;
mod metrics;

pub use diagnostics::{
    alignment_terms, check_row_stochastic, co_direction_ratio, cosine, feature_stability, spectral_norm,
    AlignmentTerms, FeatureStability, CO_DIRECTION_THRESHOLD, POWER_ITERATIONS, POWER_TOL,
};
pub use metrics::{
    compute_metrics, fingerprint, trajectory_errors, CategoryMetrics, ChannelMetrics, MetricsReport, StabilityCategory,
};

#[cfg(test)]
mod tests;
