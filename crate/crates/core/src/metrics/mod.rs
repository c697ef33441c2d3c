//! Ranking, classification and threshold metrics, tier tables, reports
//! and the inference benchmark.

mod bench;
mod report;
mod scores;
mod tiers;

pub use bench::{bench_inference, BenchSamples};
pub use report::{DatasetRow, EvalReport, SeverityReport, Timing};
pub use scores::{
    auroc, average_ranks, balanced_accuracy, balanced_accuracy_present, f1_from_counts, f1_optimal_threshold,
    pearson, spearman,
};
pub use tiers::{merge_tier_tables, outlier_fraction_by_tier, render, tier_table, TierRow};
