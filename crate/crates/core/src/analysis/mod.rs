//! Group-level analysis: signatures, descriptive statistics, significance
//! tests, the cross-stream partition and entity-type reports.

mod describe;
mod signature;
mod significance;
mod streams;
pub mod svg;
mod types;

pub use describe::{
    descriptive_stats, entity_features, features_for, stats_table_csv, EntityFeatures, Feature, GroupStats, Summary,
};
pub use signature::{group_signature, GroupSignature};
pub use significance::{
    compare_groups, dunn_posthoc, holm_adjust, kruskal_wallis, significance_csv, DunnResult, FeatureComparison,
    KruskalWallis, ALPHA,
};
pub use streams::{cross_stream_lag, partition_by_stream, stream_class, CrossStreamLag, StreamClass, StreamPartition};
pub use types::{type_report, TypeReport, TypeRow};
