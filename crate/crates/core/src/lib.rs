//! Detection and characterisation of emerging entities: entities that are
//! discussed in news and social streams before they get an encyclopedia
//! page.
//!
//! The pipeline runs ingest, per-entity time series, burst detection,
//! burst similarity, Ward clustering and group analysis.

pub mod analysis;
pub mod bursts;
pub mod clustering;
pub mod error;
pub mod ingest;
pub mod similarity;
pub mod synth;
pub mod timeseries;

pub use bursts::{burst_stats, detect_bursts, moving_average, Burst, BurstParams, BurstSet, BurstStats, ThresholdMode};
pub use clustering::{cut, hac_ward, purity, truncate, Dendrogram, FlatClustering, Merge, TruncatedNode};
pub use error::{Error, Result};
pub use ingest::{
    build_dataset, is_emerging_mention, parse_mentions, parse_metadata, Dataset, DatasetBuilder, Day, DocMention,
    EmergingEntity, EntityMeta, FilterReport, MentionFormat, MentionRecord, MetaTable, ParseMode, Span, Stage, Stream,
    StreamMask,
};
pub use similarity::{
    bsim, bsim_with, build_distance_matrix, build_distance_matrix_with, to_relative_profile, DistanceMatrix,
    RelInterval, RelativeBurstProfile, SimilarityKind,
};
pub use timeseries::{build_all, build_series, interpolate, standardize, EmergenceSeries, VolumeMode};
