//! Longitudinal evaluation: protocols, ROC and CMC metrics, weight
//! calibration and reports.

pub mod manifest;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod run;

pub use manifest::{format_manifest, parse_manifest, read_manifest, write_manifest, Manifest, ManifestEntry};
pub use metrics::{
    calibrate_pairs, calibrate_weights, cmc, eer, roc_curve, tar_at_far, PairScores, RocPoint, SearchResult,
};
pub use protocol::{
    build_protocol, default_age_buckets, default_lapse_buckets, expand_pairs, PairLabel, ProtocolPair, RecordRef,
    SamplePair, WeekBucket,
};
pub use report::{Report, ReportRow};
pub use run::{build_report, evaluate, load_samples, score_protocol, search_results, EvalParams, ScoreTable};
