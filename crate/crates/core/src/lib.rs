//! Evaluation of person re-identification match scores against a temporally
//! evolving gallery.
//!
//! The gallery is replayed as a time-ordered stream of candidate arrivals.
//! For each probe, the engine tracks the instantaneous rank of its best
//! ground-truth match over time; the metrics layer aggregates those curves
//! into Rank Persistence Curves and the classical CMC/mAP batch baselines,
//! with video-flow-density diagnostics on the side. A seeded synthetic
//! generator and a brute-force oracle back the whole thing with
//! property-testable ground truth.

pub mod engine;
pub mod metrics;
pub mod model;
pub mod scoring;
pub mod synth;

pub use engine::{
    batch_final_ranks, build_timeline, instantaneous_rank, stream_rank_curve, stream_rank_curves,
    Breakpoint, EngineError, EntryPolicy, GalleryEvent, GalleryTimeline, RankCurve, TiePolicy,
};
pub use metrics::{
    compute_cmc, compute_map, compute_rpc, compute_vfd, persistence_duration, CmcCurve,
    IntervalPolicy, MapResult, MetricsError, RpcCurve, RpcTable, VfdSeries, VfdWindow,
};
pub use model::{
    derive_probes, validate_scenario, CameraFilter, Identity, ProbeSpec, RankValue,
    ScenarioManifest, ScoreSourceKind, Tracklet, ValidationReport, Violation,
};
pub use scoring::{average_descriptor, euclidean_distance, Descriptor, ScoreError, ScoreProvider};
pub use synth::{
    generate_scenario, oracle_rank_curve, ArrivalProcess, RateSegment, SynthConfig, SynthError,
    SyntheticScenario,
};
