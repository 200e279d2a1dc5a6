//! File formats, detection ingestion, and CSV emission for the
//! `rankpersist` command-line tool.

pub mod formats;
pub mod ingest;
pub mod output;

pub use formats::{load_scenario, read_manifest, FormatError, SidecarRef};
pub use ingest::{link_detections, DetectionRecord, IngestError, LinkOutcome, RawTracklet};
