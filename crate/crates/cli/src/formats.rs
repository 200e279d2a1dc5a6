//! On-disk formats: the manifest JSON document, the binary feature store,
//! the distance-table CSV, and synthetic-scenario config files.
//!
//! A scenario on disk is one manifest JSON document plus a sidecar data
//! file referenced by a path relative to the manifest:
//!
//! * feature store — magic `RPCF`, little-endian u32 row count, u32
//!   dimension, then `count x dim` IEEE-754 f32 little-endian values; row
//!   `i` belongs to manifest tracklet `i`
//! * distance table — CSV with the exact header
//!   `probe_tracklet_id,gallery_tracklet_id,distance`
//!
//! Parse failures (malformed bytes, with position) and validation failures
//! (well-formed bytes describing an invalid scenario, with entity ids) are
//! distinct error categories.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rankpersist_core::{
    validate_scenario, ArrivalProcess, Descriptor, Identity, RateSegment, ScenarioManifest,
    ScoreProvider, ScoreSourceKind, SynthConfig, Tracklet,
};

pub const FEATURE_STORE_MAGIC: &[u8; 4] = b"RPCF";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("validation error: {detail}")]
    Validation { detail: String },
}

impl FormatError {
    pub fn kind(&self) -> &'static str {
        match self {
            FormatError::Io { .. } => "io",
            FormatError::Parse { .. } => "parse",
            FormatError::Validation { .. } => "validation",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------------------
// Manifest JSON document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestDoc {
    video_end: f64,
    score_source: ScoreSourceDoc,
    identities: Vec<IdentityDoc>,
    tracklets: Vec<TrackletDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ScoreSourceDoc {
    FeatureStore { path: String, feature_dim: usize },
    DistanceTable { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IdentityDoc {
    id: String,
    is_actor: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrackletDoc {
    tracklet_id: String,
    identity_id: String,
    camera_id: u32,
    start_time: f64,
    end_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptor_ref: Option<usize>,
}

/// Which sidecar file a manifest points at, with the path kept both as
/// written (for round-tripping) and resolved against the manifest's
/// directory (for loading).
#[derive(Debug, Clone, PartialEq)]
pub enum SidecarRef {
    Features {
        relative: String,
        resolved: PathBuf,
        feature_dim: usize,
    },
    Table {
        relative: String,
        resolved: PathBuf,
    },
}

/// Read and validate a manifest document, without loading its sidecar.
pub fn read_manifest(path: &Path) -> Result<(ScenarioManifest, SidecarRef), FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(), // serde_json includes line and column
    })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let (score_source, feature_dim, sidecar) = match &doc.score_source {
        ScoreSourceDoc::FeatureStore { path: rel, feature_dim } => (
            ScoreSourceKind::FeatureStore,
            Some(*feature_dim),
            SidecarRef::Features {
                relative: rel.clone(),
                resolved: dir.join(rel),
                feature_dim: *feature_dim,
            },
        ),
        ScoreSourceDoc::DistanceTable { path: rel } => (
            ScoreSourceKind::DistanceTable,
            None,
            SidecarRef::Table {
                relative: rel.clone(),
                resolved: dir.join(rel),
            },
        ),
    };
    let manifest = ScenarioManifest {
        identities: doc
            .identities
            .into_iter()
            .map(|i| Identity { id: i.id, is_actor: i.is_actor })
            .collect(),
        tracklets: doc
            .tracklets
            .into_iter()
            .map(|t| Tracklet {
                tracklet_id: t.tracklet_id,
                identity_id: t.identity_id,
                camera_id: t.camera_id,
                start_time: t.start_time,
                end_time: t.end_time,
                descriptor_ref: t.descriptor_ref,
            })
            .collect(),
        video_end: doc.video_end,
        score_source,
        feature_dim,
    };
    let report = validate_scenario(&manifest);
    if !report.is_valid() {
        return Err(FormatError::Validation { detail: report.to_string() });
    }
    Ok((manifest, sidecar))
}

/// Serialize a manifest as its canonical JSON document.
pub fn manifest_to_json(manifest: &ScenarioManifest, sidecar_path: &str) -> String {
    let score_source = match manifest.score_source {
        ScoreSourceKind::FeatureStore => ScoreSourceDoc::FeatureStore {
            path: sidecar_path.to_string(),
            feature_dim: manifest.feature_dim.unwrap_or(0),
        },
        ScoreSourceKind::DistanceTable => ScoreSourceDoc::DistanceTable {
            path: sidecar_path.to_string(),
        },
    };
    let doc = ManifestDoc {
        video_end: manifest.video_end,
        score_source,
        identities: manifest
            .identities
            .iter()
            .map(|i| IdentityDoc { id: i.id.clone(), is_actor: i.is_actor })
            .collect(),
        tracklets: manifest
            .tracklets
            .iter()
            .map(|t| TrackletDoc {
                tracklet_id: t.tracklet_id.clone(),
                identity_id: t.identity_id.clone(),
                camera_id: t.camera_id,
                start_time: t.start_time,
                end_time: t.end_time,
                descriptor_ref: t.descriptor_ref,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    text
}

pub fn write_manifest(
    path: &Path,
    manifest: &ScenarioManifest,
    sidecar_path: &str,
) -> Result<(), FormatError> {
    fs::write(path, manifest_to_json(manifest, sidecar_path)).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Feature store (binary)
// ---------------------------------------------------------------------------

pub fn feature_store_bytes(features: &[Descriptor]) -> Vec<u8> {
    let dim = features.first().map_or(0, |d| d.dim());
    let mut bytes = Vec::with_capacity(12 + features.len() * dim * 4);
    bytes.extend_from_slice(FEATURE_STORE_MAGIC);
    bytes.extend_from_slice(&(features.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    for d in features {
        for &v in d.values() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    bytes
}

pub fn write_feature_store(path: &Path, features: &[Descriptor]) -> Result<(), FormatError> {
    fs::write(path, feature_store_bytes(features)).map_err(io_err(path))
}

pub fn read_feature_store(path: &Path) -> Result<Vec<Descriptor>, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let parse = |detail: String| FormatError::Parse { path: path.to_path_buf(), detail };
    if bytes.len() < 12 {
        return Err(parse(format!(
            "expected at least 12 header bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != FEATURE_STORE_MAGIC {
        return Err(parse("bad magic, expected \"RPCF\"".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + count * dim * 4;
    if bytes.len() != expected {
        return Err(parse(format!(
            "expected {expected} bytes for {count} rows x {dim} dims, found {}",
            bytes.len()
        )));
    }
    let mut features = Vec::with_capacity(count);
    for row in 0..count {
        let mut values = Vec::with_capacity(dim);
        for col in 0..dim {
            let off = 12 + (row * dim + col) * 4;
            values.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
        }
        let descriptor = Descriptor::new(values).map_err(|_| FormatError::Validation {
            detail: format!("feature store row {row} contains a non-finite value"),
        })?;
        features.push(descriptor);
    }
    Ok(features)
}

// ---------------------------------------------------------------------------
// Distance table (CSV)
// ---------------------------------------------------------------------------

pub const DISTANCE_TABLE_HEADER: &str = "probe_tracklet_id,gallery_tracklet_id,distance";

pub fn read_distance_table(path: &Path) -> Result<HashMap<(String, String), f64>, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parse = |line: usize, detail: String| FormatError::Parse {
        path: path.to_path_buf(),
        detail: format!("line {line}: {detail}"),
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim_end() == DISTANCE_TABLE_HEADER => {}
        other => {
            return Err(parse(
                1,
                format!("expected header '{DISTANCE_TABLE_HEADER}', found {other:?}"),
            ))
        }
    }
    let mut entries = HashMap::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(probe), Some(gallery), Some(value), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(parse(line_no, "expected exactly 3 comma-separated fields".into()));
        };
        let distance: f64 = value
            .trim()
            .parse()
            .map_err(|e| parse(line_no, format!("bad distance '{value}': {e}")))?;
        if !distance.is_finite() {
            return Err(parse(line_no, format!("non-finite distance '{value}'")));
        }
        let key = (probe.to_string(), gallery.to_string());
        if entries.insert(key, distance).is_some() {
            return Err(parse(line_no, format!("duplicate pair ({probe}, {gallery})")));
        }
    }
    Ok(entries)
}

pub fn write_distance_table(
    path: &Path,
    entries: &[((String, String), f64)],
) -> Result<(), FormatError> {
    let mut text = String::from(DISTANCE_TABLE_HEADER);
    text.push('\n');
    for ((probe, gallery), d) in entries {
        text.push_str(&format!("{probe},{gallery},{d}\n"));
    }
    fs::write(path, text).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Scenario loading (manifest + sidecar)
// ---------------------------------------------------------------------------

/// Load a manifest and its score source, running every validation along the
/// way; the result is ready for evaluation.
pub fn load_scenario(path: &Path) -> Result<(ScenarioManifest, ScoreProvider), FormatError> {
    let (manifest, sidecar) = read_manifest(path)?;
    let provider = load_provider(&manifest, &sidecar)?;
    Ok((manifest, provider))
}

/// Load the sidecar referenced by a manifest, cross-checking it against the
/// manifest (store dimension and descriptor_ref ranges).
pub fn load_provider(
    manifest: &ScenarioManifest,
    sidecar: &SidecarRef,
) -> Result<ScoreProvider, FormatError> {
    match sidecar {
        SidecarRef::Features { resolved, feature_dim, .. } => {
            let features = read_feature_store(resolved)?;
            if let Some(first) = features.first() {
                if first.dim() != *feature_dim {
                    return Err(FormatError::Validation {
                        detail: format!(
                            "feature store dimension {} does not match manifest feature_dim {}",
                            first.dim(),
                            feature_dim
                        ),
                    });
                }
            }
            for t in &manifest.tracklets {
                if let Some(r) = t.descriptor_ref {
                    if r >= features.len() {
                        return Err(FormatError::Validation {
                            detail: format!(
                                "{}: descriptor_ref {} is outside the feature store ({} rows)",
                                t.tracklet_id,
                                r,
                                features.len()
                            ),
                        });
                    }
                }
            }
            Ok(ScoreProvider::feature_l2(features))
        }
        SidecarRef::Table { resolved, .. } => {
            Ok(ScoreProvider::distance_table(read_distance_table(resolved)?))
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic scenario config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynthConfigDoc {
    seed: u64,
    n_actors: usize,
    n_distractors: usize,
    feature_dim: usize,
    video_length: f64,
    arrival: ArrivalDoc,
    reappearance_range: [usize; 2],
    noise_sigma: f64,
    n_cameras: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ArrivalDoc {
    Homogeneous { rate: f64 },
    Piecewise { segments: Vec<SegmentDoc> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentDoc {
    start: f64,
    rate: f64,
}

pub fn read_synth_config(path: &Path) -> Result<SynthConfig, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let doc: SynthConfigDoc = serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(SynthConfig {
        seed: doc.seed,
        n_actors: doc.n_actors,
        n_distractors: doc.n_distractors,
        feature_dim: doc.feature_dim,
        video_length: doc.video_length,
        arrival: match doc.arrival {
            ArrivalDoc::Homogeneous { rate } => ArrivalProcess::Homogeneous { rate },
            ArrivalDoc::Piecewise { segments } => ArrivalProcess::Piecewise(
                segments
                    .into_iter()
                    .map(|s| RateSegment { start: s.start, rate: s.rate })
                    .collect(),
            ),
        },
        reappearance_range: (doc.reappearance_range[0], doc.reappearance_range[1]),
        appearance_noise_sigma: doc.noise_sigma,
        n_cameras: doc.n_cameras,
    })
}

/// JSON schema of the manifest document, printed by `--schema`.
pub const MANIFEST_SCHEMA: &str = r##"{
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "Scenario manifest",
  "type": "object",
  "required": ["video_end", "score_source", "identities", "tracklets"],
  "properties": {
    "video_end": { "type": "number", "minimum": 0 },
    "score_source": {
      "oneOf": [
        {
          "type": "object",
          "required": ["kind", "path", "feature_dim"],
          "properties": {
            "kind": { "const": "feature_store" },
            "path": { "type": "string", "description": "feature store file, relative to this manifest" },
            "feature_dim": { "type": "integer", "minimum": 1 }
          }
        },
        {
          "type": "object",
          "required": ["kind", "path"],
          "properties": {
            "kind": { "const": "distance_table" },
            "path": { "type": "string", "description": "distance CSV, relative to this manifest" }
          }
        }
      ]
    },
    "identities": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["id", "is_actor"],
        "properties": {
          "id": { "type": "string" },
          "is_actor": { "type": "boolean" }
        }
      }
    },
    "tracklets": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["tracklet_id", "identity_id", "camera_id", "start_time", "end_time"],
        "properties": {
          "tracklet_id": { "type": "string" },
          "identity_id": { "type": "string" },
          "camera_id": { "type": "integer", "minimum": 0 },
          "start_time": { "type": "number", "minimum": 0 },
          "end_time": { "type": "number", "minimum": 0 },
          "descriptor_ref": { "type": "integer", "minimum": 0 }
        }
      }
    }
  }
}"##;
