//! Domain types shared by every module: identities, tracklets, scenario
//! manifests, probe specifications, and scenario validation.
//!
//! All types here are plain immutable data. A [`ScenarioManifest`] describes
//! the complete evaluation world; [`validate_scenario`] reports every
//! invariant violation without mutating anything.

use std::collections::{HashMap, HashSet};
use std::fmt;

/// One person known to the scenario. Actors are the identities evaluation
/// probes are drawn from; everyone else is a distractor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub id: String,
    pub is_actor: bool,
}

/// One contiguous, time-stamped appearance of one identity in one camera.
/// The atomic gallery/probe unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub tracklet_id: String,
    pub identity_id: String,
    pub camera_id: u32,
    /// Seconds from the start of the video.
    pub start_time: f64,
    pub end_time: f64,
    /// Row index into the scenario's feature store, when one exists.
    pub descriptor_ref: Option<usize>,
}

/// Where probe-candidate scores come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSourceKind {
    /// Per-tracklet descriptors scored with Euclidean distance.
    FeatureStore,
    /// Precomputed (probe, gallery) distances looked up verbatim.
    DistanceTable,
}

/// Complete evaluation world: identities, tracklets, the video's end time,
/// and which kind of score source backs it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioManifest {
    pub identities: Vec<Identity>,
    pub tracklets: Vec<Tracklet>,
    /// Duration of the gallery video in seconds; every tracklet ends at or
    /// before this.
    pub video_end: f64,
    pub score_source: ScoreSourceKind,
    /// Descriptor length; present iff `score_source` is a feature store.
    pub feature_dim: Option<usize>,
}

impl ScenarioManifest {
    /// Map from tracklet id to its index in `tracklets`.
    pub fn tracklet_index(&self) -> HashMap<&str, usize> {
        self.tracklets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.tracklet_id.as_str(), i))
            .collect()
    }

    pub fn identity(&self, id: &str) -> Option<&Identity> {
        self.identities.iter().find(|x| x.id == id)
    }
}

/// Restricts a gallery (or probe selection) to one camera, or keeps all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraFilter {
    All,
    Only(u32),
}

impl CameraFilter {
    pub fn accepts(&self, camera_id: u32) -> bool {
        match self {
            CameraFilter::All => true,
            CameraFilter::Only(c) => *c == camera_id,
        }
    }
}

impl fmt::Display for CameraFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CameraFilter::All => write!(f, "all"),
            CameraFilter::Only(c) => write!(f, "{c}"),
        }
    }
}

/// One query: a probe tracklet, the gallery scope it is searched in, and the
/// tracklet ids that count as correct matches (same identity, in scope).
///
/// The probe tracklet is never a member of its own gallery; the engine
/// excludes it unconditionally.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub probe_tracklet: String,
    pub gallery_camera: CameraFilter,
    pub ground_truth_matches: Vec<String>,
}

impl ProbeSpec {
    /// Check this probe's invariants against a manifest: all referenced
    /// tracklets exist, the probe is not listed among its own matches, and
    /// every match shares the probe's identity. Probes built by
    /// [`derive_probes`] satisfy these by construction.
    pub fn validate(&self, manifest: &ScenarioManifest) -> ValidationReport {
        let index = manifest.tracklet_index();
        let mut violations = Vec::new();
        let probe_identity = match index.get(self.probe_tracklet.as_str()) {
            Some(&i) => Some(manifest.tracklets[i].identity_id.as_str()),
            None => {
                violations.push(Violation {
                    entity: self.probe_tracklet.clone(),
                    message: "probe tracklet is not in the manifest".into(),
                });
                None
            }
        };
        for id in &self.ground_truth_matches {
            if *id == self.probe_tracklet {
                violations.push(Violation {
                    entity: id.clone(),
                    message: "probe tracklet listed as its own ground-truth match".into(),
                });
                continue;
            }
            match (index.get(id.as_str()), probe_identity) {
                (None, _) => violations.push(Violation {
                    entity: id.clone(),
                    message: "ground-truth match is not in the manifest".into(),
                }),
                (Some(&i), Some(identity)) if manifest.tracklets[i].identity_id != identity => {
                    violations.push(Violation {
                        entity: id.clone(),
                        message: format!(
                            "ground-truth match belongs to '{}', probe to '{identity}'",
                            manifest.tracklets[i].identity_id
                        ),
                    })
                }
                _ => {}
            }
        }
        ValidationReport { violations }
    }
}

/// Instantaneous rank of a probe's best match among the candidates present
/// at query time. `1 <= rank <= gallery_size` whenever a match is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankValue {
    pub rank: usize,
    pub gallery_size: usize,
}

/// A single invariant violation found by [`validate_scenario`], naming the
/// entity it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Tracklet id, identity id, or "manifest" for document-level issues.
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

/// Every violation found in a manifest; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check every manifest invariant and return one violation per breach.
///
/// Pure and idempotent: the same manifest always yields the same report.
/// A manifest with an empty report is accepted by every downstream module
/// without further schema errors (cross-file checks such as feature-store
/// row counts are the loader's job).
pub fn validate_scenario(manifest: &ScenarioManifest) -> ValidationReport {
    let mut violations = Vec::new();

    if !manifest.video_end.is_finite() || manifest.video_end < 0.0 {
        violations.push(Violation {
            entity: "manifest".into(),
            message: format!("video_end must be finite and >= 0, got {}", manifest.video_end),
        });
    }

    match (manifest.score_source, manifest.feature_dim) {
        (ScoreSourceKind::FeatureStore, None) => violations.push(Violation {
            entity: "manifest".into(),
            message: "feature_dim is required when score_source is feature_store".into(),
        }),
        (ScoreSourceKind::FeatureStore, Some(0)) => violations.push(Violation {
            entity: "manifest".into(),
            message: "feature_dim must be positive".into(),
        }),
        (ScoreSourceKind::DistanceTable, Some(_)) => violations.push(Violation {
            entity: "manifest".into(),
            message: "feature_dim must be absent when score_source is distance_table".into(),
        }),
        _ => {}
    }

    let mut identity_ids = HashSet::new();
    for identity in &manifest.identities {
        if !identity_ids.insert(identity.id.as_str()) {
            violations.push(Violation {
                entity: identity.id.clone(),
                message: "duplicate identity id".into(),
            });
        }
    }

    let mut tracklet_ids = HashSet::new();
    for t in &manifest.tracklets {
        if !tracklet_ids.insert(t.tracklet_id.as_str()) {
            violations.push(Violation {
                entity: t.tracklet_id.clone(),
                message: "duplicate tracklet id".into(),
            });
        }
        if !identity_ids.contains(t.identity_id.as_str()) {
            violations.push(Violation {
                entity: t.tracklet_id.clone(),
                message: format!("references undeclared identity '{}'", t.identity_id),
            });
        }
        if !t.start_time.is_finite() || !t.end_time.is_finite() {
            violations.push(Violation {
                entity: t.tracklet_id.clone(),
                message: "start_time and end_time must be finite".into(),
            });
            continue;
        }
        if t.start_time < 0.0 {
            violations.push(Violation {
                entity: t.tracklet_id.clone(),
                message: format!("start_time must be >= 0, got {}", t.start_time),
            });
        }
        if t.end_time < t.start_time {
            violations.push(Violation {
                entity: t.tracklet_id.clone(),
                message: format!(
                    "end_time {} precedes start_time {}",
                    t.end_time, t.start_time
                ),
            });
        }
        if t.end_time > manifest.video_end {
            violations.push(Violation {
                entity: t.tracklet_id.clone(),
                message: format!(
                    "end_time {} exceeds video_end {}",
                    t.end_time, manifest.video_end
                ),
            });
        }
        if manifest.score_source == ScoreSourceKind::FeatureStore && t.descriptor_ref.is_none() {
            violations.push(Violation {
                entity: t.tracklet_id.clone(),
                message: "missing descriptor_ref in feature_store mode".into(),
            });
        }
    }

    ValidationReport { violations }
}

/// Derive one probe per actor identity from a manifest, following the
/// single-camera and pairwise-camera protocols.
///
/// The probe tracklet is the actor's earliest appearance (by start time,
/// then tracklet id) within `probe_camera` scope; the ground-truth matches
/// are every other tracklet of the same identity within `gallery_camera`
/// scope. Actors with no appearance in the probe scope yield no probe;
/// probes whose match list comes out empty are kept, so batch metrics can
/// report them as absent.
pub fn derive_probes(
    manifest: &ScenarioManifest,
    probe_camera: CameraFilter,
    gallery_camera: CameraFilter,
) -> Vec<ProbeSpec> {
    let mut probes = Vec::new();
    for identity in manifest.identities.iter().filter(|i| i.is_actor) {
        let mut in_probe_scope: Vec<&Tracklet> = manifest
            .tracklets
            .iter()
            .filter(|t| t.identity_id == identity.id && probe_camera.accepts(t.camera_id))
            .collect();
        if in_probe_scope.is_empty() {
            continue;
        }
        in_probe_scope.sort_by(|a, b| {
            a.start_time
                .total_cmp(&b.start_time)
                .then_with(|| a.tracklet_id.cmp(&b.tracklet_id))
        });
        let probe = in_probe_scope[0];
        let matches: Vec<String> = manifest
            .tracklets
            .iter()
            .filter(|t| {
                t.identity_id == identity.id
                    && t.tracklet_id != probe.tracklet_id
                    && gallery_camera.accepts(t.camera_id)
            })
            .map(|t| t.tracklet_id.clone())
            .collect();
        probes.push(ProbeSpec {
            probe_tracklet: probe.tracklet_id.clone(),
            gallery_camera,
            ground_truth_matches: matches,
        });
    }
    probes
}
