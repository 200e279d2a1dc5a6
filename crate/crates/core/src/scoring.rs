//! Descriptors and probe-candidate dissimilarity scores.
//!
//! Scores are dissimilarities everywhere in this crate: lower is a better
//! match. A [`ScoreProvider`] produces them either from per-tracklet
//! descriptors under Euclidean distance, or from a precomputed distance
//! table looked up verbatim.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::Tracklet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("empty tracklet: cannot average zero frame features")]
    EmptyTracklet,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("descriptor contains a non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("tracklet '{tracklet_id}' has no descriptor")]
    MissingDescriptor { tracklet_id: String },
    #[error("tracklet '{tracklet_id}' descriptor_ref {index} is outside the feature store (len {store_len})")]
    DescriptorRefOutOfRange {
        tracklet_id: String,
        index: usize,
        store_len: usize,
    },
    #[error("no distance table entry for pair ('{probe_id}', '{candidate_id}')")]
    MissingTableEntry {
        probe_id: String,
        candidate_id: String,
    },
    #[error("non-finite score for pair ('{probe_id}', '{candidate_id}')")]
    NonFiniteScore {
        probe_id: String,
        candidate_id: String,
    },
}

/// Fixed-length feature vector describing one tracklet. All entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
}

impl Descriptor {
    pub fn new(values: Vec<f64>) -> Result<Self, ScoreError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ScoreError::NonFinite { index });
        }
        Ok(Descriptor { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Component-wise arithmetic mean of per-frame feature vectors, producing
/// the single descriptor that represents the whole tracklet.
pub fn average_descriptor(frame_features: &[Vec<f64>]) -> Result<Descriptor, ScoreError> {
    let first = frame_features.first().ok_or(ScoreError::EmptyTracklet)?;
    let dim = first.len();
    let mut sum = vec![0.0f64; dim];
    for frame in frame_features {
        if frame.len() != dim {
            return Err(ScoreError::DimensionMismatch {
                expected: dim,
                found: frame.len(),
            });
        }
        for (acc, v) in sum.iter_mut().zip(frame) {
            *acc += v;
        }
    }
    let n = frame_features.len() as f64;
    for acc in &mut sum {
        *acc /= n;
    }
    Descriptor::new(sum)
}

/// Euclidean (l2) distance between two descriptors of equal dimension.
pub fn euclidean_distance(a: &Descriptor, b: &Descriptor) -> Result<f64, ScoreError> {
    if a.dim() != b.dim() {
        return Err(ScoreError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let sum_sq: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum_sq.sqrt())
}

/// Source of probe-candidate dissimilarity scores.
///
/// Read-only after construction; concurrent queries are safe. Feature mode
/// is symmetric; table mode need not be (learned metrics and interchanged
/// probe/gallery roles can be asymmetric).
#[derive(Debug, Clone)]
pub enum ScoreProvider {
    /// Descriptors indexed by `Tracklet::descriptor_ref`, scored with l2.
    FeatureL2 { features: Vec<Descriptor> },
    /// Scores keyed by (probe tracklet id, candidate tracklet id).
    DistanceTable {
        entries: HashMap<(String, String), f64>,
    },
}

impl ScoreProvider {
    pub fn feature_l2(features: Vec<Descriptor>) -> Self {
        ScoreProvider::FeatureL2 { features }
    }

    pub fn distance_table(entries: HashMap<(String, String), f64>) -> Self {
        ScoreProvider::DistanceTable { entries }
    }

    fn descriptor_of<'a>(
        features: &'a [Descriptor],
        tracklet: &Tracklet,
    ) -> Result<&'a Descriptor, ScoreError> {
        let index = tracklet
            .descriptor_ref
            .ok_or_else(|| ScoreError::MissingDescriptor {
                tracklet_id: tracklet.tracklet_id.clone(),
            })?;
        features
            .get(index)
            .ok_or_else(|| ScoreError::DescriptorRefOutOfRange {
                tracklet_id: tracklet.tracklet_id.clone(),
                index,
                store_len: features.len(),
            })
    }

    /// Dissimilarity between a probe tracklet and a gallery candidate.
    /// Deterministic: identical inputs return bit-identical values.
    pub fn score(&self, probe: &Tracklet, candidate: &Tracklet) -> Result<f64, ScoreError> {
        let raw = match self {
            ScoreProvider::FeatureL2 { features } => {
                let a = Self::descriptor_of(features, probe)?;
                let b = Self::descriptor_of(features, candidate)?;
                euclidean_distance(a, b)?
            }
            ScoreProvider::DistanceTable { entries } => {
                let key = (probe.tracklet_id.clone(), candidate.tracklet_id.clone());
                *entries
                    .get(&key)
                    .ok_or_else(|| ScoreError::MissingTableEntry {
                        probe_id: probe.tracklet_id.clone(),
                        candidate_id: candidate.tracklet_id.clone(),
                    })?
            }
        };
        if !raw.is_finite() {
            return Err(ScoreError::NonFiniteScore {
                probe_id: probe.tracklet_id.clone(),
                candidate_id: candidate.tracklet_id.clone(),
            });
        }
        // Normalize -0.0 to +0.0 so ordering by `total_cmp` agrees with the
        // `<` operator on every score the rank engines compare.
        Ok(if raw == 0.0 { 0.0 } else { raw })
    }
}
