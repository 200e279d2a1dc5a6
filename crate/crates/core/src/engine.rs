//! Event-stream gallery replay and per-probe instantaneous rank tracking.
//!
//! The gallery is replayed as a time-ordered event stream. For each probe,
//! [`stream_rank_curve`] maintains the instantaneous rank of the probe's
//! best ground-truth match incrementally: non-match scores live in an
//! order-statistic structure (a Fenwick tree over the compressed score
//! universe) so every event costs O(log n) after the one-time score pass.
//! [`instantaneous_rank`] is the reference point-query semantics the
//! streaming path must agree with exactly.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{CameraFilter, ProbeSpec, RankValue, ScenarioManifest};
use crate::scoring::{ScoreError, ScoreProvider};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown tracklet id '{id}'")]
    UnknownTracklet { id: String },
    #[error("no reappearance: probe '{probe_id}' has no ground-truth match in gallery scope")]
    NoReappearance { probe_id: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// When a tracklet joins the gallery: when its sequence starts, or when it
/// completes. Default is `AtEnd`, since the averaged descriptor is only
/// fully determined once the sequence is over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntryPolicy {
    AtStart,
    #[default]
    AtEnd,
}

/// How a non-match score exactly equal to the best match score counts.
/// `Pessimistic` (the default) ranks it ahead of the match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    #[default]
    Pessimistic,
    Optimistic,
}

/// One gallery-candidate arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEvent {
    pub arrival_time: f64,
    /// Index into the manifest's tracklet list.
    pub tracklet: usize,
}

/// Strictly ordered event stream of gallery-candidate arrivals, sorted by
/// the compound key (arrival_time, tracklet_id). One event per in-scope
/// tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryTimeline {
    events: Vec<GalleryEvent>,
}

impl GalleryTimeline {
    pub fn events(&self) -> &[GalleryEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Build the arrival stream for one gallery scope. An empty scope yields an
/// empty timeline.
pub fn build_timeline(
    manifest: &ScenarioManifest,
    gallery_camera: CameraFilter,
    entry_policy: EntryPolicy,
) -> GalleryTimeline {
    let mut events: Vec<GalleryEvent> = manifest
        .tracklets
        .iter()
        .enumerate()
        .filter(|(_, t)| gallery_camera.accepts(t.camera_id))
        .map(|(i, t)| {
            let raw = match entry_policy {
                EntryPolicy::AtStart => t.start_time,
                EntryPolicy::AtEnd => t.end_time,
            };
            GalleryEvent {
                // normalize -0.0 so total_cmp ordering matches `<=` queries
                arrival_time: if raw == 0.0 { 0.0 } else { raw },
                tracklet: i,
            }
        })
        .collect();
    events.sort_by(|a, b| {
        a.arrival_time.total_cmp(&b.arrival_time).then_with(|| {
            manifest.tracklets[a.tracklet]
                .tracklet_id
                .cmp(&manifest.tracklets[b.tracklet].tracklet_id)
        })
    });
    GalleryTimeline { events }
}

/// One point of a rank curve: from `time` onward (until the next
/// breakpoint) the probe's best match sits at `rank` among `gallery_size`
/// candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub time: f64,
    pub rank: usize,
    pub gallery_size: usize,
}

/// Piecewise-constant, right-continuous map from time to the instantaneous
/// rank of a probe's best match, defined on `[domain_start, domain_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCurve {
    pub probe_id: String,
    /// Sorted by time; the first breakpoint sits at `domain_start`.
    pub breakpoints: Vec<Breakpoint>,
    /// Time of the probe's first reappearance in the gallery.
    pub domain_start: f64,
    /// End of the video.
    pub domain_end: f64,
}

impl RankCurve {
    /// Rank at time `t`, or `None` outside the curve's domain.
    pub fn rank_at(&self, t: f64) -> Option<usize> {
        if t < self.domain_start || t > self.domain_end {
            return None;
        }
        let idx = self.breakpoints.partition_point(|bp| bp.time <= t);
        if idx == 0 {
            return None;
        }
        Some(self.breakpoints[idx - 1].rank)
    }
}

/// Probe's tracklet index and resolved ground-truth match set.
pub(crate) struct ResolvedProbe {
    pub probe_idx: usize,
    pub match_set: HashSet<usize>,
}

pub(crate) fn resolve_probe(
    probe: &ProbeSpec,
    manifest: &ScenarioManifest,
) -> Result<ResolvedProbe, EngineError> {
    let index = manifest.tracklet_index();
    let probe_idx = *index
        .get(probe.probe_tracklet.as_str())
        .ok_or_else(|| EngineError::UnknownTracklet {
            id: probe.probe_tracklet.clone(),
        })?;
    let mut match_set: HashSet<usize> = HashSet::new();
    for id in &probe.ground_truth_matches {
        let i = *index
            .get(id.as_str())
            .ok_or_else(|| EngineError::UnknownTracklet { id: id.clone() })?;
        match_set.insert(i);
    }
    // the probe's own tracklet is never a member of its own gallery, even
    // if a hand-built spec lists it as a match
    match_set.remove(&probe_idx);
    Ok(ResolvedProbe { probe_idx, match_set })
}

/// Score every in-scope event against the probe, in timeline order, with
/// the probe's own tracklet excluded. Entries are
/// (arrival_time, score, is_ground_truth_match).
fn score_events(
    resolved: &ResolvedProbe,
    events: &[GalleryEvent],
    manifest: &ScenarioManifest,
    provider: &ScoreProvider,
) -> Result<Vec<(f64, f64, bool)>, EngineError> {
    let probe_tracklet = &manifest.tracklets[resolved.probe_idx];
    let mut entries = Vec::with_capacity(events.len());
    for ev in events {
        if ev.tracklet == resolved.probe_idx {
            continue;
        }
        let candidate = &manifest.tracklets[ev.tracklet];
        let score = provider.score(probe_tracklet, candidate)?;
        entries.push((
            ev.arrival_time,
            score,
            resolved.match_set.contains(&ev.tracklet),
        ));
    }
    Ok(entries)
}

/// Rank of a probe's best ground-truth match among all candidates that have
/// arrived by time `t`, or `None` while no match is present.
///
/// This is the reference semantics: the gallery at `t` is every event with
/// `arrival_time <= t` minus the probe's own tracklet, `m` is the minimum
/// score over the matches present, and the rank is one plus the number of
/// non-match candidates scoring strictly below `m` (plus the ties under the
/// pessimistic policy).
pub fn instantaneous_rank(
    probe: &ProbeSpec,
    t: f64,
    timeline: &GalleryTimeline,
    manifest: &ScenarioManifest,
    provider: &ScoreProvider,
    tie_policy: TiePolicy,
) -> Result<Option<RankValue>, EngineError> {
    let resolved = resolve_probe(probe, manifest)?;
    let upto = timeline
        .events()
        .partition_point(|ev| ev.arrival_time <= t);
    let events = &timeline.events()[..upto];
    // no match present yet: absent, and no scores are requested at all
    if !events
        .iter()
        .any(|ev| resolved.match_set.contains(&ev.tracklet))
    {
        return Ok(None);
    }
    let present = score_events(&resolved, events, manifest, provider)?;

    let mut best_match: Option<f64> = None;
    for &(_, score, is_match) in &present {
        if is_match {
            best_match = Some(match best_match {
                Some(b) if b <= score => b,
                _ => score,
            });
        }
    }
    let m = best_match.expect("a match event is present");
    let mut below = 0usize;
    let mut tied = 0usize;
    for &(_, score, is_match) in &present {
        if is_match {
            continue;
        }
        if score < m {
            below += 1;
        } else if score == m {
            tied += 1;
        }
    }
    let rank = match tie_policy {
        TiePolicy::Pessimistic => 1 + below + tied,
        TiePolicy::Optimistic => 1 + below,
    };
    Ok(Some(RankValue {
        rank,
        gallery_size: present.len(),
    }))
}

/// Fenwick tree used as an order-statistic multiset over the compressed
/// score universe: `add` inserts one occurrence, `prefix(i)` counts
/// occurrences at positions `< i`. Both are O(log n).
struct FenwickTree {
    data: Vec<usize>,
}

impl FenwickTree {
    fn new(n: usize) -> Self {
        FenwickTree { data: vec![0; n + 1] }
    }

    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.data.len() {
            self.data[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions in [0, i).
    fn prefix(&self, mut i: usize) -> usize {
        let mut sum = 0;
        while i > 0 {
            sum += self.data[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }
}

/// Consume the timeline in event order and emit a breakpoint whenever the
/// probe's instantaneous rank changes.
///
/// Events sharing an arrival time are applied together before the rank is
/// re-evaluated, so the curve agrees with [`instantaneous_rank`] at every
/// event time. Errors with `NoReappearance` when no ground-truth match of
/// the probe ever enters the gallery scope.
pub fn stream_rank_curve(
    probe: &ProbeSpec,
    timeline: &GalleryTimeline,
    manifest: &ScenarioManifest,
    provider: &ScoreProvider,
    tie_policy: TiePolicy,
) -> Result<RankCurve, EngineError> {
    let resolved = resolve_probe(probe, manifest)?;
    if !timeline
        .events()
        .iter()
        .any(|ev| resolved.match_set.contains(&ev.tracklet))
    {
        return Err(EngineError::NoReappearance {
            probe_id: probe.probe_tracklet.clone(),
        });
    }
    let entries = score_events(&resolved, timeline.events(), manifest, provider)?;

    // Compressed score universe: all scores this probe will ever compare.
    let mut universe: Vec<f64> = entries.iter().map(|&(_, s, _)| s).collect();
    universe.sort_by(f64::total_cmp);
    universe.dedup_by(|a, b| a.total_cmp(b).is_eq());
    let slot = |score: f64| -> usize {
        universe
            .binary_search_by(|x| x.total_cmp(&score))
            .expect("score drawn from the universe")
    };

    let mut non_matches = FenwickTree::new(universe.len());
    let mut best_match: Option<f64> = None;
    let mut gallery_size = 0usize;
    let mut breakpoints: Vec<Breakpoint> = Vec::new();

    let mut i = 0;
    while i < entries.len() {
        // apply the whole group of events sharing this arrival time
        let group_time = entries[i].0;
        while i < entries.len() && entries[i].0.total_cmp(&group_time).is_eq() {
            let (_, score, is_match) = entries[i];
            gallery_size += 1;
            if is_match {
                best_match = Some(match best_match {
                    Some(b) if b <= score => b,
                    _ => score,
                });
            } else {
                non_matches.add(slot(score));
            }
            i += 1;
        }
        let Some(m) = best_match else { continue };
        let idx = slot(m);
        let below = non_matches.prefix(idx);
        let rank = match tie_policy {
            TiePolicy::Pessimistic => 1 + non_matches.prefix(idx + 1),
            TiePolicy::Optimistic => 1 + below,
        };
        if breakpoints.last().map(|bp| bp.rank) != Some(rank) {
            breakpoints.push(Breakpoint {
                time: group_time,
                rank,
                gallery_size,
            });
        }
    }

    let domain_start = breakpoints[0].time;
    Ok(RankCurve {
        probe_id: probe.probe_tracklet.clone(),
        breakpoints,
        domain_start,
        domain_end: manifest.video_end,
    })
}

/// Curves for many probes, optionally evaluated in parallel. Probe states
/// are independent, so the result is identical (and in input order)
/// regardless of the parallelism degree.
pub fn stream_rank_curves(
    probes: &[ProbeSpec],
    timeline: &GalleryTimeline,
    manifest: &ScenarioManifest,
    provider: &ScoreProvider,
    tie_policy: TiePolicy,
    parallel: bool,
) -> Result<Vec<RankCurve>, EngineError> {
    if parallel {
        probes
            .par_iter()
            .map(|p| stream_rank_curve(p, timeline, manifest, provider, tie_policy))
            .collect()
    } else {
        probes
            .iter()
            .map(|p| stream_rank_curve(p, timeline, manifest, provider, tie_policy))
            .collect()
    }
}

/// Rank of each probe's best match against the complete final gallery
/// (`t = video_end`). Probes whose matches never arrive are reported as
/// `None`, not dropped.
pub fn batch_final_ranks(
    probes: &[ProbeSpec],
    timeline: &GalleryTimeline,
    manifest: &ScenarioManifest,
    provider: &ScoreProvider,
    tie_policy: TiePolicy,
) -> Result<BTreeMap<String, Option<RankValue>>, EngineError> {
    let mut out = BTreeMap::new();
    for probe in probes {
        let rank = instantaneous_rank(
            probe,
            manifest.video_end,
            timeline,
            manifest,
            provider,
            tie_policy,
        )?;
        out.insert(probe.probe_tracklet.clone(), rank);
    }
    Ok(out)
}
