//! Aggregate metrics over rank curves: Rank Persistence Curves, plus the
//! classical CMC / mAP batch baselines and video-flow-density diagnostics.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::{EngineError, GalleryTimeline, RankCurve, TiePolicy};
use crate::model::{ProbeSpec, RankValue, ScenarioManifest};
use crate::scoring::ScoreProvider;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("rank must be >= 1")]
    RankOutOfRange,
    #[error("no probes")]
    NoProbes,
    #[error("k_max must be >= 1")]
    KMaxOutOfRange,
    #[error("window length t0 must be > 0, got {0}")]
    WindowOutOfRange(f64),
    #[error("computed RPC violates a structural law: {0}")]
    StructuralViolation(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// When several reappearances create several intervals at or below a rank,
/// which interval's length counts as the persistence duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalPolicy {
    /// Longest qualifying interval (the default; keeps RPCs ordered across
    /// ranks).
    #[default]
    Longest,
    /// First qualifying interval, for comparison studies.
    First,
}

/// Length of the longest (or first) contiguous interval within the curve's
/// domain on which the curve sits at or below rank `r`. Intervals still
/// qualifying when the video ends are measured up to `domain_end` and no
/// further (right-censored). Returns 0 when the curve never reaches `r`.
pub fn persistence_duration(
    curve: &RankCurve,
    r: usize,
    policy: IntervalPolicy,
) -> Result<f64, MetricsError> {
    if r < 1 {
        return Err(MetricsError::RankOutOfRange);
    }
    let mut best: Option<f64> = None;
    let mut run_start: Option<f64> = None;
    for bp in &curve.breakpoints {
        match (bp.rank <= r, run_start) {
            (true, None) => run_start = Some(bp.time),
            (false, Some(start)) => {
                let len = bp.time - start;
                if policy == IntervalPolicy::First {
                    return Ok(len);
                }
                if best.is_none_or(|b| len > b) {
                    best = Some(len);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(start) = run_start {
        let len = curve.domain_end - start;
        if policy == IntervalPolicy::First {
            return Ok(len);
        }
        if best.is_none_or(|b| len > b) {
            best = Some(len);
        }
    }
    Ok(best.unwrap_or(0.0))
}

/// One RPC: for a fixed rank, the fraction of probes persisting at or below
/// it for at least a given duration.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcCurve {
    pub rank: usize,
    /// Persistence durations of the probes that ever reach the rank,
    /// ascending.
    durations: Vec<f64>,
    /// Probes whose curve ever sits at or below the rank.
    ever_count: usize,
}

impl RpcCurve {
    /// Fraction of probes persisting for at least `d` seconds. Exact closed
    /// comparison: a probe with persistence exactly `d` counts.
    pub fn fraction_at(&self, d: f64, probe_count: usize) -> f64 {
        let count = if d <= 0.0 {
            self.ever_count
        } else {
            self.durations.len() - self.durations.partition_point(|&l| l < d)
        };
        count as f64 / probe_count as f64
    }

    /// Step-function rows `(duration, fraction)` for right-continuous
    /// rendering: the value at each row holds until the next row's duration.
    pub fn breakpoints(&self, probe_count: usize) -> Vec<(f64, f64)> {
        let n = probe_count as f64;
        let mut rows = vec![(0.0, self.ever_count as f64 / n)];
        let mut i = 0;
        while i < self.durations.len() {
            let d = self.durations[i];
            while i < self.durations.len() && self.durations[i] == d {
                i += 1;
            }
            if d > 0.0 {
                // survivors strictly beyond d
                rows.push((d, (self.durations.len() - i) as f64 / n));
            }
        }
        rows
    }
}

/// Rank Persistence Curves for a set of ranks over one probe population.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcTable {
    pub curves: Vec<RpcCurve>,
    pub probe_count: usize,
    pub interval_policy: IntervalPolicy,
}

/// Build the RPC table from per-probe rank curves.
///
/// Ranks are sorted and deduplicated. Postconditions are checked before the
/// table is returned: each curve is non-increasing in duration, and under
/// the longest-interval policy curves at higher ranks dominate lower ones.
/// (First-interval persistence does not guarantee dominance, so it is not
/// enforced for that policy.)
pub fn compute_rpc(
    curves: &[RankCurve],
    ranks: &[usize],
    policy: IntervalPolicy,
) -> Result<RpcTable, MetricsError> {
    if curves.is_empty() {
        return Err(MetricsError::NoProbes);
    }
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(MetricsError::RankOutOfRange);
    }
    let mut ranks: Vec<usize> = ranks.to_vec();
    ranks.sort_unstable();
    ranks.dedup();

    let mut table = Vec::with_capacity(ranks.len());
    for &r in &ranks {
        let mut durations = Vec::new();
        let mut ever_count = 0;
        for curve in curves {
            let ever = curve.breakpoints.iter().any(|bp| bp.rank <= r);
            if ever {
                ever_count += 1;
                durations.push(persistence_duration(curve, r, policy)?);
            }
        }
        durations.sort_by(f64::total_cmp);
        table.push(RpcCurve { rank: r, durations, ever_count });
    }
    let table = RpcTable {
        curves: table,
        probe_count: curves.len(),
        interval_policy: policy,
    };
    table.verify()?;
    Ok(table)
}

impl RpcTable {
    /// Default rank set for RPC reports.
    pub const DEFAULT_RANKS: [usize; 5] = [1, 5, 10, 20, 50];

    /// Check the structural laws this table must satisfy.
    fn verify(&self) -> Result<(), MetricsError> {
        for c in &self.curves {
            let rows = self.breakpoints_for(c);
            for pair in rows.windows(2) {
                if pair[1].1 > pair[0].1 {
                    return Err(MetricsError::StructuralViolation(format!(
                        "rank {} fraction increases from {} to {} at d={}",
                        c.rank, pair[0].1, pair[1].1, pair[1].0
                    )));
                }
            }
        }
        if self.interval_policy == IntervalPolicy::Longest {
            for pair in self.curves.windows(2) {
                let (lo, hi) = (&pair[0], &pair[1]);
                let mut ds: Vec<f64> = lo.durations.iter().chain(&hi.durations).copied().collect();
                ds.push(0.0);
                for d in ds {
                    if hi.fraction_at(d, self.probe_count) < lo.fraction_at(d, self.probe_count) {
                        return Err(MetricsError::StructuralViolation(format!(
                            "rank {} does not dominate rank {} at d={d}",
                            hi.rank, lo.rank
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn breakpoints_for(&self, curve: &RpcCurve) -> Vec<(f64, f64)> {
        curve.breakpoints(self.probe_count)
    }

    pub fn fraction_at(&self, rank: usize, d: f64) -> Option<f64> {
        self.curves
            .iter()
            .find(|c| c.rank == rank)
            .map(|c| c.fraction_at(d, self.probe_count))
    }
}

/// Cumulative match characteristic: fraction of probes whose final batch
/// rank is at or below k, for k = 1..=k_max.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    values: Vec<f64>,
}

impl CmcCurve {
    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn k_max(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// CMC over final batch ranks. Probes reported absent count in the
/// denominator and never in the numerator.
pub fn compute_cmc(
    final_ranks: &BTreeMap<String, Option<RankValue>>,
    k_max: usize,
) -> Result<CmcCurve, MetricsError> {
    if final_ranks.is_empty() {
        return Err(MetricsError::NoProbes);
    }
    if k_max < 1 {
        return Err(MetricsError::KMaxOutOfRange);
    }
    let total = final_ranks.len() as f64;
    let mut hits_at = vec![0usize; k_max + 1];
    for rank in final_ranks.values().flatten() {
        if rank.rank <= k_max {
            hits_at[rank.rank] += 1;
        }
    }
    let mut values = Vec::with_capacity(k_max);
    let mut cumulative = 0usize;
    for &hits in &hits_at[1..] {
        cumulative += hits;
        values.push(cumulative as f64 / total);
    }
    Ok(CmcCurve { values })
}

/// Mean average precision result, with the count of probes that had to be
/// skipped for lack of any ground-truth match in the gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub mean_average_precision: f64,
    pub probes_evaluated: usize,
    pub probes_skipped: usize,
}

/// Mean average precision against the complete final gallery.
///
/// Per probe, every candidate present at `video_end` (minus the probe's own
/// tracklet) is ranked by score; ties between matches and non-matches follow
/// the tie policy, remaining ties break on tracklet id. AP averages, over
/// the probe's matches, the precision at each match's position.
pub fn compute_map(
    probes: &[ProbeSpec],
    timeline: &GalleryTimeline,
    manifest: &ScenarioManifest,
    provider: &ScoreProvider,
    tie_policy: TiePolicy,
) -> Result<MapResult, MetricsError> {
    if probes.is_empty() {
        return Err(MetricsError::NoProbes);
    }
    let index = manifest.tracklet_index();
    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;

    for probe in probes {
        let probe_idx = *index
            .get(probe.probe_tracklet.as_str())
            .ok_or_else(|| EngineError::UnknownTracklet {
                id: probe.probe_tracklet.clone(),
            })?;
        let mut match_set = std::collections::HashSet::new();
        for id in &probe.ground_truth_matches {
            let i = *index
                .get(id.as_str())
                .ok_or_else(|| EngineError::UnknownTracklet { id: id.clone() })?;
            match_set.insert(i);
        }
        match_set.remove(&probe_idx);
        let n_matches = timeline
            .events()
            .iter()
            .filter(|ev| match_set.contains(&ev.tracklet))
            .count();
        if n_matches == 0 {
            skipped += 1;
            continue;
        }
        let probe_tracklet = &manifest.tracklets[probe_idx];
        let mut ranked: Vec<(f64, bool, &str)> = Vec::with_capacity(timeline.len());
        for ev in timeline.events() {
            if ev.tracklet == probe_idx {
                continue;
            }
            let candidate = &manifest.tracklets[ev.tracklet];
            let score = provider.score(probe_tracklet, candidate).map_err(EngineError::from)?;
            ranked.push((score, match_set.contains(&ev.tracklet), &candidate.tracklet_id));
        }
        ranked.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| match tie_policy {
                    // pessimistic: non-matches ahead of tied matches
                    TiePolicy::Pessimistic => a.1.cmp(&b.1),
                    TiePolicy::Optimistic => b.1.cmp(&a.1),
                })
                .then_with(|| a.2.cmp(b.2))
        });
        let mut seen_matches = 0usize;
        let mut precision_sum = 0.0;
        for (pos, &(_, is_match, _)) in ranked.iter().enumerate() {
            if is_match {
                seen_matches += 1;
                precision_sum += seen_matches as f64 / (pos + 1) as f64;
            }
        }
        ap_sum += precision_sum / n_matches as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(MetricsError::NoProbes);
    }
    Ok(MapResult {
        mean_average_precision: ap_sum / evaluated as f64,
        probes_evaluated: evaluated,
        probes_skipped: skipped,
    })
}

/// Arrivals-per-second measured over consecutive windows.
#[derive(Debug, Clone, PartialEq)]
pub struct VfdWindow {
    pub start: f64,
    pub length: f64,
    pub arrivals: usize,
    pub density: f64,
}

/// Video flow density series: windows of length `t0` tiling `[0, video_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VfdSeries {
    pub t0: f64,
    pub windows: Vec<VfdWindow>,
}

/// Count arrivals per window and divide by the window's true length. The
/// final window may be shorter than `t0` and, alone, includes its right
/// endpoint so an arrival exactly at `video_end` is not lost.
pub fn compute_vfd(
    timeline: &GalleryTimeline,
    t0: f64,
    video_end: f64,
) -> Result<VfdSeries, MetricsError> {
    if t0 <= 0.0 || !t0.is_finite() {
        return Err(MetricsError::WindowOutOfRange(t0));
    }
    // a degenerate zero-length video still needs one window to hold any
    // events stamped at t = 0
    let n_windows = ((video_end / t0).ceil() as usize)
        .max(if timeline.is_empty() { 0 } else { 1 });
    let mut windows: Vec<VfdWindow> = (0..n_windows)
        .map(|k| {
            let start = k as f64 * t0;
            let end = ((k + 1) as f64 * t0).min(video_end);
            VfdWindow {
                start,
                length: end - start,
                arrivals: 0,
                density: 0.0,
            }
        })
        .collect();
    for ev in timeline.events() {
        let t = ev.arrival_time;
        let mut k = ((t / t0) as usize).min(n_windows.saturating_sub(1));
        // guard the index against float rounding in t / t0
        while k > 0 && t < windows[k].start {
            k -= 1;
        }
        while k + 1 < n_windows && t >= windows[k + 1].start {
            k += 1;
        }
        windows[k].arrivals += 1;
    }
    for w in &mut windows {
        w.density = if w.length > 0.0 {
            w.arrivals as f64 / w.length
        } else {
            0.0
        };
    }
    Ok(VfdSeries { t0, windows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{build_timeline, Breakpoint, EntryPolicy};
    use crate::model::{CameraFilter, Identity, ScoreSourceKind, Tracklet};
    use std::collections::HashMap;

    fn curve(probe: &str, domain_end: f64, points: &[(f64, usize)]) -> RankCurve {
        RankCurve {
            probe_id: probe.into(),
            breakpoints: points
                .iter()
                .map(|&(time, rank)| Breakpoint { time, rank, gallery_size: rank })
                .collect(),
            domain_start: points[0].0,
            domain_end,
        }
    }

    #[test]
    fn persistence_whole_domain() {
        let c = curve("p", 100.0, &[(10.0, 1)]);
        assert_eq!(persistence_duration(&c, 1, IntervalPolicy::Longest).unwrap(), 90.0);
    }

    #[test]
    fn persistence_zero_when_never_reached() {
        let c = curve("p", 100.0, &[(10.0, 5), (20.0, 9)]);
        assert_eq!(persistence_duration(&c, 2, IntervalPolicy::Longest).unwrap(), 0.0);
    }

    #[test]
    fn persistence_takes_longest_of_multiple_dips() {
        // <= r on [5, 20] and on [50, 60]: lengths 15 and 10
        let c = curve("p", 100.0, &[(5.0, 1), (20.0, 4), (50.0, 2), (60.0, 7)]);
        let longest = persistence_duration(&c, 2, IntervalPolicy::Longest).unwrap();
        let first = persistence_duration(&c, 2, IntervalPolicy::First).unwrap();
        assert_eq!(longest, 15.0);
        assert_eq!(first, 15.0);
        // first-interval differs when the earlier dip is the shorter one
        let c2 = curve("p", 100.0, &[(5.0, 1), (10.0, 4), (50.0, 2), (80.0, 7)]);
        assert_eq!(persistence_duration(&c2, 2, IntervalPolicy::Longest).unwrap(), 30.0);
        assert_eq!(persistence_duration(&c2, 2, IntervalPolicy::First).unwrap(), 5.0);
    }

    #[test]
    fn persistence_rejects_rank_zero() {
        let c = curve("p", 100.0, &[(10.0, 1)]);
        assert!(persistence_duration(&c, 0, IntervalPolicy::Longest).is_err());
    }

    #[test]
    fn rpc_three_probe_hand_enumeration() {
        // persistence durations 5, 10, 20 at r = 1
        let curves = vec![
            curve("p1", 100.0, &[(0.0, 1), (5.0, 9)]),
            curve("p2", 100.0, &[(0.0, 1), (10.0, 9)]),
            curve("p3", 100.0, &[(0.0, 1), (20.0, 9)]),
        ];
        let table = compute_rpc(&curves, &[1], IntervalPolicy::Longest).unwrap();
        assert_eq!(table.fraction_at(1, 0.0), Some(1.0));
        assert_eq!(table.fraction_at(1, 7.0), Some(2.0 / 3.0));
        assert_eq!(table.fraction_at(1, 15.0), Some(1.0 / 3.0));
        assert_eq!(table.fraction_at(1, 25.0), Some(0.0));
        // closed comparison at an exact duration
        assert_eq!(table.fraction_at(1, 10.0), Some(2.0 / 3.0));
        let rows = table.breakpoints_for(&table.curves[0]);
        assert_eq!(rows, vec![(0.0, 1.0), (5.0, 2.0 / 3.0), (10.0, 1.0 / 3.0), (20.0, 0.0)]);
    }

    #[test]
    fn rpc_constant_when_all_probes_persist() {
        let curves = vec![
            curve("p1", 100.0, &[(10.0, 1)]),
            curve("p2", 100.0, &[(40.0, 1)]),
        ];
        let table = compute_rpc(&curves, &[1], IntervalPolicy::Longest).unwrap();
        // shortest domain length is 60; everyone persists up to there
        assert_eq!(table.fraction_at(1, 60.0), Some(1.0));
        assert_eq!(table.fraction_at(1, 60.1), Some(0.5));
        assert_eq!(table.fraction_at(1, 90.0), Some(0.5));
        assert_eq!(table.fraction_at(1, 90.1), Some(0.0));
    }

    #[test]
    fn rpc_rejects_empty_inputs() {
        assert!(matches!(
            compute_rpc(&[], &[1], IntervalPolicy::Longest),
            Err(MetricsError::NoProbes)
        ));
        let c = vec![curve("p", 10.0, &[(0.0, 1)])];
        assert!(compute_rpc(&c, &[], IntervalPolicy::Longest).is_err());
        assert!(compute_rpc(&c, &[0], IntervalPolicy::Longest).is_err());
    }

    #[test]
    fn rpc_fractions_are_exact_multiples() {
        let curves = vec![
            curve("p1", 100.0, &[(0.0, 2), (30.0, 6)]),
            curve("p2", 100.0, &[(10.0, 1)]),
            curve("p3", 100.0, &[(20.0, 11)]),
        ];
        let table = compute_rpc(&curves, &[1, 5, 10], IntervalPolicy::Longest).unwrap();
        for c in &table.curves {
            for (_, f) in table.breakpoints_for(c) {
                let k = (f * 3.0).round();
                assert_eq!(f, k / 3.0);
            }
        }
    }

    #[test]
    fn cmc_all_rank_one_is_constant_one() {
        let mut ranks = BTreeMap::new();
        for i in 0..4 {
            ranks.insert(format!("p{i}"), Some(RankValue { rank: 1, gallery_size: 9 }));
        }
        let cmc = compute_cmc(&ranks, 5).unwrap();
        assert!(cmc.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cmc_two_probe_hand_case() {
        let mut ranks = BTreeMap::new();
        ranks.insert("a".to_string(), Some(RankValue { rank: 1, gallery_size: 5 }));
        ranks.insert("b".to_string(), Some(RankValue { rank: 3, gallery_size: 5 }));
        let cmc = compute_cmc(&ranks, 3).unwrap();
        assert_eq!(cmc.at(1), 0.5);
        assert_eq!(cmc.at(2), 0.5);
        assert_eq!(cmc.at(3), 1.0);
    }

    #[test]
    fn cmc_absent_probes_stay_in_denominator() {
        let mut ranks = BTreeMap::new();
        ranks.insert("a".to_string(), Some(RankValue { rank: 1, gallery_size: 5 }));
        ranks.insert("b".to_string(), None);
        let cmc = compute_cmc(&ranks, 5).unwrap();
        assert_eq!(cmc.at(5), 0.5);
    }

    #[test]
    fn cmc_rejects_empty() {
        assert!(compute_cmc(&BTreeMap::new(), 3).is_err());
    }

    fn map_world(
        candidates: &[(&str, bool, f64)],
    ) -> (ScenarioManifest, ScoreProvider, Vec<ProbeSpec>) {
        let mut identities = vec![Identity { id: "q".into(), is_actor: true }];
        let mut tracklets = vec![Tracklet {
            tracklet_id: "probe".into(),
            identity_id: "q".into(),
            camera_id: 1,
            start_time: 0.0,
            end_time: 0.5,
            descriptor_ref: None,
        }];
        let mut entries = HashMap::new();
        let mut matches = Vec::new();
        for (i, &(id, is_match, score)) in candidates.iter().enumerate() {
            let ident = if is_match { "q".to_string() } else { format!("x{i}") };
            if !is_match {
                identities.push(Identity { id: ident.clone(), is_actor: false });
            }
            tracklets.push(Tracklet {
                tracklet_id: id.into(),
                identity_id: ident,
                camera_id: 1,
                start_time: 1.0 + i as f64,
                end_time: 2.0 + i as f64,
                descriptor_ref: None,
            });
            entries.insert(("probe".to_string(), id.to_string()), score);
            if is_match {
                matches.push(id.to_string());
            }
        }
        let manifest = ScenarioManifest {
            identities,
            tracklets,
            video_end: 100.0,
            score_source: ScoreSourceKind::DistanceTable,
            feature_dim: None,
        };
        let probes = vec![ProbeSpec {
            probe_tracklet: "probe".into(),
            gallery_camera: CameraFilter::All,
            ground_truth_matches: matches,
        }];
        (manifest, ScoreProvider::distance_table(entries), probes)
    }

    #[test]
    fn map_single_match_at_rank_one() {
        let (manifest, provider, probes) = map_world(&[("m", true, 0.1), ("n", false, 0.9)]);
        let tl = build_timeline(&manifest, CameraFilter::All, EntryPolicy::AtEnd);
        let r = compute_map(&probes, &tl, &manifest, &provider, TiePolicy::Pessimistic).unwrap();
        assert_eq!(r.mean_average_precision, 1.0);
    }

    #[test]
    fn map_two_matches_textbook_case() {
        // matches land at positions 1 and 3: AP = (1/1 + 2/3) / 2 = 5/6
        let (manifest, provider, probes) = map_world(&[
            ("m1", true, 0.1),
            ("n1", false, 0.2),
            ("m2", true, 0.3),
            ("n2", false, 0.4),
        ]);
        let tl = build_timeline(&manifest, CameraFilter::All, EntryPolicy::AtEnd);
        let r = compute_map(&probes, &tl, &manifest, &provider, TiePolicy::Pessimistic).unwrap();
        assert!((r.mean_average_precision - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn map_matches_pairwise_counting_oracle() {
        // independent oracle: each match's position computed by pairwise
        // comparison counts instead of sorting
        let scores = [
            ("c0", false, 0.84), ("c1", true, 0.31), ("c2", false, 0.27),
            ("c3", false, 0.31), ("c4", true, 0.55), ("c5", false, 0.09),
            ("c6", true, 0.77), ("c7", false, 0.55), ("c8", false, 0.41),
        ];
        let (manifest, provider, probes) = map_world(&scores);
        let tl = build_timeline(&manifest, CameraFilter::All, EntryPolicy::AtEnd);
        let got = compute_map(&probes, &tl, &manifest, &provider, TiePolicy::Pessimistic)
            .unwrap()
            .mean_average_precision;

        let matches: Vec<(f64, &str)> = scores
            .iter()
            .filter(|&&(_, m, _)| m)
            .map(|&(id, _, s)| (s, id))
            .collect();
        let mut positions: Vec<usize> = matches
            .iter()
            .map(|&(ms, mid)| {
                let mut ahead = 0;
                for &(id, is_match, s) in &scores {
                    if id == mid {
                        continue;
                    }
                    let before = s < ms
                        || (s == ms && !is_match) // pessimistic tie
                        || (s == ms && is_match && id < mid);
                    if before {
                        ahead += 1;
                    }
                }
                ahead + 1
            })
            .collect();
        positions.sort_unstable();
        let expected: f64 = positions
            .iter()
            .enumerate()
            .map(|(j, &p)| (j + 1) as f64 / p as f64)
            .sum::<f64>()
            / positions.len() as f64;
        assert!((got - expected).abs() < 1e-12, "got {got}, expected {expected}");
    }

    #[test]
    fn map_skips_probes_without_matches() {
        let (manifest, provider, mut probes) = map_world(&[("m", true, 0.1)]);
        probes.push(ProbeSpec {
            probe_tracklet: "m".into(),
            gallery_camera: CameraFilter::All,
            ground_truth_matches: vec![],
        });
        let tl = build_timeline(&manifest, CameraFilter::All, EntryPolicy::AtEnd);
        let r = compute_map(&probes, &tl, &manifest, &provider, TiePolicy::Pessimistic);
        // second probe has no table entries, but is skipped before scoring
        // would even matter only if matches existed; it must not be dropped
        // silently from the metadata
        let r = r.unwrap();
        assert_eq!(r.probes_evaluated, 1);
        assert_eq!(r.probes_skipped, 1);
    }

    fn vfd_manifest(ends: &[f64], video_end: f64) -> ScenarioManifest {
        ScenarioManifest {
            identities: vec![Identity { id: "x".into(), is_actor: false }],
            tracklets: ends
                .iter()
                .enumerate()
                .map(|(i, &end)| Tracklet {
                    tracklet_id: format!("t{i}"),
                    identity_id: "x".into(),
                    camera_id: 1,
                    start_time: (end - 0.5).max(0.0),
                    end_time: end,
                    descriptor_ref: None,
                })
                .collect(),
            video_end,
            score_source: ScoreSourceKind::DistanceTable,
            feature_dim: None,
        }
    }

    #[test]
    fn vfd_empty_window_is_zero() {
        let m = vfd_manifest(&[15.0], 30.0);
        let tl = build_timeline(&m, CameraFilter::All, EntryPolicy::AtEnd);
        let series = compute_vfd(&tl, 10.0, 30.0).unwrap();
        assert_eq!(series.windows[0].density, 0.0);
        assert_eq!(series.windows[1].density, 0.1);
        assert_eq!(series.windows[2].density, 0.0);
    }

    #[test]
    fn vfd_five_arrivals_in_ten_seconds() {
        let m = vfd_manifest(&[1.0, 2.0, 3.5, 7.0, 9.9], 10.0);
        let tl = build_timeline(&m, CameraFilter::All, EntryPolicy::AtEnd);
        let series = compute_vfd(&tl, 10.0, 10.0).unwrap();
        assert_eq!(series.windows.len(), 1);
        assert_eq!(series.windows[0].density, 0.5);
    }

    #[test]
    fn vfd_conserves_event_count() {
        let ends: Vec<f64> = (0..37).map(|i| (i * i % 97) as f64).collect();
        let m = vfd_manifest(&ends, 100.0);
        let tl = build_timeline(&m, CameraFilter::All, EntryPolicy::AtEnd);
        for t0 in [1.0, 10.0, 37.0] {
            let series = compute_vfd(&tl, t0, 100.0).unwrap();
            let recovered: f64 = series.windows.iter().map(|w| w.density * w.length).sum();
            assert!((recovered - tl.len() as f64).abs() < 1e-9, "t0={t0}");
            // window starts tile [0, video_end] without overlap
            for (k, w) in series.windows.iter().enumerate() {
                assert_eq!(w.start, k as f64 * t0);
            }
        }
    }

    #[test]
    fn vfd_counts_arrival_exactly_at_video_end() {
        let m = vfd_manifest(&[100.0], 100.0);
        let tl = build_timeline(&m, CameraFilter::All, EntryPolicy::AtEnd);
        let series = compute_vfd(&tl, 10.0, 100.0).unwrap();
        assert_eq!(series.windows.last().unwrap().arrivals, 1);
    }

    #[test]
    fn vfd_handles_zero_length_video() {
        let m = vfd_manifest(&[0.0], 0.0);
        let tl = build_timeline(&m, CameraFilter::All, EntryPolicy::AtEnd);
        let series = compute_vfd(&tl, 10.0, 0.0).unwrap();
        assert_eq!(series.windows.len(), 1);
        assert_eq!(series.windows[0].arrivals, 1);
        assert_eq!(series.windows[0].density, 0.0); // zero-length window

        let empty = vfd_manifest(&[], 0.0);
        let tl = build_timeline(&empty, CameraFilter::All, EntryPolicy::AtEnd);
        assert!(compute_vfd(&tl, 10.0, 0.0).unwrap().windows.is_empty());
    }

    #[test]
    fn vfd_rejects_bad_window() {
        let m = vfd_manifest(&[1.0], 10.0);
        let tl = build_timeline(&m, CameraFilter::All, EntryPolicy::AtEnd);
        assert!(compute_vfd(&tl, 0.0, 10.0).is_err());
        assert!(compute_vfd(&tl, -1.0, 10.0).is_err());
    }
}
