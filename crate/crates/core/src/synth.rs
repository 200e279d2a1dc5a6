//! Seeded synthetic-scenario generation and the brute-force rank oracle.
//!
//! Generation is a pure function of its config: the PRNG is ChaCha8 with a
//! fixed stream discipline, uniforms come from the top 53 bits of each
//! `u64`, and Gaussians go through a rational inverse-CDF approximation.
//! No platform- or version-dependent sampling is involved, so the same
//! config yields the same bytes everywhere.
//!
//! Stream layout (all seeded from `config.seed`):
//!
//! * stream `0`                      — distractor arrival process and the
//!   per-arrival attributes (duration, camera, appearance noise)
//! * stream `1 + i`                  — actor `i`: base descriptor,
//!   reappearance count, per-appearance time/duration/camera/noise
//! * stream `1 + n_actors + j`       — distractor identity `j`'s base
//!   descriptor
//!
//! Actor draws never depend on the distractor configuration, so adding
//! distractors leaves every actor tracklet untouched.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::engine::{Breakpoint, EngineError, GalleryTimeline, RankCurve, TiePolicy};
use crate::model::{
    CameraFilter, Identity, ProbeSpec, ScenarioManifest, ScoreSourceKind, Tracklet,
};
use crate::scoring::{Descriptor, ScoreProvider};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("no probes possible: zero actors but reappearances were requested")]
    NoProbesPossible,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Distractor arrival process over the video.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalProcess {
    /// Homogeneous Poisson arrivals at `rate` persons/second.
    Homogeneous { rate: f64 },
    /// Piecewise-constant rates; each segment runs from its start to the
    /// next segment's start (the last one to the end of the video). The
    /// first segment must start at 0.
    Piecewise(Vec<RateSegment>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSegment {
    pub start: f64,
    pub rate: f64,
}

/// Everything that determines a synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_actors: usize,
    /// Size of the distractor identity pool. Arrival events cycle through
    /// the pool, so a small pool with many arrivals produces reappearing
    /// distractors; zero disables distractor arrivals entirely.
    pub n_distractors: usize,
    pub feature_dim: usize,
    /// Video length in seconds; also the manifest's `video_end`.
    pub video_length: f64,
    pub arrival: ArrivalProcess,
    /// Inclusive range of reappearance counts per actor, excluding the
    /// first appearance.
    pub reappearance_range: (usize, usize),
    /// Per-dimension Gaussian noise added to every appearance descriptor.
    pub appearance_noise_sigma: f64,
    pub n_cameras: u32,
}

/// Generated world: manifest, the feature store backing it, and one probe
/// per actor that reappears at least once.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub manifest: ScenarioManifest,
    /// Row `i` is the descriptor of tracklet `i`.
    pub features: Vec<Descriptor>,
    pub probes: Vec<ProbeSpec>,
}

impl SyntheticScenario {
    pub fn provider(&self) -> ScoreProvider {
        ScoreProvider::feature_l2(self.features.clone())
    }
}

/// One ChaCha8 substream with the crate's documented draw primitives.
struct Substream(ChaCha8Rng);

impl Substream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Substream(rng)
    }

    /// Uniform in [0, 1): top 53 bits of a u64.
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1), safe as an inverse-CDF argument.
    fn unit_open(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in [lo, hi], inclusive.
    fn uniform_int(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.0.next_u64() % (hi - lo + 1)
    }

    /// Standard normal via the inverse CDF.
    fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.unit_open())
    }

    fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.normal()).collect()
    }
}

/// Rational approximation of the standard normal inverse CDF (Acklam's
/// coefficients; relative error below 1.15e-9 on (0, 1)).
fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Tracklet durations, seconds: roughly one walk-through of a camera view.
const DURATION_RANGE: (f64, f64) = (2.0, 10.0);

fn validate_config(config: &SynthConfig) -> Result<(), SynthError> {
    if config.video_length <= 0.0 || !config.video_length.is_finite() {
        return Err(SynthError::InvalidConfig(format!(
            "video_length must be positive and finite, got {}",
            config.video_length
        )));
    }
    if config.feature_dim == 0 {
        return Err(SynthError::InvalidConfig("feature_dim must be >= 1".into()));
    }
    if config.n_cameras == 0 {
        return Err(SynthError::InvalidConfig("n_cameras must be >= 1".into()));
    }
    if config.reappearance_range.0 > config.reappearance_range.1 {
        return Err(SynthError::InvalidConfig(format!(
            "reappearance range [{}, {}] is empty",
            config.reappearance_range.0, config.reappearance_range.1
        )));
    }
    if config.appearance_noise_sigma < 0.0 || !config.appearance_noise_sigma.is_finite() {
        return Err(SynthError::InvalidConfig(
            "appearance_noise_sigma must be finite and >= 0".into(),
        ));
    }
    match &config.arrival {
        ArrivalProcess::Homogeneous { rate } => {
            if *rate < 0.0 || !rate.is_finite() {
                return Err(SynthError::InvalidConfig(format!(
                    "arrival rate must be finite and >= 0, got {rate}"
                )));
            }
        }
        ArrivalProcess::Piecewise(segments) => {
            if segments.is_empty() {
                return Err(SynthError::InvalidConfig("piecewise rates are empty".into()));
            }
            if segments[0].start != 0.0 {
                return Err(SynthError::InvalidConfig(
                    "first rate segment must start at 0".into(),
                ));
            }
            for pair in segments.windows(2) {
                if pair[1].start <= pair[0].start {
                    return Err(SynthError::InvalidConfig(
                        "rate segment starts must be strictly increasing".into(),
                    ));
                }
            }
            for s in segments {
                if s.rate < 0.0 || !s.rate.is_finite() || s.start >= config.video_length {
                    return Err(SynthError::InvalidConfig(format!(
                        "bad rate segment (start {}, rate {})",
                        s.start, s.rate
                    )));
                }
            }
        }
    }
    if config.n_actors == 0 && config.reappearance_range.0 >= 1 {
        return Err(SynthError::NoProbesPossible);
    }
    Ok(())
}

/// Draw one appearance's (start, end, camera) on a substream. The duration
/// draw is clamped so the tracklet always fits inside the video.
fn draw_appearance(stream: &mut Substream, video_length: f64, n_cameras: u32) -> (f64, f64, u32) {
    let start_unit = stream.unit();
    let duration = stream
        .uniform(DURATION_RANGE.0, DURATION_RANGE.1)
        .min(video_length);
    let camera = stream.uniform_int(1, n_cameras as u64) as u32;
    let start = start_unit * (video_length - duration);
    (start, start + duration, camera)
}

/// Generate a complete synthetic world. Deterministic in `config`.
pub fn generate_scenario(config: &SynthConfig) -> Result<SyntheticScenario, SynthError> {
    validate_config(config)?;
    let dim = config.feature_dim;
    let sigma = config.appearance_noise_sigma;

    let mut identities = Vec::new();
    let mut tracklets = Vec::new();
    let mut features = Vec::new();
    let mut probes = Vec::new();

    // Actors: one substream each.
    for i in 0..config.n_actors {
        let identity_id = format!("actor{i:03}");
        identities.push(Identity { id: identity_id.clone(), is_actor: true });
        let mut stream = Substream::new(config.seed, 1 + i as u64);
        let base = stream.normal_vec(dim);
        let reappearances = stream.uniform_int(
            config.reappearance_range.0 as u64,
            config.reappearance_range.1 as u64,
        ) as usize;

        let mut appearances = Vec::with_capacity(1 + reappearances);
        for draw_idx in 0..=reappearances {
            let (start, end, camera) = draw_appearance(&mut stream, config.video_length, config.n_cameras);
            let noise = stream.normal_vec(dim);
            appearances.push((start, end, camera, noise, draw_idx));
        }
        appearances.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.4.cmp(&b.4)));

        let mut ids = Vec::with_capacity(appearances.len());
        for (app_idx, (start, end, camera, noise, _)) in appearances.into_iter().enumerate() {
            let tracklet_id = format!("{identity_id}-a{app_idx}");
            let values: Vec<f64> = base
                .iter()
                .zip(&noise)
                .map(|(b, z)| b + sigma * z)
                .collect();
            features.push(Descriptor::new(values).expect("finite by construction"));
            tracklets.push(Tracklet {
                tracklet_id: tracklet_id.clone(),
                identity_id: identity_id.clone(),
                camera_id: camera,
                start_time: start,
                end_time: end,
                descriptor_ref: Some(tracklets.len()),
            });
            ids.push(tracklet_id);
        }
        if ids.len() > 1 {
            probes.push(ProbeSpec {
                probe_tracklet: ids[0].clone(),
                gallery_camera: CameraFilter::All,
                ground_truth_matches: ids[1..].to_vec(),
            });
        }
    }

    // Distractor bases: one substream per pool identity.
    let mut distractor_bases = Vec::with_capacity(config.n_distractors);
    for j in 0..config.n_distractors {
        let mut stream = Substream::new(config.seed, 1 + config.n_actors as u64 + j as u64);
        distractor_bases.push(stream.normal_vec(dim));
    }

    // Distractor arrivals on stream 0, cycling through the pool.
    if config.n_distractors > 0 {
        let mut stream = Substream::new(config.seed, 0);
        let mut appearance_counts = vec![0usize; config.n_distractors];
        let mut used = vec![false; config.n_distractors];
        let mut arrival_index = 0usize;
        let mut emit = |start: f64, stream: &mut Substream| {
            let j = arrival_index % config.n_distractors;
            arrival_index += 1;
            let duration = stream
                .uniform(DURATION_RANGE.0, DURATION_RANGE.1)
                .min(config.video_length);
            let camera = stream.uniform_int(1, config.n_cameras as u64) as u32;
            let noise = stream.normal_vec(dim);
            let identity_id = format!("ped{j:04}");
            let tracklet_id = format!("{identity_id}-a{}", appearance_counts[j]);
            appearance_counts[j] += 1;
            used[j] = true;
            let values: Vec<f64> = distractor_bases[j]
                .iter()
                .zip(&noise)
                .map(|(b, z)| b + sigma * z)
                .collect();
            features.push(Descriptor::new(values).expect("finite by construction"));
            tracklets.push(Tracklet {
                tracklet_id,
                identity_id,
                camera_id: camera,
                start_time: start,
                end_time: (start + duration).min(config.video_length),
                descriptor_ref: Some(tracklets.len()),
            });
        };
        let segments: Vec<(f64, f64, f64)> = match &config.arrival {
            ArrivalProcess::Homogeneous { rate } => {
                vec![(0.0, config.video_length, *rate)]
            }
            ArrivalProcess::Piecewise(segs) => segs
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let end = segs.get(k + 1).map_or(config.video_length, |n| n.start);
                    (s.start, end, s.rate)
                })
                .collect(),
        };
        for (seg_start, seg_end, rate) in segments {
            if rate <= 0.0 {
                continue;
            }
            let mut t = seg_start;
            loop {
                t += -(1.0 - stream.unit()).ln() / rate;
                if t >= seg_end {
                    break;
                }
                emit(t, &mut stream);
            }
        }
        for (j, was_used) in used.iter().enumerate() {
            if *was_used {
                identities.push(Identity { id: format!("ped{j:04}"), is_actor: false });
            }
        }
    }

    let manifest = ScenarioManifest {
        identities,
        tracklets,
        video_end: config.video_length,
        score_source: ScoreSourceKind::FeatureStore,
        feature_dim: Some(dim),
    };
    Ok(SyntheticScenario { manifest, features, probes })
}

/// Brute-force reference for [`crate::engine::stream_rank_curve`]: at every
/// event time, re-sort every score seen so far from scratch and read the
/// best match's position out of the sorted list. O(events x gallery log
/// gallery); intended for galleries up to a few hundred events.
pub fn oracle_rank_curve(
    probe: &ProbeSpec,
    timeline: &GalleryTimeline,
    manifest: &ScenarioManifest,
    provider: &ScoreProvider,
    tie_policy: TiePolicy,
) -> Result<RankCurve, EngineError> {
    let index = manifest.tracklet_index();
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
    if !timeline
        .events()
        .iter()
        .any(|ev| match_set.contains(&ev.tracklet))
    {
        return Err(EngineError::NoReappearance {
            probe_id: probe.probe_tracklet.clone(),
        });
    }
    let probe_tracklet = &manifest.tracklets[probe_idx];
    let mut scored: Vec<(f64, f64, bool)> = Vec::with_capacity(timeline.len());
    for ev in timeline.events() {
        if ev.tracklet == probe_idx {
            continue;
        }
        let candidate = &manifest.tracklets[ev.tracklet];
        let score = provider.score(probe_tracklet, candidate)?;
        scored.push((ev.arrival_time, score, match_set.contains(&ev.tracklet)));
    }

    let mut breakpoints: Vec<Breakpoint> = Vec::new();
    let mut i = 0;
    while i < scored.len() {
        let group_time = scored[i].0;
        while i < scored.len() && scored[i].0.total_cmp(&group_time).is_eq() {
            i += 1;
        }
        let present = &scored[..i];
        let mut sorted: Vec<(f64, bool)> = present.iter().map(|&(_, s, m)| (s, m)).collect();
        sorted.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then_with(|| match tie_policy {
                TiePolicy::Pessimistic => a.1.cmp(&b.1),
                TiePolicy::Optimistic => b.1.cmp(&a.1),
            })
        });
        if let Some(pos) = sorted.iter().position(|&(_, is_match)| is_match) {
            let rank = pos + 1;
            if breakpoints.last().map(|bp| bp.rank) != Some(rank) {
                breakpoints.push(Breakpoint {
                    time: group_time,
                    rank,
                    gallery_size: present.len(),
                });
            }
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
