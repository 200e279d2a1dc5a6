//! Detection ingestion: IoU-based linking of per-frame bounding boxes into
//! raw tracklets.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("detections are not sorted by (camera_id, frame_index) at record {position}")]
    Unsorted { position: usize },
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: line {line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
}

/// One detector output box in one frame of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub camera_id: u32,
    pub frame_index: u64,
    /// Pixel box (x, y, w, h); w and h must be positive.
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub detection_id: String,
}

/// A linked run of detections, with frame bounds converted to seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTracklet {
    pub label: usize,
    pub camera_id: u32,
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_time: f64,
    pub end_time: f64,
    pub detection_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutcome {
    pub tracklets: Vec<RawTracklet>,
    /// Degenerate boxes (non-positive or non-finite extent) dropped.
    pub skipped_degenerate: usize,
}

/// Pixel box as (x, y, w, h).
pub type Bbox = (f64, f64, f64, f64);

/// Intersection over union of two pixel boxes.
pub fn iou(a: Bbox, b: Bbox) -> f64 {
    let ix = (a.0 + a.2).min(b.0 + b.2) - a.0.max(b.0);
    let iy = (a.1 + a.3).min(b.1 + b.3) - a.1.max(b.1);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.2 * a.3 + b.2 * b.3 - inter;
    inter / union
}

/// Link detections into raw tracklets by IoU against recent boxes.
///
/// For each detection, the IoU is computed against every box from the
/// previous `lookback_frames` frames in the same camera (same-frame boxes
/// never link). The detection joins the tracklet of the box with the
/// largest IoU when that IoU reaches `iou_threshold`; otherwise it opens a
/// new tracklet. An exact IoU tie goes to the earliest candidate box.
///
/// Input must be sorted by (camera_id, frame_index); frame bounds convert
/// to seconds through `fps`.
pub fn link_detections(
    detections: &[DetectionRecord],
    iou_threshold: f64,
    lookback_frames: u64,
    fps: f64,
) -> Result<LinkOutcome, IngestError> {
    if fps <= 0.0 || !fps.is_finite() {
        return Err(IngestError::BadFps(fps));
    }
    let mut tracklets: Vec<RawTracklet> = Vec::new();
    let mut skipped = 0usize;
    // recent boxes of the current camera: (frame, box, tracklet index)
    let mut window: Vec<(u64, Bbox, usize)> = Vec::new();
    let mut current_camera: Option<u32> = None;
    let mut last_frame = 0u64;

    for (position, det) in detections.iter().enumerate() {
        if current_camera != Some(det.camera_id) {
            if let Some(cam) = current_camera {
                if det.camera_id < cam {
                    return Err(IngestError::Unsorted { position });
                }
            }
            current_camera = Some(det.camera_id);
            window.clear();
            last_frame = det.frame_index;
        } else if det.frame_index < last_frame {
            return Err(IngestError::Unsorted { position });
        } else {
            last_frame = det.frame_index;
        }

        let degenerate = !(det.w > 0.0 && det.h > 0.0)
            || !det.w.is_finite()
            || !det.h.is_finite()
            || !det.x.is_finite()
            || !det.y.is_finite();
        if degenerate {
            skipped += 1;
            continue;
        }
        let bbox = (det.x, det.y, det.w, det.h);

        window.retain(|&(frame, _, _)| det.frame_index - frame <= lookback_frames);
        let mut best: Option<(f64, usize)> = None;
        for &(frame, other, tracklet_idx) in &window {
            if frame == det.frame_index {
                continue; // same-frame boxes are other people
            }
            let value = iou(bbox, other);
            if best.is_none_or(|(b, _)| value > b) {
                best = Some((value, tracklet_idx));
            }
        }

        let assigned = match best {
            Some((value, tracklet_idx)) if value >= iou_threshold => {
                let t = &mut tracklets[tracklet_idx];
                t.end_frame = det.frame_index;
                t.end_time = det.frame_index as f64 / fps;
                t.detection_ids.push(det.detection_id.clone());
                tracklet_idx
            }
            _ => {
                let label = tracklets.len();
                tracklets.push(RawTracklet {
                    label,
                    camera_id: det.camera_id,
                    start_frame: det.frame_index,
                    end_frame: det.frame_index,
                    start_time: det.frame_index as f64 / fps,
                    end_time: det.frame_index as f64 / fps,
                    detection_ids: vec![det.detection_id.clone()],
                });
                label
            }
        };
        window.push((det.frame_index, bbox, assigned));
    }

    Ok(LinkOutcome { tracklets, skipped_degenerate: skipped })
}

/// Read detections from a CSV with header
/// `camera_id,frame_index,x,y,w,h,detection_id`.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>, IngestError> {
    const HEADER: &str = "camera_id,frame_index,x,y,w,h,detection_id";
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse = |line: usize, detail: String| IngestError::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == HEADER => {}
        other => return Err(parse(1, format!("expected header '{HEADER}', found {other:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse(line_no, format!("expected 7 fields, found {}", fields.len())));
        }
        let num = |idx: usize| -> Result<f64, IngestError> {
            fields[idx]
                .trim()
                .parse()
                .map_err(|e| parse(line_no, format!("bad number '{}': {e}", fields[idx])))
        };
        out.push(DetectionRecord {
            camera_id: fields[0]
                .trim()
                .parse()
                .map_err(|e| parse(line_no, format!("bad camera_id '{}': {e}", fields[0])))?,
            frame_index: fields[1]
                .trim()
                .parse()
                .map_err(|e| parse(line_no, format!("bad frame_index '{}': {e}", fields[1])))?,
            x: num(2)?,
            y: num(3)?,
            w: num(4)?,
            h: num(5)?,
            detection_id: fields[6].to_string(),
        });
    }
    Ok(out)
}
