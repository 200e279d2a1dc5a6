//! End-to-end tests of the `rankpersist` binary: exit codes, file outputs,
//! and byte-level determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rankpersist_cli::formats;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rankpersist"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

const SMALL_CONFIG: &str = r#"{
  "seed": 7,
  "n_actors": 4,
  "n_distractors": 60,
  "feature_dim": 8,
  "video_length": 500.0,
  "arrival": { "kind": "homogeneous", "rate": 0.25 },
  "reappearance_range": [1, 3],
  "noise_sigma": 0.5,
  "n_cameras": 2
}"#;

/// Simulate a small world into `dir/world` and return the manifest path.
fn simulate_world(dir: &Path) -> PathBuf {
    fs::write(dir.join("config.json"), SMALL_CONFIG).unwrap();
    let out = run(
        &["simulate", "--config", "config.json", "--out-dir", "world"],
        dir,
    );
    assert_success(&out);
    dir.join("world/manifest.json")
}

#[test]
fn golden_fixture_loads_and_round_trips_byte_identically() {
    let manifest_path = fixtures().join("golden/manifest.json");
    let original = fs::read(&manifest_path).unwrap();
    let (manifest, sidecar) = formats::read_manifest(&manifest_path).unwrap();
    assert_eq!(manifest.tracklets.len(), 3);
    let provider = formats::load_provider(&manifest, &sidecar).unwrap();
    drop(provider);

    let rel = match &sidecar {
        formats::SidecarRef::Features { relative, .. } => relative.clone(),
        other => panic!("expected feature sidecar, got {other:?}"),
    };
    let saved = formats::manifest_to_json(&manifest, &rel);
    assert_eq!(original, saved.into_bytes(), "manifest save is not byte-identical");

    let features_path = fixtures().join("golden/features.rpcf");
    let feature_bytes = fs::read(&features_path).unwrap();
    let features = formats::read_feature_store(&features_path).unwrap();
    assert_eq!(feature_bytes, formats::feature_store_bytes(&features));
}

#[test]
fn schema_flag_prints_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--schema"], dir.path());
    assert_success(&out);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["title"], "Scenario manifest");
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), SMALL_CONFIG).unwrap();
    for out_dir in ["a", "b"] {
        let out = run(
            &["simulate", "--config", "config.json", "--out-dir", out_dir],
            dir.path(),
        );
        assert_success(&out);
    }
    let manifest_a = fs::read(dir.path().join("a/manifest.json")).unwrap();
    let manifest_b = fs::read(dir.path().join("b/manifest.json")).unwrap();
    assert_eq!(manifest_a, manifest_b);
    let features_a = fs::read(dir.path().join("a/features.rpcf")).unwrap();
    let features_b = fs::read(dir.path().join("b/features.rpcf")).unwrap();
    assert_eq!(features_a, features_b);

    // and a seed override changes the bytes
    let out = run(
        &["simulate", "--config", "config.json", "--seed", "8", "--out-dir", "c"],
        dir.path(),
    );
    assert_success(&out);
    assert_ne!(manifest_a, fs::read(dir.path().join("c/manifest.json")).unwrap());
}

#[test]
fn rpc_emits_five_default_rank_step_functions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate_world(dir.path());
    let out = run(
        &["rpc", "--manifest", manifest.to_str().unwrap(), "--out-dir", "out"],
        dir.path(),
    );
    assert_success(&out);
    let csv = fs::read_to_string(dir.path().join("out/rpc.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rank,duration,fraction"));
    let mut ranks: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    ranks.dedup();
    assert_eq!(ranks, vec!["1", "5", "10", "20", "50"]);
}

#[test]
fn rpc_runs_are_byte_identical_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate_world(dir.path());
    let manifest = manifest.to_str().unwrap();
    for (out_dir, threads) in [("r1", "1"), ("r2", "1"), ("r4", "4"), ("r0", "0")] {
        let out = run(
            &[
                "rpc", "--manifest", manifest, "--out-dir", out_dir, "--threads", threads,
                "--grid", "50",
            ],
            dir.path(),
        );
        assert_success(&out);
    }
    let reference = fs::read(dir.path().join("r1/rpc.csv")).unwrap();
    for out_dir in ["r2", "r4", "r0"] {
        assert_eq!(
            reference,
            fs::read(dir.path().join(out_dir).join("rpc.csv")).unwrap(),
            "rpc.csv differs for {out_dir}"
        );
    }
    let grid = fs::read(dir.path().join("r1/rpc_grid.csv")).unwrap();
    assert_eq!(grid, fs::read(dir.path().join("r4/rpc_grid.csv")).unwrap());
}

#[test]
fn cmc_and_map_report_batch_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate_world(dir.path());
    let manifest = manifest.to_str().unwrap();

    let out = run(&["cmc", "--manifest", manifest, "--out-dir", "out"], dir.path());
    assert_success(&out);
    let csv = fs::read_to_string(dir.path().join("out/cmc.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,fraction"));
    let fractions: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(fractions.windows(2).all(|p| p[1] >= p[0]), "CMC must be non-decreasing");
    assert_eq!(*fractions.last().unwrap(), 1.0);

    let out = run(&["map", "--manifest", manifest], dir.path());
    assert_success(&out);
    let scalar: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&scalar), "mAP out of range: {scalar}");
    let meta: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("metadata record on stderr");
    assert_eq!(meta["probes_skipped_no_match"], 0);
}

#[test]
fn vfd_first_window_density_example() {
    // manifest with 5 events inside [0, 10): density 0.5 in the first row
    let dir = tempfile::tempdir().unwrap();
    let manifest = r#"{
  "video_end": 30.0,
  "score_source": { "kind": "distance_table", "path": "d.csv" },
  "identities": [ { "id": "x", "is_actor": false } ],
  "tracklets": [
    { "tracklet_id": "t0", "identity_id": "x", "camera_id": 1, "start_time": 0.0, "end_time": 1.0 },
    { "tracklet_id": "t1", "identity_id": "x", "camera_id": 1, "start_time": 0.0, "end_time": 3.0 },
    { "tracklet_id": "t2", "identity_id": "x", "camera_id": 1, "start_time": 0.0, "end_time": 5.5 },
    { "tracklet_id": "t3", "identity_id": "x", "camera_id": 1, "start_time": 0.0, "end_time": 7.0 },
    { "tracklet_id": "t4", "identity_id": "x", "camera_id": 1, "start_time": 0.0, "end_time": 9.9 },
    { "tracklet_id": "t5", "identity_id": "x", "camera_id": 1, "start_time": 0.0, "end_time": 25.0 }
  ]
}"#;
    fs::write(dir.path().join("m.json"), manifest).unwrap();
    fs::write(dir.path().join("d.csv"), "probe_tracklet_id,gallery_tracklet_id,distance\n").unwrap();
    let out = run(
        &["vfd", "--manifest", "m.json", "--t0", "10", "--out-dir", "."],
        dir.path(),
    );
    assert_success(&out);
    let csv = fs::read_to_string(dir.path().join("vfd.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "window_start,density");
    assert_eq!(lines[1], "0,0.5");
    assert_eq!(lines[2], "10,0");
    assert_eq!(lines[3], "20,0.1");
}

#[test]
fn verify_exits_zero_on_seeded_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--seed", "7", "--events", "2000"], dir.path());
    assert_success(&out);
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["result"], "engine and oracle agree");
    assert!(record["gallery_events"].as_u64().unwrap() > 1000);
}

#[test]
fn compare_single_method_matches_rpc_output() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = r#"{
  "video_end": 100.0,
  "score_source": { "kind": "distance_table", "path": "base.csv" },
  "identities": [
    { "id": "q", "is_actor": true },
    { "id": "x", "is_actor": false }
  ],
  "tracklets": [
    { "tracklet_id": "p0", "identity_id": "q", "camera_id": 1, "start_time": 0.0, "end_time": 2.0 },
    { "tracklet_id": "m1", "identity_id": "q", "camera_id": 1, "start_time": 10.0, "end_time": 14.0 },
    { "tracklet_id": "n1", "identity_id": "x", "camera_id": 1, "start_time": 20.0, "end_time": 26.0 }
  ]
}"#;
    fs::write(dir.path().join("m.json"), manifest).unwrap();
    let table = "probe_tracklet_id,gallery_tracklet_id,distance\np0,m1,0.2\np0,n1,0.1\n";
    fs::write(dir.path().join("base.csv"), table).unwrap();

    let out = run(
        &["rpc", "--manifest", "m.json", "--out-dir", "rpc_out"],
        dir.path(),
    );
    assert_success(&out);
    let out = run(
        &[
            "compare", "--manifest", "m.json", "--table", "base=base.csv", "--out-dir", "cmp_out",
        ],
        dir.path(),
    );
    assert_success(&out);
    assert_eq!(
        fs::read(dir.path().join("rpc_out/rpc.csv")).unwrap(),
        fs::read(dir.path().join("cmp_out/rpc_base.csv")).unwrap()
    );
    let summary = fs::read_to_string(dir.path().join("cmp_out/rpc_summary.csv")).unwrap();
    assert!(summary.starts_with("method,rank,duration,fraction\nbase,"));
}

#[test]
fn pairwise_camera_protocol_selects_cross_view_matches() {
    let dir = tempfile::tempdir().unwrap();
    // actor appears in camera 1 (probe) and twice in camera 2 (matches);
    // the camera-1 reappearance must stay out of the camera-2 gallery
    let manifest = r#"{
  "video_end": 200.0,
  "score_source": { "kind": "distance_table", "path": "d.csv" },
  "identities": [
    { "id": "a", "is_actor": true },
    { "id": "x", "is_actor": false }
  ],
  "tracklets": [
    { "tracklet_id": "a-c1-0", "identity_id": "a", "camera_id": 1, "start_time": 0.0, "end_time": 4.0 },
    { "tracklet_id": "a-c1-1", "identity_id": "a", "camera_id": 1, "start_time": 50.0, "end_time": 54.0 },
    { "tracklet_id": "a-c2-0", "identity_id": "a", "camera_id": 2, "start_time": 80.0, "end_time": 84.0 },
    { "tracklet_id": "a-c2-1", "identity_id": "a", "camera_id": 2, "start_time": 120.0, "end_time": 124.0 },
    { "tracklet_id": "x-c2-0", "identity_id": "x", "camera_id": 2, "start_time": 10.0, "end_time": 14.0 }
  ]
}"#;
    fs::write(dir.path().join("m.json"), manifest).unwrap();
    fs::write(
        dir.path().join("d.csv"),
        "probe_tracklet_id,gallery_tracklet_id,distance\n\
         a-c1-0,a-c2-0,0.3\n\
         a-c1-0,a-c2-1,0.1\n\
         a-c1-0,x-c2-0,0.2\n",
    )
    .unwrap();
    let out = run(
        &[
            "rank-curve", "--manifest", "m.json", "--probe-camera", "1", "--gallery-camera", "2",
            "--out-dir", "out",
        ],
        dir.path(),
    );
    assert_success(&out);
    let csv = fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
    // match a-c2-0 (0.3) arrives at 84 behind x-c2-0 (0.2): rank 2 of 2;
    // a-c2-1 (0.1) arrives at 124 and takes rank 1 of 3
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "a-c1-0,84,2,2");
    assert_eq!(lines[2], "a-c1-0,124,1,3");
    assert_eq!(lines.len(), 3);
}

#[test]
fn link_applies_the_documented_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("dets.csv"),
        "camera_id,frame_index,x,y,w,h,detection_id\n\
         1,0,0,0,10,10,d0\n\
         1,1,0,0,10,10,d1\n\
         1,2,50,0,10,10,d2\n\
         1,3,55,0,10,10,d3\n",
    )
    .unwrap();
    let out = run(
        &["link", "--detections", "dets.csv", "--out-dir", "."],
        dir.path(),
    );
    assert_success(&out);
    let csv = fs::read_to_string(dir.path().join("tracklets.csv")).unwrap();
    // d0+d1 link (IoU 1); d2 opens a new tracklet; d3 overlaps d2 at
    // IoU 1/3 < 0.4 so it opens another
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["rpc", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["rpc", "--manifest", "m.json", "--gallery-camera", "banana"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_one_with_machine_readable_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["rpc", "--manifest", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "io");

    fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let out = run(&["rpc", "--manifest", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "parse");

    // validation failure: tracklet past video_end
    let manifest = r#"{
  "video_end": 100.0,
  "score_source": { "kind": "distance_table", "path": "d.csv" },
  "identities": [ { "id": "x", "is_actor": false } ],
  "tracklets": [
    { "tracklet_id": "t0", "identity_id": "x", "camera_id": 1, "start_time": 0.0, "end_time": 120.0 }
  ]
}"#;
    fs::write(dir.path().join("invalid.json"), manifest).unwrap();
    fs::write(dir.path().join("d.csv"), "probe_tracklet_id,gallery_tracklet_id,distance\n").unwrap();
    let out = run(&["rpc", "--manifest", "invalid.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "validation");
    assert!(record["error"]["message"].as_str().unwrap().contains("video_end"));
}
