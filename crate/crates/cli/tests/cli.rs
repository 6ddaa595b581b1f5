//! The binary end to end: exit codes, report shape, spec command examples.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vtforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtforge"))
        .args(args)
        .env_remove("VTFORGE_SEED")
        .output()
        .unwrap()
}

fn report(o: &Output) -> Value {
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "one JSON document: {text}");
    serde_json::from_str(&text).unwrap()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn self_evaluation_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let o = vtforge(&["gen-scene", "--out", &s(&scene), "--frames", "4", "--motion", "zoom:0.01", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let g = s(&scene.join("annotations.jsonl"));
    let o = vtforge(&["eval-track", "--gt", &g, "--pred", &g]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    for key in ["mota", "motp", "idf1", "precision", "recall", "fmeasure"] {
        assert_eq!(r["aggregate"][key], 100.0, "{key}");
    }
    assert_eq!(r["exit_status"], 0);
    assert!(r["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["config"].as_object().unwrap().len(), 40);
}

#[test]
fn translate_pipeline_closes() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, prod) = (dir.path().join("scene"), dir.path().join("prod"));
    let o = vtforge(&["gen-scene", "--motion", "translate:3,-2", "--frames", "5", "--out", &s(&scene)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = vtforge(&["synth-flow", "--input", &s(&scene), "--out", &s(&prod)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    let syn = &r["videos"][0]["synthesis"];
    assert_eq!(syn["frames"], 5);
    assert!(syn["instances"].as_u64().unwrap() > 0);

    let o = vtforge(&["eval-det", "--gt", &s(&scene), "--pred", &s(&prod), "--iou", "0.5"]);
    let r = report(&o);
    assert_eq!(r["aggregate"]["fmeasure"], 100.0);
    assert_eq!(r["aggregate"]["fn"], 0);

    // valid but unusual threshold runs; out-of-range is rejected
    assert_eq!(vtforge(&["eval-det", "--gt", &s(&scene), "--pred", &s(&prod), "--iou", "0.9"]).status.code(), Some(0));
    let o = vtforge(&["eval-det", "--gt", &s(&scene), "--pred", &s(&prod), "--iou", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&o);
    assert_eq!(r["error"]["kind"], "input");
    assert_eq!(r["exit_status"], 1);
}

#[test]
fn usage_errors_go_to_stderr() {
    for args in [vec!["frobnicate"], vec!["track", "--input", "x", "--nope"], vec![]] {
        let o = vtforge(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
        assert_eq!(report(&o)["error"]["kind"], "usage");
    }
}

#[test]
fn input_errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"video_id\":\"v\"\n").unwrap();
    let o = vtforge(&["eval-det", "--gt", &s(&bad), "--pred", &s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&o);
    assert!(r["error"]["message"].as_str().unwrap().contains("bad.jsonl:1"));

    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "placement.density = 2\nscene.colour = 1\n").unwrap();
    let o = vtforge(&["gen-scene", "--config", &s(&cfg), "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(report(&o)["error"]["message"].as_str().unwrap().contains("scene.colour"));

    let o = Command::new(env!("CARGO_BIN_EXE_vtforge"))
        .args(["gen-scene", "--out", &s(dir.path())])
        .env("VTFORGE_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_refuses_to_overwrite_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    vtforge(&["gen-scene", "--frames", "2", "--width", "160", "--height", "120", "--out", &s(&scene)]);
    let before = fs::read(scene.join("annotations.jsonl")).unwrap();
    let o = vtforge(&["synth-deform", "--input", &s(&scene), "--out", &s(&scene)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(fs::read(scene.join("annotations.jsonl")).unwrap(), before);
}

#[test]
fn multi_video_layout_and_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let (scenes, svg) = (dir.path().join("scenes"), dir.path().join("svg"));
    let o = vtforge(&[
        "gen-scene", "--videos", "2", "--frames", "3", "--width", "200", "--height", "150", "--out", &s(&scenes), "--jobs", "2",
    ]);
    let r = report(&o);
    assert_eq!(r["videos"].as_array().unwrap().len(), 2);
    assert!(scenes.join("video_001").join("seeds.jsonl").is_file());
    let o = vtforge(&["render-overlay", "--input", &s(&scenes), "--out", &s(&svg), "--width", "200", "--height", "150"]);
    assert_eq!(o.status.code(), Some(0));
    for v in ["video_000", "video_001"] {
        for k in 0..3 {
            let f = svg.join(v).join(format!("overlay_{k:06}.svg"));
            let text = fs::read_to_string(&f).unwrap();
            assert!(text.starts_with("<svg"), "{}", f.display());
        }
    }
}

#[test]
fn track_assigns_ids() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("det.jsonl");
    let line = |k: usize, x: f64| {
        format!(
            r#"{{"video_id":"d","frame_index":{k},"instances":[{{"id":9,"polygon":[[{x},10],[{},10],[{},30],[{x},30]],"transcription":"exit"}}]}}"#,
            x + 50.0,
            x + 50.0
        )
    };
    fs::write(&det, format!("{}\n{}\n{}\n", line(0, 10.0), line(1, 14.0), line(2, 18.0))).unwrap();
    let out = dir.path().join("tracked");
    let o = vtforge(&["track", "--input", &s(&det), "--out", &s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&o)["videos"][0]["synthesis"]["instances"], 1);
    let text = fs::read_to_string(out.join("annotations.jsonl")).unwrap();
    assert_eq!(text.matches("\"id\":1").count(), 3);
}

#[test]
fn match_reports_assignment_and_loss() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("m.json");
    fs::write(
        &input,
        r#"{"predictions":[{"class_prob":0.9,"box":[0.5,0.5,0.7,0.7]},{"class_prob":0.9,"box":[0.1,0.1,0.3,0.3]}],
            "ground_truth":[{"box":[0.1,0.1,0.3,0.3],"polygon":[[0.1,0.1],[0.3,0.1],[0.3,0.3],[0.1,0.3]],"transcription":"x"}]}"#,
    )
    .unwrap();
    let o = vtforge(&["match", "--input", &s(&input)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    let a = &r["result"]["assignment"];
    assert_eq!(a[0]["gt"], 0);
    assert_eq!(a[0]["pred"], 1);
    assert_eq!(a[1]["no_object"], true);
    assert_eq!(r["result"]["loss"]["missing_terms"], 1);

    fs::write(&input, r#"{"predictions":[],"ground_truth":[],"extra":1}"#).unwrap();
    assert_eq!(vtforge(&["match", "--input", &s(&input)]).status.code(), Some(1));
}
