use std::path::Path;
use std::process::{Command, Output};

use vjamp::netpbm::{decode, encode_pgm};
use vjamp::synth::{face_scene, rng};
use vjamp::vjc::serialize_cascade;
use vjamp_core::{Cascade, HaarFeature, Stage, WeakClassifier, WeightedRect};

fn vjamp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vjamp"))
        .args(args)
        .current_dir(dir)
        .env_remove("VJ_THREADS")
        .output()
        .expect("binary runs")
}

/// Accepts windows whose left half is darker than the right half. Flat
/// windows are never below a threshold, so they are rejected.
fn edge_cascade() -> Cascade {
    let f = HaarFeature::two(WeightedRect::new(0, 0, 12, 24, 1), WeightedRect::new(12, 0, 12, 24, -1));
    let w = WeakClassifier {
        feature: f,
        threshold: -100,
        left: 4096,
        right: 0,
    };
    Cascade::new(24, 24, vec![Stage { weak: vec![w], threshold: 4096 }]).unwrap()
}

fn setup(dir: &Path) {
    std::fs::write(dir.join("c.vjc"), serialize_cascade(&edge_cascade())).unwrap();
    std::fs::write(dir.join("blank.pgm"), encode_pgm(&vjamp_core::GrayImage::filled(64, 48, 128))).unwrap();
    let (scene, _) = face_scene(&mut rng(3), 96, 72, 30, 50);
    std::fs::write(dir.join("scene.pgm"), encode_pgm(&scene)).unwrap();
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn blank_image_has_no_detections() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let v = json(&vjamp(&["detect", "--cascade", "c.vjc", "--image", "blank.pgm"], d.path()));
    assert_eq!(v["detections"], serde_json::json!([]));
    assert_eq!(v["width"], 64);
    assert!(v["windows_scanned"].as_u64().unwrap() > 0);
}

#[test]
fn worker_count_only_changes_timing() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let run = |w: &str| {
        let mut v = json(&vjamp(&["detect", "--cascade", "c.vjc", "--image", "scene.pgm", "--workers", w], d.path()));
        v.as_object_mut().unwrap().remove("elapsed_s");
        v
    };
    let one = run("1");
    assert!(!one["detections"].as_array().unwrap().is_empty());
    assert_eq!(one, run("4"));
}

#[test]
fn annotate_and_jsonl_outputs() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let out = vjamp(
        &["detect", "--cascade", "c.vjc", "--image", "scene.pgm", "--annotate", "a.ppm", "--jsonl", "d.jsonl", "--json", "r.json"],
        d.path(),
    );
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let img = decode(&std::fs::read(d.path().join("a.ppm")).unwrap()).unwrap();
    assert_eq!(img.dims(), (96, 72));
    assert!(std::fs::read(d.path().join("a.ppm")).unwrap().starts_with(b"P6"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("r.json")).unwrap()).unwrap();
    let lines = std::fs::read_to_string(d.path().join("d.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), report["detections"].as_array().unwrap().len());
    for l in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["w"].as_u64().unwrap() >= 24);
    }
}

#[test]
fn bad_inputs_exit_2() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    std::fs::write(d.path().join("bad.vjc"), "not a cascade\n").unwrap();
    for args in [
        &["detect", "--cascade", "missing.vjc", "--image", "blank.pgm"][..],
        &["detect", "--cascade", "bad.vjc", "--image", "blank.pgm"],
        &["detect", "--cascade", "c.vjc", "--image", "blank.pgm", "--scale", "1.0"],
        &["sim", "--platform", "no-such-board"],
        &["frobnicate"],
    ] {
        let out = vjamp(args, d.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn sim_rows_follow_policy_order() {
    let d = tempfile::tempdir().unwrap();
    let out = vjamp(&["sim", "--freqs", "2000,1500"], d.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(&rdr.headers().unwrap()[0], "policy");
    let rows: Vec<(String, String)> = rdr.records().map(|r| {
        let r = r.unwrap();
        (r[0].to_string(), r[1].to_string())
    }).collect();
    let policies = ["big_only_sequential", "fifo_asym", "all_cores_fifo", "botlev"];
    let expected: Vec<(String, String)> = ["2000", "1500"]
        .iter()
        .flat_map(|f| policies.iter().map(move |p| (p.to_string(), f.to_string())))
        .collect();
    assert_eq!(rows, expected);
    assert!(String::from_utf8_lossy(&out.stderr).contains("selected:"));
}

#[test]
fn training_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let gen = vjamp(
        &["gen-corpus", "--out", "g", "--n-pos", "40", "--n-neg", "80", "--n-backgrounds", "3", "--n-heldout", "10", "--n-scenes", "2"],
        d.path(),
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let train = |out: &str| {
        let o = vjamp(
            &["train", "--manifest", "g/train/manifest.txt", "--backgrounds", "g/backgrounds", "--neg-pool", "80", "--stages", "2", "--max-features", "300", "-o", out],
            d.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(d.path().join(out)).unwrap()
    };
    let a = train("a.vjc");
    assert_eq!(a, train("b.vjc"));
    let parsed = vjamp::vjc::parse_cascade(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(parsed.stages.len(), 2);
}
