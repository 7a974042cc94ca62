mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::fixture;
use scenelayout::vlm::{ENV_API_BASE, ENV_API_KEY, ENV_MODEL};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenelayout"))
        .args(args)
        .env_remove(ENV_API_BASE)
        .env_remove(ENV_API_KEY)
        .env_remove(ENV_MODEL)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn scenelayout")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bedroom(name: &str) -> PathBuf {
    fixture("bedroom").join(name)
}

fn layout_ids(path: &Path) -> Vec<String> {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["assets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["id"].as_str().unwrap().to_string())
        .collect()
}

fn generate(cache: &Path, out: &Path) -> Output {
    let instruction = format!("@{}", s(&bedroom("instruction.txt")));
    run(&[
        "generate",
        "--room",
        s(&bedroom("room.json")),
        "--inventory",
        s(&bedroom("inventory.json")),
        "--instruction",
        &instruction,
        "--mode",
        "replay",
        "--cache",
        s(cache),
        "--out",
        s(out),
    ])
}

#[test]
fn generate_replays_the_bedroom() {
    let out = tempfile::tempdir().unwrap();
    let o = generate(&bedroom("cache"), out.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut ids = layout_ids(&out.path().join("layout.json"));
    ids.sort();
    assert_eq!(ids.len(), 8);
    for f in [
        "scene.scene",
        "trace.json",
        "layout.svg",
        "run_report.json",
        "decode_group_0.json",
    ] {
        assert!(out.path().join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("run_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["network_attempts"], 0);
}

#[test]
fn missing_group_response_is_a_partial_failure() {
    let cache = tempfile::tempdir().unwrap();
    let mut removed = 0;
    for entry in std::fs::read_dir(bedroom("cache")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        if text.contains("desk_0.set_pose") {
            removed += 1;
        } else {
            std::fs::write(cache.path().join(path.file_name().unwrap()), text).unwrap();
        }
    }
    assert_eq!(removed, 1);
    let out = tempfile::tempdir().unwrap();
    let o = generate(cache.path(), out.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(
        stderr(&o).contains("not placed: desk_0, chair_0"),
        "{}",
        stderr(&o)
    );
    let ids = layout_ids(&out.path().join("layout.json"));
    assert_eq!(ids.len(), 6);
    assert!(ids.contains(&"bed_0".to_string()) && !ids.contains(&"desk_0".to_string()));
}

#[test]
fn missing_inputs_are_errors() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "optimize",
        s(&fixture("dining/dining.scene")),
        "--room",
        s(&fixture("dining/room.json")),
        "--inventory",
        "/nonexistent/inventory.json",
        "--out",
        s(out.path()),
    ]);
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("/nonexistent/inventory.json"),
        "{}",
        stderr(&o)
    );
    assert_eq!(code(&run(&["optimize"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
}

#[test]
fn optimize_writes_layout_and_trace() {
    let out = tempfile::tempdir().unwrap();
    let trace = out.path().join("elsewhere.json");
    let o = run(&[
        "optimize",
        s(&fixture("dining/dining.scene")),
        "--room",
        s(&fixture("dining/room.json")),
        "--inventory",
        s(&fixture("dining/inventory.json")),
        "--out",
        s(out.path()),
        "--trace",
        s(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("collision-free: true, in-boundary: true"));
    assert!(trace.exists() && !out.path().join("trace.json").exists());
    assert!(out.path().join("decode_report.json").exists());
}

#[test]
fn empty_program_gives_empty_layout() {
    let dir = tempfile::tempdir().unwrap();
    let program = dir.path().join("empty.scene");
    std::fs::write(&program, "").unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "optimize",
        s(&program),
        "--room",
        s(&fixture("dining/room.json")),
        "--inventory",
        s(&fixture("dining/inventory.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(layout_ids(&out.join("layout.json")).is_empty());
}

fn optimize_suite_scene(k: usize, out: &Path) {
    let dir = fixture(&format!("suite/scene_{k:02}"));
    let o = run(&[
        "optimize",
        s(&dir.join("program.scene")),
        "--room",
        s(&dir.join("room.json")),
        "--inventory",
        s(&dir.join("inventory.json")),
        "--out",
        s(out),
    ]);
    assert_eq!(code(&o), 0, "scene {k}: {}", stderr(&o));
}

#[test]
fn suite_layouts_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for k in [0, 5, 11] {
        let (a, b) = (
            tmp.path().join(format!("{k}a")),
            tmp.path().join(format!("{k}b")),
        );
        optimize_suite_scene(k, &a);
        optimize_suite_scene(k, &b);
        let (la, lb) = (
            std::fs::read(a.join("layout.json")).unwrap(),
            std::fs::read(b.join("layout.json")).unwrap(),
        );
        assert_eq!(la, lb, "scene {k}");
    }
}

fn write_layout(path: &Path, x: f64) {
    let layout = serde_json::json!({"assets": [{"id": "table_0", "pose": {"x": x, "y": 2.0, "z": 0.375, "rotation_deg": 0.0}}]});
    std::fs::write(path, layout.to_string()).unwrap();
}

#[test]
fn eval_reports_boundary_violations() {
    let dir = tempfile::tempdir().unwrap();
    let (inside, outside) = (dir.path().join("in.json"), dir.path().join("out.json"));
    write_layout(&inside, 2.0);
    write_layout(&outside, -0.2);
    let (room, inv) = (
        fixture("dining/room.json"),
        fixture("dining/inventory.json"),
    );
    let o = run(&[
        "eval",
        s(&outside),
        "--room",
        s(&room),
        "--inventory",
        s(&inv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let score: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(score["in_boundary"], false);
    assert_eq!(score["violations"][0]["kind"], "out_of_bounds");

    let csv = dir.path().join("suite.csv");
    let o = run(&[
        "eval",
        s(&inside),
        s(&outside),
        "--room",
        s(&room),
        "--inventory",
        s(&inv),
        "--csv",
        s(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["ib_percent"], 50.0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn judge_without_endpoint_still_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let layout = dir.path().join("layout.json");
    write_layout(&layout, 2.0);
    let o = run(&[
        "eval",
        s(&layout),
        "--room",
        s(&fixture("dining/room.json")),
        "--inventory",
        s(&fixture("dining/inventory.json")),
        "--judge",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let score: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(score["collision_free"], true);
    assert!(score.get("judged").is_none());
    assert!(stderr(&o).contains("judge unavailable"), "{}", stderr(&o));
}

#[test]
fn render_writes_svg_and_png() {
    let dir = tempfile::tempdir().unwrap();
    let (room, inv) = (
        fixture("dining/room.json"),
        fixture("dining/inventory.json"),
    );
    let program = fixture("dining/dining.scene");
    let (svg, png) = (dir.path().join("top.svg"), dir.path().join("top.png"));
    for out in [&svg, &png] {
        let o = run(&[
            "render",
            s(&program),
            "--room",
            s(&room),
            "--inventory",
            s(&inv),
            "--out",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert_eq!(&std::fs::read(&png).unwrap()[..4], b"\x89PNG");
}

#[test]
fn replay_cache_ls_lists_entries() {
    let o = run(&["replay-cache", "ls", "--cache", s(&bedroom("cache"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 4);
    assert!(stdout.contains("image(s)"));
}
