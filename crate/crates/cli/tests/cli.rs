use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn aerorecog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aerorecog"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = aerorecog(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).expect("stderr ends with JSON")
}

const SMALL: [&str; 10] = [
    "--targets",
    "2",
    "--bursts",
    "2",
    "--frames",
    "8",
    "--width",
    "320",
    "--height",
    "240",
];

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "diff_treshold = 0.1\n").unwrap();
    let out = aerorecog(&[
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("o")),
        "synth",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "ConfigInvalid");
}

#[test]
fn bad_manifest_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("seq.json");
    std::fs::write(&m, r#"{"id": "x", "frames": ["missing.png", "gone.png"]}"#).unwrap();
    let out = aerorecog(&["--out", s(&dir.path().join("o")), "detect", s(&m)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"], "ManifestInvalid");
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let mut args = vec!["--seed", "4", "--out", s(out), "synth"];
        args.extend(SMALL);
        ok(&args);
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.contains_key(Path::new("dataset.json")));
    assert!(ta.contains_key(Path::new("target-1-b1/frame_007.png")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{} differs", k.display());
    }
}

#[test]
fn stages_chain_through_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let syn = d.join("syn");
    let mut args = vec!["--out", s(&syn), "synth"];
    args.extend(SMALL);
    ok(&args);

    let views = |id: &str| -> PathBuf {
        let seq = d.join("syn").join(id).join("sequence.json");
        let tr = d.join("track").join(id);
        let au = d.join("augment").join(id);
        ok(&["--out", s(&tr), "track", s(&seq)]);
        ok(&["--out", s(&au), "augment", s(&tr.join("burst.json"))]);
        au.join("views.json")
    };

    let seq = d.join("syn/target-1-b1/sequence.json");
    ok(&["--out", s(&d.join("det")), "detect", s(&seq)]);
    let lines = std::fs::read_to_string(d.join("det/detections.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 8);
    let seed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("det/seed.json")).unwrap()).unwrap();
    assert!(seed["frame_index"].as_u64().is_some());
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("det/run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "detect");
    assert_eq!(run["inputs"].as_array().unwrap().len(), 9);

    let gallery = d.join("gallery");
    for t in ["target-1", "target-2"] {
        let v = views(&format!("{t}-b1"));
        ok(&[
            "--out",
            s(&d.join("enroll")),
            "enroll",
            "--gallery",
            s(&gallery),
            "--label",
            t,
            s(&v),
        ]);
    }
    let burst: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d.join("track/target-1-b1/burst.json")).unwrap(),
    )
    .unwrap();
    let n_templates = burst["templates"].as_array().unwrap().len();
    assert!(n_templates >= 2);
    assert!(d
        .join("augment/target-1-b1/views/template_000/view_350.png")
        .is_file());

    for t in ["target-1", "target-2"] {
        let v = views(&format!("{t}-b2"));
        let out = ok(&[
            "--out",
            s(&d.join("match")),
            "match",
            "--gallery",
            s(&gallery),
            s(&v),
        ]);
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), t);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join("match/match.json")).unwrap())
                .unwrap();
        assert_eq!(report["decision"], t);
    }
}

#[test]
fn detect_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "--out",
        s(&d.join("syn")),
        "synth",
        "--targets",
        "2",
        "--bursts",
        "1",
        "--frames",
        "5",
        "--width",
        "300",
        "--height",
        "220",
    ]);
    let seq = d.join("syn/target-2-b1/sequence.json");
    ok(&["--out", s(&d.join("a")), "detect", s(&seq)]);
    ok(&["--out", s(&d.join("b")), "detect", s(&seq)]);
    assert_eq!(tree(&d.join("a")), tree(&d.join("b")));
}
