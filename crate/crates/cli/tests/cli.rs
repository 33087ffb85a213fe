use std::path::Path;
use std::process::{Command, Output};

fn tfsep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfsep"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TFSEP_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &str = r#"
seed = 4

[synth]
pit_mixtures = 4
mom_records = 2
utterance_s = 0.6

[train]
steps = 20
"#;

#[test]
fn synth_train_pipeline_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();

    let out = ok(&tfsep(&["synth", "--config", "small.toml", "--out-dir", "data"], d));
    assert!(out.contains("wrote 4 mixtures"), "{out}");
    assert!(d.join("data/dataset.json").exists());

    ok(&tfsep(
        &[
            "train",
            "--config",
            "small.toml",
            "--dataset",
            "data/dataset.json",
            "--checkpoint",
            "model.json",
            "--out-dir",
            "train",
        ],
        d,
    ));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("train/loss_trace.json")).unwrap()).unwrap();
    assert_eq!(trace.as_array().unwrap().len(), 20);

    let manifest = "data/session_000/manifest.json";
    ok(&tfsep(
        &[
            "separate",
            "--checkpoint",
            "model.json",
            "--manifest",
            manifest,
            "--out-dir",
            "sep",
        ],
        d,
    ));
    assert!(d.join("sep/session_000/utt_000_s1.wav").exists());

    let out = ok(&tfsep(
        &["select", "--checkpoint", "model.json", "--manifest", manifest],
        d,
    ));
    let sel: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(sel["session_000"]["choices"].as_object().unwrap().len(), 6);

    let out = ok(&tfsep(
        &[
            "pipeline",
            "--config",
            "small.toml",
            "--checkpoint",
            "model.json",
            "--manifest",
            manifest,
            "--out-dir",
            "run",
        ],
        d,
    ));
    assert!(out.contains("1 sessions, 6 utterances (0 failed)"), "{out}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["config"]["seed"], 4);

    let refs = "data/session_000/references.json";
    let out = ok(&tfsep(
        &["evaluate", "--hyp", refs, "--ref", refs, "--out", "eval.json"],
        d,
    ));
    assert!(out.contains("session_000\tcpWER-us 0.0000"), "{out}");
    assert!(d.join("eval.json").exists());
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tfsep"))
        .args(["synth", "--out-dir", "data"])
        .current_dir(dir.path())
        .env("TFSEP_CONFIG", "small.toml")
        .output()
        .unwrap();
    assert!(ok(&out).contains("wrote 4 mixtures"));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "seed = 1\n[train]\nstepz = 3\n").unwrap();
    let out = tfsep(&["synth", "--config", "bad.toml", "--out-dir", "x"], d);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: loading config bad.toml"), "{err}");
    assert!(err.contains("line 3"), "{err}");

    let out = tfsep(&["evaluate", "--hyp", "nope.json", "--ref", "nope.json"], d);
    assert_eq!(out.status.code(), Some(1));

    let out = tfsep(&["train", "--dataset", "missing.json", "--checkpoint", "m.json"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    // Usage errors come from the argument parser.
    assert_eq!(tfsep(&["synth"], d).status.code(), Some(2));
}
