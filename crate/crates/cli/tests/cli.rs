//! Command-line behavior: exit codes, overrides and help.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vad"))
        .current_dir(dir)
        .env_remove("VAD_THREADS")
        .args(args)
        .output()
        .unwrap()
}

const SCENE: &str = r#"
width = 48
height = 40
seed = 2
noise = 1

[[lane]]
top = 4
bottom = 18
direction = "right"
speed = 2
spawn_every = 12
car = [8, 6]

[[video]]
name = "train"
num_frames = 16
seed = 1

[[video]]
name = "test"
num_frames = 16
seed = 2

[[video.actor]]
kind = "loiter"
size = [8, 8]
start = 3
x = 20
y = 26
"#;

fn synth(dir: &Path) {
    fs::write(dir.join("scene.toml"), SCENE).unwrap();
    let out = vad(dir, &["synth", "--spec", "scene.toml", "--out", "d"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_without_inputs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vad(dir.path(), &["eval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_subcommand_and_flag_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vad(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(vad(dir.path(), &["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        vad(dir.path(), &["eval", "--criteria", "pixels", "--truth", "x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        vad(dir.path(), &["--set", "T=seven", "synth", "--spec", "s", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_file_is_a_runtime_error_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = vad(
        dir.path(),
        &["detect", "--model", "absent.vadem", "--in", "d", "--out", "v.vadsv"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    let errors: Vec<&str> = err.lines().filter(|l| l.starts_with("error:")).collect();
    assert_eq!(errors.len(), 1);
    assert!(errors[0].contains("absent.vadem"));
}

#[test]
fn set_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    fs::write(
        dir.path().join("vad.conf"),
        "H = 8\nW = 8\ns = 8\nT = 4\nbg_init_frames = 4\n",
    )
    .unwrap();
    let out = vad(
        dir.path(),
        &[
            "train", "--config", "vad.conf", "--set", "T=7", "--in", "d/train", "--model", "m.vadem",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = fs::read(dir.path().join("m.vadem")).unwrap();
    let header = String::from_utf8_lossy(&model[..200.min(model.len())]).to_string();
    assert!(header.contains("\nT = 7\n"), "{header}");
    assert!(header.contains("\nH = 8\n"), "{header}");
}

#[test]
fn eval_writes_report_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = dir.path();
    let set = [
        "--set",
        "H=8",
        "--set",
        "W=8",
        "--set",
        "s=4",
        "--set",
        "bg_init_frames=4",
    ];
    let mut train = vec!["train", "--feature", "fg", "--in", "d/train", "--model", "m.vadem"];
    train.extend(set);
    assert!(vad(d, &train).status.success());
    assert!(vad(
        d,
        &["detect", "--model", "m.vadem", "--in", "d/test", "--out", "v.vadsv"]
    )
    .status
    .success());
    let out = vad(
        d,
        &[
            "eval",
            "--truth",
            "d/test/gt.csv",
            "--volume",
            "v.vadsv",
            "--criteria",
            "track,frame",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("criterion,threshold,fpr,rate"));
    assert!(text.lines().last().unwrap().starts_with("# auc_fpr_le_1,track="));
    assert!(text.lines().any(|l| l.starts_with("frame,")));
    assert!(!text.lines().any(|l| l.starts_with("region,")));
}

#[test]
fn threads_env_fallback_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.toml"), SCENE).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vad"))
        .current_dir(dir.path())
        .env("VAD_THREADS", "2")
        .args(["synth", "--spec", "scene.toml", "--out", "d"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("d/test/gt.csv").exists());
}

#[test]
fn help_documents_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = vad(dir.path(), &["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for word in [
        "synth",
        "train",
        "detect",
        "eval",
        "render",
        "--threads",
        "--set",
        "--config",
        "VAD_THREADS",
    ] {
        assert!(text.contains(word), "help lacks {word}");
    }
}
