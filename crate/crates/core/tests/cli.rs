//! The `eem` binary as a process: exit codes, streams and byte-stable output.

use std::process::Command;

fn eem(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_eem")).args(args).output().expect("binary runs")
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_1() {
    let out = eem(&["bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
}

#[test]
fn eval_without_checkpoint_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eem"))
        .current_dir(dir.path())
        .args(["eval", "--input", "eval.jsonl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("checkpoint.json"), "{err}");
}

#[test]
fn synth_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let out = eem(&["synth", "--n", "1000", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(p).unwrap()
    };
    let a = run("a.jsonl");
    assert_eq!(a, run("b.jsonl"));
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 1000);
    let manifest = std::fs::read_to_string(dir.path().join("a.jsonl.manifest.json")).unwrap();
    assert!(manifest.contains("\"run_config\""));
}

#[test]
fn lambda_flag_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eem"))
        .current_dir(dir.path())
        .args(["chat", "--lambda", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside [0, 1]"));
}

#[test]
fn chat_quits_cleanly() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"model": {"d_emb": 4, "d_h": 6, "d_z": 6, "layers": 1}, "train": {"epochs": 1}}"#).unwrap();
    let p = |x: &std::path::Path| x.to_str().unwrap().to_string();
    let data = dir.path().join("data");
    assert!(eem(&["synth", "--n", "100", "--out", &p(&corpus)]).status.success());
    assert!(eem(&["prepare", "--input", &p(&corpus), "--out-dir", &p(&data)]).status.success());
    let labeled = data.join("train.l.jsonl");
    assert!(eem(&["label", "--input", &p(&data.join("train.jsonl")), "--out", &p(&labeled)]).status.success());
    let ck = dir.path().join("ck.json");
    let t = eem(&[
        "train", "--train", &p(&labeled), "--vocab", &p(&data.join("vocab.json")), "--out", &p(&ck), "--config", &p(&cfg),
    ]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let mut child = Command::new(env!("CARGO_BIN_EXE_eem"))
        .args(["chat", "--checkpoint", &p(&ck), "--config", &p(&cfg)])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"/lambda 2\n/lambda 0.5\n/quit\nnever read\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("error: λ must lie in [0, 1]"), "{text}");
    assert!(text.contains("lambda = 0.5"), "{text}");
}
