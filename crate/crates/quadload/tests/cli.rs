use std::fs;
use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use quadload::exit;
use tungstenite::Message;

const TINY: &str = r#"{
  "rl": { "train": {
    "num_envs": 2, "horizon": 16,
    "phase1_iterations": 2, "phase2_iterations": 1, "baseline_iterations": 2,
    "ppo": { "minibatches": 2 },
    "bundle": { "policy_hidden": [8], "critic_hidden": [8] }
  } }
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadload")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn train(dir: &Path, phase: &str, resume: Option<&Path>, seed: &str) -> (Output, PathBuf) {
    let cfg = dir.join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.join(format!("run-{phase}-{seed}"));
    let mut args = vec!["train", "--phase", phase, "--config", p(&cfg), "--seed", seed, "--out", p(&out)];
    if let Some(r) = resume {
        args.extend(["--resume", p(r)]);
    }
    (run(&args), out)
}

#[test]
fn phase_two_needs_resume() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--phase", "2", "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), exit::CHECKPOINT_MISMATCH);
    assert!(stderr(&o).contains("--resume"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"sim": {"dt_physcs": 0.001}}"#).unwrap();
    let o = run(&["train", "--phase", "1", "--config", p(&cfg), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), exit::CONFIG);
    assert!(stderr(&o).contains("dt_physcs"), "{}", stderr(&o));
}

#[test]
fn training_eval_and_inspection_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let (a, run_a) = train(d, "1", None, "5");
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    fs::rename(&run_a, d.join("first")).unwrap();
    let (b, run_b) = train(d, "1", None, "5");
    assert_eq!(code(&b), 0);
    let metrics = fs::read(run_b.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read(d.join("first/metrics.csv")).unwrap(), "same seed, different log");
    let text = String::from_utf8(metrics).unwrap();
    assert!(text.contains("# seed=5") && text.contains("# config_hash="));

    let ckpt1 = run_b.join("checkpoint");
    let (two, run_two) = train(d, "2", Some(&ckpt1), "5");
    assert_eq!(code(&two), 0, "{}", stderr(&two));
    let ckpt2 = run_two.join("checkpoint");
    let (base, run_base) = train(d, "baseline", None, "5");
    assert_eq!(code(&base), 0);
    let ckpt_base = run_base.join("checkpoint");

    // a baseline checkpoint cannot seed phase 2
    let (bad, _) = train(d, "2", Some(&ckpt_base), "6");
    assert_eq!(code(&bad), exit::CHECKPOINT_MISMATCH);

    // eval determinism and comparison output
    let ev = |out: &Path, extra: &[&str]| {
        let mut args = vec!["eval", "--ckpt", p(&ckpt2), "--scenario", "flat_steps", "--seed", "2", "--out", p(out)];
        args.extend_from_slice(extra);
        run(&args)
    };
    let (e1, e2) = (d.join("e1"), d.join("e2"));
    assert_eq!(code(&ev(&e1, &[])), 0);
    assert_eq!(code(&ev(&e2, &["--compare", p(&ckpt_base)])), 0);
    let ts = "adaptive_timeseries.csv";
    assert_eq!(fs::read(e1.join(ts)).unwrap(), fs::read(e2.join(ts)).unwrap());
    for f in ["comparison.json", "comparison.csv", "baseline_timeseries.csv", "adaptive_summary.json"] {
        assert!(e2.join(f).exists(), "{f} missing");
    }
    assert!(!e1.join("comparison.json").exists());

    // empty and broken scenarios
    let empty = d.join("empty.json");
    fs::write(
        &empty,
        r#"{"name": "empty", "terrain": {"kind": "flat", "slope_angle": 0.0, "step_rise": 0.0, "step_run": 1.0, "origin_x": 0.0},
            "commands": {"keys": [[0.0, 0.0, 0.28]]}, "payload": {"keys": [[0.0, {}]], "end_time": 0.0}, "duration": 0.0}"#,
    )
    .unwrap();
    let o = run(&["eval", "--ckpt", p(&ckpt2), "--scenario", p(&empty), "--out", p(&d.join("e3"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["eval", "--ckpt", p(&ckpt2), "--scenario", "moon_walk", "--out", p(&d.join("e4"))]);
    assert_eq!(code(&o), exit::SCENARIO);

    // inspection, export and corruption
    let o = run(&["inspect", "--ckpt", p(&ckpt2)]);
    assert_eq!(code(&o), 0);
    let shown = String::from_utf8(o.stdout).unwrap();
    assert!(shown.contains("phase       2") && shown.contains("checksum    ok"), "{shown}");
    let exported = d.join("export");
    assert_eq!(code(&run(&["export", "--ckpt", p(&ckpt2), "--out", p(&exported)])), 0);
    let m1: serde_json::Value = serde_json::from_slice(&fs::read(ckpt2.join("manifest.json")).unwrap()).unwrap();
    let m2: serde_json::Value = serde_json::from_slice(&fs::read(exported.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m1, m2);
    assert!(exported.join("observation_index.json").exists());

    let blob = ckpt1.join("params.bin");
    let mut bytes = fs::read(&blob).unwrap();
    bytes[0] ^= 1;
    fs::write(&blob, bytes).unwrap();
    assert_eq!(code(&run(&["inspect", "--ckpt", p(&ckpt1)])), exit::CORRUPT_CHECKPOINT);

    // serve: bad port, then frames over a real socket
    let o = run(&["serve", "--ckpt", p(&ckpt2), "--port", "70000"]);
    assert_eq!(code(&o), exit::BIND);
    let o = run(&["serve", "--ckpt", p(&ckpt2), "--port", "-1"]);
    assert_eq!(code(&o), exit::BIND);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port().to_string();
    let mut child = Command::new(env!("CARGO_BIN_EXE_quadload"))
        .args(["serve", "--ckpt", p(&ckpt2), "--ckpt", p(&ckpt_base), "--port", &port, "--realtime-factor", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.contains("/ws") && line.contains("baseline"), "{line}");
    let stream = TcpStream::connect(format!("127.0.0.1:{port}")).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let (mut ws, _) = tungstenite::client(format!("ws://127.0.0.1:{port}/ws"), stream).unwrap();
    let frame = loop {
        if let Message::Text(t) = ws.read().unwrap() {
            break serde_json::from_str::<serde_json::Value>(t.as_str()).unwrap();
        }
    };
    assert_eq!(frame["type"], "frame");
    child.kill().unwrap();
    child.wait().unwrap();
}
