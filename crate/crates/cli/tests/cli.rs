//! End-to-end runs of the `qfp` binary. Golden files live in
//! `tests/golden/`; set `UPDATE_GOLDEN=1` to rewrite them.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

const QFP: &str = env!("CARGO_BIN_EXE_qfp");

fn qfp(dir: &Path, args: &[&str]) -> Output {
    Command::new(QFP).args(args).current_dir(dir).env("SOURCE_DATE_EPOCH", "1700000000").output().expect("spawn qfp")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qfp(dir, args);
    assert!(out.status.success(), "qfp {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; run with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, want, "output differs from {}", path.display());
}

#[test]
fn plan_json_golden() {
    let dir = tempfile::tempdir().unwrap();
    golden("plan_n4.json", &ok(dir.path(), &["plan", "--n", "4", "--delta", "0.22", "--json"]));
}

#[test]
fn reproduce_golden() {
    let dir = tempfile::tempdir().unwrap();
    for fig in ["fig4", "fig5", "table3"] {
        let csv = ok(dir.path(), &["reproduce", "--figure", fig]);
        assert!(csv.starts_with(&format!("# schema: qfp-{fig}/1\n")));
        golden(&format!("{fig}.csv"), &csv);
    }
}

#[test]
fn reproduce_writes_file_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["reproduce", "--figure", "fig4"]);
    ok(dir.path(), &["reproduce", "--figure", "fig4", "--out", "f.csv"]);
    assert_eq!(std::fs::read_to_string(dir.path().join("f.csv")).unwrap(), stdout);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema"], "qfp-manifest/1");
    assert_eq!(manifest["command"], "reproduce");
    assert_eq!(manifest["timestamp"], 1_700_000_000);
    assert_eq!(manifest["outputs"][0], "f.csv");
}

#[test]
fn encode_matches_reference_at_n64() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["make-code", "--n", "64", "--m", "320", "--seed", "7", "--out", "c.qfc"]);
    ok(d, &["encode", "--code", "c.qfc", "--random-input", "5", "--out", "fast.bin"]);
    ok(d, &["encode", "--code", "c.qfc", "--random-input", "5", "--reference", "--out", "slow.bin"]);
    let fast = std::fs::read(d.join("fast.bin")).unwrap();
    assert_eq!(fast, std::fs::read(d.join("slow.bin")).unwrap());
    let hex: String = fast.iter().map(|b| format!("{b:02x}")).collect();
    golden("encode_n64.hex", &(hex + "\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(qfp(d, &["plan", "--n", "4", "--target-eps", "0.6"]).status.code(), Some(2));
    assert_eq!(qfp(d, &["plan", "--n", "4", "--params", "id500", "--target-eps", "1e-9"]).status.code(), Some(3));
    assert_eq!(qfp(d, &["plan", "--n", "4", "--params", "no-such-file.toml"]).status.code(), Some(1));
}

#[test]
fn simulate_summary_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["simulate", "--n", "2000", "--seed", "3", "--trials", "200", "--threads", "1"];
    let a = ok(d, &args);
    assert_eq!(a, ok(d, &args));
    let s: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(s["trials"], 200);
    assert_eq!(s["verdict_equal"].as_u64().unwrap() + s["verdict_different"].as_u64().unwrap(), 200);
    assert_eq!(s["within_band"], true);
}

#[test]
fn party_without_referee_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["plan", "--n", "1000", "--out", "p.json"]);
    // bind and drop to find a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let out = qfp(
        d,
        &[
            "party",
            "--role",
            "alice",
            "--connect",
            &addr,
            "--synthetic",
            "equal",
            "--plan",
            "p.json",
            "--pair-seed",
            "1",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot reach referee"));
}

struct Referee(Child);

impl Drop for Referee {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_referee(dir: &Path, extra: &[&str]) -> (Referee, String) {
    let mut child = Command::new(QFP)
        .args(["referee", "--listen", "127.0.0.1:0", "--plan", "p.json", "--seed", "9"])
        .args(extra)
        .current_dir(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening ").unwrap_or_else(|| panic!("unexpected: {line:?}")).to_string();
    // keep draining so later diagnostics never hit a closed pipe
    std::thread::spawn(move || std::io::copy(&mut stderr, &mut std::io::sink()));
    (Referee(child), addr)
}

fn party(dir: &Path, role: &str, addr: &str, kind: &str, sessions: &str) -> Child {
    Command::new(QFP)
        .args(["party", "--role", role, "--connect", addr, "--synthetic", kind, "--plan", "p.json"])
        .args(["--pair-seed", "4", "--sessions", sessions, "--chunk-bits", "4096"])
        .current_dir(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap()
}

fn verdicts(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn loopback_sessions_over_three_processes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["plan", "--n", "5000", "--params", "id500", "--target-eps", "1e-6", "--out", "p.json"]);
    let (mut referee, addr) = start_referee(d, &["--sessions", "2"]);
    let alice = party(d, "alice", &addr, "equal", "2");
    let bob = party(d, "bob", &addr, "equal", "2");
    let (a, b) = (alice.wait_with_output().unwrap(), bob.wait_with_output().unwrap());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let status = referee.0.wait().unwrap();
    assert!(status.success());
    let mut text = String::new();
    std::io::Read::read_to_string(referee.0.stdout.as_mut().unwrap(), &mut text).unwrap();
    let reports: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 2);
    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("p.json")).unwrap()).unwrap();
    for r in &reports {
        assert_eq!(r["status"], "equal");
        assert_eq!(r["alice"]["payload_bits"], plan["m"]);
        assert_eq!(r["bob"]["payload_bits"], plan["m"]);
        assert_eq!(r["relayed_bytes"], 0);
        assert_eq!(r["bytes_to_parties_before_verdict"], 0);
    }
    for v in verdicts(&a).iter().chain(&verdicts(&b)) {
        assert_eq!(v["bytes_received"], 47);
        assert_eq!(v["payload_bits"], plan["m"]);
    }
}

#[test]
fn mismatched_parties_abort_with_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["plan", "--n", "2000", "--out", "p.json"]);
    ok(d, &["plan", "--n", "3000", "--out", "q.json"]);
    // if Bob's abort lands before Alice connects, her new session times out
    let (_referee, addr) = start_referee(d, &["--timeout", "2"]);
    let alice = party(d, "alice", &addr, "equal", "1");
    let bob = Command::new(QFP)
        .args(["party", "--role", "bob", "--connect", &addr, "--synthetic", "equal", "--plan", "q.json"])
        .args(["--pair-seed", "4"])
        .current_dir(d)
        .output()
        .unwrap();
    let a = alice.wait_with_output().unwrap();
    assert_eq!(a.status.code(), Some(4), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(bob.status.code(), Some(4));
}
