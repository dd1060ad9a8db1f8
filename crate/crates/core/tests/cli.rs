use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bnsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnsl"))
        .args(args)
        .env_remove("BNSL_WORKDIR")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, vars: &str, seed: &str) -> std::path::PathBuf {
    let csv = dir.join("data.csv");
    let out = bnsl(&["generate", "--vars", vars, "--records", "200", "--seed", seed, "--out", p(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    csv
}

#[test]
fn learn_writes_network_dot_stats_and_meta() {
    let tmp = tempdir().unwrap();
    let csv = generate(tmp.path(), "6", "1");
    let (net, dot, stats, meta) = (
        tmp.path().join("net.txt"),
        tmp.path().join("net.dot"),
        tmp.path().join("stats.csv"),
        tmp.path().join("meta.json"),
    );
    let work = tmp.path().join("work");
    let out = bnsl(&[
        "learn", "--input", p(&csv), "--workdir", p(&work), "--out", p(&net), "--dot", p(&dot),
        "--stats", p(&stats), "--meta", p(&meta), "--no-parent-pruning",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(&net).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[..6].iter().all(|l| l.contains(" <-")));
    assert!(lines[6].starts_with("score: "));
    assert!(fs::read_to_string(&dot).unwrap().starts_with("digraph"));
    let csv_stats = fs::read_to_string(&stats).unwrap();
    assert!(csv_stats.starts_with("layer,generated,pruned,surviving,disk_bytes\n"));
    assert_eq!(csv_stats.lines().count(), 8);
    assert!(fs::read_to_string(&meta).unwrap().contains("columns"));

    let scored = bnsl(&["score", "--input", p(&csv), "--network", p(&net)]);
    assert!(scored.status.success());
    let rescored: f64 = String::from_utf8_lossy(&scored.stdout).trim().parse().unwrap();
    let claimed: f64 = lines[6]["score: ".len()..].parse().unwrap();
    assert!((rescored - claimed).abs() <= 1e-9 * claimed.abs());

    let rebuilt = bnsl(&["reconstruct", "--workdir", p(&work)]);
    assert!(rebuilt.status.success());
    assert_eq!(String::from_utf8_lossy(&rebuilt.stdout), text);
}

#[test]
fn check_agrees_with_oracles() {
    let tmp = tempdir().unwrap();
    let csv = generate(tmp.path(), "4", "2");
    let work = tmp.path().join("work");
    let out = bnsl(&["check", "--input", p(&csv), "--workdir", p(&work), "--no-parent-pruning"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("exhaustive:"));
    assert!(stdout.contains("agree"));
}

#[test]
fn workdir_from_environment() {
    let tmp = tempdir().unwrap();
    let csv = generate(tmp.path(), "3", "3");
    let work = tmp.path().join("envwork");
    let out = Command::new(env!("CARGO_BIN_EXE_bnsl"))
        .args(["learn", "--input", p(&csv)])
        .env("BNSL_WORKDIR", &work)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(work.join("recon").exists());
}

#[test]
fn corrupted_recon_file_fails() {
    let tmp = tempdir().unwrap();
    let csv = generate(tmp.path(), "5", "4");
    let work = tmp.path().join("work");
    let out = bnsl(&["learn", "--input", p(&csv), "--workdir", p(&work)]);
    assert!(out.status.success());
    let recon = work.join("recon/layer5.bin");
    let mut bytes = fs::read(&recon).unwrap();
    bytes.pop();
    fs::write(&recon, bytes).unwrap();
    let out = bnsl(&["reconstruct", "--workdir", p(&work)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempdir().unwrap();
    let ragged = tmp.path().join("ragged.csv");
    fs::write(&ragged, "a,b\n0,1\n1\n").unwrap();
    let work = tmp.path().join("work");
    let out = bnsl(&["learn", "--input", p(&ragged), "--workdir", p(&work)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let missing = tmp.path().join("absent.csv");
    let out = bnsl(&["learn", "--input", p(&missing), "--workdir", p(&work)]);
    assert_eq!(out.status.code(), Some(2));

    let csv = generate(tmp.path(), "4", "5");
    let out = bnsl(&["learn", "--input", p(&csv), "--workdir", p(&work), "--upper", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unreachable"));
}

#[test]
fn infinite_upper_and_custom_delimiter() {
    let tmp = tempdir().unwrap();
    let csv = tmp.path().join("semi.csv");
    fs::write(&csv, "a;b;c\nx;1;?\ny;2;1\nx;1;0\ny;2;1\nx;2;0\n").unwrap();
    let work = tmp.path().join("work");
    let out = bnsl(&[
        "learn", "--input", p(&csv), "--delimiter", ";", "--workdir", p(&work), "--upper", "inf",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("a <-"));
}
