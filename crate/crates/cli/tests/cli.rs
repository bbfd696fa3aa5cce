use std::io::{BufRead, BufReader};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use pigtail_core::service::{read_frame, write_frame};
use serde_json::{json, Value};

fn pigtail(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pigtail"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("PIGTAIL_CONFIG")
        .output()
        .expect("spawn pigtail")
}

fn budget_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/budget.txt")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_config(dir: &Path) -> PathBuf {
    let path = dir.join("short.conf");
    std::fs::write(&path, "photon_run.pulses = 200000\nstability_run.samples = 500\n").unwrap();
    path
}

#[test]
fn budget_report_for_reference_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = pigtail(dir.path(), &["budget", budget_file().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("pillar_to_fiber.percent = 74.8 ± 5.7"), "{text}");
    assert!(text.contains("verdict = consistent"));
    assert_eq!(std::fs::read_to_string(dir.path().join("budget_report.txt")).unwrap().trim_end(), text.trim_end());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(pigtail(d, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(pigtail(d, &["budget"]).status.code(), Some(2));
    assert_eq!(pigtail(d, &["budget", "/does/not/exist"]).status.code(), Some(3));

    let bad = d.join("bad.txt");
    std::fs::write(&bad, "splice_transmission = lots\n").unwrap();
    assert_eq!(pigtail(d, &["budget", bad.to_str().unwrap()]).status.code(), Some(4));
    std::fs::write(&bad, "not a tag file\n").unwrap();
    assert_eq!(pigtail(d, &["analyze-tags", bad.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(pigtail(d, &["coupling-map", "--gaps", "a,b"]).status.code(), Some(4));

    let missing = d.join("missing.txt");
    std::fs::write(&missing, "version = 1\nsplice_transmission = 0.9 ± 0.02\n").unwrap();
    assert_eq!(pigtail(d, &["budget", missing.to_str().unwrap()]).status.code(), Some(5));

    let conf = d.join("bad.conf");
    std::fs::write(&conf, "rig.no_such_key = 1\n").unwrap();
    let o = pigtail(d, &["--config", conf.to_str().unwrap(), "budget", budget_file().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));

    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    assert_eq!(pigtail(d, &["serve", "--addr", &addr]).status.code(), Some(7));

    let file = d.join("a-file");
    std::fs::write(&file, "").unwrap();
    assert_eq!(pigtail(&file, &["budget", budget_file().to_str().unwrap()]).status.code(), Some(8));
}

#[test]
fn coupling_map_optimum_at_smallest_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = pigtail(dir.path(), &["coupling-map", "--gaps", "0.23", "--offsets", "0:0:1", "--diameters", "2.5:4.0:0.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    let eff: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((eff - 0.96).abs() <= 0.02, "{row}");
    let csv = std::fs::read_to_string(dir.path().join("coupling_map.csv")).unwrap();
    assert!(csv.starts_with("diameter_um,gap_um,offset_um,efficiency\n"));
    assert_eq!(csv.lines().count(), 1 + 31);
    let bin = std::fs::read(dir.path().join("coupling_map.bin")).unwrap();
    assert_eq!(&bin[..4], b"PTCM");
}

#[test]
fn fixed_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let conf = short_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["photon-run", "stability-run", "align-demo"] {
            let o = pigtail(out, &["--seed", "7", "--config", conf.to_str().unwrap(), cmd]);
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10, "{names:?}");
    for name in names {
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    let c = dir.path().join("c");
    pigtail(&c, &["--seed", "8", "--config", conf.to_str().unwrap(), "photon-run"]);
    assert_ne!(std::fs::read(a.join("hbt.ptt")).unwrap(), std::fs::read(c.join("hbt.ptt")).unwrap());
}

#[test]
fn analyze_tags_reproduces_photon_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let conf = short_config(d);
    assert!(pigtail(d, &["--config", conf.to_str().unwrap(), "photon-run"]).status.success());
    let run: Value = serde_json::from_slice(&std::fs::read(d.join("photon_run.json")).unwrap()).unwrap();
    assert_eq!(run["too_short"], json!(true));
    let o = pigtail(d, &["analyze-tags", d.join("hbt.ptt").to_str().unwrap(), d.join("hom.ptt").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tags: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(tags["g2_zero"], run["metrics"]["g2_zero"]);
    assert_eq!(tags["v_hom"], run["metrics"]["v_hom"]);
}

#[test]
fn spectrum_from_align_demo_analyzes_to_design_gap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = pigtail(d, &["align-demo"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("success=true"));
    let o = pigtail(d, &["analyze-spectrum", d.join("spectrum.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let gap = v["gap"]["gap_um"].as_f64().unwrap();
    assert!((gap - 3.0).abs() < 0.1, "{gap}");
    assert_eq!(v["dips"][0]["found"], json!(true));
    let events = std::fs::read_to_string(d.join("events.ndjson")).unwrap();
    assert!(events.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}

#[test]
fn serve_answers_protocol_requests() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pigtail"))
        .args(["serve", "--addr", "127.0.0.1:0"])
        .env_remove("PIGTAIL_CONFIG")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
    let mut s = TcpStream::connect(&addr).unwrap();
    write_frame(&mut s, &json!({"v": 1, "seq": 1, "cmd": "create-session", "params": {"seed": 3}})).unwrap();
    let r: Value = serde_json::from_slice(&read_frame(&mut s).unwrap().unwrap()).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(r["ok"], json!(true), "{r}");
    assert_eq!(r["result"]["seed"], json!(3));
    assert_eq!(r["result"]["state"]["phase"], json!("free"));
}
