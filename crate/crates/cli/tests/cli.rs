use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn stringflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stringflow"))
        .args(args)
        .env("STRINGFLOW_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn scenario(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(sub: &str, ini: &Path, out: &Path) -> Output {
    stringflow(&[sub, "--scenario", ini.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"])
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = head.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

const SMALL_MA: &str = "[scenario]\nkind = ma\nname = small\n\n[grid]\nm = 2\nresolution = 8\nactive = 0, 1\n\n[source]\namplitude = 0.2\nmode = 1, 0, 0, 0\n\n[flow]\ntol = 1e-8\ncadence = 5\n";

#[test]
fn bad_value_exits_one_with_line() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "bad.ini", "[scenario]\nkind = ma\nname = bad\n\n[grid]\nm = 2\nresolution = eight\n");
    let o = run("flow", &ini, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.ini:7:"), "{err}");
}

#[test]
fn unknown_key_exits_one_with_line() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "typo.ini", "[scenario]\nkind = ma\nname = typo\n\n[grid]\nm = 2\nresolution = 8\nresolutoin = 8\n");
    let o = run("flow", &ini, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo.ini:8:"));
}

#[test]
fn wrong_subcommand_for_kind_is_config_error() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "ode.ini", "[scenario]\nkind = sugra-ode\nname = ode\n\n[ode]\nv = 2\n");
    assert_eq!(run("flow", &ini, &dir.path().join("out")).status.code(), Some(1));
}

#[test]
fn usage_error_exits_one() {
    assert_eq!(stringflow(&["flow", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(stringflow(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_source_converges_at_once() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "z.ini", "[scenario]\nkind = ma\nname = z\n\n[grid]\nm = 2\nresolution = 8\nactive = 0, 1\n\n[source]\namplitude = 0\n");
    let out = dir.path().join("out");
    assert_eq!(run("flow", &ini, &out).status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["converged"], true);
    assert!(s["steps"].as_u64().unwrap() <= 2);
    assert_eq!(s["final"]["rhs_norm"].as_f64().unwrap(), 0.0);
}

#[test]
fn threshold_breach_exits_two() {
    let dir = TempDir::new().unwrap();
    let text = format!("{SMALL_MA}\n[monitors]\nmin.min_eig = 2\n");
    let ini = scenario(&dir, "b.ini", &text);
    let out = dir.path().join("out");
    assert_eq!(run("flow", &ini, &out).status.code(), Some(2));
    let s = summary(&out);
    assert_eq!(s["exit_code"], 2);
    assert!(!s["breaches"].as_array().unwrap().is_empty());
}

#[test]
fn stationary_membrane_ode_stays_put() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "o.ini", "[scenario]\nkind = sugra-ode\nname = o\n\n[ode]\nv = 2\ndv = 0\nddv = 0\nt_end = 10\ntol = 1e-10\n");
    let out = dir.path().join("out");
    assert_eq!(run("sugra-ode", &ini, &out).status.code(), Some(0));
    let v = column(&fs::read_to_string(out.join("trajectory.csv")).unwrap(), "v");
    assert!(v.len() > 1);
    assert!(v.iter().all(|x| (x - 2.0).abs() < 1e-12));
    assert_eq!(summary(&out)["rhs_at_origin"].as_f64().unwrap(), -288.0);
}

#[test]
fn report_is_idempotent_and_plot_ready() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "m.ini", SMALL_MA);
    let out = dir.path().join("out");
    assert_eq!(run("flow", &ini, &out).status.code(), Some(0));
    let rd = out.to_str().unwrap();
    assert_eq!(stringflow(&["report", rd]).status.code(), Some(0));
    let first = fs::read(out.join("report/rhs_norm.dat")).unwrap();
    assert_eq!(stringflow(&["report", rd]).status.code(), Some(0));
    assert_eq!(first, fs::read(out.join("report/rhs_norm.dat")).unwrap());
    let rows: Vec<(f64, f64)> = String::from_utf8(first)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace().map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert!(rows.len() > 2);
    assert!(rows.windows(2).all(|w| w[1].0 > w[0].0));
    assert!(rows.last().unwrap().1 < 1e-3 * rows[0].1);

    let ode = scenario(&dir, "o.ini", "[scenario]\nkind = sugra-ode\nname = o\n\n[ode]\nv = 2.1\nt_end = 1\n");
    let ode_out = dir.path().join("ode");
    assert_eq!(run("sugra-ode", &ode, &ode_out).status.code(), Some(0));
    assert_eq!(stringflow(&["report", ode_out.to_str().unwrap()]).status.code(), Some(0));
    let v = fs::read_to_string(ode_out.join("report/v.dat")).unwrap();
    assert!(v.lines().filter(|l| !l.starts_with('#')).all(|l| l.split_whitespace().count() == 2));
}

#[test]
fn missing_run_directory_is_config_error() {
    assert_eq!(stringflow(&["report", "/nonexistent/run"]).status.code(), Some(1));
}

#[test]
fn verify_subcommand_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v");
    let o = stringflow(&["verify", "--samples", "10", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.starts_with("PASS")).count() >= 13);
    assert!(out.join("verify.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "m.ini", SMALL_MA);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("flow", &ini, &a).status.code(), Some(0));
    assert_eq!(run("flow", &ini, &b).status.code(), Some(0));
    for f in ["trajectory.csv", "monitors.csv", "final.sfgrid"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn homogeneous_blow_up_exits_two() {
    let dir = TempDir::new().unwrap();
    let ini = scenario(&dir, "h.ini", &fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/homogeneous.ini")).unwrap());
    let out = dir.path().join("h");
    assert_eq!(run("flow", &ini, &out).status.code(), Some(2));
    assert!(summary(&out)["blow_up"].is_number());
}
