use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command as Process, ExitCode};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

use stringflow::dump::Dump;
use stringflow::field::{MetricField, ScalarField};
use stringflow::flows::ma::{ma_metric, normalize_source};
use stringflow::flows::{anomaly_rate_22, anomaly_rhs_11, invert_rate_map, FuYauFamily};
use stringflow::geometry::{full_bracket, simple_bracket};
use stringflow::grid::{LatticeGrid, DEFAULT_BUDGET};
use stringflow::oracles::{newton_ma, verify_all};
use stringflow::supergravity::{integrate_ode, integrate_ode_fixed, membrane_ode_rhs, stationary_points, OdeState};
use stringflow_cli::{execute, Command, Options, Outcome, Scenario};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(command: Command, name: &str, out: PathBuf) -> Outcome {
    let opts = Options { out, seed: None, budget: DEFAULT_BUDGET };
    execute(command, &scenario(name), &opts).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = head.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn ma_convergence(dir: &Path) -> Verdict {
    let o = run(Command::Flow, "ma_convergence.ini", dir.join("ma_a"));
    let s = &o.summary;
    let rhs = num(&s["final"]["rhs_norm"]);
    let wall = num(&s["wall_time_s"]);
    let grid = LatticeGrid::new(2, 32, &[0, 1]).unwrap();
    let chi = MetricField::identity(&grid);
    let phi = Dump::load(&o.out.join("final.sfgrid")).and_then(|d| d.into_scalar()).unwrap();
    let flow_metric = ma_metric(&phi, &chi).unwrap();
    let f = normalize_source(&ScalarField::from_fn(&grid, |x| 0.2 * (TAU * x[0]).sin()), &chi);
    let (newton_phi, _) = newton_ma(&chi, &f, 1e-12).unwrap();
    let gap = flow_metric.max_abs_diff(&ma_metric(&newton_phi, &chi).unwrap());
    verdict(
        s["converged"] == true && rhs < 1e-8 && gap < 1e-6 && wall < 300.0,
        format!("rhs={rhs:.2e} newton_gap={gap:.2e} wall={wall:.1}s"),
    )
}

fn determinism(dir: &Path) -> Verdict {
    run(Command::Flow, "ma_convergence.ini", dir.join("ma_b"));
    let a = fs::read(dir.join("ma_a/trajectory.csv")).unwrap();
    let b = fs::read(dir.join("ma_b/trajectory.csv")).unwrap();
    verdict(a == b, format!("{} bytes, identical={}", a.len(), a == b))
}

fn anomaly(dir: &Path) -> (Verdict, Verdict) {
    let o = run(Command::Flow, "anomaly_fu_yau.ini", dir.join("anomaly"));
    let s = &o.summary;
    let csv = fs::read_to_string(o.out.join("trajectory.csv")).unwrap();
    let initial = column(&csv, "balanced_residual")[0];
    let worst = num(&s["max_balanced_residual"]);
    let t = num(&s["t_final"]);
    let reached = (t - 1.0).abs() < 1e-12;
    let balanced = verdict(
        reached && initial < 1e-10 && worst < 1e-7,
        format!("t={t} initial={initial:.2e} max={worst:.2e}"),
    );
    let vol = num(&s["drifts"]["conserved_volume"]);
    let pairing = num(&s["drifts"]["pairing"]);
    let conserved =
        verdict(reached && vol < 1e-8 && pairing < 1e-8, format!("volume={vol:.2e} pairing={pairing:.2e} per unit time"));
    (balanced, conserved)
}

fn formulation_equivalence() -> Verdict {
    let grid = LatticeGrid::new(3, 32, &[0, 1, 2, 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut rhs_gap, mut bracket_gap) = (0f64, 0f64);
    for _ in 0..20 {
        let fam = FuYauFamily::random(&mut rng);
        let g = fam.metric(&grid, &fam.random_u(&grid, &mut rng, 0.2)).unwrap();
        let via_22 = invert_rate_map(&g, &anomaly_rate_22(&g, 0.0, None, false).unwrap()).unwrap();
        rhs_gap = rhs_gap.max(anomaly_rhs_11(&g).unwrap().max_abs_diff(&via_22));
        bracket_gap = bracket_gap.max(full_bracket(&g).unwrap().max_abs_diff(&simple_bracket(&g).unwrap()));
    }
    verdict(rhs_gap < 1e-9 && bracket_gap < 1e-9, format!("rhs_11 vs 22={rhs_gap:.2e} brackets={bracket_gap:.2e}"))
}

fn fu_yau_decay(dir: &Path) -> Verdict {
    let o = run(Command::Flow, "fu_yau_decay.ini", dir.join("fu_yau"));
    let s = &o.summary;
    let csv = fs::read_to_string(o.out.join("trajectory.csv")).unwrap();
    let sup = column(&csv, "sup_exp_u");
    let ratio = sup.iter().cloned().fold(0.0, f64::max) / sup[0];
    let osc = num(&s["final"]["u_oscillation"]);
    verdict(s["converged"] == true && osc < 1e-8 && ratio <= 1.01, format!("oscillation={osc:.2e} sup_ratio={ratio:.6}"))
}

fn membrane_ode() -> Verdict {
    let mut drift = 0f64;
    let mut escaped = false;
    for v in stationary_points() {
        let traj = integrate_ode(OdeState::new(v, 0.0, 0.0), 10.0, 1e-10).unwrap();
        escaped |= traj.blow_up.is_some() || traj.last().t < 10.0;
        drift = drift.max(traj.max_deviation());
    }
    let start = OdeState::new(2.3, 0.5, 0.0);
    let y: Vec<f64> = [40, 80, 160].iter().map(|&n| integrate_ode_fixed(start, 1.0, n).unwrap().v).collect();
    let order = ((y[0] - y[1]) / (y[1] - y[2])).abs().log2();
    let origin = membrane_ode_rhs(&OdeState::new(0.0, 0.0, 0.0));
    verdict(
        !escaped && drift < 1e-12 && (order - 4.0).abs() <= 0.2 && origin == -288.0,
        format!("drift={drift:.2e} order={order:.3} v'''(0)={origin}"),
    )
}

fn duff_stelle(dir: &Path) -> Verdict {
    let o = run(Command::SugraCheck, "sugra_check.ini", dir.join("check"));
    let s = &o.summary;
    let orders: Vec<f64> = s["observed_orders"].as_array().unwrap().iter().map(num).collect();
    let ok_orders = orders.len() == 2 && orders.iter().all(|p| (p - 2.0).abs() <= 0.2);
    verdict(s["duff_stelle_passed"] == true && ok_orders, format!("passed={} orders={orders:.3?}", s["duff_stelle_passed"]))
}

fn kernels(dir: &Path) -> Verdict {
    let reports = verify_all(7, 50).unwrap();
    let worst = reports.iter().filter(|r| r.order.is_none()).map(|r| r.max_abs_deviation).fold(0.0, f64::max);
    let all = reports.iter().all(|r| r.passed);
    let out = dir.join("verify");
    let status = Process::new(env!("CARGO_BIN_EXE_stringflow"))
        .args(["verify", "--samples", "50", "--seed", "7", "--threads", "1", "--out", out.to_str().unwrap()])
        .env("STRINGFLOW_LOG", "warn")
        .output()
        .unwrap()
        .status
        .code();
    verdict(all && status == Some(0), format!("{} operations, worst={worst:.2e}, verify exit={status:?}", reports.len()))
}

fn iib(dir: &Path) -> Verdict {
    let o = run(Command::Flow, "iib_manufactured.ini", dir.join("iib"));
    let s = &o.summary;
    let stationary = num(&s["stationary_rhs_norm"]);
    let csv = fs::read_to_string(o.out.join("trajectory.csv")).unwrap();
    let rhs = column(&csv, "rhs_norm");
    let decreasing = rhs.windows(2).all(|w| w[1] <= w[0]);
    let t = num(&s["t_final"]);
    verdict(
        stationary < 1e-10 && decreasing && (t - 0.5).abs() < 1e-12,
        format!("stationary={stationary:.2e} rhs {:.2e} -> {:.2e} monotone={decreasing}", rhs[0], rhs[rhs.len() - 1]),
    )
}

fn emit(results: &mut Vec<bool>, n: usize, name: &str, v: Verdict, start: Instant) {
    let tag = if v.passed { "PASS" } else { "FAIL" };
    println!("{tag} {n:>2} {name}: {} [{:.1}s]", v.detail, start.elapsed().as_secs_f64());
    results.push(v.passed);
}

fn main() -> ExitCode {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().unwrap();
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut results = Vec::new();
    let t = Instant::now();
    emit(&mut results, 1, "ma_flow_convergence", ma_convergence(d), t);
    let t = Instant::now();
    let (balanced, conserved) = anomaly(d);
    emit(&mut results, 2, "balanced_preservation", balanced, t);
    emit(&mut results, 3, "conservation_laws", conserved, t);
    let t = Instant::now();
    emit(&mut results, 4, "formulation_equivalence", formulation_equivalence(), t);
    let t = Instant::now();
    emit(&mut results, 5, "fu_yau_decay", fu_yau_decay(d), t);
    let t = Instant::now();
    emit(&mut results, 6, "membrane_ode", membrane_ode(), t);
    let t = Instant::now();
    emit(&mut results, 7, "duff_stelle", duff_stelle(d), t);
    let t = Instant::now();
    emit(&mut results, 8, "kernel_oracles", kernels(d), t);
    let t = Instant::now();
    emit(&mut results, 9, "iib_stationarity", iib(d), t);
    let t = Instant::now();
    emit(&mut results, 10, "determinism", determinism(d), t);
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed} of {} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
