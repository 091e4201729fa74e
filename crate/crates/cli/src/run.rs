//! Executing scenarios and writing their artifacts.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use stringflow::dump::Dump;
use stringflow::field::{FormField, MetricField, ScalarField};
use stringflow::flows::fu_yau::FuYauData;
use stringflow::flows::ma::{ma_metric, normalize_source};
use stringflow::flows::runner::Record;
use stringflow::flows::{
    run_flow, AnomalySystem, EtaSystem, FlowState, FlowSystem, FuYauFamily, FuYauSystem, MaSystem, PrimaryField,
    Termination, Trajectory,
};
use stringflow::forms::{i_ddbar, i_ddbar_scalar};
use stringflow::grid::{make_grid, LatticeGrid};
use stringflow::linalg::Mat;
use stringflow::monitors::{self, MonitorReport};
use stringflow::oracles::{newton_ma, verify_all};
use stringflow::supergravity::membrane::{integrate_ode, membrane_ode_rhs, stationary_points, OdeState};
use stringflow::supergravity::{
    duff_stelle_check, homogeneous_flow, sugra_field_residual, Chart, HomogeneousData, RealForm, WarpedAnsatz,
};
use stringflow::Error;

use crate::scenario::{Body, CheckScenario, FlowScenario, HomogeneousScenario, Kind, OdeScenario, Preset, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BREACH: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Flow,
    MaSolve,
    SugraOde,
    SugraCheck,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::MaSolve => "ma-solve",
            Command::SugraOde => "sugra-ode",
            Command::SugraCheck => "sugra-check",
            Command::Verify => "verify",
        }
    }

    fn accepts(&self, kind: Kind) -> bool {
        match self {
            Command::Flow => {
                matches!(kind, Kind::Anomaly | Kind::Eta | Kind::Ma | Kind::FuYau | Kind::Iib | Kind::HomogeneousFlow)
            }
            Command::MaSolve => kind == Kind::Ma,
            Command::SugraOde => kind == Kind::SugraOde,
            Command::SugraCheck => kind == Kind::SugraCheck,
            Command::Verify => kind == Kind::Verify,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotPositive { .. }
            | Error::SingularMetric { .. }
            | Error::SingularLinearization { .. }
            | Error::StepSizeUnderflow { .. }
            | Error::NewtonStagnation { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

/// Result of a completed run: exit code and the summary that was written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
    pub out: PathBuf,
}

struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        Ok(Artifacts { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io(&path, e))
    }
}

/// Run `scenario` under `command`, writing every artifact to `opts.out`.
pub fn execute(command: Command, scenario: &Scenario, opts: &Options) -> Result<Outcome, Failure> {
    if !command.accepts(scenario.kind) {
        return Err(Failure::Config(format!(
            "subcommand '{}' cannot run a scenario of kind '{}'",
            command.name(),
            scenario.kind.name()
        )));
    }
    let seed = opts.seed.or(scenario.seed).unwrap_or(0);
    let out = Artifacts::new(&opts.out)?;
    let start = Instant::now();
    info!("running {} scenario '{}' with seed {seed}", scenario.kind.name(), scenario.name);
    let (code, mut body) = match (&scenario.body, command) {
        (Body::Flow(f), Command::MaSolve) => ma_solve(f, opts, &out)?,
        (Body::Flow(f), _) => flow(scenario.kind, f, seed, opts, &out)?,
        (Body::Ode(o), _) => ode(o, &out)?,
        (Body::Check(c), _) => check(c, &out)?,
        (Body::Homogeneous(h), _) => homogeneous(h, &out)?,
        (Body::Verify { samples }, _) => verify(seed, *samples, &out)?,
    };
    let map = body.as_object_mut().expect("summaries are objects");
    map.insert("scenario".into(), json!(scenario.name));
    map.insert("kind".into(), json!(scenario.kind.name()));
    map.insert("command".into(), json!(command.name()));
    map.insert("seed".into(), json!(seed));
    map.insert("exit_code".into(), json!(code));
    map.insert("wall_time_s".into(), json!(start.elapsed().as_secs_f64()));
    out.write("summary.json", serde_json::to_string_pretty(&body).expect("serializable") + "\n")?;
    Ok(Outcome { code, summary: body, out: opts.out.clone() })
}

/// `verify` without a scenario file.
pub fn execute_verify(seed: u64, samples: usize, out: &Path) -> Result<Outcome, Failure> {
    let scenario = Scenario {
        name: "verify".into(),
        kind: Kind::Verify,
        seed: Some(seed),
        output: None,
        body: Body::Verify { samples },
    };
    execute(Command::Verify, &scenario, &Options { out: out.to_path_buf(), seed: Some(seed), budget: usize::MAX })
}

fn build_grid(f: &FlowScenario, budget: usize) -> Result<LatticeGrid, Failure> {
    Ok(make_grid(f.grid.m, &f.grid.resolution, &f.grid.active, &f.grid.periods, budget)?)
}

fn mode_field(grid: &LatticeGrid, mode: &[f64], amplitude: f64, wave: fn(f64) -> f64) -> ScalarField {
    let periods = grid.periods().to_vec();
    let k = mode.to_vec();
    ScalarField::from_fn(grid, move |x| {
        let arg: f64 = x.iter().zip(&k).zip(&periods).map(|((x, k), p)| TAU * k * x / p).sum();
        amplitude * wave(arg)
    })
}

/// `amplitude·cos(2πk·x)/|2πk|²`, whose complex Hessian has size `amplitude`.
fn potential_mode(grid: &LatticeGrid, mode: &[f64], amplitude: f64) -> ScalarField {
    let k2: f64 = mode.iter().zip(grid.periods()).map(|(k, p)| (TAU * k / p).powi(2)).sum();
    mode_field(grid, mode, amplitude / k2.max(1.0), f64::cos)
}

fn initial_metric(f: &FlowScenario, grid: &LatticeGrid, rng: &mut ChaCha8Rng) -> Result<MetricField, Failure> {
    let init = &f.initial;
    Ok(match init.preset {
        Preset::Flat => MetricField::identity(grid),
        Preset::ConformalMode if grid.m() == 3 => {
            FuYauFamily::default().metric(grid, &mode_field(grid, &init.mode, init.amplitude, f64::cos))?
        }
        Preset::ConformalMode => {
            let u = mode_field(grid, &init.mode, init.amplitude, f64::cos);
            let pts: Vec<Mat> = u.values.iter().map(|v| Mat::identity(grid.m()).scale(C64::new(v.re.exp(), 0.0))).collect();
            MetricField::from_points(grid, &pts)
        }
        Preset::FuYauAnsatz => {
            let fam = FuYauFamily::random(rng);
            let u = fam.random_u(grid, rng, init.amplitude);
            fam.metric(grid, &u)?
        }
        Preset::KahlerPerturbation => {
            let psi = potential_mode(grid, &init.mode, init.amplitude);
            MetricField::identity(grid).add(&MetricField::from_form(&i_ddbar_scalar(&psi))?)
        }
        Preset::Manufactured => return Err(Failure::Config("manufactured data is specific to the iib kind".into())),
    })
}

/// Stationary Fu-Yau metric `η*`, the source `ρ_B = i∂∂̄η*` and a perturbed start.
pub fn manufactured_iib(
    grid: &LatticeGrid,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
    perturbation: f64,
    mode: &[f64],
) -> Result<(MetricField, FormField, MetricField), Error> {
    let fam = FuYauFamily::random(rng);
    let u = fam.random_u(grid, rng, amplitude);
    let eta = fam.metric(grid, &u)?;
    let rho = i_ddbar(&eta.to_form())?;
    let bump = mode_field(grid, mode, perturbation, f64::cos);
    let perturbed = ScalarField::real(grid, u.values.iter().zip(&bump.values).map(|(a, b)| a.re + b.re).collect())?;
    Ok((eta, rho, fam.metric(grid, &perturbed)?))
}

fn ma_source(f: &FlowScenario, grid: &LatticeGrid) -> ScalarField {
    let raw = mode_field(grid, &f.source.mode, f.source.amplitude, f64::sin);
    normalize_source(&raw, &MetricField::identity(grid))
}

fn flow(kind: Kind, f: &FlowScenario, seed: u64, opts: &Options, out: &Artifacts) -> Result<(i32, Value), Failure> {
    let grid = build_grid(f, opts.budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = serde_json::Map::new();
    let (system, field): (Box<dyn FlowSystem>, PrimaryField) = match kind {
        Kind::Anomaly => {
            let g = initial_metric(f, &grid, &mut rng)?;
            let mut sys = AnomalySystem::new(&grid, f.config.alpha, None, f.curvature)?;
            if f.pairing {
                sys = sys.with_class("pairing", monitors::off_diagonal_class(&g, 0, 1)?)?;
            }
            (Box::new(sys), PrimaryField::Metric(g))
        }
        Kind::Iib => {
            let (eta, rho, start) =
                manufactured_iib(&grid, &mut rng, f.initial.amplitude, f.initial.perturbation, &f.initial.mode)?;
            let sys = AnomalySystem::iib(&grid, rho)?;
            let y = sys.encode(&PrimaryField::Metric(eta.clone()))?;
            let rate = sys.rate(&y)?;
            extra.insert("stationary_rhs_norm".into(), json!(sys.rhs_norm(&y, &rate)?));
            out.write("eta_star.sfgrid", Dump::metric(&eta).to_text())?;
            (Box::new(sys), PrimaryField::Metric(start))
        }
        Kind::Eta => (Box::new(EtaSystem { grid: grid.clone() }), PrimaryField::Metric(initial_metric(f, &grid, &mut rng)?)),
        Kind::Ma => {
            let phi0 = match f.initial.preset {
                Preset::Flat => ScalarField::constant(&grid, 0.0),
                _ => potential_mode(&grid, &f.initial.mode, f.initial.amplitude),
            };
            let sys = MaSystem::new(MetricField::identity(&grid), ma_source(f, &grid))?;
            (Box::new(sys), PrimaryField::Scalar(phi0))
        }
        Kind::FuYau => {
            let u0 = match f.initial.preset {
                Preset::Flat => ScalarField::constant(&grid, 0.0),
                _ => mode_field(&grid, &f.initial.mode, f.initial.amplitude, f64::cos),
            };
            let data = FuYauData { alpha: f.config.alpha, ..FuYauData::trivial(Mat::identity(2)) };
            (Box::new(FuYauSystem::new(&grid, data)?), PrimaryField::Scalar(u0))
        }
        _ => unreachable!("non-flow kinds are dispatched elsewhere"),
    };
    let traj = run_flow(&f.config, system.as_ref(), &FlowState::initial(field))?;
    write_flow_artifacts(&traj, out)?;
    let code = match traj.termination {
        Termination::StepUnderflow | Termination::PositivityLoss => EXIT_NUMERICAL,
        Termination::ParabolicityLoss => EXIT_BREACH,
        _ if !traj.breaches.is_empty() => EXIT_BREACH,
        _ => EXIT_OK,
    };
    let mut summary = flow_summary(&traj);
    if kind == Kind::FuYau {
        if let Some(rate) = decay_rate(&traj.records, "u_oscillation") {
            extra.insert("decay_rate".into(), json!(rate));
        }
    }
    summary.as_object_mut().unwrap().extend(extra);
    Ok((code, summary))
}

fn write_flow_artifacts(traj: &Trajectory, out: &Artifacts) -> Result<(), Failure> {
    out.write("trajectory.csv", traj.to_csv())?;
    out.write("monitors.csv", monitors_csv(&traj.reports))?;
    for s in &traj.snapshots {
        out.write(&format!("snapshots/step_{:08}.sfgrid", s.step), dump_state(s).to_text())?;
    }
    out.write("final.sfgrid", dump_state(&traj.final_state).to_text())
}

fn dump_state(s: &FlowState) -> Dump {
    match &s.field {
        PrimaryField::Metric(g) => Dump::metric(g),
        PrimaryField::Scalar(u) => Dump::scalar(u),
    }
}

/// One row per report: `t`, every monitored value and the threshold verdict.
pub fn monitors_csv(reports: &[MonitorReport]) -> String {
    let mut names: Vec<&String> = reports.iter().flat_map(|r| r.values.keys()).collect();
    names.sort();
    names.dedup();
    let mut out = String::from("t");
    for n in &names {
        let _ = write!(out, ",{n}");
    }
    out.push_str(",passed\n");
    for r in reports {
        let _ = write!(out, "{:.17e}", r.t);
        for n in &names {
            match r.values.get(*n) {
                Some(v) => {
                    let _ = write!(out, ",{v:.17e}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(out, ",{}", u8::from(r.passed()));
    }
    out
}

fn flow_summary(traj: &Trajectory) -> Value {
    let last = traj.last();
    let mut fin = serde_json::Map::new();
    fin.insert("rhs_norm".into(), json!(last.rhs_norm));
    fin.insert("balanced_residual".into(), json!(last.diag.balanced_residual));
    fin.insert("conserved_volume".into(), json!(last.diag.conserved_volume));
    fin.insert("min_eig".into(), json!(last.diag.min_eig));
    for (k, v) in &last.diag.extras {
        fin.insert(k.clone(), json!(v));
    }
    let mut drifts = serde_json::Map::new();
    drifts.insert("conserved_volume".into(), json!(traj.drift_rate(|r| r.diag.conserved_volume)));
    for name in last.diag.extras.keys().filter(|k| k.as_str() == "pairing") {
        drifts.insert(name.clone(), json!(traj.drift_rate(|r| r.diag.extras.get(name).copied().unwrap_or(f64::NAN))));
    }
    let breaches: Vec<Value> = traj
        .breaches
        .iter()
        .map(|b| json!({"name": b.name, "t": b.t, "value": b.value, "threshold": b.threshold}))
        .collect();
    json!({
        "termination": traj.termination.to_string(),
        "converged": traj.termination == Termination::Converged,
        "steps": traj.final_state.step,
        "t_final": traj.final_state.t,
        "rejected_steps": traj.rejected_steps,
        "max_balanced_residual": traj.records.iter().map(|r| r.diag.balanced_residual).fold(0.0, f64::max),
        "final": fin,
        "drifts": drifts,
        "breaches": breaches,
    })
}

/// Least-squares rate `λ` of `value ≈ C e^{−λt}` over records where the value
/// is above round-off.
pub fn decay_rate(records: &[Record], name: &str) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.diag.extras.get(name).filter(|&&v| v > 1e-13).map(|v| (r.t, v.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    (den > 0.0).then(|| -num / den)
}

fn ma_solve(f: &FlowScenario, opts: &Options, out: &Artifacts) -> Result<(i32, Value), Failure> {
    let grid = build_grid(f, opts.budget)?;
    if grid.m() > 2 || grid.len() > 4096 {
        return Err(Failure::Config(format!("ma-solve assembles a dense Jacobian; {} points is too many", grid.len())));
    }
    let chi = MetricField::identity(&grid);
    let src = ma_source(f, &grid);
    let (phi, c) = newton_ma(&chi, &src, f.config.tol)?;
    let chi_phi = ma_metric(&phi, &chi)?;
    let residual = (0..grid.len())
        .map(|p| (chi_phi.at(p).det().re - c * src.values[p].re.exp()).abs())
        .fold(0.0, f64::max);
    out.write("solution.sfgrid", Dump::scalar(&phi).to_text())?;
    out.write("metric.sfgrid", Dump::metric(&chi_phi).to_text())?;
    Ok((EXIT_OK, json!({"termination": "converged", "converged": true, "constant": c, "det_residual": residual, "phi_sup": phi.sup_norm()})))
}

fn ode(o: &OdeScenario, out: &Artifacts) -> Result<(i32, Value), Failure> {
    let traj = integrate_ode(OdeState::new(o.v, o.dv, o.ddv), o.t_end, o.tol)?;
    out.write("trajectory.csv", traj.to_csv())?;
    let mut mon = String::from("t,abs_v,err\n");
    for s in &traj.samples {
        let _ = writeln!(mon, "{:.17e},{:.17e},{:.17e}", s.state.t, s.state.v.abs(), s.err);
    }
    out.write("monitors.csv", mon)?;
    let last = traj.last();
    let code = if traj.blow_up.is_some() { EXIT_BREACH } else { EXIT_OK };
    Ok((
        code,
        json!({
            "termination": if traj.blow_up.is_some() { "blow_up" } else { "end_time" },
            "blow_up": traj.blow_up.map(|(a, b)| json!([a, b])),
            "final": {"t": last.t, "v": last.v, "dv": last.dv, "ddv": last.ddv},
            "max_deviation": traj.max_deviation(),
            "rejected_steps": traj.rejected_steps,
            "samples": traj.samples.len(),
            "stationary_points": stationary_points(),
            "rhs_at_origin": membrane_ode_rhs(&OdeState::new(0.0, 0.0, 0.0)),
        }),
    ))
}

fn membrane(c: &CheckScenario, res: usize) -> Result<WarpedAnsatz, Error> {
    let chart = Chart::new(2, res, c.length, false)?;
    let (a, b) = (c.quadratic, c.cubic);
    WarpedAnsatz::membrane(chart, move |y| 1.0 + a * (y[0] * y[0] - y[1] * y[1]) + b * (y[0].powi(3) - 3.0 * y[0] * y[1] * y[1]))
}

fn check(c: &CheckScenario, out: &Artifacts) -> Result<(i32, Value), Failure> {
    let mut csv = String::from("res,h,einstein,maxwell,total\n");
    let mut rows = Vec::new();
    let mut passed = true;
    for &res in &c.resolutions {
        let ansatz = membrane(c, res)?;
        let r = sugra_field_residual(&ansatz)?;
        let ds = duff_stelle_check(&ansatz, c.tol)?;
        passed &= ds.passed();
        let total = r.einstein.hypot(r.maxwell);
        let _ = writeln!(csv, "{res},{:.17e},{:.17e},{:.17e},{:.17e}", ansatz.chart.spacing(), r.einstein, r.maxwell, total);
        rows.push((res, total, json!({"res": res, "einstein": r.einstein, "maxwell": r.maxwell, "total": total, "duff_stelle": ds})));
    }
    let orders: Vec<f64> = rows.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[1].0 as f64 / w[0].0 as f64).ln()).collect();
    out.write("trajectory.csv", csv)?;
    let code = if passed { EXIT_OK } else { EXIT_BREACH };
    Ok((
        code,
        json!({
            "termination": "completed",
            "duff_stelle_passed": passed,
            "observed_orders": orders,
            "levels": rows.into_iter().map(|r| r.2).collect::<Vec<_>>(),
        }),
    ))
}

fn homogeneous(h: &HomogeneousScenario, out: &Artifacts) -> Result<(i32, Value), Failure> {
    let t = 11usize.saturating_sub(h.worldvolume);
    let mut psi = RealForm::zeros(t, 4);
    for (legs, v) in &h.psi {
        psi.set(legs, *v).map_err(|e| Failure::Config(format!("[homogeneous] psi: {e}")))?;
    }
    let data = HomogeneousData::flat(h.worldvolume, h.beta.clone(), psi)?;
    let run = homogeneous_flow(&data, h.t_end, h.dt, h.threshold)?;
    let mut csv = String::from("t,growth\n");
    for (t, g) in run.times.iter().zip(&run.growth) {
        let _ = writeln!(csv, "{t:.17e},{g:.17e}");
    }
    out.write("trajectory.csv", &csv)?;
    out.write("monitors.csv", csv)?;
    let diag: Vec<f64> = (0..11).map(|i| run.final_data.metric[i * 11 + i]).collect();
    let code = if run.blow_up.is_some() { EXIT_BREACH } else { EXIT_OK };
    Ok((
        code,
        json!({
            "termination": if run.blow_up.is_some() { "blow_up" } else { "end_time" },
            "blow_up": run.blow_up,
            "final_growth": run.growth.last(),
            "final_metric_diagonal": diag,
        }),
    ))
}

fn verify(seed: u64, samples: usize, out: &Artifacts) -> Result<(i32, Value), Failure> {
    let reports = verify_all(seed, samples)?;
    out.write("verify.json", serde_json::to_string_pretty(&reports).expect("serializable") + "\n")?;
    let passed = reports.iter().all(|r| r.passed);
    let code = if passed { EXIT_OK } else { EXIT_BREACH };
    let ops: BTreeMap<&str, bool> = reports.iter().map(|r| (r.operation.as_str(), r.passed)).collect();
    Ok((code, json!({"termination": "completed", "passed": passed, "operations": ops, "reports": reports})))
}
