//! Time loop shared by all flows.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use log::{debug, info, warn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::flows::integrator::{doubled_step, rk4_step, Doubled, StepControl};
use crate::monitors::{Breach, MonitorReport, Threshold};

/// Explicit RK4 is stable on the negative real axis up to about 2.78.
pub const STABILITY_LIMIT: f64 = 2.5;

/// Accepted steps between stiffness estimates.
pub const STIFFNESS_REFRESH: usize = 5;

/// Consecutive below-tolerance checks required to declare convergence.
pub const CONVERGENCE_CHECKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    Anomaly,
    TypeIib,
    Eta,
    MongeAmpere,
    FuYau,
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Anomaly => "anomaly",
            FlowKind::TypeIib => "iib",
            FlowKind::Eta => "eta",
            FlowKind::MongeAmpere => "ma",
            FlowKind::FuYau => "fu_yau",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "anomaly" => FlowKind::Anomaly,
            "iib" => FlowKind::TypeIib,
            "eta" => FlowKind::Eta,
            "ma" => FlowKind::MongeAmpere,
            "fu_yau" => FlowKind::FuYau,
            _ => return Err(Error::InvalidArgument(format!("unknown flow kind '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub alpha: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub rtol: f64,
    /// Stop once the RHS norm stays below this for consecutive checks.
    pub tol: f64,
    pub max_steps: usize,
    /// Monitor and record every this many accepted steps.
    pub cadence: usize,
    /// Integrate to this time, ignoring the convergence test.
    pub t_end: Option<f64>,
    /// Constant `dt_init` steps without error control.
    pub fixed_step: bool,
    /// Keep snapshots every this many steps.
    pub snapshot_every: Option<usize>,
    pub thresholds: Vec<Threshold>,
    pub continue_on_parabolicity_loss: bool,
}

impl FlowConfig {
    pub fn new(kind: FlowKind) -> Self {
        FlowConfig {
            kind,
            alpha: 0.0,
            dt_init: 1e-3,
            dt_min: 1e-12,
            dt_max: 1.0,
            safety: 0.9,
            rtol: 1e-8,
            tol: 1e-8,
            max_steps: 100_000,
            cadence: 1,
            t_end: None,
            fixed_step: false,
            snapshot_every: None,
            thresholds: Vec::new(),
            continue_on_parabolicity_loss: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.tol > 0.0
            && self.rtol > 0.0
            && self.safety > 0.0
            && self.safety <= 1.0
            && self.cadence > 0
            && self.t_end.map_or(true, |t| t > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "flow configuration needs 0 < dt_min ≤ dt_init ≤ dt_max, positive tolerances and cadence".into(),
            ))
        }
    }

    fn control(&self) -> StepControl {
        StepControl {
            rtol: self.rtol,
            atol: self.rtol * 1e-4,
            safety: self.safety,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimaryField {
    Metric(MetricField),
    Scalar(ScalarField),
}

impl PrimaryField {
    pub fn metric(&self) -> Option<&MetricField> {
        match self {
            PrimaryField::Metric(g) => Some(g),
            PrimaryField::Scalar(_) => None,
        }
    }

    pub fn scalar(&self) -> Option<&ScalarField> {
        match self {
            PrimaryField::Scalar(s) => Some(s),
            PrimaryField::Metric(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub field: PrimaryField,
    pub step: usize,
    pub dt: f64,
}

impl FlowState {
    pub fn initial(field: PrimaryField) -> Self {
        FlowState { t: 0.0, field, step: 0, dt: 0.0 }
    }
}

/// Per-point failure of a trial state during a step.
fn is_positivity_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NotPositive { .. } | Error::SingularMetric { .. } | Error::SingularLinearization { .. }
    )
}

/// One evolution equation in the form the time loop needs.
pub trait FlowSystem: Sync {
    fn encode(&self, field: &PrimaryField) -> Result<Vec<C64>>;
    fn decode(&self, y: &[C64]) -> Result<PrimaryField>;
    fn rate(&self, y: &Vec<C64>) -> Result<Vec<C64>>;
    /// Largest decay rate of the linearized flow at `y`.
    fn stiffness(&self, y: &[C64]) -> Result<f64>;
    /// `L²` norm of the quantity that vanishes at a fixed point.
    fn rhs_norm(&self, y: &[C64], rate: &[C64]) -> Result<f64>;
    /// Standard columns and extra monitors at `y`.
    fn diagnostics(&self, y: &[C64]) -> Result<Diagnostics>;
    /// Parabolicity floor when the flow has one.
    fn parabolicity(&self, _y: &[C64]) -> Result<Option<f64>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub balanced_residual: f64,
    pub conserved_volume: f64,
    pub min_eig: f64,
    pub extras: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub rhs_norm: f64,
    pub diag: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxSteps,
    EndTime,
    StepUnderflow,
    PositivityLoss,
    ParabolicityLoss,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxSteps => "max_steps",
            Termination::EndTime => "end_time",
            Termination::StepUnderflow => "step_underflow",
            Termination::PositivityLoss => "positivity_loss",
            Termination::ParabolicityLoss => "parabolicity_loss",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub reports: Vec<MonitorReport>,
    pub breaches: Vec<Breach>,
    pub snapshots: Vec<FlowState>,
    pub final_state: FlowState,
    pub termination: Termination,
    pub rejected_steps: usize,
}

impl Trajectory {
    /// Trajectory table with one row per record; extra monitor columns are
    /// the union of names across records, sorted.
    pub fn to_csv(&self) -> String {
        let mut names: Vec<&String> =
            self.records.iter().flat_map(|r| r.diag.extras.keys()).collect();
        names.sort();
        names.dedup();
        let mut out = String::from("step,t,dt,rhs_norm,balanced_residual,conserved_volume,min_eig");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.step,
                r.t,
                r.dt,
                r.rhs_norm,
                r.diag.balanced_residual,
                r.diag.conserved_volume,
                r.diag.min_eig
            );
            for n in &names {
                match r.diag.extras.get(*n) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.17e}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectories hold at least the initial record")
    }

    /// Largest absolute change of `column` per unit time relative to the first record.
    pub fn drift_rate(&self, column: impl Fn(&Record) -> f64) -> f64 {
        let first = &self.records[0];
        let c0 = column(first);
        self.records
            .iter()
            .skip(1)
            .filter(|r| r.t > first.t)
            .map(|r| (column(r) - c0).abs() / (r.t - first.t).max(1.0))
            .fold(0.0, f64::max)
    }
}

struct Checker<'a> {
    config: &'a FlowConfig,
    below: usize,
    records: Vec<Record>,
    reports: Vec<MonitorReport>,
    breaches: Vec<Breach>,
}

impl Checker<'_> {
    /// Record the state; returns `true` when converged.
    fn check(
        &mut self,
        system: &dyn FlowSystem,
        y: &[C64],
        rate: &[C64],
        step: usize,
        t: f64,
        dt: f64,
    ) -> Result<bool> {
        let rhs_norm = system.rhs_norm(y, rate)?;
        let diag = system.diagnostics(y)?;
        let mut values = diag.extras.clone();
        values.insert("rhs_norm".into(), rhs_norm);
        values.insert("balanced_residual".into(), diag.balanced_residual);
        values.insert("conserved_volume".into(), diag.conserved_volume);
        values.insert("min_eig".into(), diag.min_eig);
        let report = MonitorReport::new(t, values, &self.config.thresholds);
        for b in report.breaches(&self.config.thresholds) {
            warn!("{b}");
            self.breaches.push(b);
        }
        self.reports.push(report);
        debug!("step {step} t={t:.6e} dt={dt:.3e} rhs={rhs_norm:.3e}");
        self.records.push(Record { step, t, dt, rhs_norm, diag });
        if self.config.t_end.is_some() {
            return Ok(false);
        }
        let scale: f64 = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if rhs_norm <= 1e-14 * (1.0 + scale) {
            return Ok(true);
        }
        if rhs_norm < self.config.tol {
            self.below += 1;
        } else {
            self.below = 0;
        }
        Ok(self.below >= CONVERGENCE_CHECKS)
    }
}

/// Integrate `system` from `initial` until a termination condition holds.
pub fn run_flow(
    config: &FlowConfig,
    system: &dyn FlowSystem,
    initial: &FlowState,
) -> Result<Trajectory> {
    config.validate()?;
    let mut y = system.encode(&initial.field)?;
    let mut t = initial.t;
    let mut step = initial.step;
    let mut dt = config.dt_init;
    let ctl = config.control();
    let mut checker = Checker {
        config,
        below: 0,
        records: Vec::new(),
        reports: Vec::new(),
        breaches: Vec::new(),
    };
    let mut snapshots = Vec::new();
    let mut rejected = 0;
    let mut f = |v: &Vec<C64>| system.rate(v);

    let mut k1 = f(&y)?;
    let mut last_dt = initial.dt;
    let mut checked_at = step;
    let mut termination = if checker.check(system, &y, &k1, step, t, last_dt)? {
        Some(Termination::Converged)
    } else {
        None
    };
    if config.snapshot_every.is_some() {
        snapshots.push(FlowState { t, field: system.decode(&y)?, step, dt: last_dt });
    }

    let mut lambda = 0.0;
    let mut stiffness_age = STIFFNESS_REFRESH;
    while termination.is_none() {
        if step - initial.step >= config.max_steps {
            termination = Some(Termination::MaxSteps);
            break;
        }
        if let Some(te) = config.t_end {
            if t >= te * (1.0 - 1e-14) {
                termination = Some(Termination::EndTime);
                break;
            }
        }
        let mut h = if config.fixed_step { config.dt_init } else { dt.min(config.dt_max) };
        if !config.fixed_step {
            if stiffness_age >= STIFFNESS_REFRESH {
                lambda = system.stiffness(&y)?;
                stiffness_age = 0;
            }
            if lambda > 0.0 {
                h = h.min(STABILITY_LIMIT / lambda);
            }
        }
        if let Some(te) = config.t_end {
            h = h.min(te - t);
        }
        let outcome = if config.fixed_step {
            rk4_step(&mut f, &y, h, Some(&k1)).map(|y| Doubled::Accepted { y, err: 0.0, dt_next: h })
        } else {
            doubled_step(&mut f, &y, h, &k1, &ctl)
        };
        let (next, dt_next) = match outcome {
            Ok(Doubled::Accepted { y, dt_next, .. }) => match f(&y) {
                Ok(k) => ((y, k), dt_next),
                Err(e) if is_positivity_failure(&e) && !config.fixed_step => {
                    rejected += 1;
                    stiffness_age = STIFFNESS_REFRESH;
                    dt = 0.25 * h;
                    if dt < config.dt_min {
                        termination = Some(Termination::PositivityLoss);
                    }
                    continue;
                }
                Err(e) if is_positivity_failure(&e) => {
                    termination = Some(Termination::PositivityLoss);
                    break;
                }
                Err(e) => return Err(e),
            },
            Ok(Doubled::Rejected { dt_next, err }) => {
                rejected += 1;
                stiffness_age = STIFFNESS_REFRESH;
                debug!("rejected dt={h:.3e} err={err:.3e}");
                dt = dt_next;
                if dt < config.dt_min {
                    termination = Some(Termination::StepUnderflow);
                }
                continue;
            }
            Err(e) if is_positivity_failure(&e) && !config.fixed_step => {
                rejected += 1;
                stiffness_age = STIFFNESS_REFRESH;
                dt = 0.25 * h;
                if dt < config.dt_min {
                    termination = Some(Termination::PositivityLoss);
                }
                continue;
            }
            Err(e) if is_positivity_failure(&e) => {
                termination = Some(Termination::PositivityLoss);
                break;
            }
            Err(e) => return Err(e),
        };
        y = next.0;
        k1 = next.1;
        stiffness_age += 1;
        t += h;
        step += 1;
        last_dt = h;
        dt = dt_next;
        if let Some(floor) = system.parabolicity(&y)? {
            if !(floor > 0.0) {
                warn!("parabolicity lost at t={t:.6e}: floor {floor:.3e}");
                if !config.continue_on_parabolicity_loss {
                    termination = Some(Termination::ParabolicityLoss);
                }
            }
        }
        if (step - initial.step) % config.cadence == 0 {
            checked_at = step;
            if checker.check(system, &y, &k1, step, t, last_dt)? {
                termination = Some(Termination::Converged);
            }
        }
        if let Some(every) = config.snapshot_every {
            if every > 0 && (step - initial.step) % every == 0 {
                snapshots.push(FlowState { t, field: system.decode(&y)?, step, dt: last_dt });
            }
        }
    }
    if checked_at != step {
        checker.check(system, &y, &k1, step, t, last_dt)?;
    }
    let termination = termination.unwrap_or(Termination::MaxSteps);
    info!("flow {} stopped: {termination} at t={t:.6e} after {step} steps", config.kind.name());
    Ok(Trajectory {
        records: checker.records,
        reports: checker.reports,
        breaches: checker.breaches,
        snapshots,
        final_state: FlowState { t, field: system.decode(&y)?, step, dt: last_dt },
        termination,
        rejected_steps: rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MetricField;
    use crate::flows::systems::{AnomalySystem, MaSystem};
    use crate::grid::LatticeGrid;
    use crate::linalg::Mat;

    #[test]
    fn flat_anomaly_converges_immediately() {
        let grid = LatticeGrid::new(3, 4, &[0, 1]).unwrap();
        let sys = AnomalySystem::new(&grid, 0.0, None, false).unwrap();
        let init = FlowState::initial(PrimaryField::Metric(MetricField::identity(&grid)));
        let tr = run_flow(&FlowConfig::new(FlowKind::Anomaly), &sys, &init).unwrap();
        assert_eq!(tr.termination, Termination::Converged);
        assert_eq!(tr.final_state.step, 0);
    }

    #[test]
    fn ma_flow_without_source_is_linear_in_time() {
        let grid = LatticeGrid::new(2, 8, &[0, 1]).unwrap();
        let sys = MaSystem::new(MetricField::identity(&grid), ScalarField::constant(&grid, 0.0)).unwrap();
        let init = FlowState::initial(PrimaryField::Scalar(ScalarField::constant(&grid, 0.0)));
        let mut cfg = FlowConfig::new(FlowKind::MongeAmpere);
        cfg.t_end = Some(0.75);
        cfg.dt_init = 0.1;
        cfg.tol = 1e-30;
        let tr = run_flow(&cfg, &sys, &init).unwrap();
        assert_eq!(tr.termination, Termination::EndTime);
        let phi = tr.final_state.field.scalar().unwrap();
        assert!(phi.values.iter().all(|v| (v.re - 0.75).abs() < 1e-14));
        assert!(tr.records.iter().all(|r| r.diag.extras["d_chi"] < 1e-12));
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        let mut cfg = FlowConfig::new(FlowKind::Eta);
        cfg.dt_min = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unbalanced_initial_metric_is_rejected() {
        let grid = LatticeGrid::new(3, 8, &[0, 1, 2]).unwrap();
        let g = MetricField::from_fn(&grid, |x| {
            let mut a = Mat::identity(3);
            a[(2, 2)] = C64::new(1.0 + 0.2 * (2.0 * std::f64::consts::PI * x[0]).sin(), 0.0);
            a
        });
        let sys = AnomalySystem::new(&grid, 0.0, None, false).unwrap();
        let init = FlowState::initial(PrimaryField::Metric(g));
        assert!(run_flow(&FlowConfig::new(FlowKind::Anomaly), &sys, &init).is_err());
    }
}
