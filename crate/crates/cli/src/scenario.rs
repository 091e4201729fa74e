//! Typed scenarios built from sectioned configuration files.

use std::path::{Path, PathBuf};

use stringflow::flows::FlowKind;
use stringflow::flows::FlowConfig;
use stringflow::monitors::{Bound, Threshold};

use crate::ini::{ConfigError, Ini};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Anomaly,
    Eta,
    Ma,
    FuYau,
    Iib,
    SugraOde,
    SugraCheck,
    HomogeneousFlow,
    Verify,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Anomaly,
        Kind::Eta,
        Kind::Ma,
        Kind::FuYau,
        Kind::Iib,
        Kind::SugraOde,
        Kind::SugraCheck,
        Kind::HomogeneousFlow,
        Kind::Verify,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Kind::Anomaly => "anomaly",
            Kind::Eta => "eta",
            Kind::Ma => "ma",
            Kind::FuYau => "fu-yau",
            Kind::Iib => "iib",
            Kind::SugraOde => "sugra-ode",
            Kind::SugraCheck => "sugra-check",
            Kind::HomogeneousFlow => "homogeneous-flow",
            Kind::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    fn flow_kind(&self) -> Option<FlowKind> {
        Some(match self {
            Kind::Anomaly => FlowKind::Anomaly,
            Kind::Eta => FlowKind::Eta,
            Kind::Ma => FlowKind::MongeAmpere,
            Kind::FuYau => FlowKind::FuYau,
            Kind::Iib => FlowKind::TypeIib,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Flat,
    ConformalMode,
    FuYauAnsatz,
    KahlerPerturbation,
    Manufactured,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Flat => "flat",
            Preset::ConformalMode => "conformal-mode",
            Preset::FuYauAnsatz => "fu-yau-ansatz",
            Preset::KahlerPerturbation => "kahler-perturbation",
            Preset::Manufactured => "manufactured",
        }
    }

    fn parse(s: &str) -> Option<Preset> {
        [Preset::Flat, Preset::ConformalMode, Preset::FuYauAnsatz, Preset::KahlerPerturbation, Preset::Manufactured]
            .into_iter()
            .find(|p| p.name() == s)
    }

    fn allowed(kind: Kind) -> &'static [Preset] {
        match kind {
            Kind::Anomaly => &[Preset::Flat, Preset::ConformalMode, Preset::FuYauAnsatz],
            Kind::Eta => &[Preset::Flat, Preset::ConformalMode, Preset::FuYauAnsatz, Preset::KahlerPerturbation],
            Kind::Ma => &[Preset::Flat, Preset::ConformalMode, Preset::KahlerPerturbation],
            Kind::FuYau => &[Preset::Flat, Preset::ConformalMode],
            Kind::Iib => &[Preset::Manufactured],
            Kind::SugraCheck => &[Preset::Manufactured],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub m: usize,
    pub resolution: Vec<usize>,
    pub active: Vec<usize>,
    pub periods: Vec<f64>,
}

/// Initial data: a named preset, the amplitude of its oscillating part and a
/// real wave vector with one entry per real coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub preset: Preset,
    pub amplitude: f64,
    pub mode: Vec<f64>,
    pub perturbation: f64,
}

/// `amplitude·sin(2π mode·x)`, normalized for integrability.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub amplitude: f64,
    pub mode: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowScenario {
    pub grid: GridSpec,
    pub initial: InitialSpec,
    pub source: SourceSpec,
    pub config: FlowConfig,
    pub curvature: bool,
    pub pairing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeScenario {
    pub v: f64,
    pub dv: f64,
    pub ddv: f64,
    pub t_end: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckScenario {
    pub resolutions: Vec<usize>,
    pub length: f64,
    pub tol: f64,
    /// Coefficients of `1 + a(y₁² − y₂²) + b(y₁³ − 3y₁y₂²)`.
    pub quadratic: f64,
    pub cubic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousScenario {
    pub worldvolume: usize,
    pub beta: Vec<f64>,
    /// `(sorted transverse legs, coefficient)` of `Ψ`.
    pub psi: Vec<(Vec<usize>, f64)>,
    pub t_end: f64,
    pub dt: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Flow(Box<FlowScenario>),
    Ode(OdeScenario),
    Check(CheckScenario),
    Homogeneous(HomogeneousScenario),
    Verify { samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub body: Body,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: path.display().to_string(),
            line: None,
            message: format!("cannot read scenario: {e}"),
        })?;
        Scenario::parse(&path.display().to_string(), &text)
    }

    pub fn parse(source: &str, text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::parse(source, text)?;
        let kind_str = ini.require_str("scenario", "kind")?;
        let kind = Kind::parse(&kind_str).ok_or_else(|| {
            let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
            ini.error(ini.line_of("scenario", "kind"), format!("[scenario] kind: unknown kind {kind_str:?}; expected one of {}", names.join(", ")))
        })?;
        let name = ini.get_str("scenario", "name").unwrap_or_else(|| kind.name().to_string());
        let seed = ini.get::<u64>("scenario", "seed")?;
        let output = ini.get_str("output", "dir").map(PathBuf::from);
        let body = match kind {
            Kind::SugraOde => Body::Ode(parse_ode(&ini)?),
            Kind::SugraCheck => {
                preset(&ini, kind, Preset::Manufactured)?;
                Body::Check(parse_check(&ini)?)
            }
            Kind::HomogeneousFlow => Body::Homogeneous(parse_homogeneous(&ini)?),
            Kind::Verify => Body::Verify { samples: ini.get_or("verify", "samples", 50usize)? },
            _ => Body::Flow(Box::new(parse_flow(&ini, kind)?)),
        };
        ini.reject_unknown()?;
        Ok(Scenario { name, kind, seed, output, body })
    }
}

fn preset(ini: &Ini, kind: Kind, default: Preset) -> Result<Preset, ConfigError> {
    let p = match ini.get_str("initial", "preset") {
        None => default,
        Some(s) => Preset::parse(&s).ok_or_else(|| {
            ini.error(ini.line_of("initial", "preset"), format!("[initial] preset: unknown preset {s:?}"))
        })?,
    };
    if !Preset::allowed(kind).contains(&p) {
        let names: Vec<&str> = Preset::allowed(kind).iter().map(|p| p.name()).collect();
        return Err(ini.error(
            ini.line_of("initial", "preset"),
            format!("[initial] preset '{}' is not available for kind {}; use one of {}", p.name(), kind.name(), names.join(", ")),
        ));
    }
    Ok(p)
}

fn wave_vector(ini: &Ini, section: &str, grid: &GridSpec) -> Result<Vec<f64>, ConfigError> {
    let d = 2 * grid.m;
    match ini.get_list::<f64>(section, "mode")? {
        Some(v) if v.len() != d => {
            Err(ini.error(ini.line_of(section, "mode"), format!("[{section}] mode needs {d} entries, got {}", v.len())))
        }
        Some(v) => {
            if let Some(a) = (0..d).find(|&a| v[a] != 0.0 && !grid.active.contains(&a)) {
                return Err(ini.error(ini.line_of(section, "mode"), format!("[{section}] mode varies along inactive axis {a}")));
            }
            Ok(v)
        }
        None => {
            let mut v = vec![0.0; d];
            if let Some(&a) = grid.active.first() {
                v[a] = 1.0;
            }
            Ok(v)
        }
    }
}

fn parse_grid(ini: &Ini, default_m: usize) -> Result<GridSpec, ConfigError> {
    let m = ini.get_or("grid", "m", default_m)?;
    let resolution = ini.get_list::<usize>("grid", "resolution")?.unwrap_or_else(|| vec![16]);
    let active = ini.get_list::<usize>("grid", "active")?.unwrap_or_else(|| (0..2 * m).collect());
    let periods = ini.get_list::<f64>("grid", "periods")?.unwrap_or_default();
    if let Some(&a) = active.iter().find(|&&a| a >= 2 * m) {
        return Err(ini.error(ini.line_of("grid", "active"), format!("[grid] active axis {a} exceeds 2m - 1 = {}", 2 * m - 1)));
    }
    Ok(GridSpec { m, resolution, active, periods })
}

fn parse_flow(ini: &Ini, kind: Kind) -> Result<FlowScenario, ConfigError> {
    let default_m = match kind {
        Kind::Ma | Kind::FuYau => 2,
        _ => 3,
    };
    let grid = parse_grid(ini, default_m)?;
    let required_m = match kind {
        Kind::FuYau => Some(2),
        Kind::Iib => Some(3),
        _ => None,
    };
    if let Some(m) = required_m.filter(|&m| m != grid.m) {
        return Err(ini.error(ini.line_of("grid", "m"), format!("[grid] m: kind {} needs m = {m}", kind.name())));
    }
    let default_preset = if kind == Kind::Iib { Preset::Manufactured } else { Preset::Flat };
    let p = preset(ini, kind, default_preset)?;
    if matches!(p, Preset::FuYauAnsatz | Preset::Manufactured) || (kind == Kind::Anomaly && p == Preset::ConformalMode) {
        if grid.m != 3 {
            return Err(ini.error(ini.line_of("grid", "m"), format!("[grid] m: preset {} needs m = 3", p.name())));
        }
    }
    let initial = InitialSpec {
        preset: p,
        amplitude: ini.get_or("initial", "amplitude", 0.1)?,
        mode: wave_vector(ini, "initial", &grid)?,
        perturbation: ini.get_or("initial", "perturbation", 0.01)?,
    };
    let fibre_mode = initial.mode.iter().skip(4).any(|&k| k != 0.0);
    if grid.m == 3 && fibre_mode && matches!(p, Preset::ConformalMode | Preset::FuYauAnsatz | Preset::Manufactured) && kind != Kind::Eta {
        return Err(ini.error(ini.line_of("initial", "mode"), "[initial] mode: the Fu-Yau factor may not depend on the fibre axes 4, 5"));
    }
    let source = SourceSpec {
        amplitude: ini.get_or("source", "amplitude", 0.0)?,
        mode: wave_vector(ini, "source", &grid)?,
    };
    let mut config = FlowConfig::new(kind.flow_kind().expect("flow kinds"));
    config.alpha = ini.get_or("flow", "alpha", 0.0)?;
    config.dt_init = ini.get_or("flow", "dt", config.dt_init)?;
    config.dt_min = ini.get_or("flow", "dt_min", config.dt_min)?;
    config.dt_max = ini.get_or("flow", "dt_max", config.dt_max)?;
    config.safety = ini.get_or("flow", "safety", config.safety)?;
    config.rtol = ini.get_or("flow", "rtol", config.rtol)?;
    config.tol = ini.get_or("flow", "tol", config.tol)?;
    config.max_steps = ini.get_or("flow", "max_steps", config.max_steps)?;
    config.cadence = ini.get_or("flow", "cadence", config.cadence)?;
    config.t_end = ini.get("flow", "t_end")?;
    config.fixed_step = ini.get_or("flow", "fixed_step", false)?;
    config.snapshot_every = ini.get("flow", "snapshot_every")?;
    config.continue_on_parabolicity_loss = ini.get_or("flow", "continue_on_parabolicity_loss", false)?;
    config.thresholds = parse_thresholds(ini)?;
    config.validate().map_err(|e| ini.error(None, format!("[flow] {e}")))?;
    let curvature = ini.get_or("flow", "curvature", config.alpha != 0.0)?;
    if kind == Kind::Iib && config.alpha != 0.0 && ini.line_of("flow", "alpha").is_some() && config.alpha != 1.0 {
        return Err(ini.error(ini.line_of("flow", "alpha"), "[flow] alpha: the Type IIB flow has unit slope"));
    }
    let pairing = ini.get_or("monitors", "pairing", false)?;
    Ok(FlowScenario { grid, initial, source, config, curvature, pairing })
}

fn parse_thresholds(ini: &Ini) -> Result<Vec<Threshold>, ConfigError> {
    let mut out = Vec::new();
    for (prefix, upper) in [("max.", true), ("min.", false)] {
        for name in ini.keys_with_prefix("monitors", prefix) {
            let v: f64 = ini.require("monitors", &format!("{prefix}{name}"))?;
            let bound = if upper { Bound::Upper(v) } else { Bound::Lower(v) };
            out.push(Threshold { name, bound });
        }
    }
    Ok(out)
}

fn parse_ode(ini: &Ini) -> Result<OdeScenario, ConfigError> {
    let s = OdeScenario {
        v: ini.get_or("ode", "v", 2.0)?,
        dv: ini.get_or("ode", "dv", 0.0)?,
        ddv: ini.get_or("ode", "ddv", 0.0)?,
        t_end: ini.get_or("ode", "t_end", 10.0)?,
        tol: ini.get_or("ode", "tol", 1e-10)?,
    };
    if !(s.t_end > 0.0) || !(s.tol > 0.0) {
        return Err(ini.error(None, "[ode] t_end and tol must be positive"));
    }
    Ok(s)
}

fn parse_check(ini: &Ini) -> Result<CheckScenario, ConfigError> {
    let s = CheckScenario {
        resolutions: ini.get_list::<usize>("check", "resolutions")?.unwrap_or_else(|| vec![8, 16, 32]),
        length: ini.get_or("check", "length", 1.0)?,
        tol: ini.get_or("check", "tol", 1e-9)?,
        quadratic: ini.get_or("check", "quadratic", 0.3)?,
        cubic: ini.get_or("check", "cubic", 0.2)?,
    };
    if s.resolutions.is_empty() || !(s.length > 0.0) || !(s.tol > 0.0) {
        return Err(ini.error(None, "[check] needs at least one resolution, positive length and tol"));
    }
    Ok(s)
}

fn parse_homogeneous(ini: &Ini) -> Result<HomogeneousScenario, ConfigError> {
    let worldvolume = ini.get_or("homogeneous", "worldvolume", 3usize)?;
    let t = 11usize.saturating_sub(worldvolume);
    let beta = ini.get_list::<f64>("homogeneous", "beta")?.unwrap_or_else(|| vec![0.0; t]);
    let mut psi = Vec::new();
    if let Some(spec) = ini.get_str("homogeneous", "psi") {
        let line = ini.line_of("homogeneous", "psi");
        for term in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || ini.error(line, format!("[homogeneous] psi: expected terms like 0123:0.5, found {term:?}"));
            let (legs, value) = term.split_once(':').ok_or_else(bad)?;
            let legs: Vec<usize> = legs.chars().map(|c| c.to_digit(16).map(|d| d as usize)).collect::<Option<_>>().ok_or_else(bad)?;
            psi.push((legs, value.trim().parse::<f64>().map_err(|_| bad())?));
        }
    }
    Ok(HomogeneousScenario {
        worldvolume,
        beta,
        psi,
        t_end: ini.get_or("homogeneous", "t_end", 1.0)?,
        dt: ini.get_or("homogeneous", "dt", 1e-3)?,
        threshold: ini.get_or("homogeneous", "threshold", 10.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ma_scenario() {
        let s = Scenario::parse(
            "ma.ini",
            "[scenario]\nkind = ma\nseed = 3\n[grid]\nm = 2\nresolution = 32\nactive = 0,1\n[source]\namplitude = 0.2\nmode = 1,0,0,0\n[flow]\ncadence = 10\n",
        )
        .unwrap();
        assert_eq!(s.kind, Kind::Ma);
        assert_eq!(s.seed, Some(3));
        let Body::Flow(f) = s.body else { panic!() };
        assert_eq!(f.grid.resolution, vec![32]);
        assert_eq!(f.source.amplitude, 0.2);
        assert_eq!(f.config.cadence, 10);
        assert_eq!(f.initial.preset, Preset::Flat);
    }

    #[test]
    fn kind_errors_name_the_line() {
        let e = Scenario::parse("x.ini", "[scenario]\nkind = ricci\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = Scenario::parse("x.ini", "[scenario]\n").unwrap_err();
        assert!(e.message.contains("kind"));
    }

    #[test]
    fn presets_are_checked_against_kind() {
        let e = Scenario::parse("x.ini", "[scenario]\nkind = fu-yau\n[grid]\nm = 2\n[initial]\npreset = manufactured\n")
            .unwrap_err();
        assert_eq!(e.line, Some(6));
        let e = Scenario::parse("x.ini", "[scenario]\nkind = anomaly\n[grid]\nm = 2\n[initial]\npreset = fu-yau-ansatz\n")
            .unwrap_err();
        assert!(e.message.contains("m = 3"));
    }

    #[test]
    fn unknown_keys_fail() {
        let e = Scenario::parse("x.ini", "[scenario]\nkind = sugra-ode\n[ode]\nv = 2\nvv = 1\n").unwrap_err();
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn thresholds_and_psi() {
        let s = Scenario::parse(
            "x.ini",
            "[scenario]\nkind = homogeneous-flow\n[homogeneous]\npsi = 0123:0.5, 4567:-1\n",
        )
        .unwrap();
        let Body::Homogeneous(h) = s.body else { panic!() };
        assert_eq!(h.psi, vec![(vec![0, 1, 2, 3], 0.5), (vec![4, 5, 6, 7], -1.0)]);
        let s = Scenario::parse(
            "x.ini",
            "[scenario]\nkind = fu-yau\n[grid]\nm = 2\nactive = 0,1\n[monitors]\nmax.sup_exp_u = 2\nmin.inf_exp_u = 0.1\n",
        )
        .unwrap();
        let Body::Flow(f) = s.body else { panic!() };
        assert_eq!(f.config.thresholds.len(), 2);
    }

    #[test]
    fn invalid_step_configuration() {
        let e = Scenario::parse("x.ini", "[scenario]\nkind = ma\n[grid]\nm = 2\n[flow]\ndt = 10\n").unwrap_err();
        assert!(e.message.contains("[flow]"));
    }
}
