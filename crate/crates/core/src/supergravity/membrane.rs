//! The third-order ODE governing the five-parameter membrane family.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::integrator::{doubled_step, rk4_step, Doubled, StepControl};

/// Magnitude of `v` beyond which a run is declared to blow up.
pub const BLOW_UP: f64 = 1e8;

const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeState {
    pub t: f64,
    pub v: f64,
    pub dv: f64,
    pub ddv: f64,
}

impl OdeState {
    pub fn new(v: f64, dv: f64, ddv: f64) -> Self {
        OdeState { t: 0.0, v, dv, ddv }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.v.is_finite() && self.dv.is_finite() && self.ddv.is_finite()
    }

    fn vector(&self) -> Vec<f64> {
        vec![self.v, self.dv, self.ddv]
    }

    fn from_vector(t: f64, y: &[f64]) -> Self {
        OdeState { t, v: y[0], dv: y[1], ddv: y[2] }
    }
}

/// `12(v² − 4)(v² − 6)` in root-factored form, so the representable roots
/// `±2, ±fl(√6)` are exact zeros and `v = 0` still gives exactly 288.
fn quartic(v: f64) -> f64 {
    let r = 6f64.sqrt();
    12.0 * (v * v - 4.0) * ((v - r) * (v + r) * (6.0 / (r * r)))
}

/// `v‴` solved from `v‴ + 7v″v + 14v′² + 2v′(17v² − 60) + 12(v² − 4)(v² − 6) = 0`.
pub fn membrane_ode_rhs(s: &OdeState) -> f64 {
    let (v, dv, ddv) = (s.v, s.dv, s.ddv);
    -(7.0 * ddv * v + 14.0 * dv * dv + 2.0 * dv * (17.0 * v * v - 60.0) + quartic(v))
}

/// Constant solutions, the roots of `(v² − 4)(v² − 6)`.
pub fn stationary_points() -> Vec<f64> {
    let r6 = 6f64.sqrt();
    vec![-r6, -2.0, 2.0, r6]
}

/// Companion matrix of the linearization about the constant solution `v₀`,
/// acting on `(w, w′, w″)`.
pub fn linearization(v0: f64) -> [[f64; 3]; 3] {
    let c0 = -12.0 * (2.0 * v0 * (v0 * v0 - 6.0) + 2.0 * v0 * (v0 * v0 - 4.0));
    let c1 = -2.0 * (17.0 * v0 * v0 - 60.0);
    let c2 = -7.0 * v0;
    [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [c0, c1, c2]]
}

fn field(y: &Vec<f64>) -> std::result::Result<Vec<f64>, Error> {
    let s = OdeState::from_vector(0.0, y);
    Ok(vec![y[1], y[2], membrane_ode_rhs(&s)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeSample {
    #[serde(flatten)]
    pub state: OdeState,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeTrajectory {
    pub samples: Vec<OdeSample>,
    /// `(t_last_bounded, t_first_unbounded)` when `|v|` exceeded [`BLOW_UP`].
    pub blow_up: Option<(f64, f64)>,
    pub rejected_steps: usize,
}

impl OdeTrajectory {
    pub fn last(&self) -> &OdeState {
        &self.samples.last().expect("trajectory holds the initial state").state
    }

    /// Largest `|v(t) − v(0)|`.
    pub fn max_deviation(&self) -> f64 {
        let v0 = self.samples[0].state.v;
        self.samples.iter().map(|s| (s.state.v - v0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,v,dv,ddv,err\n");
        for s in &self.samples {
            let st = &s.state;
            out.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n", st.t, st.v, st.dv, st.ddv, s.err));
        }
        out
    }
}

/// Adaptive RK4 with step doubling; each accepted step has error estimate at
/// most `tol·(1 + max|y|)`.
pub fn integrate_ode(initial: OdeState, t_end: f64, tol: f64) -> Result<OdeTrajectory> {
    if !(tol > 0.0) || !initial.is_finite() || !t_end.is_finite() || t_end < initial.t {
        return Err(Error::InvalidArgument(format!("integrate_ode: tol {tol}, t_end {t_end}")));
    }
    let ctl = StepControl { rtol: tol, atol: tol, safety: 0.9, dt_min: 1e-14, dt_max: MAX_DT };
    let mut samples = vec![OdeSample { state: initial, err: 0.0 }];
    let mut y = initial.vector();
    let mut t = initial.t;
    let mut dt = 1e-3f64.min(t_end - t).max(0.0);
    let mut rejected = 0;
    let mut f = field;
    while t < t_end {
        let step = dt.min(t_end - t);
        let k1 = f(&y)?;
        match doubled_step(&mut f, &y, step, &k1, &ctl)? {
            Doubled::Accepted { y: next, err, dt_next } => {
                let t_next = if step == t_end - t { t_end } else { t + step };
                if next[0].abs() > BLOW_UP {
                    return Ok(OdeTrajectory { samples, blow_up: Some((t, t_next)), rejected_steps: rejected });
                }
                y = next;
                t = t_next;
                samples.push(OdeSample { state: OdeState::from_vector(t, &y), err });
                dt = dt_next;
            }
            Doubled::Rejected { dt_next, .. } => {
                rejected += 1;
                if y[0].abs() > BLOW_UP.sqrt() && dt_next < ctl.dt_min * t.abs().max(1.0) {
                    return Ok(OdeTrajectory { samples, blow_up: Some((t, t + step)), rejected_steps: rejected });
                }
                dt = dt_next;
            }
        }
        if dt < ctl.dt_min * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, dt });
        }
    }
    Ok(OdeTrajectory { samples, blow_up: None, rejected_steps: rejected })
}

/// Classical RK4 with `steps` equal steps; used for order studies.
pub fn integrate_ode_fixed(initial: OdeState, t_end: f64, steps: usize) -> Result<OdeState> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let dt = (t_end - initial.t) / steps as f64;
    let mut y = initial.vector();
    let mut f = field;
    for _ in 0..steps {
        y = rk4_step(&mut f, &y, dt, None)?;
    }
    Ok(OdeState::from_vector(t_end, &y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    #[test]
    fn rhs_at_reference_states() {
        assert_eq!(membrane_ode_rhs(&OdeState::new(2.0, 0.0, 0.0)), 0.0);
        assert_eq!(membrane_ode_rhs(&OdeState::new(0.0, 0.0, 0.0)), -288.0);
        assert_eq!(membrane_ode_rhs(&OdeState::new(6f64.sqrt(), 0.0, 0.0)), 0.0);
        assert_eq!(membrane_ode_rhs(&OdeState::new(-6f64.sqrt(), 0.0, 0.0)), 0.0);
    }

    #[test]
    fn stationary_points_are_roots() {
        let pts = stationary_points();
        assert!(pts.contains(&2.0));
        assert!(pts.iter().any(|v| (v - 6f64.sqrt()).abs() < 1e-15));
        for v in pts {
            assert!(membrane_ode_rhs(&OdeState::new(v, 0.0, 0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_solutions_stay_put() {
        for v in stationary_points() {
            let traj = integrate_ode(OdeState::new(v, 0.0, 0.0), 10.0, 1e-10).unwrap();
            assert_eq!(traj.last().t, 10.0);
            assert!(traj.max_deviation() < 1e-12, "v = {v}: {}", traj.max_deviation());
        }
    }

    #[test]
    fn linearization_roots_at_two() {
        let a = linearization(2.0);
        let m = Matrix3::from_fn(|i, j| a[i][j]);
        let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        for (e, x) in ev.iter().zip([-12.0, -4.0, 2.0]) {
            assert!((e - x).abs() < 1e-10);
        }
    }

    #[test]
    fn small_perturbation_follows_linear_propagator() {
        let eps = 1e-6;
        let traj = integrate_ode(OdeState::new(2.0 + eps, 0.0, 0.0), 2.0, 1e-12).unwrap();
        let a = linearization(2.0);
        let m = Matrix3::from_fn(|i, j| a[i][j]);
        let eig = m.clone().complex_eigenvalues();
        // propagate with exp(At) built from the real, distinct spectrum
        let lambdas: Vec<f64> = eig.iter().map(|z| z.re).collect();
        let vander = Matrix3::from_fn(|i, j| lambdas[j].powi(i as i32));
        let coeffs = vander.lu().solve(&nalgebra::Vector3::new(eps, 0.0, 0.0)).unwrap();
        for s in traj.samples.iter().step_by(5) {
            let t = s.state.t;
            let w: f64 = (0..3).map(|j| coeffs[j] * (lambdas[j] * t).exp()).sum();
            let dev = s.state.v - 2.0;
            assert!((dev - w).abs() < 1e-3 * w.abs() + 1e-13, "t = {t}: {dev} vs {w}");
        }
    }

    #[test]
    fn fixed_step_rk4_is_fourth_order() {
        let start = OdeState::new(2.3, 0.5, 0.0);
        let y: Vec<f64> = [40, 80, 160].iter().map(|&n| integrate_ode_fixed(start, 1.0, n).unwrap().v).collect();
        let order = ((y[0] - y[1]) / (y[1] - y[2])).abs().log2();
        assert!((order - 4.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn blow_up_is_bracketed() {
        let traj = integrate_ode(OdeState::new(-3.0, -5.0, 0.0), 10.0, 1e-8).unwrap();
        let (a, b) = traj.blow_up.expect("solution escapes");
        assert!(a < b && b < 10.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let traj = integrate_ode(OdeState::new(2.0, 0.0, 0.0), 1.0, 1e-10).unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,v,dv,ddv,err\n"));
        assert_eq!(csv.lines().count(), traj.samples.len() + 1);
    }
}
