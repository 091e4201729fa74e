//! Classical Runge-Kutta 4 with step-doubling error control.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Minimal vector-space interface needed by the integrator.
pub trait Vector: Clone + Send + Sync {
    /// `self + a·x`
    fn axpy(&self, a: f64, x: &Self) -> Self;
    /// Largest component modulus.
    fn max_abs(&self) -> f64;
    /// Largest component modulus of `self − other`.
    fn max_abs_diff(&self, other: &Self) -> f64;
}

impl Vector for Vec<f64> {
    fn axpy(&self, a: f64, x: &Self) -> Self {
        self.iter().zip(x).map(|(y, x)| y + a * x).collect()
    }
    fn max_abs(&self) -> f64 {
        self.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Vector for Vec<C64> {
    fn axpy(&self, a: f64, x: &Self) -> Self {
        self.par_iter().zip(x.par_iter()).map(|(y, x)| y + x * a).collect()
    }
    fn max_abs(&self) -> f64 {
        self.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// One classical RK4 step.
pub fn rk4_step<V: Vector, E>(
    f: &mut impl FnMut(&V) -> Result<V, E>,
    y: &V,
    dt: f64,
    k1: Option<&V>,
) -> Result<V, E> {
    let k1 = match k1 {
        Some(k) => k.clone(),
        None => f(y)?,
    };
    let k2 = f(&y.axpy(0.5 * dt, &k1))?;
    let k3 = f(&y.axpy(0.5 * dt, &k2))?;
    let k4 = f(&y.axpy(dt, &k3))?;
    Ok(y
        .axpy(dt / 6.0, &k1)
        .axpy(dt / 3.0, &k2)
        .axpy(dt / 3.0, &k3)
        .axpy(dt / 6.0, &k4))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub safety: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-8, atol: 1e-12, safety: 0.9, dt_min: 1e-12, dt_max: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub enum Doubled<V> {
    Accepted { y: V, err: f64, dt_next: f64 },
    Rejected { err: f64, dt_next: f64 },
}

/// Compare one step of `dt` with two of `dt/2`; on acceptance the two
/// half-step result is returned.
pub fn doubled_step<V: Vector, E>(
    f: &mut impl FnMut(&V) -> Result<V, E>,
    y: &V,
    dt: f64,
    k1: &V,
    ctl: &StepControl,
) -> Result<Doubled<V>, E> {
    let full = rk4_step(f, y, dt, Some(k1))?;
    let k1h = k1.clone();
    let mid = rk4_step(f, y, 0.5 * dt, Some(&k1h))?;
    let half = rk4_step(f, &mid, 0.5 * dt, None)?;
    let err = half.max_abs_diff(&full) / 15.0;
    let scale = ctl.atol + ctl.rtol * half.max_abs().max(y.max_abs());
    let ratio = err / scale;
    let factor = if ratio == 0.0 {
        4.0
    } else {
        (ctl.safety * ratio.powf(-0.2)).clamp(0.2, 4.0)
    };
    let dt_next = (dt * factor).min(ctl.dt_max);
    if ratio <= 1.0 && half.max_abs().is_finite() {
        Ok(Doubled::Accepted { y: half, err, dt_next })
    } else {
        Ok(Doubled::Rejected { err, dt_next: (dt * factor.min(0.5)).min(ctl.dt_max) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        let mut f = |y: &Vec<f64>| -> Result<Vec<f64>, ()> { Ok(vec![-y[0]]) };
        let mut errs = Vec::new();
        for n in [10, 20, 40] {
            let dt = 1.0 / n as f64;
            let mut y = vec![1.0];
            for _ in 0..n {
                y = rk4_step(&mut f, &y, dt, None).unwrap();
            }
            errs.push((y[0] - (-1f64).exp()).abs());
        }
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 4.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn doubled_step_rejects_large_steps() {
        let mut f = |y: &Vec<f64>| -> Result<Vec<f64>, ()> { Ok(vec![-50.0 * y[0]]) };
        let y = vec![1.0];
        let k1 = f(&y).unwrap();
        let ctl = StepControl::default();
        match doubled_step(&mut f, &y, 0.1, &k1, &ctl).unwrap() {
            Doubled::Rejected { dt_next, .. } => assert!(dt_next < 0.1),
            Doubled::Accepted { .. } => panic!("should reject"),
        }
        match doubled_step(&mut f, &y, 1e-4, &k1, &ctl).unwrap() {
            Doubled::Accepted { y, .. } => assert!((y[0] - (-5e-3f64).exp()).abs() < 1e-12),
            Doubled::Rejected { .. } => panic!("should accept"),
        }
    }
}
