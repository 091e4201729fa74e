//! Dense Newton solve of the stationary Monge-Ampère equation and centered
//! finite differences.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::flows::ma::ma_metric;
use crate::grid::{Deriv, LatticeGrid, Spectrum};

const MAX_ITERATIONS: usize = 50;
const MAX_HALVINGS: usize = 40;

/// Flat index of the lattice offset `p − q`.
fn offset_index(grid: &LatticeGrid, p: usize, q: usize) -> usize {
    (0..grid.real_dim())
        .map(|a| {
            let n = grid.res()[a];
            ((grid.axis_index(p, a) + n - grid.axis_index(q, a)) % n) * grid.stride(a)
        })
        .sum()
}

fn is_nyquist(grid: &LatticeGrid, p: usize) -> bool {
    (0..grid.real_dim()).any(|a| grid.res()[a] > 1 && grid.axis_index(p, a) == grid.res()[a] / 2)
}

/// Projector onto the Nyquist modes, as the column of a circulant matrix.
fn nyquist_column(grid: &LatticeGrid) -> Vec<f64> {
    let modes = (0..grid.len()).map(|p| C64::new(if is_nyquist(grid, p) { 1.0 } else { 0.0 }, 0.0)).collect();
    grid.inverse(modes).iter().map(|z| z.re).collect()
}

fn drop_nyquist(grid: &LatticeGrid, values: &mut [f64]) {
    let Spectrum::Modes(mut modes) = grid.forward(&values.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>()) else {
        return;
    };
    for (p, z) in modes.iter_mut().enumerate() {
        if is_nyquist(grid, p) {
            *z = C64::new(0.0, 0.0);
        }
    }
    for (v, z) in values.iter_mut().zip(grid.inverse(modes)) {
        *v = z.re;
    }
}

/// `ln det(χ̂ + ∂∂̄φ) − ln det χ̂ − f − s` at every point with the Nyquist modes
/// removed, then `mean φ`.
fn residual(phi: &[f64], s: f64, chi_hat: &MetricField, f: &ScalarField) -> Option<(Vec<f64>, MetricField)> {
    let grid = &chi_hat.grid;
    let field = ScalarField::real(grid, phi.to_vec()).ok()?;
    let chi = ma_metric(&field, chi_hat).ok()?;
    let n = grid.len();
    let mut out = Vec::with_capacity(n + 1);
    for p in 0..n {
        let c = chi.at(p);
        if !c.is_positive_definite() {
            return None;
        }
        out.push(c.det().re.ln() - chi_hat.at(p).det().re.ln() - f.values[p].re - s);
    }
    drop_nyquist(grid, &mut out);
    out.push(phi.iter().sum::<f64>() / n as f64);
    Some((out, chi))
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solve `det(χ̂ + ∂∂̄φ) = c·e^f·det χ̂` with `mean φ = 0` by damped Newton
/// iteration on the bordered system in `(φ, ln c)`. The residual is the sup
/// norm of the logarithmic equation.
pub fn newton_ma(chi_hat: &MetricField, f: &ScalarField, tol: f64) -> Result<(ScalarField, f64)> {
    let grid = &chi_hat.grid;
    if f.grid != *grid {
        return Err(Error::GridMismatch);
    }
    let m = chi_hat.m();
    let n = grid.len();
    let mut e0 = vec![C64::new(0.0, 0.0); n];
    e0[0] = C64::new(1.0, 0.0);
    let stencils: Vec<Vec<C64>> = (0..m * m)
        .map(|jk| grid.derivative(&e0, &[Deriv::Holo(jk / m), Deriv::Anti(jk % m)]))
        .collect();
    let nyquist = nyquist_column(grid);

    let mut phi = vec![0.0; n];
    let mut s = 0.0;
    let (mut res, mut chi) = residual(&phi, s, chi_hat, f).ok_or(Error::NotPositive { point: 0, eigenvalue: 0.0 })?;
    for _ in 0..MAX_ITERATIONS {
        let norm = sup(&res);
        if norm < tol {
            return Ok((ScalarField::real(grid, phi)?, s.exp()));
        }
        let mut jac = DMatrix::<f64>::zeros(n + 1, n + 1);
        for p in 0..n {
            let h = chi.at(p).inverse().ok_or(Error::SingularMetric { point: p })?;
            for q in 0..n {
                let d = offset_index(grid, p, q);
                let mut acc = 0.0;
                for j in 0..m {
                    for k in 0..m {
                        acc += (h[(j, k)] * stencils[j * m + k][d]).re;
                    }
                }
                // the derivative stencils annihilate Nyquist modes; pin them to zero
                jac[(p, q)] = acc + nyquist[d];
            }
            jac[(p, n)] = -1.0;
        }
        for q in 0..n {
            jac[(n, q)] = 1.0 / n as f64;
        }
        let step = jac
            .lu()
            .solve(&DVector::from_iterator(n + 1, res.iter().map(|r| -r)))
            .ok_or(Error::NewtonStagnation { residual: norm })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = phi.iter().zip(step.iter()).map(|(x, d)| x + lambda * d).collect();
            let s_trial = s + lambda * step[n];
            if let Some((r, c)) = residual(&trial, s_trial, chi_hat, f) {
                if sup(&r) < (1.0 - 1e-4 * lambda) * norm {
                    phi = trial;
                    s = s_trial;
                    res = r;
                    chi = c;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStagnation { residual: norm });
        }
    }
    Err(Error::NewtonStagnation { residual: sup(&res) })
}

/// `(u(x + h e_a) − u(x − h e_a)) / 2h` with `h = shift` grid spacings.
pub fn fd_derivative(field: &ScalarField, axis: usize, shift: usize) -> Result<ScalarField> {
    let grid = &field.grid;
    if axis >= grid.real_dim() {
        return Err(Error::IndexOutOfRange { index: axis, limit: grid.real_dim() });
    }
    if shift == 0 {
        return Err(Error::InvalidArgument("shift must be positive".into()));
    }
    let h = shift as f64 * grid.spacing(axis);
    let values = (0..grid.len())
        .map(|p| {
            if !grid.is_active(axis) {
                return C64::new(0.0, 0.0);
            }
            let a = field.values[grid.shifted(p, axis, shift as isize)];
            let b = field.values[grid.shifted(p, axis, -(shift as isize))];
            (a - b) / (2.0 * h)
        })
        .collect();
    Ok(ScalarField { grid: grid.clone(), values, real: field.real })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::ma::normalize_source;
    use crate::forms::spectral_partial;
    use std::f64::consts::PI;

    #[test]
    fn zero_source_is_solved_by_zero() {
        let grid = LatticeGrid::new(2, 8, &[0, 1]).unwrap();
        let (phi, c) =
            newton_ma(&MetricField::identity(&grid), &ScalarField::constant(&grid, 0.0), 1e-12).unwrap();
        assert!(phi.sup_norm() == 0.0 && c == 1.0);
    }

    #[test]
    fn constant_source_sets_the_constant() {
        let grid = LatticeGrid::new(2, 8, &[0, 1]).unwrap();
        let k = 0.7;
        let (phi, c) =
            newton_ma(&MetricField::identity(&grid), &ScalarField::constant(&grid, k), 1e-12).unwrap();
        assert!(phi.sup_norm() < 1e-13, "{}", phi.sup_norm());
        assert!((c - (-k as f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn sinusoidal_source_converges() {
        let grid = LatticeGrid::new(2, 32, &[0, 1]).unwrap();
        let chi = MetricField::identity(&grid);
        let f = normalize_source(&ScalarField::from_fn(&grid, |x| 0.2 * (2.0 * PI * x[0]).sin()), &chi);
        let (phi, c) = newton_ma(&chi, &f, 1e-11).unwrap();
        assert!(phi.mean().norm() < 1e-14);
        assert!((c - 1.0).abs() < 1e-10);
        let chi_phi = ma_metric(&phi, &chi).unwrap();
        for p in 0..grid.len() {
            let lhs = chi_phi.at(p).det().re;
            assert!((lhs - c * f.values[p].re.exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn centered_difference_is_second_order() {
        let grid = LatticeGrid::new(1, 64, &[0]).unwrap();
        let u = ScalarField::from_fn(&grid, |x| (2.0 * PI * x[0]).sin());
        let exact = spectral_partial(&u, Deriv::Real(0)).unwrap();
        let errs: Vec<f64> = [4, 2, 1]
            .iter()
            .map(|&s| {
                let d = fd_derivative(&u, 0, s).unwrap();
                d.values.iter().zip(&exact.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!(((w[0] / w[1]).log2() - 2.0).abs() < 0.05, "{errs:?}");
        }
        // Taylor remainder h²/6·|u‴|
        let h = 1.0 / 64.0;
        let bound = (2.0 * PI).powi(3) * h * h / 6.0;
        assert!((errs[2] - bound).abs() < 1e-3 * bound);
    }

    #[test]
    fn constant_has_zero_difference() {
        let grid = LatticeGrid::new(1, 8, &[0, 1]).unwrap();
        let d = fd_derivative(&ScalarField::constant(&grid, 3.0), 1, 1).unwrap();
        assert!(d.values.iter().all(|v| v.norm() == 0.0));
        assert!(fd_derivative(&ScalarField::constant(&grid, 3.0), 2, 1).is_err());
    }
}
