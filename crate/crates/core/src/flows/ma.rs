//! Parabolic complex Monge-Ampère flow `∂_tφ = e^{-f} det(χ̂ + ∂∂̄φ)/det χ̂`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, DEFAULT_EIGEN_FLOOR};
use crate::forms::i_ddbar_scalar;
use crate::linalg::Mat;

/// `χ = χ̂ + ∂_j∂_k̄φ`.
pub fn ma_metric(phi: &ScalarField, chi_hat: &MetricField) -> Result<MetricField> {
    if phi.grid != chi_hat.grid {
        return Err(Error::GridMismatch);
    }
    Ok(chi_hat.add(&MetricField::from_form(&i_ddbar_scalar(phi))?))
}

pub fn ma_flow_rhs(phi: &ScalarField, chi_hat: &MetricField, f: &ScalarField) -> Result<ScalarField> {
    let chi = ma_metric(phi, chi_hat)?;
    let values = (0..phi.grid.len())
        .into_par_iter()
        .map(|p| {
            let c = chi.at(p);
            let ev = c.min_eigenvalue();
            if !(ev > DEFAULT_EIGEN_FLOOR) {
                return Err(Error::NotPositive { point: p, eigenvalue: ev });
            }
            let ratio = c.det().re / chi_hat.at(p).det().re;
            Ok(C64::new((-f.values[p].re).exp() * ratio, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarField { grid: phi.grid.clone(), values, real: true })
}

/// Largest decay rate of the linearized flow.
pub fn ma_stiffness(phi: &ScalarField, chi_hat: &MetricField, f: &ScalarField) -> Result<f64> {
    let chi = ma_metric(phi, chi_hat)?;
    let k2 = phi.grid.max_wavenumber_sq();
    let mut worst: f64 = 0.0;
    for p in 0..phi.grid.len() {
        let c: Mat = chi.at(p);
        let inv = c.inverse().ok_or(Error::SingularMetric { point: p })?;
        let ratio = c.det().re / chi_hat.at(p).det().re;
        worst = worst.max((-f.values[p].re).exp() * ratio * inv.max_eigenvalue());
    }
    Ok(worst * 0.25 * k2)
}

/// Shift `f` so that `∫e^f χ̂^m = ∫χ̂^m`.
pub fn normalize_source(f: &ScalarField, chi_hat: &MetricField) -> ScalarField {
    let grid = &f.grid;
    let det: Vec<C64> = (0..grid.len()).map(|p| chi_hat.at(p).det()).collect();
    let weighted: Vec<C64> = det.iter().zip(&f.values).map(|(d, v)| d * v.re.exp()).collect();
    let c = (grid.integrate(&weighted).re / grid.integrate(&det).re).ln();
    f.map_real(|v| v - c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LatticeGrid;
    use std::f64::consts::PI;

    #[test]
    fn zero_potential_and_source_give_unit_rate() {
        let grid = LatticeGrid::new(2, 8, &[0, 1]).unwrap();
        let chi = MetricField::identity(&grid);
        let r = ma_flow_rhs(&ScalarField::constant(&grid, 0.0), &chi, &ScalarField::constant(&grid, 0.0)).unwrap();
        assert!(r.values.iter().all(|v| (v.re - 1.0).abs() < 1e-15));
    }

    #[test]
    fn constant_potential_gives_exp_minus_f() {
        let grid = LatticeGrid::new(2, 8, &[0, 1]).unwrap();
        let chi = MetricField::identity(&grid);
        let f = ScalarField::from_fn(&grid, |x| 0.3 * (2.0 * PI * x[0]).sin());
        let r = ma_flow_rhs(&ScalarField::constant(&grid, 2.0), &chi, &f).unwrap();
        for p in 0..grid.len() {
            assert!((r.values[p].re - (-f.values[p].re).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn positivity_loss_is_reported() {
        let grid = LatticeGrid::new(2, 16, &[0, 1]).unwrap();
        let chi = MetricField::identity(&grid);
        let phi = ScalarField::from_fn(&grid, |x| 0.5 * (2.0 * PI * x[0]).cos());
        let err = ma_flow_rhs(&phi, &chi, &ScalarField::constant(&grid, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NotPositive { eigenvalue, .. } if eigenvalue < 0.0));
    }

    #[test]
    fn normalized_source_integrates_to_one() {
        let grid = LatticeGrid::new(2, 32, &[0, 1]).unwrap();
        let chi = MetricField::identity(&grid);
        let f = ScalarField::from_fn(&grid, |x| 0.2 * (2.0 * PI * x[0]).sin());
        let g = normalize_source(&f, &chi);
        assert!((g.map_real(f64::exp).mean().re - 1.0).abs() < 1e-14);
    }
}
