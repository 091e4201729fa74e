//! The η-formulation `i^{-1}∂_tη = −(R̃(η) + ½T T̄(η))/(m−1)`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::forms;
use crate::geometry::{self, BracketInputs};
use crate::linalg::Mat;

/// Rate of the coefficients `η_{k̄j}`.
pub fn eta_rhs(eta: &MetricField) -> Result<MetricField> {
    let m = eta.m();
    if m < 2 {
        return Err(Error::Requires("complex dimension at least 2".into()));
    }
    let b = BracketInputs::new(eta)?;
    let c = C64::new(-1.0 / (m - 1) as f64, 0.0);
    let pts: Vec<Mat> = (0..eta.grid.len())
        .into_par_iter()
        .map(|p| {
            let tt = geometry::tt_bar_point(&b.torsion.at(p), &b.h[p]);
            b.ricci_tilde.at(p).add(&tt.scale(C64::new(0.5, 0.0))).scale(c)
        })
        .collect();
    Ok(MetricField::from_points(&eta.grid, &pts))
}

/// `(‖d(‖Ω‖²η^{m−1})‖, ‖d(‖Ω‖η^{m−1})‖)`.
pub fn eta_initial_residuals(eta: &MetricField) -> Result<(f64, f64)> {
    let m = eta.m();
    if m < 2 {
        return Err(Error::Requires("complex dimension at least 2".into()));
    }
    let norm = geometry::norm_omega(eta)?;
    let w = forms::wedge_power(&eta.to_form(), m - 1)?;
    let sq: Vec<C64> = norm.values.iter().map(|v| v * v).collect();
    let squared = forms::d_norm(&forms::scale_by(&w, &sq))?;
    let first = forms::d_norm(&forms::scale_by(&w, &norm.values))?;
    Ok((squared, first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::forms::i_ddbar_scalar;
    use crate::grid::LatticeGrid;
    use std::f64::consts::PI;

    #[test]
    fn flat_is_stationary() {
        let grid = LatticeGrid::new(2, 8, &[0, 1, 2, 3]).unwrap();
        assert!(eta_rhs(&MetricField::identity(&grid)).unwrap().sup_norm() < 1e-15);
    }

    #[test]
    fn kahler_rate_is_scaled_ricci() {
        let grid = LatticeGrid::new(3, 16, &[0, 1]).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| 0.01 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        let g = MetricField::identity(&grid).add(&MetricField::from_form(&i_ddbar_scalar(&phi)).unwrap());
        let rate = eta_rhs(&g).unwrap();
        let ric = geometry::chern_ricci_tilde(&g).unwrap().scale(-0.5);
        assert!(rate.max_abs_diff(&ric) < 1e-12);
    }

    #[test]
    fn flat_residuals_vanish() {
        let grid = LatticeGrid::new(3, 4, &[0]).unwrap();
        let (a, b) = eta_initial_residuals(&MetricField::identity(&grid).scale(2.0)).unwrap();
        assert!(a < 1e-14 && b < 1e-14);
    }
}
