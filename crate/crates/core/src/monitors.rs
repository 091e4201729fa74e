//! Diagnostics along flows: conserved integrals, bounds, parabolicity and
//! the two test functions.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FormField, FormKind, MetricField, ScalarField};
use crate::flows::fu_yau::{self, FuYauData};
use crate::flows::ma::ma_metric;
use crate::forms;
use crate::geometry::{self, Torsion};
use crate::grid::Deriv;
use crate::linalg::{Mat, ZERO};

/// `∫ ‖Ω‖_ω ω^{m−1} ∧ γ`.
pub fn class_pairing(g: &MetricField, gamma: &FormField) -> Result<f64> {
    if gamma.bidegree() != Some((1, 1)) {
        return Err(Error::DegreeMismatch("γ must be a (1,1)-form".into()));
    }
    if !gamma.is_constant() {
        return Err(Error::NotConstant);
    }
    let sigma = geometry::sigma_form(g)?;
    let top = if g.m() == 1 {
        forms::scale_by(gamma, &sigma.comps[0])
    } else {
        forms::wedge(&sigma, gamma)?
    };
    Ok(forms::integrate_form(&top)?.re)
}

/// The flat Kähler form `i Σ dz^j∧dz̄^j`.
pub fn flat_kahler_form(g: &MetricField) -> FormField {
    forms::constant_11(&g.grid, &Mat::identity(g.m()))
}

/// [`class_pairing`] against the flat Kähler form.
pub fn conserved_volume(g: &MetricField) -> Result<f64> {
    class_pairing(g, &flat_kahler_form(g))
}

/// `∫‖Ω‖ ω̂²` for the Fu-Yau base metric `e^u χ̂`.
pub fn fu_yau_volume(u: &ScalarField, chi_hat: &Mat) -> Result<f64> {
    let g = fu_yau::base_metric(u, chi_hat)?;
    let norm = geometry::norm_omega(&g)?;
    let w = g.to_form();
    let top = forms::scale_by(&forms::wedge(&w, &w)?, &norm.values);
    Ok(forms::integrate_form(&top)?.re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuYauBounds {
    pub sup_exp_u: f64,
    pub inf_exp_u: f64,
    pub sup_torsion_sq: f64,
    pub sup_alpha_ricci: f64,
}

/// `|A|² = g^{jb̄} g^{ak̄} A_{k̄j} conj(A_{āb})` for a (1,1) tensor.
fn tensor_norm_sq(h: &Mat, a: &Mat) -> f64 {
    h.mul(a).mul(h).mul(&a.adjoint()).trace().re
}

/// Bounds on `e^u`, `|T|²` (half-weighted) and `|α′Ric|` for `ω̂ = e^u χ̂`.
pub fn fu_yau_bounds(u: &ScalarField, chi_hat: &Mat, alpha: f64) -> Result<FuYauBounds> {
    let g = fu_yau::base_metric(u, chi_hat)?;
    let h = g.inverse_points()?;
    let t = geometry::torsion_tensor(&g);
    let ric = geometry::chern_ricci_form(&g)?;
    let n = g.grid.len();
    let e: Vec<f64> = u.values.iter().map(|v| v.re.exp()).collect();
    let (tsq, rn): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|p| {
            (
                0.5 * geometry::torsion_norm_sq_point(&t.at(p), &h[p]),
                tensor_norm_sq(&h[p], &ric.at(p)).max(0.0).sqrt(),
            )
        })
        .unzip();
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(FuYauBounds {
        sup_exp_u: max(&e),
        inf_exp_u: e.iter().cloned().fold(f64::INFINITY, f64::min),
        sup_torsion_sq: max(&tsq),
        sup_alpha_ricci: alpha.abs() * max(&rn),
    })
}

/// Smallest eigenvalue of the Fu-Yau diffusion matrix over the grid and
/// whether it is positive.
pub fn parabolicity(u: &ScalarField, data: &FuYauData) -> Result<(f64, bool)> {
    let f = fu_yau::diffusion_matrices(u, data)?;
    let floor = f.par_iter().map(|m| m.min_eigenvalue()).reduce(|| f64::INFINITY, f64::min);
    Ok((floor, floor > 0.0))
}

/// `G = log Tr h − A(φ − ⨍φ) + B (χ^m/χ̂^m)²` with `h = χ̂^{-1}χ`; the
/// average is taken against `χ̂^m`.
pub fn test_function_ma(phi: &ScalarField, chi_hat: &MetricField, a: f64, b: f64) -> Result<ScalarField> {
    let chi = ma_metric(phi, chi_hat)?;
    let grid = &phi.grid;
    let det_hat: Vec<C64> = (0..grid.len()).map(|p| chi_hat.at(p).det()).collect();
    let weighted: Vec<C64> = det_hat.iter().zip(&phi.values).map(|(d, v)| d * v.re).collect();
    let avg = grid.integrate(&weighted).re / grid.integrate(&det_hat).re;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let c = chi.at(p);
            let ev = c.min_eigenvalue();
            if !(ev > 0.0) {
                return Err(Error::NotPositive { point: p, eigenvalue: ev });
            }
            let hat = chi_hat.at(p);
            let tr = hat.inverse().ok_or(Error::SingularMetric { point: p })?.mul(&c).trace().re;
            let ratio = c.det().re / det_hat[p].re;
            Ok(C64::new(tr.ln() - a * (phi.values[p].re - avg) + b * ratio * ratio, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarField { grid: grid.clone(), values, real: true })
}

fn torsion_pairing(t: &[C64], s: &[C64], h: &Mat) -> C64 {
    let m = h.n;
    let mut total = ZERO;
    for k in 0..m {
        for j in 0..m {
            for l in 0..m {
                let x = t[Torsion::idx(m, k, j, l)];
                if x == ZERO {
                    continue;
                }
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            total += x
                                * h[(a, k)]
                                * h[(j, b)]
                                * h[(l, c)]
                                * s[Torsion::idx(m, a, b, c)].conj();
                        }
                    }
                }
            }
        }
    }
    total
}

/// `G = (|α′Ric| + τ₁)|∇Ric|² + (|T|² + τ₂)|∇T|²`, with `∇` the coordinate
/// derivative in holomorphic directions and the torsion norms half-weighted.
pub fn test_function_fu_yau(g: &MetricField, alpha: f64, tau1: f64, tau2: f64) -> Result<ScalarField> {
    let m = g.m();
    let grid = &g.grid;
    let h = g.inverse_points()?;
    let ric = geometry::chern_ricci_form(g)?;
    let t = geometry::torsion_tensor(g);
    let d_ric: Vec<Vec<Vec<C64>>> = (0..m)
        .map(|p| ric.comps.iter().map(|c| grid.derivative(c, &[Deriv::Holo(p)])).collect())
        .collect();
    let d_t: Vec<Vec<Vec<C64>>> = (0..m)
        .map(|p| t.comps.iter().map(|c| grid.derivative(c, &[Deriv::Holo(p)])).collect())
        .collect();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|pt| {
            let hp = &h[pt];
            let ric_norm = tensor_norm_sq(hp, &ric.at(pt)).max(0.0).sqrt();
            let tp = t.at(pt);
            let t_sq = 0.5 * geometry::torsion_norm_sq_point(&tp, hp);
            let dr: Vec<Mat> =
                (0..m).map(|p| Mat::from_fn(m, |k, j| d_ric[p][k * m + j][pt])).collect();
            let dt: Vec<Vec<C64>> =
                (0..m).map(|p| d_t[p].iter().map(|c| c[pt]).collect()).collect();
            let mut grad_ric = ZERO;
            let mut grad_t = ZERO;
            for p in 0..m {
                for q in 0..m {
                    let w = hp[(p, q)];
                    grad_ric += w * hp.mul(&dr[p]).mul(hp).mul(&dr[q].adjoint()).trace();
                    grad_t += w * torsion_pairing(&dt[p], &dt[q], hp) * 0.5;
                }
            }
            C64::new(
                (alpha.abs() * ric_norm + tau1) * grad_ric.re + (t_sq + tau2) * grad_t.re,
                0.0,
            )
        })
        .collect();
    Ok(ScalarField { grid: grid.clone(), values, real: true })
}

/// Direction of a monitored threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Upper(f64),
    Lower(f64),
}

impl Bound {
    pub fn value(&self) -> f64 {
        match *self {
            Bound::Upper(v) | Bound::Lower(v) => v,
        }
    }

    pub fn is_breached(&self, x: f64) -> bool {
        match *self {
            Bound::Upper(v) => !(x <= v),
            Bound::Lower(v) => !(x >= v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub name: String,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Breach {
    pub name: String,
    pub t: f64,
    pub value: f64,
    pub threshold: f64,
}

impl fmt::Display for Breach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MONITOR {} BREACH t={} value={:e} threshold={:e}",
            self.name, self.t, self.value, self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub t: f64,
    pub values: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
}

impl MonitorReport {
    /// Build a report; a threshold on a name with no value counts as a breach.
    pub fn new(t: f64, values: BTreeMap<String, f64>, thresholds: &[Threshold]) -> Self {
        let flags = thresholds
            .iter()
            .map(|th| {
                let ok = values.get(&th.name).is_some_and(|&v| !th.bound.is_breached(v));
                (th.name.clone(), ok)
            })
            .collect();
        MonitorReport { t, values, flags }
    }

    pub fn breaches(&self, thresholds: &[Threshold]) -> Vec<Breach> {
        thresholds
            .iter()
            .filter(|th| !self.flags.get(&th.name).copied().unwrap_or(false))
            .map(|th| Breach {
                name: th.name.clone(),
                t: self.t,
                value: self.values.get(&th.name).copied().unwrap_or(f64::NAN),
                threshold: th.bound.value(),
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.flags.values().all(|&ok| ok)
    }
}

/// A constant (1,1)-form with the single coefficient pair `dz^a∧dz̄^b + dz^b∧dz̄^a`.
pub fn off_diagonal_class(g: &MetricField, a: usize, b: usize) -> Result<FormField> {
    let m = g.m();
    g.grid.check_index(a)?;
    g.grid.check_index(b)?;
    let mut f = FormField::zeros(&g.grid, FormKind::Complex { p: 1, q: 1 });
    let one = C64::new(1.0, 0.0);
    f.set_constant(&[a], &[b], one)?;
    f.set_constant(&[b], &[a], one)?;
    debug_assert_eq!(f.basis.dim, m);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LatticeGrid;
    use std::f64::consts::PI;

    #[test]
    fn flat_volume_and_scaling() {
        let grid = LatticeGrid::new(3, 4, &[0]).unwrap();
        let g = MetricField::identity(&grid);
        let v = conserved_volume(&g).unwrap();
        assert!((v - 48.0 / 6f64.sqrt()).abs() < 1e-12);
        let v2 = conserved_volume(&g.scale(4.0)).unwrap();
        assert!((v2 / v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn off_diagonal_pairing_vanishes_for_diagonal_metrics() {
        let grid = LatticeGrid::new(3, 8, &[0, 1]).unwrap();
        let g = MetricField::from_fn(&grid, |x| {
            let mut a = Mat::identity(3);
            a[(1, 1)] = C64::new(1.0 + 0.2 * (2.0 * PI * x[0]).sin(), 0.0);
            a
        });
        let gamma = off_diagonal_class(&g, 0, 1).unwrap();
        assert!(class_pairing(&g, &gamma).unwrap().abs() < 1e-13);
    }

    #[test]
    fn non_constant_class_is_rejected() {
        let grid = LatticeGrid::new(3, 4, &[0]).unwrap();
        let g = MetricField::identity(&grid);
        let mut gamma = flat_kahler_form(&g);
        gamma.comps[0][1] = C64::new(2.0, 0.0);
        assert!(matches!(class_pairing(&g, &gamma), Err(Error::NotConstant)));
    }

    #[test]
    fn constant_u_bounds() {
        let grid = LatticeGrid::new(2, 4, &[0, 1]).unwrap();
        let m = 3.5f64;
        let u = ScalarField::constant(&grid, m.ln());
        let b = fu_yau_bounds(&u, &Mat::identity(2), 1.0).unwrap();
        assert!((b.sup_exp_u - m).abs() < 1e-14 && (b.inf_exp_u - m).abs() < 1e-14);
        assert!(b.sup_torsion_sq < 1e-28 && b.sup_alpha_ricci < 1e-12);
    }

    #[test]
    fn parabolicity_of_flat_metric() {
        let grid = LatticeGrid::new(2, 4, &[0, 1]).unwrap();
        let u = ScalarField::constant(&grid, 0.0);
        let data = FuYauData { alpha: 3.0, ..FuYauData::trivial(Mat::identity(2)) };
        let (floor, ok) = parabolicity(&u, &data).unwrap();
        assert!((floor - 1.0).abs() < 1e-14 && ok);
    }

    #[test]
    fn ma_test_function_at_zero_potential() {
        let grid = LatticeGrid::new(2, 4, &[0, 1]).unwrap();
        let chi = MetricField::identity(&grid);
        let g = test_function_ma(&ScalarField::constant(&grid, 0.0), &chi, 1.0, 2.0).unwrap();
        assert!(g.values.iter().all(|v| (v.re - (2f64.ln() + 2.0)).abs() < 1e-14));
        let g5 = test_function_ma(&ScalarField::constant(&grid, 5.0), &chi, 1.0, 2.0).unwrap();
        assert_eq!(g.values, g5.values);
    }

    #[test]
    fn fu_yau_test_function_of_flat_metric_is_zero() {
        let grid = LatticeGrid::new(2, 4, &[0, 1]).unwrap();
        let g = test_function_fu_yau(&MetricField::identity(&grid), 1.0, 1.0, 1.0).unwrap();
        assert!(g.sup_norm() < 1e-14);
    }

    #[test]
    fn thresholds_and_breach_lines() {
        let mut values = BTreeMap::new();
        values.insert("sup_exp_u".to_string(), 2.0);
        values.insert("balanced_residual".to_string(), 1e-12);
        let th = vec![
            Threshold { name: "sup_exp_u".into(), bound: Bound::Upper(1.5) },
            Threshold { name: "balanced_residual".into(), bound: Bound::Upper(1e-7) },
        ];
        let r = MonitorReport::new(0.25, values, &th);
        assert!(!r.passed());
        let b = r.breaches(&th);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].to_string(), "MONITOR sup_exp_u BREACH t=0.25 value=2e0 threshold=1.5e0");
    }
}
