//! Anomaly flow `∂_t(‖Ω‖ω^{m−1}) = i∂∂̄ω^{m−2} − α′Φ`, its pointwise
//! linearization in the metric, and the equivalent (1,1)-form flow.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FormBasis, FormField, FormKind, MetricField};
use crate::forms::{self, WedgeTable};
use crate::geometry::{self, CLOSED_TOL};
use crate::linalg::{lu_solve, Mat, I, ZERO};

/// Pivot ratio above which a pointwise linearization counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Reject a source form that is not closed.
pub fn check_closed(phi: &FormField) -> Result<()> {
    let dn = forms::d_norm(phi)?;
    let tol = CLOSED_TOL * phi.l2_norm().max(1.0);
    if dn > tol {
        return Err(Error::NotClosed { residual: dn, tolerance: tol });
    }
    Ok(())
}

fn omega_power(g: &MetricField, k: usize) -> Result<FormField> {
    if k == 0 {
        let mut one = FormField::zeros(&g.grid, FormKind::Complex { p: 0, q: 0 });
        one.comps[0] = vec![C64::new(1.0, 0.0); g.grid.len()];
        return Ok(one);
    }
    forms::wedge_power(&g.to_form(), k)
}

/// The (m−1,m−1) rate `i∂∂̄ω^{m−2} − α′(Φ + [Tr(Rm∧Rm)/4])`.
pub fn anomaly_rate_22(
    g: &MetricField,
    alpha: f64,
    phi: Option<&FormField>,
    curvature: bool,
) -> Result<FormField> {
    let m = g.m();
    if m < 2 {
        return Err(Error::Requires("complex dimension at least 2".into()));
    }
    let mut rate = forms::i_ddbar(&omega_power(g, m - 2)?)?;
    if alpha != 0.0 {
        let a = C64::new(alpha, 0.0);
        if let Some(phi) = phi {
            if phi.bidegree() != Some((m - 1, m - 1)) {
                return Err(Error::DegreeMismatch("Φ must be an (m−1,m−1)-form".into()));
            }
            check_closed(phi)?;
            rate = rate.sub(&phi.scale(a))?;
        }
        if curvature {
            if m != 3 {
                return Err(Error::Requires("complex dimension 3 for Tr(Rm∧Rm)".into()));
            }
            let trr = geometry::trace_rm_rm(&geometry::chern_curvature(g)?)?;
            rate = rate.sub(&trr.scale(a * 0.25))?;
        }
    }
    Ok(rate)
}

/// Pointwise linear map `ġ ↦ ∂_t(‖Ω‖ω^{m−1})` at a fixed metric.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub m: usize,
    basis: FormBasis,
    // for each column k*m + j: (index into ω^{m−2}, output index, sign)
    cols: Vec<Vec<(usize, usize, f64)>>,
}

impl Linearization {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Requires("complex dimension at least 2".into()));
        }
        let b11 = FormBasis::complex(m, 1, 1);
        let lower = FormBasis::complex(m, m - 2, m - 2);
        let table = WedgeTable::new(&b11, &lower)?;
        let mut cols = vec![Vec::new(); m * m];
        for k in 0..m {
            for j in 0..m {
                let idx = b11.index_complex(1 << j, 1 << k).unwrap();
                cols[k * m + j] = table
                    .entries
                    .iter()
                    .filter(|e| e.0 == idx)
                    .map(|&(_, ib, ic, s)| (ib, ic, s))
                    .collect();
            }
        }
        Ok(Linearization { m, basis: (*table.out).clone(), cols })
    }

    /// Row-major `m²×m²` matrix; rows are (m−1,m−1) components, columns
    /// the entries `ġ_{k̄j}` in storage order.
    pub fn matrix(&self, g: &Mat, w_top: &[C64], w_low: &[C64]) -> Option<Vec<C64>> {
        let m = self.m;
        let n = m * m;
        let norm = geometry::norm_omega_at(g)?;
        let h = g.inverse()?;
        let mut a = vec![ZERO; n * n];
        let lift = (m - 1) as f64;
        for k in 0..m {
            for j in 0..m {
                let col = k * m + j;
                let tr = h[(j, k)] * -0.5;
                for (r, w) in w_top.iter().enumerate() {
                    a[r * n + col] += tr * w * norm;
                }
                for &(ib, ic, s) in &self.cols[col] {
                    a[ic * n + col] += I * w_low[ib] * (s * lift * norm);
                }
            }
        }
        Some(a)
    }

    pub fn out_basis(&self) -> &FormBasis {
        &self.basis
    }
}

struct PointData {
    lin: Linearization,
    top: FormField,
    low: FormField,
}

impl PointData {
    fn new(g: &MetricField) -> Result<Self> {
        let m = g.m();
        Ok(PointData { lin: Linearization::new(m)?, top: omega_power(g, m - 1)?, low: omega_power(g, m - 2)? })
    }
}

/// `D[g](ġ)`, the forward linearization applied pointwise.
pub fn linearization_apply(g: &MetricField, gdot: &MetricField) -> Result<FormField> {
    let m = g.m();
    let pd = PointData::new(g)?;
    let n = m * m;
    let pts = (0..g.grid.len())
        .into_par_iter()
        .map(|p| {
            let a = pd
                .lin
                .matrix(&g.at(p), &pd.top.at(p), &pd.low.at(p))
                .ok_or(Error::SingularMetric { point: p })?;
            let x: Vec<C64> = gdot.comps.iter().map(|c| c[p]).collect();
            Ok((0..n).map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum()).collect::<Vec<C64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let comps = (0..n).map(|c| pts.iter().map(|v| v[c]).collect()).collect();
    Ok(FormField { grid: g.grid.clone(), basis: std::sync::Arc::new(pd.lin.basis.clone()), comps })
}

/// Solve `D[g](ġ) = rate22` for the Hermitian `ġ` at every point.
pub fn invert_rate_map(g: &MetricField, rate22: &FormField) -> Result<MetricField> {
    let m = g.m();
    if rate22.bidegree() != Some((m - 1, m - 1)) {
        return Err(Error::DegreeMismatch("rate must be an (m−1,m−1)-form".into()));
    }
    let pd = PointData::new(g)?;
    let n = m * m;
    let pts = (0..g.grid.len())
        .into_par_iter()
        .map(|p| {
            let mut a = pd
                .lin
                .matrix(&g.at(p), &pd.top.at(p), &pd.low.at(p))
                .ok_or(Error::SingularMetric { point: p })?;
            let mut b = rate22.at(p);
            let cond = lu_solve(n, &mut a, &mut b).unwrap_or(f64::INFINITY);
            if !(cond < SINGULAR_CONDITION) {
                return Err(Error::SingularLinearization { point: p, condition: cond });
            }
            let mut x = Mat::from_fn(m, |k, j| b[k * m + j]);
            for k in 0..m {
                x[(k, k)] = C64::new(x[(k, k)].re, 0.0);
                for j in k + 1..m {
                    let v = 0.5 * (x[(k, j)] + x[(j, k)].conj());
                    x[(k, j)] = v;
                    x[(j, k)] = v.conj();
                }
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricField::from_points(&g.grid, &pts))
}

/// The (1,1)-form flow of the Φ = 0 anomaly flow:
/// `∂_t g = [full bracket] / ((m−1)‖Ω‖)`.
pub fn anomaly_rhs_11(g: &MetricField) -> Result<MetricField> {
    let m = g.m();
    if m < 3 {
        return Err(Error::Requires("complex dimension at least 3".into()));
    }
    let bracket = geometry::full_bracket(g)?;
    let norm = geometry::norm_omega(g)?;
    let pts: Vec<Mat> = (0..g.grid.len())
        .into_par_iter()
        .map(|p| bracket.at(p).scale(C64::new(1.0 / ((m - 1) as f64 * norm.values[p].re), 0.0)))
        .collect();
    Ok(MetricField::from_points(&g.grid, &pts))
}

/// Type IIB rate `i∂∂̄η − ρ_B` for `m = 3`.
pub fn iib_rhs(eta: &MetricField, rho_b: &FormField) -> Result<FormField> {
    if eta.m() != 3 {
        return Err(Error::Requires("complex dimension 3".into()));
    }
    anomaly_rate_22(eta, 1.0, Some(rho_b), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::fu_yau::FuYauFamily;
    use crate::forms::i_ddbar_scalar;
    use crate::grid::{make_grid, LatticeGrid, DEFAULT_BUDGET};
    use crate::field::ScalarField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(grid: &LatticeGrid, rng: &mut ChaCha8Rng) -> MetricField {
        let m = grid.m();
        let pts: Vec<Mat> = (0..grid.len())
            .map(|_| {
                let mut a = Mat::zeros(m);
                for k in 0..m {
                    a[(k, k)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
                    for j in k + 1..m {
                        let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        a[(k, j)] = v;
                        a[(j, k)] = v.conj();
                    }
                }
                a
            })
            .collect();
        MetricField::from_points(grid, &pts)
    }

    #[test]
    fn flat_and_kahler_rates_vanish() {
        let grid = LatticeGrid::new(3, 8, &[0, 1, 2]).unwrap();
        let flat = MetricField::identity(&grid);
        assert!(anomaly_rate_22(&flat, 0.0, None, false).unwrap().sup_norm() < 1e-14);
        let phi = ScalarField::from_fn(&grid, |x| 0.02 * (2.0 * std::f64::consts::PI * (x[0] + x[2])).cos());
        let hess = MetricField::from_form(&i_ddbar_scalar(&phi)).unwrap();
        let g = flat.add(&hess);
        assert!(anomaly_rate_22(&g, 0.0, None, false).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn linearization_round_trip() {
        let grid = LatticeGrid::new(3, 4, &[0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fam = FuYauFamily::random(&mut rng);
        let g = fam.metric(&grid, &fam.random_u(&grid, &mut rng, 0.1)).unwrap();
        let gdot = random_hermitian(&grid, &mut rng);
        let rate = linearization_apply(&g, &gdot).unwrap();
        let back = invert_rate_map(&g, &rate).unwrap();
        assert!(back.max_abs_diff(&gdot) < 1e-10);
        let zero = invert_rate_map(&g, &rate.scale(ZERO)).unwrap();
        assert!(zero.sup_norm() < 1e-15);
    }

    #[test]
    fn linearization_matches_finite_difference() {
        let grid = LatticeGrid::new(3, 4, &[0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fam = FuYauFamily::random(&mut rng);
        let g = fam.metric(&grid, &fam.random_u(&grid, &mut rng, 0.1)).unwrap();
        let gdot = random_hermitian(&grid, &mut rng);
        let eps = 1e-5;
        let plus = geometry::sigma_form(&g.add(&gdot.scale(eps))).unwrap();
        let minus = geometry::sigma_form(&g.sub(&gdot.scale(eps))).unwrap();
        let fd = plus.sub(&minus).unwrap().scale(C64::new(0.5 / eps, 0.0));
        let lin = linearization_apply(&g, &gdot).unwrap();
        assert!(lin.max_abs_diff(&fd) < 1e-8, "{}", lin.max_abs_diff(&fd));
    }

    #[test]
    fn two_dimensional_linearization_is_singular() {
        let grid = LatticeGrid::new(2, 4, &[0]).unwrap();
        let g = MetricField::identity(&grid);
        let rate = FormField::zeros(&grid, FormKind::Complex { p: 1, q: 1 });
        assert!(matches!(
            invert_rate_map(&g, &rate),
            Err(Error::SingularLinearization { .. })
        ));
    }

    #[test]
    fn iib_manufactured_stationarity() {
        let grid = make_grid(3, &[8], &[0, 1, 2], &[], DEFAULT_BUDGET).unwrap();
        let flat = MetricField::identity(&grid);
        let sigma = MetricField::from_fn(&grid, |x| {
            let s = 0.05 * (2.0 * std::f64::consts::PI * (x[0] - x[3])).sin();
            let mut a = Mat::zeros(3);
            a[(0, 1)] = C64::new(s, 0.3 * s);
            a[(1, 0)] = a[(0, 1)].conj();
            a[(2, 2)] = C64::new(s, 0.0);
            a
        });
        let rho = forms::i_ddbar(&sigma.to_form()).unwrap();
        let r = iib_rhs(&flat, &rho).unwrap();
        assert!(r.add(&rho).unwrap().sup_norm() < 1e-13);
        let eta = flat.add(&sigma);
        let rho_star = forms::i_ddbar(&eta.to_form()).unwrap();
        assert!(iib_rhs(&eta, &rho_star).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn non_closed_source_is_rejected() {
        let grid = LatticeGrid::new(3, 8, &[0, 1, 4]).unwrap();
        let mut phi = FormField::zeros(&grid, FormKind::Complex { p: 2, q: 2 });
        let idx = phi.basis.index_complex(0b011, 0b011).unwrap();
        phi.comps[idx] = grid.sample(|x| C64::new((2.0 * std::f64::consts::PI * x[4]).sin(), 0.0));
        let g = MetricField::identity(&grid);
        assert!(matches!(anomaly_rate_22(&g, 1.0, Some(&phi), false), Err(Error::NotClosed { .. })));
    }
}

