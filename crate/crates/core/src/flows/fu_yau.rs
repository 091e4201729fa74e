//! Fu-Yau metrics `ω_u = e^u χ̂ + iθ∧θ̄` on `T⁶ = T⁴ × T²` and the scalar flow
//! of the conformal factor on the base.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FormField, MetricField, ScalarField};
use crate::forms::{self, wedge};
use crate::geometry;
use crate::grid::LatticeGrid;
use crate::linalg::{Mat, ZERO};

/// Constant data of the family: a flat base metric `χ̂` on `T⁴` and a
/// constant (1,0)-form `θ` with `θ₃ ≠ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuYauFamily {
    pub chi_hat: Mat,
    pub theta: [C64; 3],
}

impl Default for FuYauFamily {
    fn default() -> Self {
        FuYauFamily { chi_hat: Mat::identity(2), theta: [ZERO, ZERO, C64::new(1.0, 0.0)] }
    }
}

impl FuYauFamily {
    pub fn new(chi_hat: Mat, theta: [C64; 3]) -> Result<Self> {
        if chi_hat.n != 2 || chi_hat.hermitian_defect() > 1e-14 || !chi_hat.is_positive_definite() {
            return Err(Error::InvalidArgument("χ̂ must be a positive Hermitian 2×2 matrix".into()));
        }
        if theta[2].norm() == 0.0 {
            return Err(Error::InvalidArgument("θ must have a nonzero fibre component".into()));
        }
        Ok(FuYauFamily { chi_hat, theta })
    }

    /// A random member with `χ̂` and `θ` of moderate size.
    pub fn random(rng: &mut impl Rng) -> Self {
        let off = C64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        let mut chi = Mat::zeros(2);
        chi[(0, 0)] = C64::new(rng.gen_range(0.8..1.5), 0.0);
        chi[(1, 1)] = C64::new(rng.gen_range(0.8..1.5), 0.0);
        chi[(0, 1)] = off;
        chi[(1, 0)] = off.conj();
        let mut c = || C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let theta = [c(), c(), C64::new(1.0, 0.0) + c() * 0.5];
        FuYauFamily { chi_hat: chi, theta }
    }

    /// `g_{k̄j} = e^u χ̂_{k̄j} ⊕ 0 + θ̄_k θ_j` on a complex-dimension-3 grid;
    /// `u` must depend on the base coordinates only.
    pub fn metric(&self, grid: &LatticeGrid, u: &ScalarField) -> Result<MetricField> {
        if grid.m() != 3 || u.grid != *grid {
            return Err(Error::InvalidGrid("Fu-Yau metrics live on complex dimension 3".into()));
        }
        if (4..6).any(|a| grid.is_active(a)) && !independent_of_fibre(u) {
            return Err(Error::InvalidArgument("u must not depend on the fibre".into()));
        }
        let th = self.theta;
        let pts: Vec<Mat> = u
            .values
            .par_iter()
            .map(|v| {
                let e = v.re.exp();
                Mat::from_fn(3, |k, j| {
                    let base = if k < 2 && j < 2 { self.chi_hat[(k, j)] * e } else { ZERO };
                    base + th[k].conj() * th[j]
                })
            })
            .collect();
        Ok(MetricField::from_points(grid, &pts))
    }

    /// A small real trigonometric polynomial in the base coordinates with
    /// wavenumbers in `{-1,0,1}`.
    pub fn random_u(&self, grid: &LatticeGrid, rng: &mut impl Rng, amplitude: f64) -> ScalarField {
        let axes: Vec<usize> = (0..4).filter(|&a| grid.is_active(a)).collect();
        let mut modes = Vec::new();
        for _ in 0..4 {
            let k: Vec<f64> = axes.iter().map(|_| rng.gen_range(-1..=1) as f64).collect();
            modes.push((k, rng.gen_range(-1.0..1.0f64), rng.gen_range(-1.0..1.0f64)));
        }
        let periods = grid.periods().to_vec();
        let total: f64 = modes.iter().map(|(_, a, b)| a.abs() + b.abs()).sum();
        let scale = amplitude / total.max(1e-300);
        ScalarField::from_fn(grid, |x| {
            modes
                .iter()
                .map(|(k, a, b)| {
                    let ph: f64 = axes
                        .iter()
                        .zip(k)
                        .map(|(&ax, kk)| 2.0 * std::f64::consts::PI * kk * x[ax] / periods[ax])
                        .sum();
                    scale * (a * ph.cos() + b * ph.sin())
                })
                .sum()
        })
    }
}

fn independent_of_fibre(u: &ScalarField) -> bool {
    let grid = &u.grid;
    (0..grid.len()).all(|p| {
        (4..6).all(|a| (u.values[grid.shifted(p, a, 1)] - u.values[p]).norm() < 1e-14)
    })
}

/// Fixed data of the scalar flow on the `T⁴` base.
#[derive(Debug, Clone)]
pub struct FuYauData {
    pub chi_hat: Mat,
    pub alpha: f64,
    /// (1,1)-form `ρ` on the base.
    pub rho: Option<FormField>,
    /// (2,2)-form `μ` on the base.
    pub mu: Option<FormField>,
}

impl FuYauData {
    pub fn trivial(chi_hat: Mat) -> Self {
        FuYauData { chi_hat, alpha: 0.0, rho: None, mu: None }
    }
}

/// `ω̂_u = e^u χ̂` on the base grid.
pub fn base_metric(u: &ScalarField, chi_hat: &Mat) -> Result<MetricField> {
    if u.grid.m() != 2 || chi_hat.n != 2 {
        return Err(Error::InvalidGrid("the Fu-Yau base has complex dimension 2".into()));
    }
    Ok(MetricField::from_points(
        &u.grid,
        &u.values.iter().map(|v| chi_hat.scale(C64::new(v.re.exp(), 0.0))).collect::<Vec<_>>(),
    ))
}

/// Coefficient of `dz¹∧dz²∧dz̄¹∧dz̄²` of `ω̂²`.
fn omega_sq(g: &MetricField) -> Result<Vec<C64>> {
    let w = g.to_form();
    Ok(wedge(&w, &w)?.comps.swap_remove(0))
}

/// Quantities entering the scalar Fu-Yau flow at one state.
#[derive(Debug, Clone)]
pub struct FuYauTerms {
    pub metric: MetricField,
    pub norm: Vec<f64>,
    pub scalar: Vec<f64>,
    pub torsion_sq: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// `2α′ i∂∂̄(‖Ω‖ρ)/ω̂² − 2μ/ω̂²`
    pub source: Vec<f64>,
    pub ricci: MetricField,
}

/// `σ₂ = det Ric / det g` on the two-dimensional base.
pub fn sigma2_point(ric: &Mat, g: &Mat) -> f64 {
    (ric.det() / g.det()).re
}

impl FuYauTerms {
    pub fn new(u: &ScalarField, data: &FuYauData) -> Result<Self> {
        let g = base_metric(u, &data.chi_hat)?;
        let norm: Vec<f64> = geometry::norm_omega(&g)?.values.iter().map(|v| v.re).collect();
        let ricci = geometry::chern_ricci_form(&g)?;
        let h = g.inverse_points()?;
        let n = g.grid.len();
        let scalar: Vec<f64> = (0..n).map(|p| h[p].mul(&ricci.at(p)).trace().re).collect();
        let t = geometry::torsion_tensor(&g);
        let torsion_sq: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| 0.5 * geometry::torsion_norm_sq_point(&t.at(p), &h[p]))
            .collect();
        let sigma2: Vec<f64> = (0..n).map(|p| sigma2_point(&ricci.at(p), &g.at(p))).collect();
        let mut source = vec![0.0; n];
        let needs_top = (data.rho.is_some() && data.alpha != 0.0) || data.mu.is_some();
        if needs_top {
            let top = omega_sq(&g)?;
            if let (Some(rho), true) = (&data.rho, data.alpha != 0.0) {
                check_base_form(rho, (1, 1), &g.grid)?;
                let nv: Vec<C64> = norm.iter().map(|&v| C64::new(v, 0.0)).collect();
                let dd = forms::i_ddbar(&forms::scale_by(rho, &nv))?;
                for p in 0..n {
                    source[p] += 2.0 * data.alpha * (dd.comps[0][p] / top[p]).re;
                }
            }
            if let Some(mu) = &data.mu {
                check_base_form(mu, (2, 2), &g.grid)?;
                for p in 0..n {
                    source[p] -= 2.0 * (mu.comps[0][p] / top[p]).re;
                }
            }
        }
        Ok(FuYauTerms { metric: g, norm, scalar, torsion_sq, sigma2, source, ricci })
    }

    /// `R/2 − |T|² − (α′/4)σ₂ + source` at each point.
    pub fn numerator(&self, alpha: f64) -> Vec<f64> {
        (0..self.norm.len())
            .map(|p| {
                0.5 * self.scalar[p] - self.torsion_sq[p] - 0.25 * alpha * self.sigma2[p]
                    + self.source[p]
            })
            .collect()
    }
}

fn check_base_form(f: &FormField, deg: (usize, usize), grid: &LatticeGrid) -> Result<()> {
    if f.bidegree() != Some(deg) {
        return Err(Error::DegreeMismatch(format!("expected a {deg:?}-form on the base")));
    }
    if f.grid != *grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Rate `u̇ = −(R/2 − |T|² − (α′/4)σ₂ + 2α′i∂∂̄(‖Ω‖ρ)/ω̂² − 2μ/ω̂²)/(2‖Ω‖)`.
pub fn fu_yau_rhs(u: &ScalarField, data: &FuYauData) -> Result<ScalarField> {
    let terms = FuYauTerms::new(u, data)?;
    let num = terms.numerator(data.alpha);
    let rate = num.iter().zip(&terms.norm).map(|(n, w)| -n / (2.0 * w)).collect();
    ScalarField::real(&u.grid, rate)
}

/// `∫ (R/2 − |T|² − …) ω̂²`; vanishes at a stationary point.
pub fn integrability_defect(u: &ScalarField, data: &FuYauData) -> Result<f64> {
    let terms = FuYauTerms::new(u, data)?;
    let top = omega_sq(&terms.metric)?;
    let num = terms.numerator(data.alpha);
    let dens: Vec<C64> = num.iter().zip(&top).map(|(n, t)| t * *n).collect();
    Ok((u.grid.integrate(&dens) * forms::complex_top_factor(2)).re)
}

/// The diffusion matrix `F^{pq̄} = g^{pq̄} + α′‖Ω‖³ρ̃^{pq̄} − (α′/2)(R g^{pq̄} − R^{pq̄})`
/// at every point, with `ρ̃` and `R^{pq̄}` obtained by raising indices.
pub fn diffusion_matrices(u: &ScalarField, data: &FuYauData) -> Result<Vec<Mat>> {
    let g = base_metric(u, &data.chi_hat)?;
    let h = g.inverse_points()?;
    let n = g.grid.len();
    if data.alpha == 0.0 {
        return Ok(h);
    }
    let ric = geometry::chern_ricci_form(&g)?;
    let norm = geometry::norm_omega(&g)?;
    let rho = match &data.rho {
        Some(r) => {
            check_base_form(r, (1, 1), &g.grid)?;
            Some(MetricField::from_form(r)?)
        }
        None => None,
    };
    let a = data.alpha;
    Ok((0..n)
        .into_par_iter()
        .map(|p| {
            let hp = &h[p];
            let rp = ric.at(p);
            let raised = hp.mul(&rp).mul(hp);
            let r = hp.mul(&rp).trace().re;
            let mut f = hp.sub(&hp.scale(C64::new(0.5 * a * r, 0.0)).sub(&raised.scale(C64::new(0.5 * a, 0.0))));
            if let Some(rho) = &rho {
                let w = norm.values[p].re;
                f = f.add(&hp.mul(&rho.at(p)).mul(hp).scale(C64::new(a * w * w * w, 0.0)));
            }
            f
        })
        .collect())
}

/// Largest decay rate of the linearized scalar flow, used to cap explicit
/// steps.
pub fn stiffness(u: &ScalarField, data: &FuYauData) -> Result<f64> {
    let f = diffusion_matrices(u, data)?;
    let g = base_metric(u, &data.chi_hat)?;
    let norm = geometry::norm_omega(&g)?;
    let k2 = u.grid.max_wavenumber_sq();
    Ok((0..f.len())
        .map(|p| f[p].max_eigenvalue().abs() / (2.0 * norm.values[p].re))
        .fold(0.0, f64::max)
        * 0.25
        * k2)
}
