//! Concrete [`FlowSystem`]s.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FormBasis, FormField, MetricField, ScalarField};
use crate::flows::anomaly::{anomaly_rate_22, check_closed, invert_rate_map};
use crate::flows::eta::{eta_initial_residuals, eta_rhs};
use crate::flows::fu_yau::{self, fu_yau_rhs, FuYauData};
use crate::flows::ma::{ma_flow_rhs, ma_metric, ma_stiffness};
use crate::flows::runner::{Diagnostics, FlowSystem, PrimaryField};
use crate::forms;
use crate::geometry::{self, SigmaInversion};
use crate::grid::LatticeGrid;
use crate::linalg::Mat;
use crate::monitors;

/// Largest `d(‖Ω‖ω^{m−1})` accepted for an initial metric.
pub const BALANCED_TOL: f64 = 1e-8;

fn flatten(comps: &[Vec<C64>]) -> Vec<C64> {
    comps.concat()
}

fn split(y: &[C64], n: usize) -> Vec<Vec<C64>> {
    y.chunks(n).map(|c| c.to_vec()).collect()
}

fn metric_of(field: &PrimaryField) -> Result<&MetricField> {
    field.metric().ok_or_else(|| Error::InvalidArgument("this flow evolves a metric".into()))
}

fn scalar_of(field: &PrimaryField) -> Result<&ScalarField> {
    field.scalar().ok_or_else(|| Error::InvalidArgument("this flow evolves a scalar".into()))
}

/// Largest `λ_max(g^{-1})·w(p)` over the grid.
fn weighted_inverse_eig(g: &MetricField, weight: impl Fn(&Mat) -> f64 + Sync) -> Result<f64> {
    (0..g.grid.len())
        .into_par_iter()
        .map(|p| {
            let gp = g.at(p);
            let h = gp.inverse().ok_or(Error::SingularMetric { point: p })?;
            Ok(h.max_eigenvalue() * weight(&gp))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Anomaly flow stepped in the variable `Σ = ‖Ω‖ω^{m−1}`; also hosts the
/// Type IIB flow (`m = 3`, unit slope, `Φ = ρ_B`).
pub struct AnomalySystem {
    pub grid: LatticeGrid,
    pub alpha: f64,
    pub phi: Option<FormField>,
    pub curvature: bool,
    pub require_balanced: bool,
    pub classes: Vec<(String, FormField)>,
    basis: Arc<FormBasis>,
    inversion: SigmaInversion,
}

impl AnomalySystem {
    pub fn new(grid: &LatticeGrid, alpha: f64, phi: Option<FormField>, curvature: bool) -> Result<Self> {
        let m = grid.m();
        let inversion = SigmaInversion::new(m)?;
        if let Some(phi) = &phi {
            if phi.bidegree() != Some((m - 1, m - 1)) {
                return Err(Error::DegreeMismatch("Φ must be an (m−1,m−1)-form".into()));
            }
            if phi.grid != *grid {
                return Err(Error::GridMismatch);
            }
            check_closed(phi)?;
        }
        Ok(AnomalySystem {
            grid: grid.clone(),
            alpha,
            phi,
            curvature,
            require_balanced: true,
            classes: Vec::new(),
            basis: Arc::new(FormBasis::complex(m, m - 1, m - 1)),
            inversion,
        })
    }

    pub fn iib(grid: &LatticeGrid, rho_b: FormField) -> Result<Self> {
        if grid.m() != 3 {
            return Err(Error::Requires("complex dimension 3".into()));
        }
        AnomalySystem::new(grid, 1.0, Some(rho_b), false)
    }

    /// Also report `∫‖Ω‖ω^{m−1}∧γ` under `name`.
    pub fn with_class(mut self, name: &str, gamma: FormField) -> Result<Self> {
        if gamma.bidegree() != Some((1, 1)) || gamma.grid != self.grid {
            return Err(Error::DegreeMismatch("γ must be a (1,1)-form on the flow grid".into()));
        }
        if !gamma.is_constant() {
            return Err(Error::NotConstant);
        }
        self.classes.push((name.to_string(), gamma));
        Ok(self)
    }

    fn sigma(&self, y: &[C64]) -> FormField {
        FormField { grid: self.grid.clone(), basis: self.basis.clone(), comps: split(y, self.grid.len()) }
    }

    fn metric(&self, y: &[C64]) -> Result<MetricField> {
        let n = self.grid.len();
        let nc = self.basis.len();
        let pts = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut s = [C64::new(0.0, 0.0); 16];
                for (c, v) in s[..nc].iter_mut().enumerate() {
                    *v = y[c * n + p];
                }
                self.inversion.metric_at(&s[..nc]).ok_or(Error::SingularMetric { point: p })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricField::from_points(&self.grid, &pts))
    }

    fn rate22(&self, g: &MetricField) -> Result<FormField> {
        anomaly_rate_22(g, self.alpha, self.phi.as_ref(), self.curvature)
    }
}

impl FlowSystem for AnomalySystem {
    fn encode(&self, field: &PrimaryField) -> Result<Vec<C64>> {
        let g = metric_of(field)?;
        if g.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        g.validate(crate::field::DEFAULT_EIGEN_FLOOR)?;
        if self.require_balanced {
            let r = geometry::balanced_residual(g)?;
            if r > BALANCED_TOL {
                return Err(Error::InvalidArgument(format!(
                    "initial metric is not conformally balanced (residual {r:e})"
                )));
            }
        }
        Ok(flatten(&geometry::sigma_form(g)?.comps))
    }

    fn decode(&self, y: &[C64]) -> Result<PrimaryField> {
        Ok(PrimaryField::Metric(self.metric(y)?))
    }

    fn rate(&self, y: &Vec<C64>) -> Result<Vec<C64>> {
        Ok(flatten(&self.rate22(&self.metric(y)?)?.comps))
    }

    fn stiffness(&self, y: &[C64]) -> Result<f64> {
        let g = self.metric(y)?;
        let m = self.grid.m() as f64;
        let lam = weighted_inverse_eig(&g, |gp| {
            1.0 / ((m - 1.0) * geometry::norm_omega_at(gp).unwrap_or(f64::INFINITY))
        })?;
        Ok(lam * 0.25 * self.grid.max_wavenumber_sq())
    }

    fn rhs_norm(&self, y: &[C64], rate: &[C64]) -> Result<f64> {
        let g = self.metric(y)?;
        Ok(invert_rate_map(&g, &self.sigma(rate))?.l2_norm())
    }

    fn diagnostics(&self, y: &[C64]) -> Result<Diagnostics> {
        let g = self.metric(y)?;
        let mut extras = BTreeMap::new();
        for (name, gamma) in &self.classes {
            extras.insert(name.clone(), monitors::class_pairing(&g, gamma)?);
        }
        extras.insert("sigma_closure".into(), forms::d_norm(&self.sigma(y))?);
        Ok(Diagnostics {
            balanced_residual: geometry::balanced_residual(&g)?,
            conserved_volume: monitors::conserved_volume(&g)?,
            min_eig: g.min_eigenvalue().0,
            extras,
        })
    }
}

/// The η-flow, stepped directly in the coefficients `η_{k̄j}`.
pub struct EtaSystem {
    pub grid: LatticeGrid,
}

impl EtaSystem {
    fn metric(&self, y: &[C64]) -> MetricField {
        MetricField { grid: self.grid.clone(), comps: split(y, self.grid.len()) }
    }
}

impl FlowSystem for EtaSystem {
    fn encode(&self, field: &PrimaryField) -> Result<Vec<C64>> {
        let g = metric_of(field)?;
        g.validate(crate::field::DEFAULT_EIGEN_FLOOR)?;
        Ok(flatten(&g.comps))
    }

    fn decode(&self, y: &[C64]) -> Result<PrimaryField> {
        Ok(PrimaryField::Metric(self.metric(y)))
    }

    fn rate(&self, y: &Vec<C64>) -> Result<Vec<C64>> {
        let g = self.metric(y);
        let (ev, p) = g.min_eigenvalue();
        if !(ev > crate::field::DEFAULT_EIGEN_FLOOR) {
            return Err(Error::NotPositive { point: p, eigenvalue: ev });
        }
        Ok(flatten(&eta_rhs(&g)?.comps))
    }

    fn stiffness(&self, y: &[C64]) -> Result<f64> {
        let m = self.grid.m() as f64;
        let lam = weighted_inverse_eig(&self.metric(y), |_| 1.0 / (m - 1.0))?;
        Ok(lam * 0.25 * self.grid.max_wavenumber_sq())
    }

    fn rhs_norm(&self, _y: &[C64], rate: &[C64]) -> Result<f64> {
        Ok(self.metric(rate).l2_norm())
    }

    fn diagnostics(&self, y: &[C64]) -> Result<Diagnostics> {
        let g = self.metric(y);
        let (squared, first) = eta_initial_residuals(&g)?;
        let mut extras = BTreeMap::new();
        extras.insert("eta_residual_squared_norm".into(), squared);
        Ok(Diagnostics {
            balanced_residual: first,
            conserved_volume: monitors::conserved_volume(&g)?,
            min_eig: g.min_eigenvalue().0,
            extras,
        })
    }
}

/// Monge-Ampère flow of the potential `φ`.
pub struct MaSystem {
    pub chi_hat: MetricField,
    pub f: ScalarField,
    pub a: f64,
    pub b: f64,
}

impl MaSystem {
    pub fn new(chi_hat: MetricField, f: ScalarField) -> Result<Self> {
        if chi_hat.grid != f.grid {
            return Err(Error::GridMismatch);
        }
        chi_hat.validate(crate::field::DEFAULT_EIGEN_FLOOR)?;
        Ok(MaSystem { chi_hat, f, a: 1.0, b: 1.0 })
    }

    fn phi(&self, y: &[C64]) -> ScalarField {
        ScalarField { grid: self.f.grid.clone(), values: y.to_vec(), real: true }
    }
}

impl FlowSystem for MaSystem {
    fn encode(&self, field: &PrimaryField) -> Result<Vec<C64>> {
        let phi = scalar_of(field)?;
        if phi.grid != self.f.grid {
            return Err(Error::GridMismatch);
        }
        Ok(phi.values.iter().map(|v| C64::new(v.re, 0.0)).collect())
    }

    fn decode(&self, y: &[C64]) -> Result<PrimaryField> {
        Ok(PrimaryField::Scalar(self.phi(y)))
    }

    fn rate(&self, y: &Vec<C64>) -> Result<Vec<C64>> {
        Ok(ma_flow_rhs(&self.phi(y), &self.chi_hat, &self.f)?.values)
    }

    fn stiffness(&self, y: &[C64]) -> Result<f64> {
        ma_stiffness(&self.phi(y), &self.chi_hat, &self.f)
    }

    fn rhs_norm(&self, _y: &[C64], rate: &[C64]) -> Result<f64> {
        let grid = &self.f.grid;
        let mean = grid.mean(rate);
        let centered: Vec<C64> = rate.iter().map(|v| v - mean).collect();
        Ok(grid.l2_norm(&[&centered]))
    }

    fn diagnostics(&self, y: &[C64]) -> Result<Diagnostics> {
        let phi = self.phi(y);
        let chi = ma_metric(&phi, &self.chi_hat)?;
        let mut extras = BTreeMap::new();
        extras.insert("d_chi".into(), forms::d_norm(&chi.to_form())?);
        let rate = ma_flow_rhs(&phi, &self.chi_hat, &self.f)?;
        extras.insert("mean_rate".into(), rate.mean().re);
        extras.insert("ma_test_max".into(), monitors::test_function_ma(&phi, &self.chi_hat, self.a, self.b)?.max_re());
        Ok(Diagnostics {
            balanced_residual: geometry::balanced_residual(&chi)?,
            conserved_volume: monitors::conserved_volume(&chi)?,
            min_eig: chi.min_eigenvalue().0,
            extras,
        })
    }
}

/// Scalar Fu-Yau flow of the conformal factor `u` on the base.
pub struct FuYauSystem {
    pub grid: LatticeGrid,
    pub data: FuYauData,
    pub tau1: f64,
    pub tau2: f64,
}

impl FuYauSystem {
    pub fn new(grid: &LatticeGrid, data: FuYauData) -> Result<Self> {
        if grid.m() != 2 {
            return Err(Error::InvalidGrid("the Fu-Yau base has complex dimension 2".into()));
        }
        Ok(FuYauSystem { grid: grid.clone(), data, tau1: 1.0, tau2: 1.0 })
    }

    fn u(&self, y: &[C64]) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: y.to_vec(), real: true }
    }
}

impl FlowSystem for FuYauSystem {
    fn encode(&self, field: &PrimaryField) -> Result<Vec<C64>> {
        let u = scalar_of(field)?;
        if u.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(u.values.iter().map(|v| C64::new(v.re, 0.0)).collect())
    }

    fn decode(&self, y: &[C64]) -> Result<PrimaryField> {
        Ok(PrimaryField::Scalar(self.u(y)))
    }

    fn rate(&self, y: &Vec<C64>) -> Result<Vec<C64>> {
        Ok(fu_yau_rhs(&self.u(y), &self.data)?.values)
    }

    fn stiffness(&self, y: &[C64]) -> Result<f64> {
        fu_yau::stiffness(&self.u(y), &self.data)
    }

    fn rhs_norm(&self, _y: &[C64], rate: &[C64]) -> Result<f64> {
        Ok(self.grid.l2_norm(&[rate]))
    }

    fn diagnostics(&self, y: &[C64]) -> Result<Diagnostics> {
        let u = self.u(y);
        let g = fu_yau::base_metric(&u, &self.data.chi_hat)?;
        let b = monitors::fu_yau_bounds(&u, &self.data.chi_hat, self.data.alpha)?;
        let (floor, _) = monitors::parabolicity(&u, &self.data)?;
        let mut extras = BTreeMap::new();
        extras.insert("sup_exp_u".into(), b.sup_exp_u);
        extras.insert("inf_exp_u".into(), b.inf_exp_u);
        extras.insert("sup_torsion_sq".into(), b.sup_torsion_sq);
        extras.insert("sup_alpha_ricci".into(), b.sup_alpha_ricci);
        extras.insert("parabolicity_floor".into(), floor);
        extras.insert("integrability_defect".into(), fu_yau::integrability_defect(&u, &self.data)?);
        let mean = u.mean().re;
        extras.insert("u_oscillation".into(), u.values.iter().map(|v| (v.re - mean).abs()).fold(0.0, f64::max));
        extras.insert(
            "fy_test_max".into(),
            monitors::test_function_fu_yau(&g, self.data.alpha, self.tau1, self.tau2)?.max_re(),
        );
        Ok(Diagnostics {
            balanced_residual: geometry::balanced_residual(&g)?,
            conserved_volume: monitors::fu_yau_volume(&u, &self.data.chi_hat)?,
            min_eig: g.min_eigenvalue().0,
            extras,
        })
    }

    fn parabolicity(&self, y: &[C64]) -> Result<Option<f64>> {
        if self.data.alpha == 0.0 {
            return Ok(None);
        }
        Ok(Some(monitors::parabolicity(&self.u(y), &self.data)?.0))
    }
}
