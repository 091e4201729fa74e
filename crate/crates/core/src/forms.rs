//! Exterior algebra on lattice fields: wedge products, `∂`, `∂̄`, `d`,
//! `i∂∂̄` and integration of top-degree forms.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::combinatorics::{merge_sign, size};
use crate::error::{Error, Result};
use crate::field::{FormBasis, FormField, FormKind, ScalarField};
use crate::grid::{Deriv, LatticeGrid, Term};
use crate::linalg::{I, ZERO};

/// Precomputed product structure between two form bases.
#[derive(Debug, Clone)]
pub struct WedgeTable {
    pub out: Arc<FormBasis>,
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl WedgeTable {
    pub fn new(a: &FormBasis, b: &FormBasis) -> Result<Self> {
        let out = match (a.kind, b.kind) {
            (FormKind::Complex { p: p1, q: q1 }, FormKind::Complex { p: p2, q: q2 }) => {
                let m = a.dim;
                if b.dim != m {
                    return Err(Error::DegreeMismatch("forms live in different dimensions".into()));
                }
                if p1 + p2 > m || q1 + q2 > m {
                    return Err(Error::DegreeMismatch(format!(
                        "({p1},{q1}) ∧ ({p2},{q2}) exceeds dimension {m}"
                    )));
                }
                FormBasis::complex(m, p1 + p2, q1 + q2)
            }
            (FormKind::Real { k: k1 }, FormKind::Real { k: k2 }) => {
                if b.dim != a.dim || k1 + k2 > a.dim {
                    return Err(Error::DegreeMismatch(format!(
                        "degree {} exceeds dimension {}",
                        k1 + k2,
                        a.dim
                    )));
                }
                FormBasis::real(a.dim, k1 + k2)
            }
            _ => return Err(Error::DegreeMismatch("cannot wedge complex and real forms".into())),
        };
        let mut entries = Vec::new();
        for ia in 0..a.len() {
            let (j1, k1) = a.sets(ia);
            for ib in 0..b.len() {
                let (j2, k2) = b.sets(ib);
                let (Some(s1), Some(s2)) = (merge_sign(j1, j2), merge_sign(k1, k2)) else {
                    continue;
                };
                // move dz̄^{K1} past dz^{J2}
                let swap = if (size(k1) * size(j2)) % 2 == 0 { 1.0 } else { -1.0 };
                let ic = match out.kind {
                    FormKind::Complex { .. } => out.index_complex(j1 | j2, k1 | k2).unwrap(),
                    FormKind::Real { .. } => out.index_real(j1 | j2).unwrap(),
                };
                entries.push((ia, ib, ic, s1 * s2 * swap));
            }
        }
        Ok(WedgeTable { out: Arc::new(out), entries })
    }

    /// Wedge of two coefficient vectors at one point.
    #[inline]
    pub fn apply_point(&self, a: &[C64], b: &[C64], out: &mut [C64]) {
        for o in out.iter_mut() {
            *o = ZERO;
        }
        for &(ia, ib, ic, s) in &self.entries {
            out[ic] += a[ia] * b[ib] * s;
        }
    }
}

/// Graded-commutative wedge product.
pub fn wedge(a: &FormField, b: &FormField) -> Result<FormField> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let table = WedgeTable::new(&a.basis, &b.basis)?;
    let n = a.grid.len();
    let mut comps = vec![vec![ZERO; n]; table.out.len()];
    for &(ia, ib, ic, s) in &table.entries {
        let (x, y) = (&a.comps[ia], &b.comps[ib]);
        comps[ic].par_iter_mut().enumerate().for_each(|(p, o)| *o += x[p] * y[p] * s);
    }
    Ok(FormField { grid: a.grid.clone(), basis: table.out, comps })
}

/// `α ∧ α ∧ … ∧ α` (`k` factors, `k ≥ 1`).
pub fn wedge_power(a: &FormField, k: usize) -> Result<FormField> {
    let mut acc = a.clone();
    for _ in 1..k {
        acc = wedge(&acc, a)?;
    }
    Ok(acc)
}

/// Multiply every coefficient by a scalar field.
pub fn scale_by(form: &FormField, s: &[C64]) -> FormField {
    FormField {
        grid: form.grid.clone(),
        basis: form.basis.clone(),
        comps: form
            .comps
            .iter()
            .map(|c| c.par_iter().zip(s.par_iter()).map(|(x, y)| x * y).collect())
            .collect(),
    }
}

/// Which exterior derivative to build terms for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DOp {
    Del,
    Delbar,
    DdbarI,
    Exterior,
}

fn derivative_terms(basis: &FormBasis, op: DOp) -> Result<(FormBasis, Vec<Term>)> {
    let mut terms = Vec::new();
    match (basis.kind, op) {
        (FormKind::Complex { p, q }, DOp::Del | DOp::Delbar | DOp::DdbarI) => {
            let m = basis.dim;
            let (dp, dq) = match op {
                DOp::Del => (1, 0),
                DOp::Delbar => (0, 1),
                _ => (1, 1),
            };
            if p + dp > m || q + dq > m {
                return Err(Error::DegreeMismatch("derivative exceeds top degree".into()));
            }
            let out = FormBasis::complex(m, p + dp, q + dq);
            let parity = if p % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..basis.len() {
                let (j, k) = basis.sets(i);
                match op {
                    DOp::Del => {
                        for l in 0..m {
                            if let Some(s) = merge_sign(1 << l, j) {
                                let o = out.index_complex(j | (1 << l), k).unwrap();
                                terms.push(Term::new(i, o, &[Deriv::Holo(l)], C64::new(s, 0.0)));
                            }
                        }
                    }
                    DOp::Delbar => {
                        for l in 0..m {
                            if let Some(s) = merge_sign(1 << l, k) {
                                let o = out.index_complex(j, k | (1 << l)).unwrap();
                                terms.push(Term::new(
                                    i,
                                    o,
                                    &[Deriv::Anti(l)],
                                    C64::new(s * parity, 0.0),
                                ));
                            }
                        }
                    }
                    _ => {
                        // i ∂(∂̄α): ∂̄ contributes (−1)^p, ∂ then acts on a (p, q+1)-form
                        for s_ in 0..m {
                            let Some(s1) = merge_sign(1 << s_, k) else { continue };
                            for l in 0..m {
                                let Some(s2) = merge_sign(1 << l, j) else { continue };
                                let o = out.index_complex(j | (1 << l), k | (1 << s_)).unwrap();
                                terms.push(Term::new(
                                    i,
                                    o,
                                    &[Deriv::Holo(l), Deriv::Anti(s_)],
                                    I * (s1 * s2 * parity),
                                ));
                            }
                        }
                    }
                }
            }
            Ok((out, terms))
        }
        (FormKind::Real { k }, DOp::Exterior) => {
            let d = basis.dim;
            if k + 1 > d {
                return Err(Error::DegreeMismatch("derivative exceeds top degree".into()));
            }
            let out = FormBasis::real(d, k + 1);
            for i in 0..basis.len() {
                let (set, _) = basis.sets(i);
                for a in 0..d {
                    if let Some(s) = merge_sign(1 << a, set) {
                        let o = out.index_real(set | (1 << a)).unwrap();
                        terms.push(Term::new(i, o, &[Deriv::Real(a)], C64::new(s, 0.0)));
                    }
                }
            }
            Ok((out, terms))
        }
        _ => Err(Error::DegreeMismatch("operator does not apply to this form type".into())),
    }
}

fn apply(form: &FormField, op: DOp) -> Result<FormField> {
    let (out, terms) = derivative_terms(&form.basis, op)?;
    let inputs: Vec<&[C64]> = form.comps.iter().map(|c| c.as_slice()).collect();
    let comps = form.grid.apply_terms(&inputs, out.len(), &terms);
    Ok(FormField { grid: form.grid.clone(), basis: Arc::new(out), comps })
}

pub fn del(form: &FormField) -> Result<FormField> {
    apply(form, DOp::Del)
}

pub fn delbar(form: &FormField) -> Result<FormField> {
    apply(form, DOp::Delbar)
}

/// `i∂∂̄α`.
pub fn i_ddbar(form: &FormField) -> Result<FormField> {
    apply(form, DOp::DdbarI)
}

/// Exterior derivative of a real form.
pub fn d_real(form: &FormField) -> Result<FormField> {
    apply(form, DOp::Exterior)
}

/// `L²` norm of `dα = ∂α + ∂̄α` for a complex form; of `dα` for a real one.
/// Components that would exceed the top degree contribute nothing.
pub fn d_norm(form: &FormField) -> Result<f64> {
    match form.basis.kind {
        FormKind::Real { .. } => Ok(d_real(form)?.l2_norm()),
        FormKind::Complex { p, q } => {
            let m = form.basis.dim;
            let a = if p < m { del(form)?.l2_norm() } else { 0.0 };
            let b = if q < m { delbar(form)?.l2_norm() } else { 0.0 };
            Ok((a * a + b * b).sqrt())
        }
    }
}

/// `i∂∂̄` of a scalar, as a (1,1)-form.
pub fn i_ddbar_scalar(f: &ScalarField) -> FormField {
    let grid = &f.grid;
    let mut form = FormField::zeros(grid, FormKind::Complex { p: 0, q: 0 });
    form.comps[0] = f.values.clone();
    i_ddbar(&form).expect("scalar i∂∂̄ is always defined")
}

/// Spectral derivative of a scalar field.
pub fn spectral_partial(f: &ScalarField, d: Deriv) -> Result<ScalarField> {
    check_deriv(&f.grid, d)?;
    let values = f.grid.derivative(&f.values, &[d]);
    Ok(ScalarField { grid: f.grid.clone(), values, real: f.real && matches!(d, Deriv::Real(_)) })
}

/// Coefficient-wise spectral derivative of a form field.
pub fn spectral_partial_form(f: &FormField, d: Deriv) -> Result<FormField> {
    check_deriv(&f.grid, d)?;
    let comps = f.comps.iter().map(|c| f.grid.derivative(c, &[d])).collect();
    Ok(FormField { grid: f.grid.clone(), basis: f.basis.clone(), comps })
}

fn check_deriv(grid: &LatticeGrid, d: Deriv) -> Result<()> {
    match d {
        Deriv::Holo(j) | Deriv::Anti(j) => grid.check_index(j),
        Deriv::Real(a) if a >= grid.real_dim() => {
            Err(Error::IndexOutOfRange { index: a, limit: grid.real_dim() })
        }
        Deriv::Real(_) => Ok(()),
    }
}

/// Factor converting the coefficient of `dz¹∧…∧dz^m∧dz̄¹∧…∧dz̄^m` to the
/// coefficient of `dx¹∧dy¹∧…∧dx^m∧dy^m`.
pub fn complex_top_factor(m: usize) -> C64 {
    let sign = if (m * (m - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    C64::new(0.0, -2.0).powu(m as u32) * sign
}

/// `i^{m²}`, the positivity factor of the complex volume form.
pub fn positivity_factor(m: usize) -> C64 {
    I.powu((m * m) as u32)
}

/// Integral of a top-degree form, or of a scalar density.
pub fn integrate_form(form: &FormField) -> Result<C64> {
    let grid = &form.grid;
    match form.basis.kind {
        FormKind::Complex { p, q } if p == grid.m() && q == grid.m() => {
            Ok(grid.integrate(&form.comps[0]) * complex_top_factor(grid.m()))
        }
        FormKind::Complex { p: 0, q: 0 } | FormKind::Real { k: 0 } => {
            Ok(grid.integrate(&form.comps[0]))
        }
        FormKind::Real { k } if k == grid.real_dim() => Ok(grid.integrate(&form.comps[0])),
        _ => Err(Error::DegreeMismatch(format!(
            "cannot integrate a form of degree {} over a {}-dimensional torus",
            form.basis.degree(),
            grid.real_dim()
        ))),
    }
}

pub fn integrate(f: &ScalarField) -> C64 {
    f.grid.integrate(&f.values)
}

/// A constant (1,1)-form `i a_{k̄j} dz^j ∧ dz̄^k` from a matrix `a`.
pub fn constant_11(grid: &LatticeGrid, a: &crate::linalg::Mat) -> FormField {
    let m = grid.m();
    let mut f = FormField::zeros(grid, FormKind::Complex { p: 1, q: 1 });
    for k in 0..m {
        for j in 0..m {
            let idx = f.basis.index_complex(1 << j, 1 << k).unwrap();
            f.comps[idx] = vec![I * a[(k, j)]; grid.len()];
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MetricField;
    use crate::linalg::ONE;
    use std::f64::consts::PI;

    fn grid3() -> LatticeGrid {
        LatticeGrid::new(3, 8, &[0, 1, 2, 3]).unwrap()
    }

    #[test]
    fn wedge_of_11_forms_has_positive_sign() {
        let grid = LatticeGrid::new(2, 4, &[0]).unwrap();
        let mut a = FormField::zeros(&grid, FormKind::Complex { p: 1, q: 1 });
        a.set_constant(&[0], &[0], ONE).unwrap();
        let mut b = FormField::zeros(&grid, FormKind::Complex { p: 1, q: 1 });
        b.set_constant(&[1], &[1], ONE).unwrap();
        let c = wedge(&a, &b).unwrap();
        // dz¹∧dz̄¹∧dz²∧dz̄² = −dz¹∧dz²∧dz̄¹∧dz̄²
        assert_eq!(c.comps[0][0], C64::new(-1.0, 0.0));
        let c2 = wedge(&b, &a).unwrap();
        assert_eq!(c.comps, c2.comps);
    }

    #[test]
    fn one_form_squares_to_zero() {
        let grid = grid3();
        let mut a = FormField::zeros(&grid, FormKind::Complex { p: 1, q: 0 });
        for (i, c) in a.comps.iter_mut().enumerate() {
            *c = grid.sample(|x| C64::new((2.0 * PI * x[0]).sin() + i as f64, x[1]));
        }
        let aa = wedge(&a, &a).unwrap();
        assert_eq!(aa.sup_norm(), 0.0);
    }

    #[test]
    fn omega_cubed_for_identity() {
        let grid = grid3();
        let omega = MetricField::identity(&grid).to_form();
        let w3 = wedge_power(&omega, 3).unwrap();
        let expected = positivity_factor(3) * 6.0;
        assert!((w3.comps[0][0] - expected).norm() < 1e-14);
        // real volume: i^{m²}·canonical = 2^m dVol
        let vol = integrate_form(&w3).unwrap();
        assert!((vol - C64::new(6.0 * 8.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn d_squared_vanishes() {
        let grid = grid3();
        let mut a = FormField::zeros(&grid, FormKind::Complex { p: 1, q: 0 });
        a.comps[0] = grid.sample(|x| C64::new((2.0 * PI * (x[0] + x[3])).cos(), 0.0));
        a.comps[1] = grid.sample(|x| C64::new(0.0, (2.0 * PI * (x[1] - 2.0 * x[2])).sin()));
        assert!(del(&del(&a).unwrap()).unwrap().sup_norm() < 1e-12);
        assert!(delbar(&delbar(&a).unwrap()).unwrap().sup_norm() < 1e-12);
        let anti = delbar(&del(&a).unwrap()).unwrap();
        let anti2 = del(&delbar(&a).unwrap()).unwrap();
        assert!(anti.add(&anti2).unwrap().sup_norm() < 1e-12);
        // i∂∂̄ agrees with its definition
        let direct = i_ddbar(&a).unwrap();
        let composed = del(&delbar(&a).unwrap()).unwrap().scale(I);
        assert!(direct.max_abs_diff(&composed) < 1e-12);
    }

    #[test]
    fn real_exterior_derivative() {
        let grid = LatticeGrid::new(1, 16, &[0, 1]).unwrap();
        let mut f = FormField::zeros(&grid, FormKind::Real { k: 0 });
        f.comps[0] = grid.sample(|x| C64::new((2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(), 0.0));
        let df = d_real(&f).unwrap();
        assert!(d_real(&df).unwrap().sup_norm() < 1e-12);
        assert!(integrate_form(&d_real(&df).unwrap()).unwrap().norm() < 1e-14);
    }

    #[test]
    fn scalar_ddbar_matches_hessian() {
        let grid = LatticeGrid::new(2, 8, &[0, 1, 2, 3]).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| (2.0 * PI * x[0]).cos() * (2.0 * PI * x[2]).sin());
        let form = i_ddbar_scalar(&phi);
        let h = MetricField::from_form(&form).unwrap();
        let direct = grid.derivative(&phi.values, &[Deriv::Holo(1), Deriv::Anti(0)]);
        for p in 0..grid.len() {
            assert!((h.comp(0, 1)[p] - direct[p]).norm() < 1e-12);
        }
        assert!(h.hermitian_defect() < 1e-12);
    }

    #[test]
    fn top_factor_m1() {
        assert_eq!(complex_top_factor(1), C64::new(0.0, -2.0));
        assert_eq!(positivity_factor(1) * complex_top_factor(1), C64::new(2.0, 0.0));
        for m in 1..=4 {
            let v = positivity_factor(m) * complex_top_factor(m);
            assert!((v - C64::new(2f64.powi(m as i32), 0.0)).norm() < 1e-12);
        }
    }
}
