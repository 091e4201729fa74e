//! Constant-coefficient real forms on one tangent space and the flux
//! contractions `(F²)_{ij}` and `|F|²`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, indices, merge_sign, permutation_sign, subsets, IndexSet, SubsetRanks};
use crate::error::{Error, Result};

/// Real `degree`-form in `dim` dimensions, coefficients over lexicographically
/// ordered index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealForm {
    pub dim: usize,
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl RealForm {
    pub fn zeros(dim: usize, degree: usize) -> Self {
        RealForm { dim, degree, coeffs: vec![0.0; binomial(dim, degree)] }
    }

    pub fn sets(&self) -> Vec<IndexSet> {
        subsets(self.dim, self.degree)
    }

    /// Coefficient of `dx^{i₁}∧…∧dx^{i_k}` for an arbitrary index order.
    pub fn component(&self, idx: &[usize]) -> f64 {
        let sign = permutation_sign(idx);
        if sign == 0.0 || idx.len() != self.degree || idx.iter().any(|&i| i >= self.dim) {
            return 0.0;
        }
        let set = idx.iter().fold(0u32, |s, &i| s | (1 << i));
        let r = SubsetRanks::new(self.dim, self.degree).rank(set).unwrap();
        sign * self.coeffs[r]
    }

    /// Set the coefficient so that `component(idx) == value`.
    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        if idx.len() != self.degree {
            return Err(Error::DegreeMismatch(format!("{} indices for a {}-form", idx.len(), self.degree)));
        }
        if let Some(&i) = idx.iter().find(|&&i| i >= self.dim) {
            return Err(Error::IndexOutOfRange { index: i, limit: self.dim });
        }
        let sign = permutation_sign(idx);
        if sign == 0.0 {
            return Err(Error::InvalidArgument("repeated index".into()));
        }
        let set = idx.iter().fold(0u32, |s, &i| s | (1 << i));
        let r = SubsetRanks::new(self.dim, self.degree).rank(set).unwrap();
        self.coeffs[r] = sign * value;
        Ok(())
    }

    /// Pull back along `x^i ↦ x^{i+offset}` into `dim` dimensions.
    pub fn embed(&self, offset: usize, dim: usize) -> Result<RealForm> {
        if offset + self.dim > dim {
            return Err(Error::InvalidArgument(format!("cannot embed {}+{} into {}", offset, self.dim, dim)));
        }
        let ranks = SubsetRanks::new(dim, self.degree);
        let mut out = RealForm::zeros(dim, self.degree);
        for (s, c) in self.sets().into_iter().zip(&self.coeffs) {
            out.coeffs[ranks.rank(s << offset).unwrap()] = *c;
        }
        Ok(out)
    }

    pub fn add(&self, other: &RealForm) -> Result<RealForm> {
        if (self.dim, self.degree) != (other.dim, other.degree) {
            return Err(Error::DegreeMismatch("adding forms of different type".into()));
        }
        Ok(RealForm {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> RealForm {
        RealForm { dim: self.dim, degree: self.degree, coeffs: self.coeffs.iter().map(|c| s * c).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

pub fn wedge(a: &RealForm, b: &RealForm) -> Result<RealForm> {
    if a.dim != b.dim {
        return Err(Error::DegreeMismatch("wedge of forms in different dimensions".into()));
    }
    let degree = a.degree + b.degree;
    let mut out = RealForm::zeros(a.dim, degree);
    if degree > a.dim {
        return Ok(out);
    }
    let ranks = SubsetRanks::new(a.dim, degree);
    let bsets = b.sets();
    for (sa, ca) in a.sets().into_iter().zip(&a.coeffs) {
        if *ca == 0.0 {
            continue;
        }
        for (&sb, cb) in bsets.iter().zip(&b.coeffs) {
            if let Some(sign) = merge_sign(sa, sb) {
                out.coeffs[ranks.rank(sa | sb).unwrap()] += sign * ca * cb;
            }
        }
    }
    Ok(out)
}

/// Hodge star for a diagonal metric `diag(d₀,…)` of any signature, fixed by
/// `α∧⋆β = ⟨α,β⟩ vol`.
pub fn hodge_diag(form: &RealForm, diag: &[f64]) -> Result<RealForm> {
    if diag.len() != form.dim {
        return Err(Error::DegreeMismatch("metric and form dimensions differ".into()));
    }
    if let Some(p) = diag.iter().position(|d| *d == 0.0 || !d.is_finite()) {
        return Err(Error::SingularMetric { point: p });
    }
    let n = form.dim;
    let full: IndexSet = if n == 32 { u32::MAX } else { (1 << n) - 1 };
    let sqrt_det = diag.iter().map(|d| d.abs()).product::<f64>().sqrt();
    let ranks = SubsetRanks::new(n, n - form.degree);
    let mut out = RealForm::zeros(n, n - form.degree);
    for (s, c) in form.sets().into_iter().zip(&form.coeffs) {
        if *c == 0.0 {
            continue;
        }
        let comp = full & !s;
        let raise: f64 = indices(s).iter().map(|&i| 1.0 / diag[i]).product();
        let sign = merge_sign(s, comp).unwrap();
        out.coeffs[ranks.rank(comp).unwrap()] = sign * sqrt_det * raise * c;
    }
    Ok(out)
}

fn inverse(g: &[f64], n: usize) -> Result<Vec<f64>> {
    if g.len() != n * n {
        return Err(Error::DegreeMismatch(format!("metric has {} entries, expected {}", g.len(), n * n)));
    }
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || g[i * n + j] == 0.0));
    if diagonal {
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            let d = g[i * n + i];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::SingularMetric { point: 0 });
            }
            inv[i * n + i] = 1.0 / d;
        }
        return Ok(inv);
    }
    let inv = DMatrix::from_row_slice(n, n, g).try_inverse().ok_or(Error::SingularMetric { point: 0 })?;
    Ok((0..n * n).map(|k| inv[(k / n, k % n)]).collect())
}

/// Minors `det(G^{-1}[S,S'])` over `k`-subsets; diagonal when `G` is.
struct Compound {
    sets: Vec<IndexSet>,
    values: Vec<f64>,
    diagonal: bool,
}

impl Compound {
    fn new(ginv: &[f64], n: usize, k: usize) -> Self {
        let sets = subsets(n, k);
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || ginv[i * n + j] == 0.0));
        let values = if diagonal {
            sets.iter().map(|&s| indices(s).iter().map(|&i| ginv[i * n + i]).product()).collect()
        } else {
            let mut v = Vec::with_capacity(sets.len() * sets.len());
            for &a in &sets {
                let ia = indices(a);
                for &b in &sets {
                    let ib = indices(b);
                    let sub = DMatrix::from_fn(k, k, |r, c| ginv[ia[r] * n + ib[c]]);
                    v.push(sub.determinant());
                }
            }
            v
        };
        Compound { sets, values, diagonal }
    }

    fn pair(&self, x: &[f64], y: &[f64]) -> f64 {
        let len = self.sets.len();
        if self.diagonal {
            return (0..len).map(|a| x[a] * self.values[a] * y[a]).sum();
        }
        let mut acc = 0.0;
        for a in 0..len {
            if x[a] == 0.0 {
                continue;
            }
            let row = &self.values[a * len..(a + 1) * len];
            acc += x[a] * row.iter().zip(y).map(|(m, y)| m * y).sum::<f64>();
        }
        acc
    }
}

fn check_four_form(f: &RealForm, g: &[f64]) -> Result<()> {
    if f.degree != 4 {
        return Err(Error::DegreeMismatch(format!("flux must be a 4-form, got degree {}", f.degree)));
    }
    if g.len() != f.dim * f.dim {
        return Err(Error::DegreeMismatch("metric and flux dimensions differ".into()));
    }
    Ok(())
}

/// `(F²)_{ij} = (1/6) F_{iklm} F_j{}^{klm}`, row-major `dim × dim`.
pub fn f_squared(f: &RealForm, g: &[f64]) -> Result<Vec<f64>> {
    check_four_form(f, g)?;
    let n = f.dim;
    let ginv = inverse(g, n)?;
    let m3 = Compound::new(&ginv, n, 3);
    let ranks4 = SubsetRanks::new(n, 4);
    // rows[i][S] = F_{i S} for 3-sets S
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            m3.sets
                .iter()
                .map(|&s| match merge_sign(1 << i, s) {
                    Some(sign) => sign * f.coeffs[ranks4.rank(s | (1 << i)).unwrap()],
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = m3.pair(&rows[i], &rows[j]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    Ok(out)
}

/// `|F|² = F_{ijkl}F^{ijkl}/4!`.
pub fn f_norm_sq(f: &RealForm, g: &[f64]) -> Result<f64> {
    check_four_form(f, g)?;
    let ginv = inverse(g, f.dim)?;
    Ok(Compound::new(&ginv, f.dim, 4).pair(&f.coeffs, &f.coeffs))
}

/// Row-major inverse of a real symmetric metric.
pub fn metric_inverse(g: &[f64], n: usize) -> Result<Vec<f64>> {
    inverse(g, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<f64> {
        (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn single_component_flux() {
        let mut f = RealForm::zeros(11, 4);
        f.set(&[0, 1, 2, 3], 1.0).unwrap();
        let sq = f_squared(&f, &identity(11)).unwrap();
        assert!((sq[0] - 1.0).abs() < 1e-15);
        assert_eq!(sq[4 * 11 + 4], 0.0);
        assert!((f_norm_sq(&f, &identity(11)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn component_signs_follow_permutations() {
        let mut f = RealForm::zeros(5, 2);
        f.set(&[3, 1], 2.0).unwrap();
        assert_eq!(f.component(&[1, 3]), -2.0);
        assert_eq!(f.component(&[3, 1]), 2.0);
        assert_eq!(f.component(&[3, 3]), 0.0);
    }

    #[test]
    fn hodge_squares_to_sign() {
        let diag = [-1.0, 2.0, 0.5, 3.0, 1.5];
        let mut a = RealForm::zeros(5, 2);
        a.set(&[0, 3], 1.3).unwrap();
        a.set(&[1, 2], -0.4).unwrap();
        let twice = hodge_diag(&hodge_diag(&a, &diag).unwrap(), &diag).unwrap();
        // ⋆⋆ = (−1)^{k(n−k)} s on k-forms with s the sign of det g
        let expect = a.scale(-1.0 * (-1f64).powi(2 * 3));
        for (x, y) in twice.coeffs.iter().zip(&expect.coeffs) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn wedge_with_hodge_gives_norm() {
        let diag = [-1.0, 2.0, 0.5, 3.0, 1.5, 0.7];
        let n = diag.len();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            g[i * n + i] = diag[i];
        }
        let mut a = RealForm::zeros(n, 4);
        a.set(&[0, 1, 2, 3], 0.9).unwrap();
        a.set(&[1, 2, 4, 5], -1.1).unwrap();
        let top = wedge(&a, &hodge_diag(&a, &diag).unwrap()).unwrap();
        let vol = diag.iter().map(|d: &f64| d.abs()).product::<f64>().sqrt();
        assert!((top.coeffs[0] - f_norm_sq(&a, &g).unwrap() * vol).abs() < 1e-13);
    }

    #[test]
    fn embedding_shifts_indices() {
        let mut a = RealForm::zeros(2, 1);
        a.set(&[1], 4.0).unwrap();
        let b = a.embed(3, 6).unwrap();
        assert_eq!(b.component(&[4]), 4.0);
    }

    #[test]
    fn singular_metric_is_rejected() {
        let f = RealForm::zeros(4, 4);
        assert!(matches!(f_norm_sq(&f, &[0.0; 16]), Err(Error::SingularMetric { .. })));
    }
}
