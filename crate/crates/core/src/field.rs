//! Scalar, metric and differential-form fields sampled on a [`LatticeGrid`].
//!
//! Tensor fields are stored component-major: one contiguous vector of
//! lattice values per component, which is the layout the transforms want.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::combinatorics::{self, IndexSet, SubsetRanks};
use crate::error::{Error, Result};
use crate::grid::LatticeGrid;
use crate::linalg::{Mat, I, ZERO};

pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: LatticeGrid,
    pub values: Vec<C64>,
    pub real: bool,
}

impl ScalarField {
    pub fn new(grid: &LatticeGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField { grid: grid.clone(), values, real: false })
    }

    /// Real-typed field; imaginary parts are discarded.
    pub fn real(grid: &LatticeGrid, values: Vec<f64>) -> Result<Self> {
        let mut f = ScalarField::new(grid, values.into_iter().map(|x| C64::new(x, 0.0)).collect())?;
        f.real = true;
        Ok(f)
    }

    pub fn constant(grid: &LatticeGrid, c: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![C64::new(c, 0.0); grid.len()], real: true }
    }

    pub fn from_fn(grid: &LatticeGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = grid.sample(|x| C64::new(f(x), 0.0));
        ScalarField { grid: grid.clone(), values, real: true }
    }

    pub fn map_real(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|v| C64::new(f(v.re), 0.0)).collect(),
            real: true,
        }
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn integrate(&self) -> C64 {
        self.grid.integrate(&self.values)
    }

    pub fn mean(&self) -> C64 {
        self.grid.mean(&self.values)
    }

    pub fn max_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(&[&self.values])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Hermitian matrix `g_{k̄j}` per point, row `k` antiholomorphic, column `j`
/// holomorphic; component `k*m + j`. The same container carries Hermitian
/// rates and Ricci-type tensors, which need not be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub grid: LatticeGrid,
    pub comps: Vec<Vec<C64>>,
}

impl MetricField {
    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn zeros(grid: &LatticeGrid) -> Self {
        let m = grid.m();
        MetricField { grid: grid.clone(), comps: vec![vec![ZERO; grid.len()]; m * m] }
    }

    pub fn constant(grid: &LatticeGrid, g: &Mat) -> Self {
        let m = grid.m();
        let comps = (0..m * m).map(|c| vec![g[(c / m, c % m)]; grid.len()]).collect();
        MetricField { grid: grid.clone(), comps }
    }

    pub fn identity(grid: &LatticeGrid) -> Self {
        Self::constant(grid, &Mat::identity(grid.m()))
    }

    pub fn from_points(grid: &LatticeGrid, pts: &[Mat]) -> Self {
        let m = grid.m();
        let mut comps: Vec<Vec<C64>> = (0..m * m).map(|_| Vec::with_capacity(pts.len())).collect();
        for g in pts {
            for (c, comp) in comps.iter_mut().enumerate() {
                comp.push(g[(c / m, c % m)]);
            }
        }
        MetricField { grid: grid.clone(), comps }
    }

    pub fn from_fn(grid: &LatticeGrid, f: impl Fn(&[f64]) -> Mat + Sync) -> Self {
        let pts: Vec<Mat> = (0..grid.len()).into_par_iter().map(|p| f(&grid.coords(p))).collect();
        Self::from_points(grid, &pts)
    }

    #[inline]
    pub fn at(&self, p: usize) -> Mat {
        let m = self.m();
        let mut g = Mat::zeros(m);
        for k in 0..m {
            for j in 0..m {
                g[(k, j)] = self.comps[k * m + j][p];
            }
        }
        g
    }

    pub fn points(&self) -> Vec<Mat> {
        (0..self.grid.len()).into_par_iter().map(|p| self.at(p)).collect()
    }

    pub fn comp(&self, k: usize, j: usize) -> &[C64] {
        &self.comps[k * self.m() + j]
    }

    pub fn scale(&self, s: f64) -> Self {
        MetricField {
            grid: self.grid.clone(),
            comps: self.comps.iter().map(|c| c.iter().map(|v| v * s).collect()).collect(),
        }
    }

    pub fn add(&self, other: &MetricField) -> Self {
        MetricField {
            grid: self.grid.clone(),
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &MetricField) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Pointwise inverse `g^{jk̄}` as matrices `H` with `H[j][k] = g^{jk̄}`.
    pub fn inverse_points(&self) -> Result<Vec<Mat>> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| self.at(p).inverse().ok_or(Error::SingularMetric { point: p }))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &MetricField) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        let c: Vec<&[C64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        self.grid.l2_norm(&c)
    }

    pub fn hermitian_defect(&self) -> f64 {
        (0..self.grid.len()).map(|p| self.at(p).hermitian_defect()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over the grid and the point where it occurs.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| (self.at(p).min_eigenvalue(), p))
            .reduce(|| (f64::INFINITY, 0), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
    }

    /// Check the metric invariants: Hermitian and eigenvalues above `floor`.
    pub fn validate(&self, floor: f64) -> Result<()> {
        if self.hermitian_defect() > 1e-10 * self.sup_norm().max(1.0) {
            return Err(Error::InvalidArgument("metric is not Hermitian".into()));
        }
        let (ev, p) = self.min_eigenvalue();
        if !(ev > floor) {
            return Err(Error::NotPositive { point: p, eigenvalue: ev });
        }
        Ok(())
    }

    /// The (1,1)-form `ω = i g_{k̄j} dz^j ∧ dz̄^k`.
    pub fn to_form(&self) -> FormField {
        let m = self.m();
        let basis = FormBasis::complex(m, 1, 1);
        let mut comps = vec![Vec::new(); m * m];
        for k in 0..m {
            for j in 0..m {
                let idx = basis.index_complex(1 << j, 1 << k).unwrap();
                comps[idx] = self.comps[k * m + j].iter().map(|v| I * v).collect();
            }
        }
        FormField { grid: self.grid.clone(), basis: Arc::new(basis), comps }
    }

    /// Inverse of [`MetricField::to_form`].
    pub fn from_form(form: &FormField) -> Result<Self> {
        let m = form.grid.m();
        if form.basis.kind != (FormKind::Complex { p: 1, q: 1 }) {
            return Err(Error::DegreeMismatch("expected a (1,1)-form".into()));
        }
        let mut comps = vec![Vec::new(); m * m];
        for k in 0..m {
            for j in 0..m {
                let idx = form.basis.index_complex(1 << j, 1 << k).unwrap();
                comps[k * m + j] = form.comps[idx].iter().map(|v| -I * v).collect();
            }
        }
        Ok(MetricField { grid: form.grid.clone(), comps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormKind {
    Complex { p: usize, q: usize },
    Real { k: usize },
}

/// Ordered basis of a form space: `dz^J ∧ dz̄^K` with `J`-major
/// lexicographic order, or `dx^I` for real forms.
#[derive(Debug, Clone)]
pub struct FormBasis {
    pub kind: FormKind,
    /// complex dimension for complex forms, real dimension for real forms
    pub dim: usize,
    first: SubsetRanks,
    second: Option<SubsetRanks>,
}

impl FormBasis {
    pub fn complex(m: usize, p: usize, q: usize) -> Self {
        FormBasis {
            kind: FormKind::Complex { p, q },
            dim: m,
            first: SubsetRanks::new(m, p),
            second: Some(SubsetRanks::new(m, q)),
        }
    }

    pub fn real(d: usize, k: usize) -> Self {
        FormBasis { kind: FormKind::Real { k }, dim: d, first: SubsetRanks::new(d, k), second: None }
    }

    pub fn len(&self) -> usize {
        self.first.len() * self.second.as_ref().map_or(1, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degree(&self) -> usize {
        match self.kind {
            FormKind::Complex { p, q } => p + q,
            FormKind::Real { k } => k,
        }
    }

    /// `(J, K)` of component `i`; `K = 0` for real forms.
    pub fn sets(&self, i: usize) -> (IndexSet, IndexSet) {
        match &self.second {
            Some(s) => (self.first.sets[i / s.len()], s.sets[i % s.len()]),
            None => (self.first.sets[i], 0),
        }
    }

    pub fn index_complex(&self, j: IndexSet, k: IndexSet) -> Option<usize> {
        let s = self.second.as_ref()?;
        Some(self.first.rank(j)? * s.len() + s.rank(k)?)
    }

    pub fn index_real(&self, set: IndexSet) -> Option<usize> {
        if self.second.is_some() {
            return None;
        }
        self.first.rank(set)
    }

    /// Canonical index and sign for an arbitrary ordered index tuple.
    pub fn canonicalize(&self, holo: &[usize], anti: &[usize]) -> Option<(usize, f64)> {
        let sj = combinatorics::permutation_sign(holo);
        let sk = combinatorics::permutation_sign(anti);
        if sj == 0.0 || sk == 0.0 {
            return None;
        }
        let j = holo.iter().fold(0u32, |a, &i| a | (1 << i));
        let k = anti.iter().fold(0u32, |a, &i| a | (1 << i));
        match self.kind {
            FormKind::Complex { .. } => Some((self.index_complex(j, k)?, sj * sk)),
            FormKind::Real { .. } => Some((self.index_real(j)?, sj)),
        }
    }

    /// Sorted index tuples of component `i`.
    pub fn decanonicalize(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let (j, k) = self.sets(i);
        (combinatorics::indices(j), combinatorics::indices(k))
    }
}

#[derive(Debug, Clone)]
pub struct FormField {
    pub grid: LatticeGrid,
    pub basis: Arc<FormBasis>,
    pub comps: Vec<Vec<C64>>,
}

impl PartialEq for FormField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.basis.kind == other.basis.kind && self.comps == other.comps
    }
}

impl FormField {
    pub fn zeros(grid: &LatticeGrid, kind: FormKind) -> Self {
        let basis = match kind {
            FormKind::Complex { p, q } => FormBasis::complex(grid.m(), p, q),
            FormKind::Real { k } => FormBasis::real(grid.real_dim(), k),
        };
        let comps = vec![vec![ZERO; grid.len()]; basis.len()];
        FormField { grid: grid.clone(), basis: Arc::new(basis), comps }
    }

    pub fn kind(&self) -> FormKind {
        self.basis.kind
    }

    pub fn bidegree(&self) -> Option<(usize, usize)> {
        match self.basis.kind {
            FormKind::Complex { p, q } => Some((p, q)),
            FormKind::Real { .. } => None,
        }
    }

    /// Coefficient array of `dz^J ∧ dz̄^K` for sorted `J`, `K`.
    pub fn comp(&self, j: &[usize], k: &[usize]) -> Option<&[C64]> {
        let (i, s) = self.basis.canonicalize(j, k)?;
        (s > 0.0).then(|| self.comps[i].as_slice())
    }

    pub fn set_constant(&mut self, holo: &[usize], anti: &[usize], value: C64) -> Result<()> {
        let (i, s) = self
            .basis
            .canonicalize(holo, anti)
            .ok_or_else(|| Error::InvalidArgument("index not in basis".into()))?;
        self.comps[i] = vec![value * s; self.grid.len()];
        Ok(())
    }

    pub fn scale(&self, s: C64) -> Self {
        FormField {
            grid: self.grid.clone(),
            basis: self.basis.clone(),
            comps: self.comps.iter().map(|c| c.iter().map(|v| v * s).collect()).collect(),
        }
    }

    pub fn add(&self, other: &FormField) -> Result<Self> {
        if self.basis.kind != other.basis.kind {
            return Err(Error::DegreeMismatch("cannot add forms of different degree".into()));
        }
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(FormField {
            grid: self.grid.clone(),
            basis: self.basis.clone(),
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        })
    }

    pub fn sub(&self, other: &FormField) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn l2_norm(&self) -> f64 {
        let c: Vec<&[C64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        self.grid.l2_norm(&c)
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &FormField) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| *v == c[0]))
    }

    /// Coefficients at one lattice point.
    pub fn at(&self, p: usize) -> Vec<C64> {
        self.comps.iter().map(|c| c[p]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        assert_eq!(FormBasis::complex(3, 2, 1).len(), 9);
        assert_eq!(FormBasis::complex(4, 2, 2).len(), 36);
        assert_eq!(FormBasis::real(11, 4).len(), 330);
    }

    #[test]
    fn canonicalization_round_trip() {
        for basis in [FormBasis::complex(3, 2, 1), FormBasis::complex(4, 2, 3), FormBasis::real(7, 3)] {
            for i in 0..basis.len() {
                let (j, k) = basis.decanonicalize(i);
                assert_eq!(basis.canonicalize(&j, &k), Some((i, 1.0)));
            }
        }
        let b = FormBasis::complex(3, 2, 1);
        let (i, s) = b.canonicalize(&[2, 0], &[1]).unwrap();
        assert_eq!(b.decanonicalize(i), (vec![0, 2], vec![1]));
        assert_eq!(s, -1.0);
        assert!(b.canonicalize(&[1, 1], &[0]).is_none());
    }

    #[test]
    fn metric_form_round_trip() {
        let grid = LatticeGrid::new(2, 4, &[0, 1]).unwrap();
        let g = MetricField::from_fn(&grid, |x| {
            Mat::from_fn(2, |k, j| {
                if k == j {
                    C64::new(1.0 + 0.1 * x[0], 0.0)
                } else if k < j {
                    C64::new(0.1, 0.2 * x[1])
                } else {
                    C64::new(0.1, -0.2 * x[1])
                }
            })
        });
        let back = MetricField::from_form(&g.to_form()).unwrap();
        assert_eq!(back.max_abs_diff(&g), 0.0);
        g.validate(DEFAULT_EIGEN_FLOOR).unwrap();
    }

    #[test]
    fn validate_rejects_indefinite() {
        let grid = LatticeGrid::new(2, 4, &[0]).unwrap();
        let mut m = Mat::identity(2);
        m[(1, 1)] = C64::new(-1.0, 0.0);
        let g = MetricField::constant(&grid, &m);
        assert!(matches!(g.validate(DEFAULT_EIGEN_FLOOR), Err(Error::NotPositive { .. })));
    }
}
