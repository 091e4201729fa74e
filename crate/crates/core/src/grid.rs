//! Periodic sampling lattice on a flat complex torus and the Fourier
//! machinery behind every derivative.
//!
//! Real coordinates are ordered `(x1, y1, x2, y2, ...)` with `z_j = x_j + i y_j`,
//! so real axis `2j` is `x_j` and `2j + 1` is `y_j`. Samples are stored
//! row-major with the last real axis varying fastest.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::ZERO;
use crate::MAX_DIM;

pub const DEFAULT_BUDGET: usize = 1 << 22;

/// First-order derivative along a complex or real direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Deriv {
    /// `∂/∂z_j = ½(∂_x − i∂_y)`
    Holo(usize),
    /// `∂/∂z̄_j = ½(∂_x + i∂_y)`
    Anti(usize),
    /// `∂/∂x_a` along real axis `a`
    Real(usize),
}

/// Linear spectral term: `coef · derivs(inputs[input])` added to `outputs[output]`.
#[derive(Debug, Clone)]
pub struct Term {
    pub input: usize,
    pub output: usize,
    pub derivs: Vec<Deriv>,
    pub coef: C64,
}

impl Term {
    pub fn new(input: usize, output: usize, derivs: &[Deriv], coef: C64) -> Self {
        Term { input, output, derivs: derivs.to_vec(), coef }
    }
}

/// Fourier coefficients of one component; constant fields skip the transform.
#[derive(Debug, Clone)]
pub enum Spectrum {
    Constant(C64),
    Modes(Vec<C64>),
}

type Plan = Arc<dyn Fft<f64>>;

struct GridInner {
    m: usize,
    res: Vec<usize>,
    periods: Vec<f64>,
    active: Vec<bool>,
    strides: Vec<usize>,
    npoints: usize,
    forward: Vec<Option<Plan>>,
    backward: Vec<Option<Plan>>,
    wavenumbers: Vec<Vec<f64>>,
    symbols: Mutex<HashMap<Deriv, Arc<Vec<C64>>>>,
}

/// Validated periodic lattice. Cloning is cheap; clones share FFT plans and
/// cached symbols.
#[derive(Clone)]
pub struct LatticeGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for LatticeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticeGrid")
            .field("m", &self.inner.m)
            .field("res", &self.inner.res)
            .field("periods", &self.inner.periods)
            .finish()
    }
}

impl PartialEq for LatticeGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.m == other.inner.m
                && self.inner.res == other.inner.res
                && self.inner.periods == other.inner.periods)
    }
}

/// Build a grid. `resolution` has length 1 (shared by all active axes) or
/// `2m`; `active_dims` lists the varying real axes; `periods` is empty
/// (all 1) or has length `2m`.
pub fn make_grid(
    m: usize,
    resolution: &[usize],
    active_dims: &[usize],
    periods: &[f64],
    budget: usize,
) -> Result<LatticeGrid> {
    if m == 0 || m > MAX_DIM {
        return Err(Error::UnsupportedDimension(m));
    }
    let d = 2 * m;
    let mut active = vec![false; d];
    for &a in active_dims {
        if a >= d {
            return Err(Error::IndexOutOfRange { index: a, limit: d });
        }
        active[a] = true;
    }
    let res: Vec<usize> = match resolution.len() {
        1 => (0..d).map(|a| if active[a] { resolution[0] } else { 1 }).collect(),
        n if n == d => (0..d).map(|a| if active[a] { resolution[a] } else { 1 }).collect(),
        n => {
            return Err(Error::InvalidGrid(format!(
                "expected 1 or {d} resolutions, got {n}"
            )))
        }
    };
    for a in 0..d {
        if !res[a].is_power_of_two() {
            return Err(Error::NonPowerOfTwo(res[a]));
        }
        if active[a] && res[a] < 4 {
            return Err(Error::ResolutionTooSmall { axis: a, res: res[a] });
        }
    }
    let periods: Vec<f64> = match periods.len() {
        0 => vec![1.0; d],
        n if n == d => periods.to_vec(),
        n => {
            return Err(Error::InvalidGrid(format!("expected {d} periods, got {n}")));
        }
    };
    if periods.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidGrid("periods must be positive".into()));
    }
    let npoints = res
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
        .unwrap_or(usize::MAX);
    if npoints > budget {
        return Err(Error::BudgetExceeded { points: npoints, budget });
    }
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * res[a + 1];
    }
    let mut planner = FftPlanner::new();
    let forward = res
        .iter()
        .map(|&n| (n > 1).then(|| planner.plan_fft_forward(n)))
        .collect();
    let backward = res
        .iter()
        .map(|&n| (n > 1).then(|| planner.plan_fft_inverse(n)))
        .collect();
    let wavenumbers = (0..d)
        .map(|a| {
            let n = res[a];
            (0..n)
                .map(|k| {
                    let s = if 2 * k < n {
                        k as f64
                    } else if 2 * k == n {
                        0.0
                    } else {
                        k as f64 - n as f64
                    };
                    2.0 * std::f64::consts::PI * s / periods[a]
                })
                .collect()
        })
        .collect();
    Ok(LatticeGrid {
        inner: Arc::new(GridInner {
            m,
            res,
            periods,
            active,
            strides,
            npoints,
            forward,
            backward,
            wavenumbers,
            symbols: Mutex::new(HashMap::new()),
        }),
    })
}

impl LatticeGrid {
    /// Unit-period grid with a shared resolution on the listed axes.
    pub fn new(m: usize, res: usize, active_dims: &[usize]) -> Result<Self> {
        make_grid(m, &[res], active_dims, &[], DEFAULT_BUDGET)
    }

    pub fn m(&self) -> usize {
        self.inner.m
    }

    pub fn real_dim(&self) -> usize {
        2 * self.inner.m
    }

    pub fn len(&self) -> usize {
        self.inner.npoints
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn res(&self) -> &[usize] {
        &self.inner.res
    }

    pub fn periods(&self) -> &[f64] {
        &self.inner.periods
    }

    pub fn is_active(&self, axis: usize) -> bool {
        self.inner.active[axis]
    }

    pub fn active_mask(&self) -> String {
        self.inner.active.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn active_dims(&self) -> Vec<usize> {
        (0..self.real_dim()).filter(|&a| self.inner.active[a]).collect()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.inner.periods[axis] / self.inner.res[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.real_dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.inner.periods.iter().product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.inner.strides[axis]
    }

    /// Lattice index along `axis` of the flat point index `p`.
    #[inline]
    pub fn axis_index(&self, p: usize, axis: usize) -> usize {
        (p / self.inner.strides[axis]) % self.inner.res[axis]
    }

    /// Real coordinates of a lattice point.
    pub fn coords(&self, p: usize) -> Vec<f64> {
        (0..self.real_dim())
            .map(|a| self.axis_index(p, a) as f64 * self.spacing(a))
            .collect()
    }

    /// Flat index of the point shifted by `shift` samples along `axis`.
    #[inline]
    pub fn shifted(&self, p: usize, axis: usize, shift: isize) -> usize {
        let n = self.inner.res[axis] as isize;
        let i = self.axis_index(p, axis) as isize;
        let j = (i + shift).rem_euclid(n);
        (p as isize + (j - i) * self.inner.strides[axis] as isize) as usize
    }

    /// Sample a function of the real coordinates.
    pub fn sample(&self, f: impl Fn(&[f64]) -> C64 + Sync) -> Vec<C64> {
        (0..self.len())
            .into_par_iter()
            .map(|p| f(&self.coords(p)))
            .collect()
    }

    pub fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.m() {
            Err(Error::IndexOutOfRange { index: j, limit: self.m() })
        } else {
            Ok(())
        }
    }

    /// True when the derivative vanishes identically on this grid.
    pub fn is_trivial(&self, d: Deriv) -> bool {
        match d {
            Deriv::Holo(j) | Deriv::Anti(j) => {
                !self.inner.active[2 * j] && !self.inner.active[2 * j + 1]
            }
            Deriv::Real(a) => !self.inner.active[a],
        }
    }

    /// Fourier multiplier of a first derivative, one entry per mode.
    pub fn symbol(&self, d: Deriv) -> Arc<Vec<C64>> {
        let mut cache = self.inner.symbols.lock().unwrap();
        if let Some(s) = cache.get(&d) {
            return s.clone();
        }
        let kappa = |p: usize, a: usize| self.inner.wavenumbers[a][self.axis_index(p, a)];
        let s: Vec<C64> = (0..self.len())
            .map(|p| match d {
                Deriv::Real(a) => C64::new(0.0, kappa(p, a)),
                Deriv::Holo(j) => {
                    C64::new(0.5 * kappa(p, 2 * j + 1), 0.5 * kappa(p, 2 * j))
                }
                Deriv::Anti(j) => {
                    C64::new(-0.5 * kappa(p, 2 * j + 1), 0.5 * kappa(p, 2 * j))
                }
            })
            .collect();
        let s = Arc::new(s);
        cache.insert(d, s.clone());
        s
    }

    /// Largest squared wavenumber summed over active axes, the scale of the
    /// stiffest mode of a second-order operator.
    pub fn max_wavenumber_sq(&self) -> f64 {
        (0..self.real_dim())
            .filter(|&a| self.inner.active[a])
            .map(|a| {
                self.inner.wavenumbers[a]
                    .iter()
                    .map(|k| k * k)
                    .fold(0.0, f64::max)
            })
            .sum()
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        let plans = if inverse { &self.inner.backward } else { &self.inner.forward };
        for a in 0..self.real_dim() {
            let Some(plan) = plans[a].as_ref() else { continue };
            let n = self.inner.res[a];
            let s = self.inner.strides[a];
            if s == 1 {
                data.par_chunks_mut(n * 64).for_each(|chunk| plan.process(chunk));
            } else {
                data.par_chunks_mut(n * s).for_each(|block| {
                    let mut lines = vec![ZERO; n * s];
                    for i in 0..n {
                        for c in 0..s {
                            lines[c * n + i] = block[i * s + c];
                        }
                    }
                    plan.process(&mut lines);
                    for i in 0..n {
                        for c in 0..s {
                            block[i * s + c] = lines[c * n + i];
                        }
                    }
                });
            }
        }
        if inverse {
            let scale = 1.0 / self.len() as f64;
            data.par_iter_mut().for_each(|v| *v *= scale);
        }
    }

    pub fn forward(&self, values: &[C64]) -> Spectrum {
        debug_assert_eq!(values.len(), self.len());
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            return Spectrum::Constant(first);
        }
        let mut data = values.to_vec();
        self.transform(&mut data, false);
        Spectrum::Modes(data)
    }

    pub fn inverse(&self, mut modes: Vec<C64>) -> Vec<C64> {
        self.transform(&mut modes, true);
        modes
    }

    /// Apply a chain of first derivatives to one component.
    pub fn derivative(&self, values: &[C64], derivs: &[Deriv]) -> Vec<C64> {
        let out = self.apply_terms(&[values], 1, &[Term::new(0, 0, derivs, C64::new(1.0, 0.0))]);
        out.into_iter().next().unwrap()
    }

    /// Evaluate a linear combination of derivative terms, transforming each
    /// input and each output at most once.
    pub fn apply_terms(&self, inputs: &[&[C64]], n_out: usize, terms: &[Term]) -> Vec<Vec<C64>> {
        let n = self.len();
        let mut spectra: Vec<Option<Spectrum>> = vec![None; inputs.len()];
        let mut acc: Vec<Option<Vec<C64>>> = vec![None; n_out];
        for t in terms {
            debug_assert!(!t.derivs.is_empty());
            if t.coef == ZERO || t.derivs.iter().any(|&d| self.is_trivial(d)) {
                continue;
            }
            if spectra[t.input].is_none() {
                spectra[t.input] = Some(self.forward(inputs[t.input]));
            }
            let Some(Spectrum::Modes(modes)) = &spectra[t.input] else { continue };
            let syms: Vec<Arc<Vec<C64>>> = t.derivs.iter().map(|&d| self.symbol(d)).collect();
            let out = acc[t.output].get_or_insert_with(|| vec![ZERO; n]);
            let coef = t.coef;
            match syms.len() {
                1 => {
                    let s0 = &syms[0];
                    out.par_iter_mut().enumerate().for_each(|(p, o)| {
                        *o += coef * s0[p] * modes[p];
                    });
                }
                2 => {
                    let (s0, s1) = (&syms[0], &syms[1]);
                    out.par_iter_mut().enumerate().for_each(|(p, o)| {
                        *o += coef * s0[p] * s1[p] * modes[p];
                    });
                }
                _ => {
                    out.par_iter_mut().enumerate().for_each(|(p, o)| {
                        let mut f = coef * modes[p];
                        for s in &syms {
                            f *= s[p];
                        }
                        *o += f;
                    });
                }
            }
        }
        acc.into_iter()
            .map(|a| match a {
                Some(modes) => self.inverse(modes),
                None => vec![ZERO; n],
            })
            .collect()
    }

    /// Riemann sum times cell volume.
    pub fn integrate(&self, values: &[C64]) -> C64 {
        let s: C64 = values.iter().sum();
        s * self.cell_volume()
    }

    pub fn mean(&self, values: &[C64]) -> C64 {
        values.iter().sum::<C64>() / self.len() as f64
    }

    /// L² norm over the torus of a set of components.
    pub fn l2_norm(&self, comps: &[&[C64]]) -> f64 {
        let s: f64 = comps
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum();
        (s * self.cell_volume()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn make_grid_counts_and_budget() {
        let g = make_grid(3, &[8], &[0, 1, 2, 3], &[], DEFAULT_BUDGET).unwrap();
        assert_eq!(g.len(), 8usize.pow(4));
        let g = make_grid(2, &[32], &[0, 1, 2, 3], &[], DEFAULT_BUDGET).unwrap();
        assert_eq!(g.len(), 32usize.pow(4));
        let e = make_grid(3, &[16], &[0, 1, 2, 3, 4, 5], &[], DEFAULT_BUDGET).unwrap_err();
        assert!(matches!(e, Error::BudgetExceeded { .. }));
        assert_eq!(
            make_grid(1, &[12], &[0], &[], DEFAULT_BUDGET).unwrap_err(),
            Error::NonPowerOfTwo(12)
        );
        assert!(matches!(
            make_grid(1, &[2], &[0], &[], DEFAULT_BUDGET).unwrap_err(),
            Error::ResolutionTooSmall { .. }
        ));
    }

    #[test]
    fn holomorphic_derivative_of_mode() {
        let g = LatticeGrid::new(1, 16, &[0, 1]).unwrap();
        let f = g.sample(|x| C64::new(0.0, 2.0 * PI * x[0]).exp());
        let d = g.derivative(&f, &[Deriv::Holo(0)]);
        for p in 0..g.len() {
            assert!((d[p] - C64::new(0.0, PI) * f[p]).norm() < 1e-12);
        }
        let db = g.derivative(&f, &[Deriv::Anti(0)]);
        for p in 0..g.len() {
            assert!((db[p] - C64::new(0.0, PI) * f[p]).norm() < 1e-12);
        }
    }

    #[test]
    fn complex_symbols_match_real_combinations() {
        let g = LatticeGrid::new(1, 16, &[0, 1]).unwrap();
        let s_anti = g.symbol(Deriv::Anti(0));
        let s_holo = g.symbol(Deriv::Holo(0));
        let s_x = g.symbol(Deriv::Real(0));
        let s_y = g.symbol(Deriv::Real(1));
        for p in 0..g.len() {
            assert!((s_holo[p] - 0.5 * (s_x[p] - C64::new(0.0, 1.0) * s_y[p])).norm() < 1e-12);
            assert!((s_anti[p] - 0.5 * (s_x[p] + C64::new(0.0, 1.0) * s_y[p])).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_derivative() {
        let g = LatticeGrid::new(2, 8, &[0, 1, 2, 3]).unwrap();
        let f = vec![C64::new(3.0, 1.0); g.len()];
        let d = g.derivative(&f, &[Deriv::Holo(1)]);
        assert!(d.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn inactive_axis_derivative_is_zero() {
        let g = LatticeGrid::new(2, 8, &[0, 1]).unwrap();
        let f = g.sample(|x| C64::new((2.0 * PI * x[0]).sin(), 0.0));
        let d = g.derivative(&f, &[Deriv::Anti(1)]);
        assert!(d.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn integrate_basics() {
        let g = LatticeGrid::new(1, 16, &[0, 1]).unwrap();
        let one = vec![C64::new(1.0, 0.0); g.len()];
        assert!((g.integrate(&one) - 1.0).norm() < 1e-15);
        let mode = g.sample(|x| C64::new((2.0 * PI * (x[0] + 2.0 * x[1])).cos(), 0.0));
        assert!(g.integrate(&mode).norm() < 1e-14);
    }

    #[test]
    fn round_trip_transform() {
        let g = make_grid(2, &[4, 8, 16, 4], &[0, 1, 2, 3], &[1.0, 2.0, 0.5, 1.0], DEFAULT_BUDGET)
            .unwrap();
        let f = g.sample(|x| C64::new(x[0] + x[1] * x[2], x[3]));
        let Spectrum::Modes(m) = g.forward(&f) else { panic!() };
        let back = g.inverse(m);
        for p in 0..g.len() {
            assert!((back[p] - f[p]).norm() < 1e-12);
        }
    }

    #[test]
    fn periods_scale_wavenumbers() {
        let g = make_grid(1, &[16], &[0], &[], DEFAULT_BUDGET).unwrap();
        let g2 = make_grid(1, &[16], &[0], &[2.0, 1.0], DEFAULT_BUDGET).unwrap();
        let f = g.sample(|x| C64::new((2.0 * PI * x[0]).sin(), 0.0));
        let f2 = g2.sample(|x| C64::new((PI * x[0]).sin(), 0.0));
        let d = g.derivative(&f, &[Deriv::Real(0)]);
        let d2 = g2.derivative(&f2, &[Deriv::Real(0)]);
        for p in 0..16 {
            assert!((d[p] - 2.0 * d2[p]).norm() < 1e-12);
        }
    }
}
