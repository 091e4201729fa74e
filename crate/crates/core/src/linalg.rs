//! Small dense complex matrices used pointwise (m ≤ 4), plus a generic LU
//! solve for the per-point linear systems.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix of order `n ≤ 4`, stored row-major inline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub a: [C64; 16],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        debug_assert!(n <= 4);
        Mat { n, a: [ZERO; 16] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for v in out.a.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Self {
        let mut out = *self;
        for k in 0..16 {
            out.a[k] += other.a[k];
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Self {
        let mut out = *self;
        for k in 0..16 {
            out.a[k] -= other.a[k];
        }
        out
    }

    pub fn mul(&self, other: &Mat) -> Self {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self[(i, k)];
                if x == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.a[i * 4 + j] += x * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry of `A − A^*` in modulus.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn det(&self) -> C64 {
        match self.n {
            0 => ONE,
            1 => self[(0, 0)],
            2 => self[(0, 0)] * self[(1, 1)] - self[(0, 1)] * self[(1, 0)],
            3 => {
                let a = |i, j| self[(i, j)];
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
            }
            _ => {
                let (lu, _, sign) = match self.lu() {
                    Some(x) => x,
                    None => return ZERO,
                };
                let mut d = C64::new(sign, 0.0);
                for i in 0..self.n {
                    d *= lu[(i, i)];
                }
                d
            }
        }
    }

    fn lu(&self) -> Option<(Mat, [usize; 4], f64)> {
        let n = self.n;
        let mut lu = *self;
        let mut perm = [0, 1, 2, 3];
        let mut sign = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| lu[(x, c)].norm().total_cmp(&lu[(y, c)].norm()))
                .unwrap();
            if lu[(p, c)] == ZERO {
                return None;
            }
            if p != c {
                for j in 0..n {
                    lu.a.swap(p * 4 + j, c * 4 + j);
                }
                perm.swap(p, c);
                sign = -sign;
            }
            let piv = lu[(c, c)];
            for r in c + 1..n {
                let f = lu[(r, c)] / piv;
                lu[(r, c)] = f;
                for j in c + 1..n {
                    let v = lu[(c, j)];
                    lu[(r, j)] -= f * v;
                }
            }
        }
        Some((lu, perm, sign))
    }

    pub fn inverse(&self) -> Option<Mat> {
        let n = self.n;
        match n {
            1 => {
                if self[(0, 0)] == ZERO {
                    None
                } else {
                    Some(Mat::from_fn(1, |_, _| ONE / self[(0, 0)]))
                }
            }
            2 => {
                let d = self.det();
                if d == ZERO {
                    return None;
                }
                let a = |i, j| self[(i, j)];
                Some(Mat::from_fn(2, |i, j| match (i, j) {
                    (0, 0) => a(1, 1) / d,
                    (0, 1) => -a(0, 1) / d,
                    (1, 0) => -a(1, 0) / d,
                    _ => a(0, 0) / d,
                }))
            }
            3 => {
                let d = self.det();
                if d == ZERO {
                    return None;
                }
                let a = |i: usize, j: usize| self[(i % 3, j % 3)];
                // cofactor formula with cyclic indices
                Some(Mat::from_fn(3, |i, j| {
                    (a(j + 1, i + 1) * a(j + 2, i + 2) - a(j + 1, i + 2) * a(j + 2, i + 1)) / d
                }))
            }
            _ => {
                let (lu, perm, _) = self.lu()?;
                let mut inv = Mat::zeros(n);
                for col in 0..n {
                    let mut x = [ZERO; 4];
                    for i in 0..n {
                        let mut s = if perm[i] == col { ONE } else { ZERO };
                        for k in 0..i {
                            s -= lu[(i, k)] * x[k];
                        }
                        x[i] = s;
                    }
                    for i in (0..n).rev() {
                        let mut s = x[i];
                        for k in i + 1..n {
                            s -= lu[(i, k)] * x[k];
                        }
                        x[i] = s / lu[(i, i)];
                    }
                    for i in 0..n {
                        inv[(i, col)] = x[i];
                    }
                }
                Some(inv)
            }
        }
    }

    /// Cholesky test for positive definiteness of a Hermitian matrix.
    pub fn is_positive_definite(&self) -> bool {
        let n = self.n;
        let mut l = Mat::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) {
                return false;
            }
            let d = d.sqrt();
            l[(j, j)] = C64::new(d, 0.0);
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        true
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        if n == 1 {
            return vec![self[(0, 0)].re];
        }
        if n == 2 {
            let a = self[(0, 0)].re;
            let d = self[(1, 1)].re;
            let b = self[(0, 1)].norm();
            let mean = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            return vec![mean - r, mean + r];
        }
        if n == 3 {
            return self.hermitian_eigenvalues_3();
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            // symmetrize to remove rounding asymmetry
            0.5 * (self[(i, j)] + self[(j, i)].conj())
        });
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    // trigonometric solution of the characteristic cubic
    fn hermitian_eigenvalues_3(&self) -> Vec<f64> {
        let a = |i: usize, j: usize| self[(i, j)];
        let p1 = a(0, 1).norm_sqr() + a(0, 2).norm_sqr() + a(1, 2).norm_sqr();
        let q = (a(0, 0).re + a(1, 1).re + a(2, 2).re) / 3.0;
        let d = [a(0, 0).re - q, a(1, 1).re - q, a(2, 2).re - q];
        let p2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + 2.0 * p1;
        if p2 == 0.0 {
            return vec![q; 3];
        }
        let p = (p2 / 6.0).sqrt();
        let mut b = *self;
        for i in 0..3 {
            b[(i, i)] = C64::new(d[i], 0.0);
        }
        let r = (b.det().re / (2.0 * p * p * p)).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        vec![lo, 3.0 * q - hi - lo, hi]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.hermitian_eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.hermitian_eigenvalues().last().unwrap()
    }

    pub fn max_abs(&self) -> f64 {
        self.a[..].iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i * 4 + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i * 4 + j]
    }
}

/// Dense LU solve with partial pivoting on a row-major `n×n` system.
/// Returns the solution and the ratio of largest to smallest pivot modulus,
/// or `None` if a pivot vanishes.
pub fn lu_solve(n: usize, a: &mut [C64], b: &mut [C64]) -> Option<f64> {
    let mut max_piv: f64 = 0.0;
    let mut min_piv = f64::INFINITY;
    for c in 0..n {
        let mut p = c;
        let mut best = a[c * n + c].norm();
        for r in c + 1..n {
            let v = a[r * n + c].norm();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        max_piv = max_piv.max(best);
        min_piv = min_piv.min(best);
        if p != c {
            for j in 0..n {
                a.swap(p * n + j, c * n + j);
            }
            b.swap(p, c);
        }
        let piv = a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            if f == ZERO {
                continue;
            }
            for j in c + 1..n {
                let v = a[c * n + j];
                a[r * n + j] -= f * v;
            }
            let bc = b[c];
            b[r] -= f * bc;
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(max_piv / min_piv)
}
