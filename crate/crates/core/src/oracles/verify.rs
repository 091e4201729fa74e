//! Registered equivalence checks between optimized kernels and the naive
//! oracles on random inputs.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::field::{MetricField, ScalarField};
use crate::flows::fu_yau::sigma2_point;
use crate::flows::ma::{ma_metric, normalize_source};
use crate::forms::spectral_partial;
use crate::geometry::{self, CurvatureField, Torsion};
use crate::grid::{Deriv, LatticeGrid};
use crate::linalg::Mat;
use crate::oracles::contract::{brute_contract, Tensor};
use crate::oracles::newton::{fd_derivative, newton_ma};
use crate::supergravity::tensor::{f_norm_sq, f_squared, metric_inverse, RealForm};

/// Agreement threshold for tensor kernels, relative to `max(1, |reference|)`.
pub const KERNEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub operation: String,
    pub max_abs_deviation: f64,
    pub order: Option<f64>,
    pub samples: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleReport {
    fn new(operation: &str, deviation: f64, samples: usize, tolerance: f64) -> Self {
        OracleReport {
            operation: operation.into(),
            max_abs_deviation: deviation,
            order: None,
            samples,
            tolerance,
            passed: deviation < tolerance,
        }
    }
}

fn rc(rng: &mut impl Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn deviation(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// `I + ½AA†` for a random complex `A`.
pub fn random_positive(m: usize, rng: &mut impl Rng) -> Mat {
    let a = Mat::from_fn(m, |_, _| rc(rng));
    Mat::identity(m).add(&a.mul(&a.adjoint()).scale(C64::new(0.5, 0.0)))
}

fn random_hermitian(m: usize, rng: &mut impl Rng) -> Mat {
    let a = Mat::from_fn(m, |_, _| rc(rng));
    a.add(&a.adjoint()).scale(C64::new(0.5, 0.0))
}

/// `I + ε Σ B_i cos(2π k_i·x + φ_i)` with random Hermitian `B_i`.
pub fn random_metric_field(grid: &LatticeGrid, rng: &mut impl Rng, eps: f64) -> MetricField {
    let m = grid.m();
    let axes = grid.active_dims();
    let modes: Vec<(Mat, Vec<f64>, f64)> = (0..3)
        .map(|_| {
            let b = random_hermitian(m, rng);
            let k = axes.iter().map(|_| rng.gen_range(-1..=1) as f64).collect();
            (b, k, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    MetricField::from_fn(grid, |x| {
        modes.iter().fold(Mat::identity(m), |acc, (b, k, ph)| {
            let arg: f64 = axes.iter().zip(k).map(|(&a, kk)| kk * x[a]).sum::<f64>() * std::f64::consts::TAU + ph;
            acc.add(&b.scale(C64::new(eps * arg.cos(), 0.0)))
        })
    })
}

fn mat_tensor(a: &Mat) -> Tensor {
    Tensor::from_fn(&[a.n, a.n], |i| a[(i[0], i[1])])
}

fn torsion_tensor_at(t: &[C64], m: usize) -> Tensor {
    Tensor::from_fn(&[m, m, m], |i| t[Torsion::idx(m, i[0], i[1], i[2])])
}

fn random_torsion(m: usize, rng: &mut impl Rng) -> Vec<C64> {
    let mut t = vec![C64::new(0.0, 0.0); m * m * m];
    for k in 0..m {
        for j in 0..m {
            for l in j + 1..m {
                let v = rc(rng);
                t[Torsion::idx(m, k, j, l)] = v;
                t[Torsion::idx(m, k, l, j)] = -v;
            }
        }
    }
    t
}

fn check_torsion(samples: usize, rng: &mut impl Rng) -> Result<f64> {
    let grid = LatticeGrid::new(3, 4, &[0, 1, 2, 3, 4, 5])?;
    let m = 3;
    let delta = Tensor::from_fn(&[m, m], |i| C64::new(if i[0] == i[1] { 1.0 } else { 0.0 }, 0.0));
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let g = random_metric_field(&grid, rng, 0.05);
        let dg = geometry::metric_derivatives(&g, true);
        let t = geometry::torsion_tensor(&g);
        for p in (0..grid.len()).step_by(7) {
            let d = Tensor::from_fn(&[m, m, m], |i| dg[(i[0] * m + i[1]) * m + i[2]][p]);
            let a = brute_contract("pj,pkl->kjl", &[&delta, &d])?;
            let b = brute_contract("pl,pkj->kjl", &[&delta, &d])?;
            for (idx, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
                worst = worst.max(deviation(t.comps[idx][p], x - y));
            }
        }
    }
    Ok(worst)
}

fn check_pointwise_torsion(samples: usize, rng: &mut impl Rng) -> Result<(f64, f64, f64)> {
    let m = 3;
    let (mut w_tau, mut w_norm, mut w_tt) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let h = random_positive(m, rng);
        let t = random_torsion(m, rng);
        let (ht, tt) = (mat_tensor(&h), torsion_tensor_at(&t, m));
        let ttc = tt.conj();
        let tau = geometry::tau_point(&t, &h);
        let brute = brute_contract("jk,kjl->l", &[&ht, &tt])?;
        for l in 0..m {
            w_tau = w_tau.max(deviation(tau[l], brute.data[l]));
        }
        let norm = geometry::torsion_norm_sq_point(&t, &h);
        let brute = brute_contract("jb,lc,ak,kjl,abc->", &[&ht, &ht, &ht, &tt, &ttc])?.scalar();
        w_norm = w_norm.max(deviation(C64::new(norm, 0.0), brute));
        let tt_bar = geometry::tt_bar_point(&t, &h);
        let brute = brute_contract("kpq,ps,qr,jsr->kj", &[&tt, &ht, &ht, &ttc])?;
        for k in 0..m {
            for j in 0..m {
                w_tt = w_tt.max(deviation(tt_bar[(k, j)], brute.data[k * m + j]));
            }
        }
    }
    Ok((w_tau, w_norm, w_tt))
}

fn check_curvature(samples: usize, rng: &mut impl Rng) -> Result<f64> {
    let grid = LatticeGrid::new(3, 4, &[0, 1, 2, 3, 4, 5])?;
    let m = 3;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let g = random_metric_field(&grid, rng, 0.05);
        let dg = geometry::metric_derivatives(&g, true);
        let h = g.inverse_points()?;
        let r = geometry::chern_curvature(&g)?;
        // A[p][a][b] = g^{al̄} ∂_p g_{l̄b}, then R = −∂_q̄ A
        let mut a = vec![vec![C64::new(0.0, 0.0); grid.len()]; m * m * m];
        for pt in 0..grid.len() {
            let d = Tensor::from_fn(&[m, m, m], |i| dg[(i[0] * m + i[1]) * m + i[2]][pt]);
            let conn = brute_contract("al,plb->pab", &[&mat_tensor(&h[pt]), &d])?;
            for (c, v) in conn.data.iter().enumerate() {
                a[c][pt] = *v;
            }
        }
        for q in 0..m {
            for pab in 0..m * m * m {
                let d = grid.derivative(&a[pab], &[Deriv::Anti(q)]);
                let comp = &r.comps[q * m * m * m + pab];
                for pt in 0..grid.len() {
                    worst = worst.max(deviation(comp[pt], -d[pt]));
                }
            }
        }
    }
    Ok(worst)
}

fn single_point(m: usize) -> Result<LatticeGrid> {
    LatticeGrid::new(m, 4, &[])
}

fn random_curvature(m: usize, rng: &mut impl Rng) -> Result<CurvatureField> {
    let grid = single_point(m)?;
    Ok(CurvatureField { grid, m, comps: (0..m.pow(4)).map(|_| vec![rc(rng)]).collect() })
}

fn curvature_tensor(r: &CurvatureField) -> Tensor {
    let m = r.m;
    Tensor::from_fn(&[m, m, m, m], |i| r.comps[CurvatureField::idx(m, i[0], i[1], i[2], i[3])][0])
}

fn check_ricci_tilde(samples: usize, rng: &mut impl Rng) -> Result<f64> {
    let m = 3;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let r = random_curvature(m, rng)?;
        let gm = random_positive(m, rng);
        let g = MetricField::constant(&r.grid, &gm);
        let fast = geometry::ricci_tilde_from_curvature(&g, &r)?;
        let h = gm.inverse().expect("positive definite");
        let brute = brute_contract("pq,ka,qpaj->kj", &[&mat_tensor(&h), &mat_tensor(&gm), &curvature_tensor(&r)])?;
        for k in 0..m {
            for j in 0..m {
                worst = worst.max(deviation(fast.comp(k, j)[0], brute.data[k * m + j]));
            }
        }
    }
    Ok(worst)
}

fn check_trace_rm_rm(samples: usize, rng: &mut impl Rng) -> Result<f64> {
    let m = 3;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let r = random_curvature(m, rng)?;
        let fast = geometry::trace_rm_rm(&r)?;
        let rt = curvature_tensor(&r);
        // X[p1][q1][p2][q2] = Σ R_{q̄1p1}{}^a{}_b R_{q̄2p2}{}^b{}_a
        let x = brute_contract("xyab,zwba->yxwz", &[&rt, &rt])?;
        for i in 0..fast.basis.len() {
            let (js, ks) = fast.basis.decanonicalize(i);
            let mut expect = C64::new(0.0, 0.0);
            for (pa, pb, sp) in [(js[0], js[1], 1.0), (js[1], js[0], -1.0)] {
                for (qa, qb, sq) in [(ks[0], ks[1], 1.0), (ks[1], ks[0], -1.0)] {
                    // dz^{p1}∧dz̄^{q1}∧dz^{p2}∧dz̄^{q2} = −dz^{p1}∧dz^{p2}∧dz̄^{q1}∧dz̄^{q2}
                    expect -= x.get(&[pa, qa, pb, qb]) * (sp * sq);
                }
            }
            worst = worst.max(deviation(fast.comps[i][0], expect));
        }
    }
    Ok(worst)
}

fn check_sigma2(samples: usize, rng: &mut impl Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let g = random_positive(2, rng);
        let ric = random_hermitian(2, rng);
        let a = brute_contract("jk,kl->jl", &[&mat_tensor(&g.inverse().expect("positive")), &mat_tensor(&ric)])?;
        let tr = brute_contract("jj->", &[&a])?.scalar();
        let tr2 = brute_contract("jk,kj->", &[&a, &a])?.scalar();
        let brute = 0.5 * (tr * tr - tr2);
        worst = worst.max(deviation(C64::new(sigma2_point(&ric, &g), 0.0), brute));
    }
    Ok(worst)
}

fn dense_four_form(f: &RealForm) -> Tensor {
    let n = f.dim;
    let mut t = Tensor::zeros(&[n, n, n, n]);
    for (s, c) in f.sets().into_iter().zip(&f.coeffs) {
        let idx = crate::combinatorics::indices(s);
        for a in 0..4 {
            for b in 0..4 {
                for cc in 0..4 {
                    for d in 0..4 {
                        let perm = [idx[a], idx[b], idx[cc], idx[d]];
                        let sign = crate::combinatorics::permutation_sign(&perm);
                        if sign != 0.0 {
                            let o = ((perm[0] * n + perm[1]) * n + perm[2]) * n + perm[3];
                            t.data[o] = C64::new(sign * c, 0.0);
                        }
                    }
                }
            }
        }
    }
    t
}

/// Random 4-form and a random non-diagonal Lorentzian metric in `n` dimensions.
pub fn random_flux(n: usize, rng: &mut impl Rng) -> (RealForm, Vec<f64>) {
    let mut f = RealForm::zeros(n, 4);
    for c in f.coeffs.iter_mut() {
        *c = rng.gen_range(-1.0..1.0);
    }
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = 0.15 * rng.gen_range(-1.0..1.0);
            g[i * n + j] += v;
            g[j * n + i] += if i == j { 0.0 } else { v };
        }
        g[i * n + i] += if i == 0 { -1.0 } else { 1.0 };
    }
    (f, g)
}

fn check_flux(samples: usize, rng: &mut impl Rng) -> Result<(f64, f64, f64)> {
    let n = 11;
    let (mut w_sq, mut w_norm, mut w_trace) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let (f, g) = random_flux(n, rng);
        let gi = Tensor::real(&[n, n], &metric_inverse(&g, n)?)?;
        let fd = dense_four_form(&f);
        let x1 = brute_contract("iklm,ka->ialm", &[&fd, &gi])?;
        let x2 = brute_contract("ialm,lb->iabm", &[&x1, &gi])?;
        let x3 = brute_contract("iabm,mc->iabc", &[&x2, &gi])?;
        let brute_sq = brute_contract("iabc,jabc->ij", &[&x3, &fd])?;
        let fast = f_squared(&f, &g)?;
        for (a, b) in fast.iter().zip(&brute_sq.data) {
            w_sq = w_sq.max(deviation(C64::new(*a, 0.0), b / 6.0));
        }
        let x4 = brute_contract("iabc,id->dabc", &[&x3, &gi])?;
        let brute_norm = brute_contract("dabc,dabc->", &[&x4, &fd])?.scalar() / 24.0;
        let norm = f_norm_sq(&f, &g)?;
        w_norm = w_norm.max(deviation(C64::new(norm, 0.0), brute_norm));
        let fast_t = Tensor::real(&[n, n], &fast)?;
        let trace = brute_contract("ij,ij->", &[&gi, &fast_t])?.scalar();
        w_trace = w_trace.max(deviation(trace, C64::new(4.0 * norm, 0.0)));
    }
    Ok((w_sq, w_norm, w_trace))
}

/// Max error of centered differences against the spectral derivative for
/// shifts 4, 2, 1 on a single mode, and the observed order.
pub fn fd_order_study() -> Result<(f64, f64)> {
    let grid = LatticeGrid::new(1, 64, &[0, 1])?;
    let u = ScalarField::from_fn(&grid, |x| (std::f64::consts::TAU * (x[0] + 2.0 * x[1])).sin());
    let exact = spectral_partial(&u, Deriv::Real(1))?;
    let errs: Vec<f64> = [4, 2, 1]
        .iter()
        .map(|&s| {
            let d = fd_derivative(&u, 1, s)?;
            Ok(d.values.iter().zip(&exact.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok((errs[2], (errs[1] / errs[2]).log2()))
}

fn check_newton() -> Result<f64> {
    let grid = LatticeGrid::new(2, 32, &[0, 1])?;
    let chi = MetricField::identity(&grid);
    let f = normalize_source(&ScalarField::from_fn(&grid, |x| 0.2 * (std::f64::consts::TAU * x[0]).sin()), &chi);
    let (phi, c) = newton_ma(&chi, &f, 1e-11)?;
    let chi_phi = ma_metric(&phi, &chi)?;
    Ok((0..grid.len())
        .map(|p| (chi_phi.at(p).det().re - c * f.values[p].re.exp()).abs())
        .fold(0.0, f64::max))
}

/// Run every registered equivalence check with `samples` random inputs each.
pub fn verify_all(seed: u64, samples: usize) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field_samples = samples.div_ceil(10).max(1);
    let mut out = Vec::new();
    out.push(OracleReport::new("torsion", check_torsion(field_samples, &mut rng)?, field_samples, KERNEL_TOL));
    let (tau, norm, tt) = check_pointwise_torsion(samples, &mut rng)?;
    out.push(OracleReport::new("tau", tau, samples, KERNEL_TOL));
    out.push(OracleReport::new("torsion_norm_sq", norm, samples, KERNEL_TOL));
    out.push(OracleReport::new("torsion_torsion_bar", tt, samples, KERNEL_TOL));
    out.push(OracleReport::new("chern_curvature", check_curvature(field_samples, &mut rng)?, field_samples, KERNEL_TOL));
    out.push(OracleReport::new("ricci_tilde", check_ricci_tilde(samples, &mut rng)?, samples, KERNEL_TOL));
    out.push(OracleReport::new("trace_rm_rm", check_trace_rm_rm(samples, &mut rng)?, samples, KERNEL_TOL));
    out.push(OracleReport::new("sigma2", check_sigma2(samples, &mut rng)?, samples, KERNEL_TOL));
    let (sq, fnorm, trace) = check_flux(samples, &mut rng)?;
    out.push(OracleReport::new("f_squared", sq, samples, KERNEL_TOL));
    out.push(OracleReport::new("f_norm_sq", fnorm, samples, KERNEL_TOL));
    out.push(OracleReport::new("f_trace_identity", trace, samples, KERNEL_TOL));
    let (err, order) = fd_order_study()?;
    // Taylor remainder h²/6·|u‴| for the mode 4π along the axis
    let bound = (4.0 * std::f64::consts::PI).powi(3) / (6.0 * 64.0 * 64.0);
    let mut fd = OracleReport::new("fd_derivative", err, 3, 1.01 * bound);
    fd.order = Some(order);
    fd.passed &= (order - 2.0).abs() < 0.1;
    out.push(fd);
    out.push(OracleReport::new("newton_ma", check_newton()?, 1, 1e-10));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_check_passes() {
        let reports = verify_all(7, 50).unwrap();
        for r in &reports {
            assert!(r.passed, "{r:?}");
        }
        assert_eq!(reports.len(), 13);
    }

    #[test]
    fn random_metrics_are_positive() {
        let grid = LatticeGrid::new(3, 4, &[0, 1, 2, 3, 4, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let g = random_metric_field(&grid, &mut rng, 0.05);
            assert!(g.min_eigenvalue().0 > 0.1);
            assert!(g.hermitian_defect() < 1e-15);
        }
    }
}
