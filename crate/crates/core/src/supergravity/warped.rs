//! Warped products `G = e^{2A}η_w ⊕ e^{kA}δ` on a transverse chart, the 11d
//! field-equation residuals evaluated by finite differences, and the
//! supersymmetry conditions for membrane data.

use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{merge_sign, SubsetRanks};
use crate::error::{Error, Result};
use crate::supergravity::tensor::{f_norm_sq, f_squared, hodge_diag, wedge, RealForm};

/// Spacetime dimension.
pub const DIM: usize = 11;

/// Transverse chart on which `A` and `f` are sampled. Box charts carry two
/// ghost layers so the nested differences reach every interior node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chart {
    pub active: usize,
    pub res: usize,
    pub length: f64,
    pub periodic: bool,
}

impl Chart {
    pub fn new(active: usize, res: usize, length: f64, periodic: bool) -> Result<Self> {
        if active == 0 || active > DIM - 1 {
            return Err(Error::InvalidArgument(format!("chart needs 1..={} active coordinates", DIM - 1)));
        }
        if res < 4 {
            return Err(Error::ResolutionTooSmall { axis: 0, res });
        }
        if !(length > 0.0) {
            return Err(Error::InvalidArgument("chart length must be positive".into()));
        }
        Ok(Chart { active, res, length, periodic })
    }

    pub fn halo(&self) -> usize {
        if self.periodic {
            0
        } else {
            2
        }
    }

    pub fn side(&self) -> usize {
        self.res + 2 * self.halo()
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.active as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.res as f64
    }

    fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.active - 1 - axis) as u32)
    }

    fn ext_index(&self, p: usize, axis: usize) -> usize {
        (p / self.stride(axis)) % self.side()
    }

    /// Box nodes sit at cell centres of `[−L/2, L/2]`, periodic nodes at `iL/n`.
    pub fn coords(&self, p: usize) -> Vec<f64> {
        let h = self.spacing();
        (0..self.active)
            .map(|a| {
                let i = self.ext_index(p, a) as f64 - self.halo() as f64;
                if self.periodic {
                    i * h
                } else {
                    -0.5 * self.length + (i + 0.5) * h
                }
            })
            .collect()
    }

    fn neighbor(&self, p: usize, axis: usize, shift: isize) -> Option<usize> {
        let side = self.side() as isize;
        let e = self.ext_index(p, axis) as isize;
        let mut n = e + shift;
        if self.periodic {
            n = n.rem_euclid(side);
        } else if n < 0 || n >= side {
            return None;
        }
        Some((p as isize + (n - e) * self.stride(axis) as isize) as usize)
    }

    /// Points whose ghost-layer distance permits two nested differences.
    pub fn interior(&self) -> Vec<usize> {
        let (lo, hi) = (self.halo(), self.halo() + self.res);
        (0..self.len())
            .filter(|&p| (0..self.active).all(|a| (lo..hi).contains(&self.ext_index(p, a))))
            .collect()
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|p| f(&self.coords(p))).collect()
    }

    /// Centered difference of a field with `width` values per point; NaN
    /// where a neighbour is missing.
    pub fn fd(&self, values: &[f64], width: usize, axis: usize) -> Vec<f64> {
        let inv = 0.5 / self.spacing();
        let mut out = vec![f64::NAN; values.len()];
        out.par_chunks_mut(width).enumerate().for_each(|(p, chunk)| {
            if let (Some(a), Some(b)) = (self.neighbor(p, axis, 1), self.neighbor(p, axis, -1)) {
                for (c, o) in chunk.iter_mut().enumerate() {
                    *o = (values[a * width + c] - values[b * width + c]) * inv;
                }
            }
        });
        out
    }

    /// Second-difference flat Laplacian, NaN where a neighbour is missing.
    pub fn fd_laplacian(&self, values: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (self.spacing() * self.spacing());
        (0..self.len())
            .into_par_iter()
            .map(|p| {
                let mut acc = 0.0;
                for a in 0..self.active {
                    match (self.neighbor(p, a, 1), self.neighbor(p, a, -1)) {
                        (Some(x), Some(y)) => acc += (values[x] - 2.0 * values[p] + values[y]) * inv,
                        _ => return f64::NAN,
                    }
                }
                acc
            })
            .collect()
    }

    /// `(h^a Σ_interior |v|²)^{1/2}` for `width` values per point.
    pub fn l2_interior(&self, values: &[f64], width: usize) -> f64 {
        let cell = self.spacing().powi(self.active as i32);
        let sum: f64 = self
            .interior()
            .iter()
            .map(|&p| values[p * width..(p + 1) * width].iter().map(|v| v * v).sum::<f64>())
            .sum();
        (sum * cell).sqrt()
    }
}

/// `G = e^{2A}η_w ⊕ e^{kA}δ`, `F = Vol_w∧df + c·Vol_w + Ψ`. The potential term
/// needs `w = 3`, the electric term `w = 4`; `Ψ` lives on the transverse space.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedAnsatz {
    pub worldvolume: usize,
    pub transverse_exponent: f64,
    pub chart: Chart,
    pub warp: Vec<f64>,
    pub potential: Vec<f64>,
    pub electric: f64,
    pub psi: Option<RealForm>,
}

impl WarpedAnsatz {
    pub fn new(
        worldvolume: usize,
        chart: Chart,
        warp: impl Fn(&[f64]) -> f64 + Sync,
        potential: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        if !(1..DIM).contains(&worldvolume) || chart.active > DIM - worldvolume {
            return Err(Error::InvalidArgument(format!(
                "worldvolume {worldvolume} with {} active transverse coordinates",
                chart.active
            )));
        }
        let warp = chart.sample(warp);
        let potential = chart.sample(potential);
        let ansatz = WarpedAnsatz {
            worldvolume,
            transverse_exponent: -1.0,
            chart,
            warp,
            potential,
            electric: 0.0,
            psi: None,
        };
        if worldvolume != 3 && ansatz.potential.iter().any(|&f| f != ansatz.potential[0]) {
            return Err(Error::Requires("a 3-dimensional worldvolume for the flux potential".into()));
        }
        Ok(ansatz)
    }

    /// Membrane data from `H = e^{−3A}` with `f = e^{3A}`.
    pub fn membrane(chart: Chart, harmonic: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let h = &harmonic;
        WarpedAnsatz::new(3, chart, |y| -h(y).ln() / 3.0, |y| 1.0 / h(y))
    }

    pub fn with_electric(mut self, c: f64) -> Result<Self> {
        if self.worldvolume != 4 && c != 0.0 {
            return Err(Error::Requires("a 4-dimensional worldvolume for electric flux".into()));
        }
        self.electric = c;
        Ok(self)
    }

    pub fn with_psi(mut self, psi: RealForm) -> Result<Self> {
        if psi.degree != 4 || psi.dim != self.transverse_dim() {
            return Err(Error::DegreeMismatch(format!("Ψ must be a 4-form in {} dimensions", self.transverse_dim())));
        }
        self.psi = Some(psi);
        Ok(self)
    }

    pub fn with_transverse_exponent(mut self, k: f64) -> Self {
        self.transverse_exponent = k;
        self
    }

    pub fn transverse_dim(&self) -> usize {
        DIM - self.worldvolume
    }

    fn diag(&self, p: usize) -> Result<[f64; DIM]> {
        let a = self.warp[p];
        let (lorentz, trans) = ((2.0 * a).exp(), (self.transverse_exponent * a).exp());
        if !(lorentz > 0.0 && lorentz.is_finite() && trans > 0.0 && trans.is_finite()) {
            return Err(Error::SingularMetric { point: p });
        }
        let mut d = [trans; DIM];
        for (i, x) in d.iter_mut().enumerate().take(self.worldvolume) {
            *x = if i == 0 { -lorentz } else { lorentz };
        }
        Ok(d)
    }

    fn flux(&self, p: usize, df: &[Vec<f64>]) -> Result<RealForm> {
        let w = self.worldvolume;
        let mut f = match &self.psi {
            Some(psi) => psi.embed(w, DIM)?,
            None => RealForm::zeros(DIM, 4),
        };
        let ranks = SubsetRanks::new(DIM, 4);
        let vol: u32 = (1 << w) - 1;
        if w == 3 {
            for (a, d) in df.iter().enumerate() {
                let bit = 1 << (w + a);
                f.coeffs[ranks.rank(vol | bit).unwrap()] += d[p];
            }
        }
        if w == 4 {
            f.coeffs[ranks.rank(vol).unwrap()] += self.electric;
        }
        Ok(f)
    }
}

/// Pointwise residuals at interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResiduals {
    pub points: Vec<usize>,
    /// `R_{ij} − ½(F²)_{ij} + (1/6)|F|²G_{ij}`, row-major `11 × 11` per point.
    pub einstein: Vec<Vec<f64>>,
    /// Coefficients of the 8-form `d⋆F − ½F∧F` per point.
    pub maxwell: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldResidual {
    pub einstein: f64,
    pub maxwell: f64,
}

const N2: usize = DIM * DIM;
const N3: usize = DIM * DIM * DIM;

fn christoffel(g_inv: &[f64], dg: &[Option<&[f64]>]) -> Vec<f64> {
    // dg[i] = ∂_i G (row-major), None when G does not depend on x^i
    let d = |i: usize, a: usize, b: usize| dg[i].map_or(0.0, |s| s[a * DIM + b]);
    let mut gamma = vec![0.0; N3];
    let mut lower = vec![0.0; N3];
    for l in 0..DIM {
        for i in 0..DIM {
            for j in 0..DIM {
                lower[l * N2 + i * DIM + j] = 0.5 * (d(i, l, j) + d(j, l, i) - d(l, i, j));
            }
        }
    }
    for k in 0..DIM {
        for l in 0..DIM {
            let gi = g_inv[k * DIM + l];
            if gi == 0.0 {
                continue;
            }
            for ij in 0..N2 {
                gamma[k * N2 + ij] += gi * lower[l * N2 + ij];
            }
        }
    }
    gamma
}

fn ricci(gamma: &[f64], dgamma: &[Option<&[f64]>]) -> Vec<f64> {
    let dg = |axis: usize, k: usize, i: usize, j: usize| dgamma[axis].map_or(0.0, |s| s[k * N2 + i * DIM + j]);
    let g = |k: usize, i: usize, j: usize| gamma[k * N2 + i * DIM + j];
    let mut r = vec![0.0; N2];
    for i in 0..DIM {
        for j in 0..DIM {
            let mut acc = 0.0;
            for k in 0..DIM {
                acc += dg(k, k, i, j) - dg(j, k, i, k);
                for l in 0..DIM {
                    acc += g(k, k, l) * g(l, i, j) - g(k, j, l) * g(l, i, k);
                }
            }
            r[i * DIM + j] = acc;
        }
    }
    r
}

fn exterior_fd(chart: &Chart, offset: usize, values: &[f64], degree: usize) -> Vec<f64> {
    let src = SubsetRanks::new(DIM, degree);
    let dst = SubsetRanks::new(DIM, degree + 1);
    let (wi, wo) = (src.len(), dst.len());
    let mut out = vec![0.0; chart.len() * wo];
    for a in 0..chart.active {
        let bit = 1u32 << (offset + a);
        let d = chart.fd(values, wi, a);
        for p in 0..chart.len() {
            for (r, &s) in src.sets.iter().enumerate() {
                if let Some(sign) = merge_sign(bit, s) {
                    out[p * wo + dst.rank(bit | s).unwrap()] += sign * d[p * wi + r];
                }
            }
        }
    }
    out
}

/// Pointwise Einstein and Maxwell residuals on the interior nodes.
pub fn point_residuals(ansatz: &WarpedAnsatz) -> Result<PointResiduals> {
    let chart = &ansatz.chart;
    let n = chart.len();
    let w = ansatz.worldvolume;
    let diags: Vec<[f64; DIM]> = (0..n).map(|p| ansatz.diag(p)).collect::<Result<_>>()?;
    let metric: Vec<f64> = diags
        .iter()
        .flat_map(|d| (0..N2).map(move |k| if k / DIM == k % DIM { d[k / DIM] } else { 0.0 }))
        .collect();
    let dmetric: Vec<Vec<f64>> = (0..chart.active).map(|a| chart.fd(&metric, N2, a)).collect();
    let dpot: Vec<Vec<f64>> = (0..chart.active).map(|a| chart.fd(&ansatz.potential, 1, a)).collect();

    let gammas: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|p| {
            let g_inv: Vec<f64> =
                (0..N2).map(|k| if k / DIM == k % DIM { 1.0 / diags[p][k / DIM] } else { 0.0 }).collect();
            let mut slices: Vec<Option<&[f64]>> = vec![None; DIM];
            for a in 0..chart.active {
                slices[w + a] = Some(&dmetric[a][p * N2..(p + 1) * N2]);
            }
            christoffel(&g_inv, &slices)
        })
        .collect();
    let dgammas: Vec<Vec<f64>> = (0..chart.active).map(|a| chart.fd(&gammas, N3, a)).collect();

    let fluxes: Vec<Option<RealForm>> = (0..n)
        .map(|p| if dpot.iter().all(|d| d[p].is_finite()) { ansatz.flux(p, &dpot).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let star_width = SubsetRanks::new(DIM, DIM - 4).len();
    let mut stars = vec![f64::NAN; n * star_width];
    for p in 0..n {
        if let Some(f) = &fluxes[p] {
            stars[p * star_width..(p + 1) * star_width].copy_from_slice(&hodge_diag(f, &diags[p])?.coeffs);
        }
    }
    let dstar = exterior_fd(chart, w, &stars, DIM - 4);
    let dstar_width = SubsetRanks::new(DIM, DIM - 3).len();

    let points = chart.interior();
    let per_point: Vec<(Vec<f64>, Vec<f64>)> = points
        .par_iter()
        .map(|&p| {
            let mut slices: Vec<Option<&[f64]>> = vec![None; DIM];
            for a in 0..chart.active {
                slices[w + a] = Some(&dgammas[a][p * N3..(p + 1) * N3]);
            }
            let ric = ricci(&gammas[p * N3..(p + 1) * N3], &slices);
            let f = fluxes[p].as_ref().ok_or(Error::SingularMetric { point: p })?;
            let g = &metric[p * N2..(p + 1) * N2];
            let f2 = f_squared(f, g)?;
            let norm = f_norm_sq(f, g)?;
            let e: Vec<f64> = (0..N2).map(|k| ric[k] - 0.5 * f2[k] + norm / 6.0 * g[k]).collect();
            let ff = wedge(f, f)?;
            let mx: Vec<f64> = (0..dstar_width).map(|r| dstar[p * dstar_width + r] - 0.5 * ff.coeffs[r]).collect();
            Ok((e, mx))
        })
        .collect::<Result<_>>()?;
    let (einstein, maxwell) = per_point.into_iter().unzip();
    Ok(PointResiduals { points, einstein, maxwell })
}

/// L² norms over the interior of the Einstein and Maxwell residuals.
pub fn sugra_field_residual(ansatz: &WarpedAnsatz) -> Result<FieldResidual> {
    let res = point_residuals(ansatz)?;
    let cell = ansatz.chart.spacing().powi(ansatz.chart.active as i32);
    let l2 = |rows: &[Vec<f64>]| (cell * rows.iter().flatten().map(|v| v * v).sum::<f64>()).sqrt();
    Ok(FieldResidual { einstein: l2(&res.einstein), maxwell: l2(&res.maxwell) })
}

/// Conditions of the supersymmetric membrane characterization with
/// residuals; the worldvolume metric is flat by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuffStelleReport {
    pub flat_worldvolume: bool,
    pub flat_transverse: bool,
    pub transverse_residual: f64,
    pub harmonic: bool,
    pub harmonic_residual: f64,
    pub flux: bool,
    pub flux_residual: f64,
    pub flux_sign: f64,
    pub tolerance: f64,
}

impl DuffStelleReport {
    pub fn passed(&self) -> bool {
        self.flat_worldvolume && self.flat_transverse && self.harmonic && self.flux
    }
}

fn gradient_norm(chart: &Chart, values: &[f64]) -> f64 {
    let grads: Vec<Vec<f64>> = (0..chart.active).map(|a| chart.fd(values, 1, a)).collect();
    let stacked: Vec<f64> = (0..chart.len()).flat_map(|p| grads.iter().map(move |g| g[p])).collect();
    chart.l2_interior(&stacked, chart.active)
}

/// Check `ḡ = e^A g` flat, `Δ_ḡ e^{−3A} = 0` and `df = ±d(e^{3A})` at `tol`.
pub fn duff_stelle_check(ansatz: &WarpedAnsatz, tol: f64) -> Result<DuffStelleReport> {
    if ansatz.worldvolume != 3 {
        return Err(Error::Requires("a 3-dimensional worldvolume".into()));
    }
    let chart = &ansatz.chart;
    let conformal: Vec<f64> = ansatz.warp.iter().map(|a| (1.0 + ansatz.transverse_exponent) * a).collect();
    let transverse_residual = gradient_norm(chart, &conformal);
    let h: Vec<f64> = ansatz.warp.iter().map(|a| (-3.0 * a).exp()).collect();
    let harmonic_residual = chart.l2_interior(&chart.fd_laplacian(&h), 1);
    let (flux_residual, flux_sign) = [1.0, -1.0]
        .iter()
        .map(|&s| {
            let diff: Vec<f64> =
                ansatz.potential.iter().zip(&h).map(|(f, h)| f - s / h).collect();
            (gradient_norm(chart, &diff), s)
        })
        .fold((f64::INFINITY, 1.0), |best, x| if x.0 < best.0 { x } else { best });
    Ok(DuffStelleReport {
        flat_worldvolume: true,
        flat_transverse: transverse_residual <= tol,
        transverse_residual,
        harmonic: harmonic_residual <= tol,
        harmonic_residual,
        flux: flux_residual <= tol,
        flux_residual,
        flux_sign,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supergravity::freund_rubin_residual;
    use std::f64::consts::PI;

    fn membrane_harmonic(y: &[f64]) -> f64 {
        1.0 + 0.3 * (y[0] * y[0] - y[1] * y[1]) + 0.2 * (y[0].powi(3) - 3.0 * y[0] * y[1] * y[1])
    }

    #[test]
    fn flat_vacuum_has_no_residual() {
        let chart = Chart::new(2, 8, 1.0, true).unwrap();
        let ansatz = WarpedAnsatz::new(3, chart, |_| 0.0, |_| 0.7).unwrap();
        let r = sugra_field_residual(&ansatz).unwrap();
        assert!(r.einstein < 1e-10 && r.maxwell < 1e-10, "{r:?}");
    }

    #[test]
    fn electric_flux_reproduces_freund_rubin_algebra() {
        let c = 1.3;
        let chart = Chart::new(1, 4, 1.0, true).unwrap();
        let ansatz = WarpedAnsatz::new(4, chart, |_| 0.0, |_| 0.0).unwrap().with_electric(c).unwrap();
        let res = point_residuals(&ansatz).unwrap();
        let (r4, r7) = freund_rubin_residual(0.0, 0.0, c);
        for e in &res.einstein {
            for i in 0..DIM {
                let g = if i == 0 { -1.0 } else { 1.0 };
                let expect = if i < 4 { r4 * g } else { r7 * g };
                assert!((e[i * DIM + i] - expect).abs() < 1e-13, "{i}: {} vs {expect}", e[i * DIM + i]);
            }
        }
        assert!(res.maxwell.iter().flatten().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn membrane_residual_converges_at_second_order() {
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let chart = Chart::new(2, n, 1.0, false).unwrap();
                let ansatz = WarpedAnsatz::membrane(chart, membrane_harmonic).unwrap();
                let r = sugra_field_residual(&ansatz).unwrap();
                r.einstein.hypot(r.maxwell)
            })
            .collect();
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "{errs:?}");
        }
    }

    #[test]
    fn membrane_data_passes_supersymmetry_conditions() {
        let chart = Chart::new(2, 16, 1.0, false).unwrap();
        let ansatz = WarpedAnsatz::membrane(chart, membrane_harmonic).unwrap();
        let report = duff_stelle_check(&ansatz, 1e-9).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.flux_sign, 1.0);
    }

    #[test]
    fn trivial_data_passes() {
        let chart = Chart::new(2, 8, 1.0, true).unwrap();
        let ansatz = WarpedAnsatz::new(3, chart, |_| 0.0, |_| 2.0).unwrap();
        assert!(duff_stelle_check(&ansatz, 1e-12).unwrap().passed());
    }

    #[test]
    fn perturbed_potential_fails_flux_condition() {
        let chart = Chart::new(2, 32, 1.0, false).unwrap();
        let ansatz = WarpedAnsatz::new(
            3,
            chart,
            |y| -membrane_harmonic(y).ln() / 3.0,
            |y| 1.0 / membrane_harmonic(y) + 0.1 * (2.0 * PI * y[0]).sin(),
        )
        .unwrap();
        let report = duff_stelle_check(&ansatz, 1e-9).unwrap();
        assert!(report.harmonic && !report.flux);
        // ‖0.2π cos(2πy₁)‖ over the unit square
        let expect = 0.2 * PI / 2f64.sqrt();
        assert!((report.flux_residual - expect).abs() < 1e-2 * expect, "{}", report.flux_residual);
    }

    #[test]
    fn non_harmonic_warp_is_detected() {
        let chart = Chart::new(2, 16, 1.0, false).unwrap();
        let ansatz = WarpedAnsatz::membrane(chart, |y| 1.0 + 0.3 * y[0] * y[0]).unwrap();
        let report = duff_stelle_check(&ansatz, 1e-9).unwrap();
        assert!(!report.harmonic);
        assert!((report.harmonic_residual - 0.6).abs() < 1e-9);
        let r = sugra_field_residual(&ansatz).unwrap();
        assert!(r.maxwell > 0.1);
    }

    #[test]
    fn chart_rejects_bad_input() {
        assert!(Chart::new(0, 8, 1.0, true).is_err());
        assert!(Chart::new(2, 2, 1.0, true).is_err());
        let chart = Chart::new(2, 8, 1.0, true).unwrap();
        assert!(WarpedAnsatz::new(4, chart, |_| 0.0, |y| y[0]).is_err());
    }
}
