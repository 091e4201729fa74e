//! Hermitian tensor calculus for metrics `g_{k̄j}` on flat tori: torsion,
//! Chern curvature, Ricci contractions, `‖Ω‖` and the conformally balanced
//! residual.
//!
//! Index conventions: `H[j][k] = g^{jk̄}` is the pointwise inverse,
//! `T[k][j][l] = T_{k̄jl} = ∂_j g_{k̄l} − ∂_l g_{k̄j}` and
//! `R[q][p][α][β] = R_{q̄p}{}^α{}_β = −∂_q̄(g^{αl̄} ∂_p g_{l̄β})`.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FormBasis, FormField, FormKind, MetricField, ScalarField};
use crate::forms::{self, positivity_factor, WedgeTable};
use crate::grid::{Deriv, LatticeGrid, Term};
use crate::linalg::{Mat, I, ONE, ZERO};

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// `‖Ω‖_g = (m!·det g)^{-1/2}` at one point.
pub fn norm_omega_at(g: &Mat) -> Option<f64> {
    let d = g.det().re;
    (d > 0.0).then(|| 1.0 / (factorial(g.n) * d).sqrt())
}

pub fn norm_omega(g: &MetricField) -> Result<ScalarField> {
    let values = (0..g.grid.len())
        .into_par_iter()
        .map(|p| {
            norm_omega_at(&g.at(p))
                .map(|v| C64::new(v, 0.0))
                .ok_or(Error::SingularMetric { point: p })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarField { grid: g.grid.clone(), values, real: true })
}

/// All first derivatives `∂_p g_{k̄j}` (or `∂_p̄`), component `(p*m + k)*m + j`.
pub fn metric_derivatives(g: &MetricField, holo: bool) -> Vec<Vec<C64>> {
    let m = g.m();
    let inputs: Vec<&[C64]> = g.comps.iter().map(|c| c.as_slice()).collect();
    let mut terms = Vec::new();
    for p in 0..m {
        let d = if holo { Deriv::Holo(p) } else { Deriv::Anti(p) };
        for c in 0..m * m {
            terms.push(Term::new(c, p * m * m + c, &[d], ONE));
        }
    }
    g.grid.apply_terms(&inputs, m * m * m, &terms)
}

/// Torsion coefficients `T_{k̄jl}`, component `(k*m + j)*m + l`.
#[derive(Debug, Clone)]
pub struct Torsion {
    pub m: usize,
    pub comps: Vec<Vec<C64>>,
}

impl Torsion {
    #[inline]
    pub fn idx(m: usize, k: usize, j: usize, l: usize) -> usize {
        (k * m + j) * m + l
    }

    pub fn at(&self, p: usize) -> Vec<C64> {
        self.comps.iter().map(|c| c[p]).collect()
    }
}

pub fn torsion_tensor(g: &MetricField) -> Torsion {
    let m = g.m();
    let inputs: Vec<&[C64]> = g.comps.iter().map(|c| c.as_slice()).collect();
    let mut terms = Vec::new();
    for k in 0..m {
        for j in 0..m {
            for l in 0..m {
                if j == l {
                    continue;
                }
                let o = Torsion::idx(m, k, j, l);
                terms.push(Term::new(k * m + l, o, &[Deriv::Holo(j)], ONE));
                terms.push(Term::new(k * m + j, o, &[Deriv::Holo(l)], -ONE));
            }
        }
    }
    Torsion { m, comps: g.grid.apply_terms(&inputs, m * m * m, &terms) }
}

/// Torsion as the (2,1)-form `i∂ω = ½T_{k̄jl} dz^l∧dz^j∧dz̄^k`.
pub fn torsion(g: &MetricField) -> Result<FormField> {
    let m = g.m();
    if m < 2 {
        return Err(Error::Requires("complex dimension at least 2 for torsion".into()));
    }
    let t = torsion_tensor(g);
    let mut form = FormField::zeros(&g.grid, FormKind::Complex { p: 2, q: 1 });
    for i in 0..form.basis.len() {
        let (hs, ks) = form.basis.decanonicalize(i);
        let (a, b, k) = (hs[0], hs[1], ks[0]);
        form.comps[i] = t.comps[Torsion::idx(m, k, b, a)].clone();
    }
    Ok(form)
}

/// `τ_l = g^{jk̄} T_{k̄jl}` at one point.
pub fn tau_point(t: &[C64], h: &Mat) -> Vec<C64> {
    let m = h.n;
    (0..m)
        .map(|l| {
            let mut s = ZERO;
            for j in 0..m {
                for k in 0..m {
                    s += h[(j, k)] * t[Torsion::idx(m, k, j, l)];
                }
            }
            s
        })
        .collect()
}

pub fn tau_components(t: &Torsion, h: &[Mat]) -> Vec<Vec<C64>> {
    let m = t.m;
    let per_point: Vec<Vec<C64>> =
        (0..h.len()).into_par_iter().map(|p| tau_point(&t.at(p), &h[p])).collect();
    (0..m).map(|l| per_point.iter().map(|v| v[l]).collect()).collect()
}

/// The (1,0)-form `τ = τ_l dz^l`.
pub fn tau(g: &MetricField) -> Result<FormField> {
    let h = g.inverse_points()?;
    let t = torsion_tensor(g);
    let mut form = FormField::zeros(&g.grid, FormKind::Complex { p: 1, q: 0 });
    form.comps = tau_components(&t, &h);
    Ok(form)
}

/// Full contraction `g^{jb̄} g^{lc̄} g^{ak̄} T_{k̄jl} conj(T_{ābc})`.
pub fn torsion_norm_sq_point(t: &[C64], h: &Mat) -> f64 {
    let m = h.n;
    let mut u = vec![ZERO; m * m * m];
    for a in 0..m {
        for j in 0..m {
            for l in 0..m {
                let mut s = ZERO;
                for k in 0..m {
                    s += h[(a, k)] * t[Torsion::idx(m, k, j, l)];
                }
                u[Torsion::idx(m, a, j, l)] = s;
            }
        }
    }
    let mut total = ZERO;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let tc = t[Torsion::idx(m, a, b, c)].conj();
                if tc == ZERO {
                    continue;
                }
                let mut s = ZERO;
                for j in 0..m {
                    for l in 0..m {
                        s += u[Torsion::idx(m, a, j, l)] * h[(j, b)] * h[(l, c)];
                    }
                }
                total += s * tc;
            }
        }
    }
    total.re
}

pub fn tau_norm_sq_point(tau: &[C64], h: &Mat) -> f64 {
    let m = h.n;
    let mut s = ZERO;
    for j in 0..m {
        for k in 0..m {
            s += h[(j, k)] * tau[j] * tau[k].conj();
        }
    }
    s.re
}

/// `|T|²` as the full contraction (no ½).
pub fn torsion_norm_sq(g: &MetricField) -> Result<ScalarField> {
    let h = g.inverse_points()?;
    let t = torsion_tensor(g);
    let values = (0..g.grid.len())
        .into_par_iter()
        .map(|p| C64::new(torsion_norm_sq_point(&t.at(p), &h[p]), 0.0))
        .collect();
    Ok(ScalarField { grid: g.grid.clone(), values, real: true })
}

/// Chern curvature `R_{q̄p}{}^α{}_β`, component `((q*m + p)*m + α)*m + β`.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    pub grid: LatticeGrid,
    pub m: usize,
    pub comps: Vec<Vec<C64>>,
}

impl CurvatureField {
    #[inline]
    pub fn idx(m: usize, q: usize, p: usize, a: usize, b: usize) -> usize {
        ((q * m + p) * m + a) * m + b
    }

    pub fn at(&self, p: usize) -> Vec<C64> {
        self.comps.iter().map(|c| c[p]).collect()
    }

    /// Largest deviation from the Hermitian symmetry of `R_{q̄pγ̄β} := R_{q̄p}{}^α{}_β g_{γ̄α}`
    /// under `(p, γ̄) ↔ (q, β)` with conjugation.
    pub fn symmetry_defect(&self, g: &MetricField) -> f64 {
        let m = self.m;
        (0..self.grid.len())
            .map(|pt| {
                let r = self.at(pt);
                let gm = g.at(pt);
                let lower = |q: usize, p: usize, c: usize, b: usize| {
                    (0..m).map(|a| r[Self::idx(m, q, p, a, b)] * gm[(c, a)]).sum::<C64>()
                };
                let mut worst: f64 = 0.0;
                for q in 0..m {
                    for p in 0..m {
                        for c in 0..m {
                            for b in 0..m {
                                let x = lower(q, p, c, b);
                                let y = lower(p, q, b, c).conj();
                                worst = worst.max((x - y).norm());
                            }
                        }
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }
}

/// `A[p][α][β] = g^{αl̄} ∂_p g_{l̄β}`, component `(p*m + α)*m + β`.
fn connection(g: &MetricField, h: &[Mat]) -> Vec<Vec<C64>> {
    let m = g.m();
    let dg = metric_derivatives(g, true);
    let per_point: Vec<Vec<C64>> = (0..g.grid.len())
        .into_par_iter()
        .map(|pt| {
            let mut a = vec![ZERO; m * m * m];
            for p in 0..m {
                for al in 0..m {
                    for b in 0..m {
                        let mut s = ZERO;
                        for l in 0..m {
                            s += h[pt][(al, l)] * dg[(p * m + l) * m + b][pt];
                        }
                        a[(p * m + al) * m + b] = s;
                    }
                }
            }
            a
        })
        .collect();
    (0..m * m * m).map(|c| per_point.iter().map(|v| v[c]).collect()).collect()
}

pub fn chern_curvature(g: &MetricField) -> Result<CurvatureField> {
    let m = g.m();
    let h = g.inverse_points()?;
    let a = connection(g, &h);
    let inputs: Vec<&[C64]> = a.iter().map(|c| c.as_slice()).collect();
    let mut terms = Vec::new();
    for q in 0..m {
        for p in 0..m {
            for al in 0..m {
                for b in 0..m {
                    terms.push(Term::new(
                        (p * m + al) * m + b,
                        CurvatureField::idx(m, q, p, al, b),
                        &[Deriv::Anti(q)],
                        -ONE,
                    ));
                }
            }
        }
    }
    let comps = g.grid.apply_terms(&inputs, m.pow(4), &terms);
    Ok(CurvatureField { grid: g.grid.clone(), m, comps })
}

/// `R̃_{k̄j} = g^{pq̄} g_{k̄α} R_{q̄p}{}^α{}_j` by contracting a curvature field.
pub fn ricci_tilde_from_curvature(g: &MetricField, r: &CurvatureField) -> Result<MetricField> {
    let m = g.m();
    let h = g.inverse_points()?;
    let pts: Vec<Mat> = (0..g.grid.len())
        .into_par_iter()
        .map(|pt| {
            let rv = r.at(pt);
            let gm = g.at(pt);
            Mat::from_fn(m, |k, j| {
                let mut s = ZERO;
                for p in 0..m {
                    for q in 0..m {
                        for a in 0..m {
                            s += h[pt][(p, q)] * gm[(k, a)] * rv[CurvatureField::idx(m, q, p, a, j)];
                        }
                    }
                }
                s
            })
        })
        .collect();
    Ok(MetricField::from_points(&g.grid, &pts))
}

/// Chern-Ricci tensor `R̃` computed without forming the full curvature:
/// `g^{pq̄}∂_q̄A_p = ∂_q̄(g^{pq̄}A_p) − (∂_q̄ g^{pq̄}) A_p`.
pub fn chern_ricci_tilde(g: &MetricField) -> Result<MetricField> {
    let m = g.m();
    let n = g.grid.len();
    let h = g.inverse_points()?;
    let a = connection(g, &h);
    // C[q][α][β] = Σ_p H[p][q] A[p][α][β]
    let c: Vec<Vec<C64>> = (0..m * m * m)
        .map(|idx| {
            let (q, ab) = (idx / (m * m), idx % (m * m));
            (0..n)
                .map(|pt| (0..m).map(|p| h[pt][(p, q)] * a[p * m * m + ab][pt]).sum())
                .collect()
        })
        .collect();
    let inputs: Vec<&[C64]> = c.iter().map(|v| v.as_slice()).collect();
    let mut terms = Vec::new();
    for q in 0..m {
        for ab in 0..m * m {
            terms.push(Term::new(q * m * m + ab, ab, &[Deriv::Anti(q)], ONE));
        }
    }
    let div_c = g.grid.apply_terms(&inputs, m * m, &terms);
    // E[p] = Σ_q ∂_q̄ H[p][q]
    let hc: Vec<Vec<C64>> =
        (0..m * m).map(|idx| (0..n).map(|pt| h[pt][(idx / m, idx % m)]).collect()).collect();
    let inputs: Vec<&[C64]> = hc.iter().map(|v| v.as_slice()).collect();
    let mut terms = Vec::new();
    for p in 0..m {
        for q in 0..m {
            terms.push(Term::new(p * m + q, p, &[Deriv::Anti(q)], ONE));
        }
    }
    let e = g.grid.apply_terms(&inputs, m, &terms);
    let pts: Vec<Mat> = (0..n)
        .into_par_iter()
        .map(|pt| {
            let gm = g.at(pt);
            // B[α][β] = −(div C − E·A)
            let b = Mat::from_fn(m, |al, be| {
                let mut s = div_c[al * m + be][pt];
                for p in 0..m {
                    s -= e[p][pt] * a[(p * m + al) * m + be][pt];
                }
                -s
            });
            gm.mul(&b)
        })
        .collect();
    Ok(MetricField::from_points(&g.grid, &pts))
}

/// Chern-Ricci form coefficients `Ric_{k̄j} = −∂_j∂_k̄ log det g`.
pub fn chern_ricci_form(g: &MetricField) -> Result<MetricField> {
    let m = g.m();
    let logdet = (0..g.grid.len())
        .into_par_iter()
        .map(|p| {
            let d = g.at(p).det().re;
            if d > 0.0 {
                Ok(C64::new(d.ln(), 0.0))
            } else {
                Err(Error::SingularMetric { point: p })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut terms = Vec::new();
    for k in 0..m {
        for j in 0..m {
            terms.push(Term::new(0, k * m + j, &[Deriv::Holo(j), Deriv::Anti(k)], -ONE));
        }
    }
    let comps = g.grid.apply_terms(&[&logdet], m * m, &terms);
    Ok(MetricField { grid: g.grid.clone(), comps })
}

/// Chern scalar curvature `R = g^{jk̄} Ric_{k̄j}`.
pub fn chern_scalar(g: &MetricField) -> Result<ScalarField> {
    let ric = chern_ricci_form(g)?;
    let h = g.inverse_points()?;
    let values = (0..g.grid.len())
        .into_par_iter()
        .map(|p| C64::new(h[p].mul(&ric.at(p)).trace().re, 0.0))
        .collect();
    Ok(ScalarField { grid: g.grid.clone(), values, real: true })
}

/// `Σ = ‖Ω‖_ω ω^{m−1}`; a (0,0)-form when `m = 1`.
pub fn sigma_form(g: &MetricField) -> Result<FormField> {
    let m = g.m();
    let norm = norm_omega(g)?;
    if m == 1 {
        let mut f = FormField::zeros(&g.grid, FormKind::Complex { p: 0, q: 0 });
        f.comps[0] = norm.values;
        return Ok(f);
    }
    let w = forms::wedge_power(&g.to_form(), m - 1)?;
    Ok(forms::scale_by(&w, &norm.values))
}

/// Pointwise data for recovering `g` from `Σ = ‖Ω‖ω^{m−1}`: for each `(j,k)`
/// the component of `Σ` complementary to `dz^j∧dz̄^k` and its sign.
#[derive(Debug, Clone)]
pub struct SigmaInversion {
    pub m: usize,
    pub entries: Vec<(usize, usize, usize, C64)>,
    kappa: f64,
}

impl SigmaInversion {
    pub fn new(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::Requires(
                "complex dimension at least 3 to recover a metric from ‖Ω‖ω^{m−1}".into(),
            ));
        }
        let sb = FormBasis::complex(m, m - 1, m - 1);
        let ob = FormBasis::complex(m, 1, 1);
        let table = WedgeTable::new(&sb, &ob)?;
        let scale = I / positivity_factor(m);
        let mut entries = Vec::new();
        for &(ia, ib, _, s) in &table.entries {
            let (j, k) = ob.decanonicalize(ib);
            entries.push((j[0], k[0], ia, scale * s));
        }
        let kappa = factorial(m - 1) / factorial(m).sqrt();
        Ok(SigmaInversion { m, entries, kappa })
    }

    /// Metric at a point from the coefficients of `Σ` there.
    pub fn metric_at(&self, sigma: &[C64]) -> Option<Mat> {
        let m = self.m;
        let mut pm = Mat::zeros(m);
        for &(j, k, ia, s) in &self.entries {
            pm[(j, k)] = s * sigma[ia];
        }
        let dp = pm.det().re;
        if !(dp > 0.0) {
            return None;
        }
        let ratio = dp / self.kappa.powi(m as i32);
        let sqrt_det = if m == 3 { ratio } else { ratio.powf(1.0 / (m as f64 - 2.0)) };
        let inv = pm.inverse()?;
        let mut g = inv.scale(C64::new(self.kappa * sqrt_det, 0.0));
        // remove rounding asymmetry
        for a in 0..m {
            g[(a, a)] = C64::new(g[(a, a)].re, 0.0);
            for b in a + 1..m {
                let v = 0.5 * (g[(a, b)] + g[(b, a)].conj());
                g[(a, b)] = v;
                g[(b, a)] = v.conj();
            }
        }
        Some(g)
    }
}

/// Recover the metric from `Σ = ‖Ω‖_ω ω^{m−1}` (`m ≥ 3`).
pub fn metric_from_sigma(sigma: &FormField) -> Result<MetricField> {
    let m = sigma.grid.m();
    if sigma.bidegree() != Some((m - 1, m - 1)) {
        return Err(Error::DegreeMismatch("expected an (m−1,m−1)-form".into()));
    }
    let inv = SigmaInversion::new(m)?;
    let pts = (0..sigma.grid.len())
        .into_par_iter()
        .map(|p| inv.metric_at(&sigma.at(p)).ok_or(Error::SingularMetric { point: p }))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricField::from_points(&sigma.grid, &pts))
}

/// `L²` norm of `d(‖Ω‖_ω ω^{m−1})`.
pub fn balanced_residual(g: &MetricField) -> Result<f64> {
    forms::d_norm(&sigma_form(g)?)
}

/// `Tr(Rm∧Rm)` with `Rm^α_β = R_{q̄p}{}^α{}_β dz^p∧dz̄^q`.
pub fn trace_rm_rm(r: &CurvatureField) -> Result<FormField> {
    let m = r.m;
    if m < 2 {
        return Err(Error::Requires("complex dimension at least 2".into()));
    }
    let b11 = FormBasis::complex(m, 1, 1);
    let table = WedgeTable::new(&b11, &b11)?;
    let out_len = table.out.len();
    let n = r.grid.len();
    let slot: Vec<(usize, usize)> = (0..b11.len())
        .map(|i| {
            let (j, k) = b11.decanonicalize(i);
            (j[0], k[0])
        })
        .collect();
    let per_point: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|pt| {
            let rv = r.at(pt);
            let mut acc = vec![ZERO; out_len];
            let mut tmp = vec![ZERO; out_len];
            let form = |a: usize, b: usize| -> Vec<C64> {
                slot.iter().map(|&(p, q)| rv[CurvatureField::idx(m, q, p, a, b)]).collect()
            };
            for a in 0..m {
                for b in 0..m {
                    table.apply_point(&form(a, b), &form(b, a), &mut tmp);
                    for (x, y) in acc.iter_mut().zip(&tmp) {
                        *x += y;
                    }
                }
            }
            acc
        })
        .collect();
    let comps = (0..out_len).map(|c| per_point.iter().map(|v| v[c]).collect()).collect();
    Ok(FormField { grid: r.grid.clone(), basis: table.out.clone(), comps })
}

/// Tolerance for closedness checks of supplied source forms.
pub const CLOSED_TOL: f64 = 1e-8;

/// `(‖i∂∂̄ω − (α′/4)Tr(Rm∧Rm) + Φ‖, balanced_residual)` for `m = 3`.
pub fn hs_residual(g: &MetricField, alpha: f64, phi: Option<&FormField>) -> Result<(f64, f64)> {
    let m = g.m();
    if m != 3 {
        return Err(Error::Requires("complex dimension 3 for the anomaly equation".into()));
    }
    let mut lhs = forms::i_ddbar(&g.to_form())?;
    if alpha != 0.0 {
        let trr = trace_rm_rm(&chern_curvature(g)?)?;
        lhs = lhs.sub(&trr.scale(C64::new(alpha / 4.0, 0.0)))?;
    }
    if let Some(phi) = phi {
        let dn = forms::d_norm(phi)?;
        let tol = CLOSED_TOL * phi.l2_norm().max(1.0);
        if dn > tol {
            return Err(Error::NotClosed { residual: dn, tolerance: tol });
        }
        lhs = lhs.add(phi)?;
    }
    Ok((lhs.l2_norm(), balanced_residual(g)?))
}

/// Pointwise inputs of the (1,1)-flow brackets.
pub struct BracketInputs {
    pub g: Vec<Mat>,
    pub h: Vec<Mat>,
    pub torsion: Torsion,
    pub ricci_tilde: MetricField,
}

impl BracketInputs {
    pub fn new(g: &MetricField) -> Result<Self> {
        Ok(BracketInputs {
            g: g.points(),
            h: g.inverse_points()?,
            torsion: torsion_tensor(g),
            ricci_tilde: chern_ricci_tilde(g)?,
        })
    }
}

/// `T_{k̄pq} T̄_j{}^{pq}` at one point.
pub fn tt_bar_point(t: &[C64], h: &Mat) -> Mat {
    let m = h.n;
    // V[k][s][r] = Σ_{p,q} T[k][p][q] H[p][s] H[q][r]
    let mut v = vec![ZERO; m * m * m];
    for k in 0..m {
        for p in 0..m {
            for q in 0..m {
                let x = t[Torsion::idx(m, k, p, q)];
                if x == ZERO {
                    continue;
                }
                for s in 0..m {
                    for r in 0..m {
                        v[Torsion::idx(m, k, s, r)] += x * h[(p, s)] * h[(q, r)];
                    }
                }
            }
        }
    }
    Mat::from_fn(m, |k, j| {
        let mut acc = ZERO;
        for s in 0..m {
            for r in 0..m {
                acc += v[Torsion::idx(m, k, s, r)] * t[Torsion::idx(m, j, s, r)].conj();
            }
        }
        acc
    })
}

/// Full bracket of the (1,1)-form flow at one point (`m ≥ 3`).
pub fn full_bracket_point(g: &Mat, h: &Mat, t: &[C64], ric: &Mat) -> Mat {
    let m = g.n;
    let tau = tau_point(t, h);
    // τ̄^s = g^{sā} conj(τ_a), τ^{r̄} = g^{br̄} τ_b
    let tau_bar_up: Vec<C64> =
        (0..m).map(|s| (0..m).map(|a| h[(s, a)] * tau[a].conj()).sum()).collect();
    let tau_up: Vec<C64> = (0..m).map(|r| (0..m).map(|b| h[(b, r)] * tau[b]).sum()).collect();
    let tt = tt_bar_point(t, h);
    let t2 = torsion_norm_sq_point(t, h);
    let tau2 = tau_norm_sq_point(&tau, h);
    let trace_coef = (t2 - 2.0 * tau2) / (2.0 * (m as f64 - 2.0));
    Mat::from_fn(m, |k, j| {
        let mut v = -ric[(k, j)] - 0.5 * tt[(k, j)];
        for s in 0..m {
            v += t[Torsion::idx(m, k, j, s)] * tau_bar_up[s];
            v += tau_up[s] * t[Torsion::idx(m, j, k, s)].conj();
        }
        v + tau[j] * tau[k].conj() + g[(k, j)] * trace_coef
    })
}

/// `−R̃_{k̄j} + g^{sr̄} g^{pq̄} T_{q̄sj} T̄_{pr̄k̄}` at one point.
pub fn simple_bracket_point(h: &Mat, t: &[C64], ric: &Mat) -> Mat {
    let m = h.n;
    Mat::from_fn(m, |k, j| {
        let mut v = -ric[(k, j)];
        for s in 0..m {
            for r in 0..m {
                for p in 0..m {
                    for q in 0..m {
                        v += h[(s, r)]
                            * h[(p, q)]
                            * t[Torsion::idx(m, q, s, j)]
                            * t[Torsion::idx(m, p, r, k)].conj();
                    }
                }
            }
        }
        v
    })
}

pub fn full_bracket(g: &MetricField) -> Result<MetricField> {
    if g.m() < 3 {
        return Err(Error::Requires("complex dimension at least 3".into()));
    }
    let b = BracketInputs::new(g)?;
    let pts: Vec<Mat> = (0..g.grid.len())
        .into_par_iter()
        .map(|p| full_bracket_point(&b.g[p], &b.h[p], &b.torsion.at(p), &b.ricci_tilde.at(p)))
        .collect();
    Ok(MetricField::from_points(&g.grid, &pts))
}

pub fn simple_bracket(g: &MetricField) -> Result<MetricField> {
    if g.m() != 3 {
        return Err(Error::Requires("complex dimension 3".into()));
    }
    let b = BracketInputs::new(g)?;
    let pts: Vec<Mat> = (0..g.grid.len())
        .into_par_iter()
        .map(|p| simple_bracket_point(&b.h[p], &b.torsion.at(p), &b.ricci_tilde.at(p)))
        .collect();
    Ok(MetricField::from_points(&g.grid, &pts))
}
