//! Field snapshots: a one-line `SFGRID` header followed by the values of every
//! component at each lattice point, as text or little-endian binary.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{FormBasis, FormField, FormKind, MetricField, ScalarField};
use crate::geometry::CurvatureField;
use crate::grid::{make_grid, LatticeGrid, DEFAULT_BUDGET};

const MAGIC: &str = "SFGRID";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Scalar,
    Form { p: usize, q: usize },
    Real { k: usize },
    Curv,
}

/// Component-major field values with their grid and kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub grid: LatticeGrid,
    pub kind: DumpKind,
    pub comps: Vec<Vec<C64>>,
}

impl Dump {
    pub fn scalar(f: &ScalarField) -> Self {
        Dump { grid: f.grid.clone(), kind: DumpKind::Scalar, comps: vec![f.values.clone()] }
    }

    pub fn form(f: &FormField) -> Self {
        let kind = match f.kind() {
            FormKind::Complex { p, q } => DumpKind::Form { p, q },
            FormKind::Real { k } => DumpKind::Real { k },
        };
        Dump { grid: f.grid.clone(), kind, comps: f.comps.clone() }
    }

    /// Metrics are stored as their Kähler form.
    pub fn metric(g: &MetricField) -> Self {
        Dump::form(&g.to_form())
    }

    pub fn curvature(r: &CurvatureField) -> Self {
        Dump { grid: r.grid.clone(), kind: DumpKind::Curv, comps: r.comps.clone() }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match (self.kind, self.comps.len()) {
            (DumpKind::Scalar, 1) => {
                let mut f = ScalarField::new(&self.grid, self.comps.into_iter().next().unwrap())?;
                f.real = f.values.iter().all(|v| v.im == 0.0);
                Ok(f)
            }
            _ => Err(Error::Format(format!("expected a scalar dump, found {:?}", self.kind))),
        }
    }

    pub fn into_form(self) -> Result<FormField> {
        let basis = match self.kind {
            DumpKind::Form { p, q } => FormBasis::complex(self.grid.m(), p, q),
            DumpKind::Real { k } => FormBasis::real(self.grid.real_dim(), k),
            other => return Err(Error::Format(format!("expected a form dump, found {other:?}"))),
        };
        Ok(FormField { grid: self.grid, basis: Arc::new(basis), comps: self.comps })
    }

    pub fn into_metric(self) -> Result<MetricField> {
        MetricField::from_form(&self.into_form()?)
    }

    pub fn into_curvature(self) -> Result<CurvatureField> {
        if self.kind != DumpKind::Curv {
            return Err(Error::Format(format!("expected a curvature dump, found {:?}", self.kind)));
        }
        let m = self.grid.m();
        Ok(CurvatureField { grid: self.grid, m, comps: self.comps })
    }

    pub fn header(&self) -> String {
        let g = &self.grid;
        let res: Vec<String> = g.res().iter().map(|r| r.to_string()).collect();
        let kind = match self.kind {
            DumpKind::Scalar => "scalar".to_string(),
            DumpKind::Form { p, q } => format!("form {p} {q}"),
            DumpKind::Real { k } => format!("real {k}"),
            DumpKind::Curv => "curv".to_string(),
        };
        let mut h = format!("{MAGIC} m={} res={} active={} kind={kind}", g.m(), res.join(","), g.active_mask());
        if g.periods().iter().any(|&p| p != 1.0) {
            let p: Vec<String> = g.periods().iter().map(|p| format!("{p:e}")).collect();
            let _ = write!(h, " periods={}", p.join(","));
        }
        h
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for p in 0..self.grid.len() {
            for (i, c) in self.comps.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{:e} {:e}", c[p].re, c[p].im);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = self.header().into_bytes();
        out.push(b'\n');
        for p in 0..self.grid.len() {
            for c in &self.comps {
                out.extend_from_slice(&c[p].re.to_le_bytes());
                out.extend_from_slice(&c[p].im.to_le_bytes());
            }
        }
        out
    }

    /// Parse either encoding; binary is recognised by its payload length.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Format("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let (grid, kind) = parse_header(header)?;
        let ncomp = component_count(&grid, kind);
        let body = &bytes[nl + 1..];
        let n = grid.len();
        let mut comps = vec![Vec::with_capacity(n); ncomp];
        if body.len() == 16 * n * ncomp && !looks_like_text(body, ncomp) {
            for (i, chunk) in body.chunks_exact(16).enumerate() {
                let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
                let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
                comps[i % ncomp].push(C64::new(re, im));
            }
            return Ok(Dump { grid, kind, comps });
        }
        let text = std::str::from_utf8(body).map_err(|_| Error::Format("body is neither text nor binary".into()))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        for p in 0..n {
            let line = lines.next().ok_or_else(|| Error::Format(format!("missing line for point {p}")))?;
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("point {p}: bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if nums.len() != 2 * ncomp {
                return Err(Error::Format(format!("point {p}: expected {} numbers, got {}", 2 * ncomp, nums.len())));
            }
            for (c, pair) in comps.iter_mut().zip(nums.chunks_exact(2)) {
                c.push(C64::new(pair[0], pair[1]));
            }
        }
        if lines.next().is_some() {
            return Err(Error::Format("trailing lines after the last point".into()));
        }
        Ok(Dump { grid, kind, comps })
    }

    pub fn save_text(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn save_binary(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_binary())?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Dump::parse(&std::fs::read(path)?)
    }
}

fn looks_like_text(body: &[u8], ncomp: usize) -> bool {
    let first = body.iter().position(|&b| b == b'\n').unwrap_or(body.len());
    std::str::from_utf8(&body[..first])
        .map(|l| l.split_whitespace().count() == 2 * ncomp && l.split_whitespace().all(|t| t.parse::<f64>().is_ok()))
        .unwrap_or(false)
}

fn component_count(grid: &LatticeGrid, kind: DumpKind) -> usize {
    match kind {
        DumpKind::Scalar => 1,
        DumpKind::Form { p, q } => FormBasis::complex(grid.m(), p, q).len(),
        DumpKind::Real { k } => FormBasis::real(grid.real_dim(), k).len(),
        DumpKind::Curv => grid.m().pow(4),
    }
}

fn parse_header(line: &str) -> Result<(LatticeGrid, DumpKind)> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(Error::Format(format!("header must start with {MAGIC}")));
    }
    let (mut m, mut res, mut active, mut kind, mut periods) = (None, None, None, None, Vec::new());
    while let Some(tok) = tokens.next() {
        let (key, value) = tok.split_once('=').ok_or_else(|| Error::Format(format!("bad header token {tok:?}")))?;
        let bad = || Error::Format(format!("bad value for {key}: {value:?}"));
        match key {
            "m" => m = Some(value.parse::<usize>().map_err(|_| bad())?),
            "res" => {
                res = Some(value.split(',').map(|r| r.parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?)
            }
            "active" => {
                if !value.chars().all(|c| c == '0' || c == '1') {
                    return Err(bad());
                }
                active = Some(value.chars().enumerate().filter(|(_, c)| *c == '1').map(|(i, _)| i).collect::<Vec<_>>());
            }
            "periods" => {
                periods = value.split(',').map(|r| r.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?
            }
            "kind" => {
                let mut num = || -> Result<usize> {
                    tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| Error::Format(format!("kind={value} needs degrees")))
                };
                kind = Some(match value {
                    "scalar" => DumpKind::Scalar,
                    "form" => DumpKind::Form { p: num()?, q: num()? },
                    "real" => DumpKind::Real { k: num()? },
                    "curv" => DumpKind::Curv,
                    _ => return Err(bad()),
                });
            }
            _ => return Err(Error::Format(format!("unknown header key {key:?}"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("header lacks {k}="));
    let m = m.ok_or_else(|| missing("m"))?;
    let res = res.ok_or_else(|| missing("res"))?;
    let active = active.ok_or_else(|| missing("active"))?;
    let kind = kind.ok_or_else(|| missing("kind"))?;
    let grid = make_grid(m, &res, &active, &periods, DEFAULT_BUDGET)?;
    if grid.res() != res.as_slice() {
        return Err(Error::Format("inactive axes must have resolution 1".into()));
    }
    Ok((grid, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn wavy(grid: &LatticeGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| (std::f64::consts::TAU * x[0]).sin() / 3.0 + x[1] * 1e-300)
    }

    #[test]
    fn header_layout() {
        let grid = LatticeGrid::new(2, 8, &[0, 3]).unwrap();
        let d = Dump::scalar(&ScalarField::constant(&grid, 1.0));
        assert_eq!(d.header(), "SFGRID m=2 res=8,1,1,8 active=1001 kind=scalar");
        let f = FormField::zeros(&grid, FormKind::Complex { p: 1, q: 1 });
        assert!(Dump::form(&f).header().ends_with("kind=form 1 1"));
        let f = FormField::zeros(&grid, FormKind::Real { k: 2 });
        assert!(Dump::form(&f).header().ends_with("kind=real 2"));
    }

    #[test]
    fn text_and_binary_round_trip_exactly() {
        let grid = LatticeGrid::new(2, 8, &[0, 1]).unwrap();
        let g = MetricField::from_fn(&grid, |x| {
            let mut a = Mat::identity(2);
            a[(0, 1)] = C64::new(0.1 * x[0], 1.0 / 7.0);
            a[(1, 0)] = a[(0, 1)].conj();
            a
        });
        for d in [Dump::scalar(&wavy(&grid)), Dump::metric(&g)] {
            assert_eq!(Dump::parse(d.to_text().as_bytes()).unwrap(), d);
            assert_eq!(Dump::parse(&d.to_binary()).unwrap(), d);
        }
        let back = Dump::parse(&Dump::metric(&g).to_binary()).unwrap().into_metric().unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn non_unit_periods_survive() {
        let grid = make_grid(1, &[4], &[0, 1], &[2.0, 0.5], DEFAULT_BUDGET).unwrap();
        let d = Dump::scalar(&wavy(&grid));
        assert_eq!(Dump::parse(d.to_text().as_bytes()).unwrap().grid, grid);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        for text in [
            "GRID m=1 res=4,4 active=11 kind=scalar\n",
            "SFGRID m=1 res=4,4 active=11\n",
            "SFGRID m=1 res=4,4 active=11 kind=form 1\n",
            "SFGRID m=1 res=4,4 active=11 kind=scalar\n1 0\n",
            "SFGRID m=1 res=4,1 active=11 kind=scalar\n",
        ] {
            assert!(Dump::parse(text.as_bytes()).is_err(), "{text}");
        }
    }

    #[test]
    fn wrong_conversion_is_an_error() {
        let grid = LatticeGrid::new(1, 4, &[0]).unwrap();
        let d = Dump::scalar(&ScalarField::constant(&grid, 1.0));
        assert!(d.clone().into_form().is_err());
        assert!(d.into_curvature().is_err());
    }
}
