//! Translation-invariant reduction of the coupled metric and flux flow.

use serde::Serialize;

use crate::combinatorics::SubsetRanks;
use crate::error::{Error, Result};
use crate::flows::integrator::rk4_step;
use crate::supergravity::tensor::{f_norm_sq, f_squared, metric_inverse, wedge, RealForm};
use crate::supergravity::warped::DIM;

/// Constant data: full metric `G`, transverse 1-form `β` and 4-form `Ψ`,
/// assembled as `F = Vol_w∧β + Ψ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousData {
    pub worldvolume: usize,
    pub metric: Vec<f64>,
    pub beta: Vec<f64>,
    pub psi: RealForm,
}

impl HomogeneousData {
    pub fn new(worldvolume: usize, metric: Vec<f64>, beta: Vec<f64>, psi: RealForm) -> Result<Self> {
        let Some(t) = DIM.checked_sub(worldvolume).filter(|&t| t >= 4 && worldvolume > 0) else {
            return Err(Error::InvalidArgument(format!("worldvolume {worldvolume}")));
        };
        if metric.len() != DIM * DIM || beta.len() != t || psi.dim != t || psi.degree != 4 {
            return Err(Error::DegreeMismatch("homogeneous data has inconsistent sizes".into()));
        }
        if worldvolume != 3 && beta.iter().any(|&b| b != 0.0) {
            return Err(Error::Requires("a 3-dimensional worldvolume for β".into()));
        }
        Ok(HomogeneousData { worldvolume, metric, beta, psi })
    }

    /// Flat Minkowski worldvolume times the unit transverse metric.
    pub fn flat(worldvolume: usize, beta: Vec<f64>, psi: RealForm) -> Result<Self> {
        let mut g = vec![0.0; DIM * DIM];
        for i in 0..DIM {
            g[i * DIM + i] = if i == 0 { -1.0 } else { 1.0 };
        }
        HomogeneousData::new(worldvolume, g, beta, psi)
    }

    pub fn flux(&self) -> Result<RealForm> {
        let w = self.worldvolume;
        let mut f = self.psi.embed(w, DIM)?;
        if w == 3 {
            let ranks = SubsetRanks::new(DIM, 4);
            for (a, b) in self.beta.iter().enumerate() {
                f.coeffs[ranks.rank(0b111 | (1 << (w + a))).unwrap()] += b;
            }
        }
        Ok(f)
    }

    /// `|A| + |β| + |Ψ|` with `e^{2A} = −G₀₀` and norms taken in `G`.
    pub fn growth(&self) -> Result<f64> {
        let w = self.worldvolume;
        let t = DIM - w;
        let ginv = metric_inverse(&self.metric, DIM)?;
        let a = 0.5 * (-self.metric[0]).ln();
        let beta_sq: f64 = (0..t)
            .flat_map(|i| (0..t).map(move |j| (i, j)))
            .map(|(i, j)| ginv[(w + i) * DIM + w + j] * self.beta[i] * self.beta[j])
            .sum();
        let psi_sq = f_norm_sq(&self.psi.embed(w, DIM)?, &self.metric)?;
        Ok(a.abs() + beta_sq.abs().sqrt() + psi_sq.abs().sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousRates {
    pub metric: Vec<f64>,
    pub beta: Vec<f64>,
    pub psi: RealForm,
    /// Largest coefficient of `F∧F`, whose `d⋆` vanishes for constant data.
    pub wedge_square: f64,
}

/// `∂_tG = F² − (1/3)|F|²G` with stationary `β` and `Ψ`: curvature, `□F` and
/// exterior derivatives of constant forms all vanish.
pub fn homogeneous_flow_rhs(data: &HomogeneousData) -> Result<HomogeneousRates> {
    let f = data.flux()?;
    let f2 = f_squared(&f, &data.metric)?;
    let norm = f_norm_sq(&f, &data.metric)?;
    let metric = f2.iter().zip(&data.metric).map(|(a, g)| a - norm / 3.0 * g).collect();
    Ok(HomogeneousRates {
        metric,
        beta: vec![0.0; data.beta.len()],
        psi: RealForm::zeros(data.psi.dim, 4),
        wedge_square: wedge(&f, &f)?.max_abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousRun {
    pub times: Vec<f64>,
    pub growth: Vec<f64>,
    pub final_data: HomogeneousData,
    /// Time at which the growth monitor exceeded its threshold.
    pub blow_up: Option<f64>,
}

/// Fixed-step RK4 on `G`, stopping when the growth monitor exceeds `threshold`
/// or the metric degenerates.
pub fn homogeneous_flow(data: &HomogeneousData, t_end: f64, dt: f64, threshold: f64) -> Result<HomogeneousRun> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument("homogeneous_flow needs dt > 0 and t_end ≥ 0".into()));
    }
    let mut state = data.clone();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut growth = vec![state.growth()?];
    let mut rate = |g: &Vec<f64>| -> Result<Vec<f64>> { Ok(homogeneous_flow_rhs(&state_with(data, g.clone()))?.metric) };
    while t < t_end {
        let step = dt.min(t_end - t);
        let next = rk4_step(&mut rate, &state.metric, step, None);
        let candidate = next.ok().map(|g| state_with(data, g));
        t += step;
        let g = candidate.as_ref().map(HomogeneousData::growth);
        match (candidate, g) {
            (Some(c), Some(Ok(v))) if v.is_finite() && v <= threshold => {
                state = c;
                times.push(t);
                growth.push(v);
            }
            _ => return Ok(HomogeneousRun { times, growth, final_data: state, blow_up: Some(t) }),
        }
    }
    Ok(HomogeneousRun { times, growth, final_data: state, blow_up: None })
}

fn state_with(data: &HomogeneousData, metric: Vec<f64>) -> HomogeneousData {
    HomogeneousData { metric, ..data.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flux_is_stationary() {
        let data = HomogeneousData::flat(3, vec![0.0; 8], RealForm::zeros(8, 4)).unwrap();
        let r = homogeneous_flow_rhs(&data).unwrap();
        assert!(r.metric.iter().all(|&v| v == 0.0));
        assert!(r.beta.iter().all(|&v| v == 0.0) && r.psi.is_zero());
    }

    #[test]
    fn single_psi_component_rate() {
        let mut psi = RealForm::zeros(8, 4);
        psi.set(&[0, 1, 2, 3], 1.0).unwrap();
        let data = HomogeneousData::flat(3, vec![0.0; 8], psi).unwrap();
        let r = homogeneous_flow_rhs(&data).unwrap();
        // F² = 1 on the four legs, |F|² = 1
        for i in 0..DIM {
            let g = if i == 0 { -1.0 } else { 1.0 };
            let legs = if (3..7).contains(&i) { 1.0 } else { 0.0 };
            assert!((r.metric[i * DIM + i] - (legs - g / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn forms_stay_closed_and_constant() {
        let mut psi = RealForm::zeros(8, 4);
        psi.set(&[0, 1, 2, 3], 0.4).unwrap();
        psi.set(&[4, 5, 6, 7], 0.2).unwrap();
        let data = HomogeneousData::flat(3, vec![0.1, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0], psi).unwrap();
        let run = homogeneous_flow(&data, 0.5, 0.01, 1e3).unwrap();
        assert!(run.blow_up.is_none());
        assert_eq!(run.final_data.psi, data.psi);
        assert_eq!(run.final_data.beta, data.beta);
        assert!(run.final_data.metric != data.metric);
    }

    #[test]
    fn growth_monitor_stops_runaway() {
        // e^{6A} decreases linearly at rate 2|β|², so A diverges near t = 1/2
        let mut beta = vec![0.0; 8];
        beta[0] = 1.0;
        let data = HomogeneousData::flat(3, beta, RealForm::zeros(8, 4)).unwrap();
        let run = homogeneous_flow(&data, 2.0, 1e-3, 10.0).unwrap();
        let t = run.blow_up.expect("runaway detected");
        assert!(t < 0.6, "{t}");
        assert!(run.growth.windows(2).all(|w| w[1] >= w[0]));
    }
}
