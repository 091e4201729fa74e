//! Reduced 11-dimensional supergravity: flux algebra, warped-product residuals,
//! the membrane ODE and the homogeneous metric-flux flow.

pub mod homogeneous;
pub mod membrane;
pub mod tensor;
pub mod warped;

pub use homogeneous::{homogeneous_flow, homogeneous_flow_rhs, HomogeneousData, HomogeneousRates, HomogeneousRun};
pub use membrane::{integrate_ode, integrate_ode_fixed, membrane_ode_rhs, stationary_points, OdeState, OdeTrajectory};
pub use tensor::{f_norm_sq, f_squared, hodge_diag, wedge, RealForm};
pub use warped::{duff_stelle_check, sugra_field_residual, Chart, DuffStelleReport, FieldResidual, WarpedAnsatz};

/// Residuals of the Freund-Rubin conditions on the Einstein constants of the
/// four- and seven-dimensional factors.
pub fn freund_rubin_residual(lambda4: f64, lambda7: f64, c: f64) -> (f64, f64) {
    (lambda4 + c * c / 3.0, lambda7 - c * c / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freund_rubin_examples() {
        let close = |(a, b): (f64, f64)| a.abs() < 1e-15 && b.abs() < 1e-15;
        assert!(close(freund_rubin_residual(-4.0 / 3.0, 2.0 / 3.0, 2.0)));
        assert!(close(freund_rubin_residual(0.0, 0.0, 0.0)));
        assert!(close(freund_rubin_residual(-2.0, 1.0, 6f64.sqrt())));
    }
}
