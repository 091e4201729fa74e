//! Right-hand sides of the evolution equations and their time integration.

pub mod anomaly;
pub mod eta;
pub mod fu_yau;
pub mod integrator;
pub mod ma;
pub mod runner;
pub mod systems;

pub use anomaly::{anomaly_rate_22, anomaly_rhs_11, iib_rhs, invert_rate_map};
pub use eta::eta_rhs;
pub use fu_yau::{fu_yau_rhs, FuYauData, FuYauFamily};
pub use ma::ma_flow_rhs;
pub use runner::{run_flow, FlowConfig, FlowKind, FlowState, FlowSystem, PrimaryField, Termination, Trajectory};
pub use systems::{AnomalySystem, EtaSystem, FuYauSystem, MaSystem};
