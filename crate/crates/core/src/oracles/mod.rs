//! Slow reference computations: naive contractions, a dense Newton solver
//! for the Monge-Ampère equation and centered differences.

pub mod contract;
pub mod newton;
pub mod verify;

pub use contract::{brute_contract, Tensor};
pub use newton::{fd_derivative, newton_ma};
pub use verify::{verify_all, OracleReport};
