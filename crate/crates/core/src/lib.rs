//! Spectral laboratory for Hermitian geometric flows on flat complex tori and
//! reduced 11-dimensional supergravity checks.

pub mod combinatorics;
pub mod dump;
pub mod error;
pub mod field;
pub mod flows;
pub mod forms;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod monitors;
pub mod oracles;
pub mod supergravity;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Largest supported complex dimension.
pub const MAX_DIM: usize = 4;
