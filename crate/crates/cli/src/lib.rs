//! Scenario files, execution and reporting for the `stringflow` binary.

pub mod ini;
pub mod report;
pub mod run;
pub mod scenario;

pub use run::{execute, execute_verify, Command, Failure, Options, Outcome};
pub use scenario::{Kind, Scenario};
