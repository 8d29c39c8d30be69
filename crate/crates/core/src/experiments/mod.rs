//! Experiment drivers and report emission.

pub mod config;
pub mod convergence;
pub mod pipeline;
pub mod report;
pub mod slope;
pub mod variance;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat};
pub use convergence::{convergence_study, convergence_study_on, ConvergenceReport};
pub use slope::{slope_fit, SlopeFit};
pub use variance::{variance_study, variance_study_on, VarianceReport};

/// `<crate version>+<git describe>`.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("DPPSGD_GIT_DESCRIBE"));

pub fn version() -> String {
    VERSION.to_string()
}
