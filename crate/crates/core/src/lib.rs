//! Label shift quantification on fixed-component mixtures.

pub mod distances;
pub mod distribution;
pub mod error;
pub mod eval;
pub mod harness;
pub mod likelihood;
pub mod parallel;
pub mod rho;
pub mod scenarios;
pub mod simplex;

pub use distribution::{AlignedComponents, Atom, DiscreteDistribution};
pub use error::{Error, Result};
pub use eval::{validate_eval_matrix, EvalMatrix};
pub use likelihood::{EmConfig, EmInit, EstimationResult};
pub use parallel::Execution;
pub use rho::{certify, CertificateReport, CERTIFICATE_THRESHOLD};
pub use simplex::{simplex_project, SimplexVector};
