//! Copula mixed models for bivariate meta-analysis of diagnostic test
//! accuracy studies.

pub mod asymptotics;
pub mod bvn;
pub mod copulas;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod likelihood;
pub mod margins;
pub mod numeric;
pub mod optim;
pub mod quadrature;
pub mod simulation;
pub mod special;

pub use copulas::{CopulaKind, CopulaSpec, Family, Rotation, Tau};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use estimation::{fit, fit_countermonotonic, FitOptions, FitResult};
pub use likelihood::{LogLikResult, ModelSpec, Variant};
pub use margins::{MarginKind, MarginSpec, StudyRecord};
pub use quadrature::{gauss_legendre, QuadRule};
