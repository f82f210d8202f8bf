//! Model repair: recovering over-parameterized estimators from corrupted
//! copies by median regression onto the design.
//!
//! The numerical core is generic over [`Real`] (`f32`, `f64`); the aliases
//! below fix the scalar to `f64`, which the CLI and harness use.

pub mod conditions;
pub mod error;
pub mod harness;
pub mod io;
pub mod l1solve;
pub mod linalg;
pub mod linmod;
pub mod neural;
pub mod randgen;
pub mod scalar;

pub use error::{RepairError, Result};
pub use scalar::Real;

pub type Design = randgen::DesignMatrix<f64>;
pub type Instance = l1solve::RegressionInstance<f64>;
pub type Report = l1solve::SolverReport<f64>;
pub type Verdict = l1solve::RecoveryVerdict<f64>;
pub type Regressor = l1solve::L1Regressor<f64>;
pub type Fit = linmod::LinearFit<f64>;
pub type Features = linmod::FeatureMap<f64>;
pub type Params = neural::MlpParams<f64>;
pub type Trace = neural::TrainTrace<f64>;
pub type Kernels = neural::KernelDiagnostics<f64>;
