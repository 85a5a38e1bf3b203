//! Monte-Carlo simulator and exact oracle for a homodyne-tomography test of
//! Bell's inequality on the twin beams of a nondegenerate parametric
//! amplifier.
//!
//! The pipeline: [`sampler`] draws four-mode quadrature events from the
//! exact joint homodyne distribution, [`kernel`] turns each quadrature into
//! pattern-function matrix elements, and [`estimator`] averages their
//! products into `P(1,1)`, the correlations `C(alpha, beta)` and the Bell
//! combination `B` with block errors. [`oracle`] computes the same
//! quantities exactly in a truncated Fock basis.

pub mod dump;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod runner;
pub mod sampler;
pub mod selftest;
mod special;

pub use error::{ConfigViolation, Error, Result};
pub use kernel::{KernelValues, PatternKernel};
pub use model::{BellAngles, BlockedEstimate, Efficiency, NopaParams, QuadSample};
pub use special::dawson;
