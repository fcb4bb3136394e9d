//! Gaussian mixture discriminant analysis with partially classified data,
//! where the chance that a label is missing depends on how hard the
//! observation is to classify.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod classifier;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod math;
pub mod missingness;
pub mod model;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use missingness::{MissingnessForm, MissingnessParams};
pub use model::{CanonicalTwoClass, GroundTruth, MixtureParams, PartialSample};
