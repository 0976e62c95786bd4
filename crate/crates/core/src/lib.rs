//! Sparse discovery of isotropic, incompressible hyperelastic models from
//! tension, compression and shear data.
//!
//! Two eight-term model families are fitted under an Lp-regularized loss:
//! an invariant family with exponential activations (nonlinear in its
//! weights) and a principal-stretch family with fixed Ogden exponents
//! (linear in its weights). Discovery strategies range from exhaustive
//! subset enumeration to continuous Lp sweeps with projected Adam.

pub mod cli;
pub mod dataio;
pub mod discovery;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod report;

pub use error::{Error, Result};
