//! Numerical laboratory for composite ill-posed operators built from the
//! Hausdorff moment map, simple integration, multiplication by t^θ and
//! Sobolev-type embeddings.
//!
//! Everything runs at a configurable binary precision (see
//! [`precision::PrecisionContext`]); the Hilbert-matrix computations escalate
//! precision automatically because their inverses grow like e^{3.53 n}.

pub mod error;
pub mod exec;
pub mod jacobi;
pub mod kernels;
pub mod legendre;
pub mod matrix;
pub mod operators;
pub mod precision;
pub mod spectral;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use matrix::{Basis, DenseMatrix};
pub use operators::{Family, OperatorSpec};
pub use precision::{BigReal, PrecisionContext};
