//! Finite-scale laboratory for heat kernels of pure-jump Dirichlet forms.
//!
//! The pipeline is `space -> scale -> kernel -> form -> semigroup`: build a
//! finite metric measure space, attach a variable-order scale function and a
//! symmetric jump kernel, assemble the generator with its spectral
//! decomposition, and evaluate heat kernels, eigenvalues and resolvents
//! exactly. Each functional inequality is exposed as a checker returning a
//! [`ConditionReport`].

// `!(x > 0.0)` guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod counterexample;
pub mod error;
pub mod form;
pub mod kernel;
pub mod report;
pub mod runner;
pub mod scale;
pub mod semigroup;
pub mod space;

pub use error::{LabError, Result};
pub use form::SpectralForm;
pub use kernel::{JumpKernel, SupportPattern};
pub use report::{ConditionReport, Verdict};
pub use scale::ScaleField;
pub use space::{BallQuery, FiniteMMSpace};
