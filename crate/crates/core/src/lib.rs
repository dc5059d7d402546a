//! Numerical toolkit for transfer operators of intermittent
//! (Pomeau–Manneville) interval maps.
//!
//! The crate is organised bottom-up:
//!
//! - [`maps`]: the two-branch map family, branch inverses, preimage chains.
//! - [`ulam`]: exact sparse Ulam matrices (closed, open, averaged) and
//!   their Matrix Market persistence.
//! - [`spectral`]: deterministic power iterations for the invariant density,
//!   conditionally invariant densities with escape rates, and the second
//!   eigenpair via deflation.
//! - [`tower`]: first-return partition over `[x₀, 1]`, the truncated-tower
//!   fixed point for conditionally invariant measures, and the
//!   `(n, ε₁, ε₂)` quantities that bound the second eigenvalue.
//! - [`analysis`]: two-state model, log–log fits, total variation,
//!   polynomial escape profile and the reference table pipeline.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod maps;
pub mod spectral;
pub mod sparse;
pub mod tower;
pub mod ulam;

pub use error::{Error, Result};
pub use maps::{Branch, PMMap, PreimageSequence, Side};
pub use spectral::{SpectralOptions, SpectralResult, Status};
pub use ulam::{MatrixKind, Partition, UlamMatrix};
