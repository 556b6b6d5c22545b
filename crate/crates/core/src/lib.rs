//! Chebyshev matrix-polynomial self-attention for tabular Transformers.
//!
//! The crate is `no_std` (with `alloc`) and purely computational:
//!
//! - [`linalg`]: dense row-major matrices, softmax, Jacobi eigensolver and SVD.
//! - [`attention`]: attention maps, Markov-condition checks, PageRank and
//!   `A^k V` convergence curves.
//! - [`polyfilter`]: polynomial graph filters `Σ α_k P_k(A) V` over the
//!   Power, Chebyshev, Legendre and Jacobi bases.
//! - [`autodiff`]: a reverse-mode tape over matrix operations.
//! - [`nn`]: the toy tabular Transformer encoder, losses and Adam.
//! - [`diagnostics`]: oversmoothing metrics (cosine similarity, singular
//!   value profiles, spectral response).
//! - [`metrics`]: AUROC and R².
//!
//! File formats, data ingestion and the CLI live in the `cheatt-harness` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attention;
pub mod autodiff;
pub mod diagnostics;
mod error;
pub mod linalg;
pub(crate) mod math;
pub mod metrics;
pub mod nn;
pub mod polyfilter;
pub mod table;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
