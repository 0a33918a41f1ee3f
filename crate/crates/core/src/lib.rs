//! H2-optimal external damping of second-order vibrational systems.
//!
//! Gains are optimized on a cheap surrogate built by structure-preserving
//! interpolatory model reduction (sym2IRKA) over a small set of sampled
//! gains. Full-order shifted solves go through modal coordinates and a
//! Sherman-Morrison-Woodbury update, so their cost is linear in `n`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate lapack_src;
extern crate openblas_src;

pub mod cli;
pub mod error;
pub mod h2norm;
pub mod kernels;
pub mod modalsolve;
pub mod model;
pub mod optimizer;
pub mod pmor;
pub mod sym2irka;

pub use error::{Error, Result};
