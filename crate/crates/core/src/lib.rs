//! Joint identification of a combinatorial graph Laplacian and a graph-based
//! filter from observed signals.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgl;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod gbf;
pub mod graph;
pub mod gsi;
pub mod io;
pub mod par;
pub mod rng;
pub mod signal;
pub mod spectral;

pub use error::{Error, Result};
