//! Site percolation on the triangular lattice: sampling, connectivity,
//! interfaces, arm events, the Cardy crossing formula, Loewner driving
//! functions and near-critical scaling.

pub mod arms;
pub mod cardy;
pub mod connectivity;
pub mod error;
pub mod harness;
pub mod explorer;
pub mod lattice;
pub mod loewner;
pub mod nearcrit;
pub mod record;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
