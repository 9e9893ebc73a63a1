//! Phase-aware reconstruction of multi-shot diffusion-weighted MRI.
//!
//! The crate covers the full pipeline: data containers and file I/O,
//! the multi-coil sampling operators, structured low-rank lifting of shot
//! phases, weighted total variation on the shared magnitude, the
//! alternating reconstruction loop and two baselines, a simulation
//! harness, and image/tensor metrics.

pub mod acquisition;
pub mod cli;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod lifting;
pub mod metrics;
pub mod operators;
pub mod recon;
pub mod sim;
pub mod wtv;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, Domain, RealImage};
