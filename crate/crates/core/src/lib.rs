//! Hyperspectral image synthesis with a denoising diffusion model that runs in
//! the abundance space of a frozen linear unmixing autoencoder.
//!
//! The pipeline is:
//!
//! 1. [`io`] loads a cube and crops training patches.
//! 2. [`unmixing`] extracts endmembers with VCA and builds the frozen
//!    encoder/decoder pair.
//! 3. [`latent`] maps simplex-valued abundances to an unconstrained latent
//!    space (log with offset) and back (softmax).
//! 4. [`diffusion`] trains an ε-predicting U-Net on latent fields and runs
//!    ancestral sampling.
//! 5. [`metrics`] scores generated cubes by point fidelity and block
//!    diversity.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
mod error;
pub mod field;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod parallel;
pub mod synthetic;
pub mod unmixing;

pub use error::{Error, Result};
pub use field::{AbundanceField, CoefficientField, Field, LatentField};
pub use io::HsiCube;
