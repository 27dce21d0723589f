//! Deterministic blob method for nonlinear aggregation-diffusion equations.
//!
//! Particles carry fixed masses and move with the velocity of a regularized
//! energy. Diffusion acts through the mollified density `phi_eps * mu`, so the
//! scheme stays a gradient flow for every `epsilon > 0`.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod metrics;
pub mod mollifier;
pub mod point;
pub mod potentials;
pub mod reference;
pub mod registry;
pub mod scenario;
pub mod special;
pub mod sum;

pub use error::{Error, Result};
pub use mollifier::{Dimension, Mollifier};
pub use point::Point;
