//! Minimal deterministic reverse-mode differentiation and Adam.

mod adam;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamHyper, AdamState, Tensor};
pub use matrix::{dot, Matrix};
pub use tape::{Gradients, Tape, Var};
