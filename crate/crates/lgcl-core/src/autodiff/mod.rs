//! Minimal dense reverse-mode automatic differentiation: a single-owner
//! tape of 2-D f64 tensors with analytic vector-Jacobian products, an Adam
//! optimizer, finite-difference gradient checking, and an exact-round-trip
//! checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;
mod tensor;

pub use adam::{AdamConfig, AdamState, StepOutcome};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use tensor::{Gradients, Tape, Tensor};
