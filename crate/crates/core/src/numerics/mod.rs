//! Dense tensors with reverse-mode automatic differentiation, a
//! deterministic Adam optimizer, portable RNG, finite-difference gradient
//! verification, and the checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use optim::Adam;
pub use rng::SeedRng;
pub use scalar::Real;
pub use tensor::{backward, no_grad, Tape, Tensor};
