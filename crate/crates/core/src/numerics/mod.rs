//! Dense tensor engine: reverse-mode autodiff, loss primitives, AdamW, and
//! finite-difference gradient verification. Everything is 64-bit floats.

pub mod adamw;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use adamw::{AdamWConfig, AdamWState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Dense, DenseIds, Mlp};
pub use ops::{cross_entropy, kl_to_standard_normal, reparameterize, smooth_l1, softmax, whiten};
pub use tape::{Gradients, SparseBatch, Tape, ValueId};
pub use tensor::Tensor;
