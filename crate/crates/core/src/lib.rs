//! Feature disentanglement for domain-robust text classification.
//!
//! A VAE student separates a robust latent (mu branch, used for prediction)
//! from an unrobust latent (sigma branch), and a teacher trained on
//! easy samples supplies the unrobust target through whitened smooth-L1
//! feature distillation. Everything runs on a self-contained f64 tensor
//! engine with reverse-mode autodiff, so the whole pipeline is verifiable on
//! a laptop without pretrained models.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod rng;
pub mod student;
pub mod teacher;
pub mod text;

pub use error::{Error, Result};
