//! Core library for the melody factor-grid benchmark: deterministic dataset
//! generation, a small tape-based autodiff engine, recurrent VAE models with
//! supervised latent regularizers, and the disentanglement / controllability
//! metrics used to score them.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation over
//! in-memory buffers. File formats, checkpoints and the command-line front end
//! live in the companion `gridtune-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod control;
pub mod math;
pub mod melody;
pub mod metrics;
pub mod reg;
pub mod rng;
pub mod train;
pub mod vae;
