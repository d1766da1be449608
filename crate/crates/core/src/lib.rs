//! Full-transformer video pain estimation.
//!
//! A transformer-in-transformer spatial encoder turns every frame into a
//! feature vector; a latent cross-attention temporal encoder turns the frame
//! sequence into class logits. Everything runs on the small reverse-mode
//! autodiff engine in [`tensor`].

pub mod accounting;
pub mod attention;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod interpret;
pub mod model;
pub mod nn;
pub mod spatial;
pub mod temporal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};
