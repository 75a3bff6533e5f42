//! Locally-connected sparse autoencoder (filtering, L2 pooling, local
//! contrast normalization) trained with reconstruction TICA, a miniature
//! parameter-server runtime for asynchronous SGD, and the neuron-selectivity
//! evaluation protocols used to analyse the learned features.

pub mod error;
pub mod netcore;
pub mod rng;
pub mod tensor;
pub mod distrib;
pub mod optim;
pub mod data;
pub mod checkpoint;
pub mod eval;
pub mod suphead;

pub use error::{Error, Result};
pub use tensor::Tensor;
