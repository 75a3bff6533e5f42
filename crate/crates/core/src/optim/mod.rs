//! Minibatch SGD for the stage objectives and the sphere-constrained
//! maximizer used to find optimal stimuli.

pub mod sgd;
pub mod sphere;

pub use sgd::{
    sgd_step, train_local, train_local_with, MinibatchSampler, SgdConfig, TraceRow, TraceWriter,
};
pub use sphere::{maximize_on_sphere, LineSearchConfig, SphereResult};
