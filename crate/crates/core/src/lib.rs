pub mod analysis;
pub mod augmentation;
pub mod autograd;
pub mod checkpoint;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod fingerprint;
pub mod lm;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod rng;
pub mod text;
pub mod training;

pub use error::{Error, Result};
