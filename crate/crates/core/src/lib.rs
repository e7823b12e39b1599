//! Synthetic pedestrian data, a small inception-style CNN trained from
//! scratch, and the re-identification and neuron-probing tools around it.

pub mod diagnostics;
pub mod error;
pub mod network;
pub mod neuron_probe;
pub mod reid_eval;
pub mod rng;
pub mod synthset;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::{DType, Scalar, Tensor};
