//! Bi-LSTM classifier inference.
//!
//! Layer stack: embedding -> bidirectional LSTM (forward and backward
//! outputs concatenated per timestep) -> batch normalization (moving
//! statistics) -> global max pooling over time -> dense+ReLU -> dense+ReLU
//! -> dense -> softmax over {benign, malicious}.
//!
//! Fused LSTM tensors use gate block order input, forget, cell, output.

mod forward;
mod lstm;
mod predict;
mod quantize;
pub mod sqmw;
mod weights;

use thiserror::Error;

pub use forward::{forward, softmax, ForwardOutput};
pub use lstm::{lstm_step, sigmoid};
pub use predict::{predict, Label, PredictMode, PredictionResult};
pub use quantize::quantize_weights;
pub use sqmw::{encode_weights, load_weights, load_weights_with, WeightsError};
pub use weights::{Architecture, BatchNorm, Dense, LstmParams, ModelWeights, Precision, TensorRef};

/// Number of output classes: benign, malicious.
pub const CLASSES: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("{mode:?} prediction does not match the model (fixed length {fixed_length:?})")]
    ModeMismatch {
        mode: PredictMode,
        fixed_length: Option<usize>,
    },
    #[error("weight {tensor}[{index}] = {value} exceeds the 16-bit float range")]
    Overflow { tensor: String, index: usize, value: f32 },
    #[error("model is already quantized")]
    AlreadyQuantized,
    #[error("fixed length must be at least 1")]
    ZeroLength,
}
