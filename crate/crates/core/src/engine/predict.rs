use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::forward::forward;
use super::{EngineError, ModelWeights, CLASSES};
use crate::features::PAD_ID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// Variable-length input, truncated but never padded.
    Dynamic,
    /// Input padded or truncated to the model's fixed length.
    Fixed,
}

impl fmt::Display for PredictMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictMode::Dynamic => "dynamic",
            PredictMode::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    /// Argmax over (benign, malicious); ties resolve to malicious.
    pub fn from_probabilities(p: [f64; CLASSES]) -> Label {
        if p[1] >= p[0] {
            Label::Malicious
        } else {
            Label::Benign
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "BENIGN",
            Label::Malicious => "MALICIOUS",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub label: Label,
    pub probabilities: [f64; CLASSES],
    pub logits: [f32; CLASSES],
    /// Timesteps processed by the network.
    pub seq_len_used: usize,
    /// Wall-clock time of the forward pass alone.
    pub elapsed: Duration,
}

/// Classifies one encoded sequence.
///
/// `Dynamic` requires a variable-length model and runs on the first
/// `max_len` ids. An empty input is evaluated as a single pad timestep.
/// `Fixed` requires a fixed-length model and post-pads with [`PAD_ID`] or
/// truncates to that length; `max_len` is ignored.
pub fn predict(
    ids: &[u32],
    w: &ModelWeights,
    mode: PredictMode,
    max_len: usize,
) -> Result<PredictionResult, EngineError> {
    let mismatch = || EngineError::ModeMismatch {
        mode,
        fixed_length: w.fixed_length,
    };
    let input: Vec<u32> = match (mode, w.fixed_length) {
        (PredictMode::Dynamic, None) => {
            if max_len == 0 {
                return Err(EngineError::ZeroLength);
            }
            if ids.is_empty() {
                vec![PAD_ID]
            } else {
                ids[..ids.len().min(max_len)].to_vec()
            }
        }
        (PredictMode::Fixed, Some(l)) => {
            let mut v = ids[..ids.len().min(l)].to_vec();
            v.resize(l, PAD_ID);
            v
        }
        _ => return Err(mismatch()),
    };
    let start = Instant::now();
    let out = forward(&input, w)?;
    let elapsed = start.elapsed();
    Ok(PredictionResult {
        label: Label::from_probabilities(out.probabilities),
        probabilities: out.probabilities,
        logits: out.logits,
        seq_len_used: input.len(),
        elapsed,
    })
}
