//! Dictionaries, lookup-table encoding and sequence preparation.
//!
//! Raw manifest and code tokens are filtered against per-kind dictionaries,
//! assembled into one feature sequence (permissions, then intent values,
//! then code tokens), stripped of repeated elements and mapped to integer
//! ids. Id 0 is reserved for padding.

mod dictionary;
mod pipeline;
mod table;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use dictionary::{Dictionary, FeatureKind};
pub use pipeline::{
    assemble_filtered_sequence, assemble_with_counts, encode_and_fit, estimate_original_length, remove_repetitive,
    EncodedSequence, FilterCounts, FitMode, REPETITIVE_PROPORTION,
};
pub use table::{LookupTable, PAD_ID};

/// Default maximum sequence length fed to the network.
pub const DEFAULT_MAX_LEN: usize = 1700;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("duplicate {kind} dictionary entry {entry:?}")]
    DuplicateEntry { kind: FeatureKind, entry: String },
    #[error("expected a {expected} dictionary, got {got}")]
    KindMismatch { expected: FeatureKind, got: FeatureKind },
    #[error("token {0} is not in the lookup table (sequence must be filtered before encoding)")]
    UnknownToken(Feature),
    #[error("sequence length limit must be at least 1")]
    ZeroLength,
    #[error("{0}")]
    Io(String),
}

/// A dictionary-typed token of the assembled feature sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Feature {
    pub kind: FeatureKind,
    pub text: String,
}

impl Feature {
    pub fn new(kind: FeatureKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.kind, self.text)
    }
}

/// Formats ids as one space-separated line, optionally prefixed by a class
/// label (`0` benign, `1` malicious) for training corpora.
pub fn format_ids(ids: &[u32], label: Option<u8>) -> String {
    let mut out = String::with_capacity(ids.len() * 5 + 2);
    if let Some(l) = label {
        out.push_str(&l.to_string());
        if !ids.is_empty() {
            out.push(' ');
        }
    }
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&id.to_string());
    }
    out
}

/// Parses one line of the id dump format. With `labelled`, the first number
/// is returned separately as the label.
pub fn parse_ids(line: &str, labelled: bool) -> Result<(Option<u8>, Vec<u32>), std::num::ParseIntError> {
    let mut fields = line.split_whitespace();
    let label = if labelled {
        fields.next().map(str::parse::<u8>).transpose()?
    } else {
        None
    };
    let ids = fields.map(str::parse::<u32>).collect::<Result<_, _>>()?;
    Ok((label, ids))
}
