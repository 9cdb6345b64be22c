use std::collections::HashSet;
use std::hash::Hash;

use serde::Serialize;

use super::{Feature, FeatureError, FeatureKind, LookupTable, PAD_ID};
use crate::dex::{RawToken, TokenKind};
use crate::manifest::ManifestFeatures;

/// Approximate share of repeated elements in an unfiltered sequence.
pub const REPETITIVE_PROPORTION: f64 = 0.6;

/// How many tokens of each source survived dictionary filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterCounts {
    pub permissions: usize,
    pub intent_values: usize,
    pub api_tokens: usize,
    pub intent_strings: usize,
}

impl FilterCounts {
    pub fn total(&self) -> usize {
        self.permissions + self.intent_values + self.api_tokens + self.intent_strings
    }
}

/// Filters manifest and code tokens against the dictionaries and
/// concatenates them as permissions, intent values, then code tokens in
/// code order.
pub fn assemble_filtered_sequence(mf: &ManifestFeatures, code: &[RawToken], table: &LookupTable) -> Vec<Feature> {
    assemble_with_counts(mf, code, table).0
}

pub fn assemble_with_counts(
    mf: &ManifestFeatures,
    code: &[RawToken],
    table: &LookupTable,
) -> (Vec<Feature>, FilterCounts) {
    let mut counts = FilterCounts::default();
    let mut out = Vec::new();
    for p in &mf.permissions {
        if table.contains(FeatureKind::Permission, p) {
            out.push(Feature::new(FeatureKind::Permission, p.clone()));
            counts.permissions += 1;
        }
    }
    for i in &mf.intent_values {
        if table.contains(FeatureKind::Intent, i) {
            out.push(Feature::new(FeatureKind::Intent, i.clone()));
            counts.intent_values += 1;
        }
    }
    for t in code {
        let kind = match t.kind {
            TokenKind::Api => FeatureKind::Api,
            TokenKind::String => FeatureKind::Intent,
        };
        if table.contains(kind, &t.text) {
            out.push(Feature::new(kind, t.text.clone()));
            match kind {
                FeatureKind::Api => counts.api_tokens += 1,
                _ => counts.intent_strings += 1,
            }
        }
    }
    (out, counts)
}

/// Keeps the first occurrence of every element, in order.
pub fn remove_repetitive<T: Eq + Hash + Clone>(seq: &[T]) -> Vec<T> {
    let mut seen = HashSet::with_capacity(seq.len());
    seq.iter().filter(|x| seen.insert(*x)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Cut to the limit; never pad.
    TruncateOnly,
    /// Cut to the limit, or append [`PAD_ID`] up to it.
    PadAndTruncate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodedSequence {
    pub ids: Vec<u32>,
    pub truncated: bool,
    /// Length before truncation or padding.
    pub original_filtered_length: usize,
}

pub fn encode_and_fit(
    seq: &[Feature],
    table: &LookupTable,
    max_len: usize,
    mode: FitMode,
) -> Result<EncodedSequence, FeatureError> {
    if max_len == 0 {
        return Err(FeatureError::ZeroLength);
    }
    let mut ids = Vec::with_capacity(seq.len().min(max_len));
    for f in seq.iter().take(max_len) {
        ids.push(table.encode(f).ok_or_else(|| FeatureError::UnknownToken(f.clone()))?);
    }
    // tokens past the cut must still be valid: an unknown one is a pipeline bug
    if let Some(f) = seq.iter().skip(max_len).find(|f| table.encode(f).is_none()) {
        return Err(FeatureError::UnknownToken(f.clone()));
    }
    let truncated = seq.len() > max_len;
    if mode == FitMode::PadAndTruncate {
        ids.resize(max_len, PAD_ID);
    }
    Ok(EncodedSequence {
        ids,
        truncated,
        original_filtered_length: seq.len(),
    })
}

/// Estimated length of a sequence before repetitive-element removal.
pub fn estimate_original_length(n: usize) -> f64 {
    n as f64 / (1.0 - REPETITIVE_PROPORTION)
}
