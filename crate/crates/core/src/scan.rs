//! End-to-end APK scanning: unzip, decode, filter, encode, classify.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::apk::{read_apk, ApkError};
use crate::dex::{extract_code_tokens, parse_dex, DecodeWarning, DexError, RawToken};
use crate::engine::{predict, EngineError, Label, ModelWeights, PredictMode};
use crate::features::{assemble_with_counts, encode_and_fit, remove_repetitive, FeatureError, FitMode, LookupTable};
use crate::manifest::{extract_manifest_features, parse_axml, ManifestError, ManifestFeatures};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Apk(#[from] ApkError),
    #[error("{entry}: {source}")]
    Dex { entry: String, source: DexError },
    #[error("AndroidManifest.xml: {0}")]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("lookup table has {table} ids but the model expects {model}")]
    VocabMismatch { table: usize, model: usize },
}

/// Per-DEX extraction outcome.
#[derive(Debug, Clone, Serialize)]
pub struct DexSummary {
    pub entry: String,
    pub tokens: usize,
    pub skipped_methods: usize,
}

/// Everything extracted from one APK before dictionary filtering.
#[derive(Debug, Clone)]
pub struct ApkFeatures {
    pub manifest: ManifestFeatures,
    /// Code tokens of all DEX files concatenated in loading order.
    pub code: Vec<RawToken>,
    pub dex: Vec<DexSummary>,
    pub warnings: Vec<(String, DecodeWarning)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub unzip_ms: f64,
    pub parse_dex_ms: f64,
    pub parse_manifest_ms: f64,
    pub pipeline_ms: f64,
    pub predict_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScanCounts {
    pub permissions: usize,
    pub intent_values: usize,
    pub api_tokens: usize,
    /// Code string constants kept as intent values.
    pub intent_strings: usize,
    pub filtered_length: usize,
    pub post_removal_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub apk: String,
    pub verdict: Label,
    pub probabilities: [f64; 2],
    pub counts: ScanCounts,
    pub truncated: bool,
    pub seq_len_used: usize,
    pub timings: Timings,
    pub mode: PredictMode,
    pub skipped_methods: usize,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn extract_timed(bytes: &[u8], t: &mut Timings) -> Result<ApkFeatures, ScanError> {
    let start = Instant::now();
    let apk = read_apk(bytes)?;
    t.unzip_ms = ms(start);

    let start = Instant::now();
    let manifest = extract_manifest_features(&parse_axml(&apk.manifest)?);
    t.parse_manifest_ms = ms(start);

    let start = Instant::now();
    let mut code = Vec::new();
    let mut dex = Vec::new();
    let mut warnings = Vec::new();
    for (entry, image) in &apk.dex {
        let file = parse_dex(image).map_err(|source| ScanError::Dex {
            entry: entry.clone(),
            source,
        })?;
        let tokens = extract_code_tokens(&file);
        dex.push(DexSummary {
            entry: entry.clone(),
            tokens: tokens.tokens.len(),
            skipped_methods: tokens.warnings.len(),
        });
        code.extend(tokens.tokens);
        warnings.extend(tokens.warnings.into_iter().map(|w| (entry.clone(), w)));
    }
    t.parse_dex_ms = ms(start);
    Ok(ApkFeatures {
        manifest,
        code,
        dex,
        warnings,
    })
}

/// Unzips and decodes an APK without classifying it.
pub fn extract_apk(bytes: &[u8]) -> Result<ApkFeatures, ScanError> {
    extract_timed(bytes, &mut Timings::default())
}

/// A loaded lookup table and model, shareable across threads.
#[derive(Debug, Clone)]
pub struct Detector {
    table: LookupTable,
    weights: ModelWeights,
    mode: PredictMode,
    max_len: usize,
}

impl Detector {
    /// `max_len` bounds DYNAMIC inputs; FIXED inputs use the model's length.
    pub fn new(
        table: LookupTable,
        weights: ModelWeights,
        mode: PredictMode,
        max_len: usize,
    ) -> Result<Self, ScanError> {
        if table.vocab_size() != weights.vocab_size {
            return Err(ScanError::VocabMismatch {
                table: table.vocab_size(),
                model: weights.vocab_size,
            });
        }
        match (mode, weights.fixed_length) {
            (PredictMode::Dynamic, None) | (PredictMode::Fixed, Some(_)) => {}
            (mode, fixed_length) => return Err(EngineError::ModeMismatch { mode, fixed_length }.into()),
        }
        if max_len == 0 {
            return Err(EngineError::ZeroLength.into());
        }
        Ok(Self {
            table,
            weights,
            mode,
            max_len,
        })
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn mode(&self) -> PredictMode {
        self.mode
    }

    fn limit(&self) -> usize {
        self.weights.fixed_length.unwrap_or(self.max_len)
    }

    pub fn scan(&self, apk: &str, bytes: &[u8]) -> Result<ScanReport, ScanError> {
        let mut timings = Timings::default();
        let features = extract_timed(bytes, &mut timings)?;

        let start = Instant::now();
        let (filtered, filter) = assemble_with_counts(&features.manifest, &features.code, &self.table);
        let unique = remove_repetitive(&filtered);
        let encoded = encode_and_fit(&unique, &self.table, self.limit(), FitMode::TruncateOnly)?;
        timings.pipeline_ms = ms(start);

        let start = Instant::now();
        let result = predict(&encoded.ids, &self.weights, self.mode, self.limit())?;
        timings.predict_ms = ms(start);

        Ok(ScanReport {
            apk: apk.to_string(),
            verdict: result.label,
            probabilities: result.probabilities,
            counts: ScanCounts {
                permissions: filter.permissions,
                intent_values: filter.intent_values,
                api_tokens: filter.api_tokens,
                intent_strings: filter.intent_strings,
                filtered_length: filtered.len(),
                post_removal_length: unique.len(),
            },
            truncated: encoded.truncated,
            seq_len_used: result.seq_len_used,
            timings,
            mode: self.mode,
            skipped_methods: features.warnings.len(),
        })
    }
}
