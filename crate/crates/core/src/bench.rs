//! Prediction latency benchmark.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{predict, EngineError, ModelWeights, PredictMode};

/// Sequence lengths of the standard latency grid.
pub const DEFAULT_LENGTHS: [usize; 6] = [300, 600, 900, 1500, 1700, 1900];
pub const MIN_TRIALS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("no sequence lengths given")]
    NoLengths,
    #[error("sequence lengths must be at least 1")]
    ZeroLength,
    #[error("at least {MIN_TRIALS} trials are required, got {0}")]
    TooFewTrials(usize),
    #[error("baseline time must be positive")]
    ZeroBaseline,
    #[error("model vocabulary has no non-padding ids")]
    EmptyVocabulary,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub scenario: String,
    pub length: usize,
    pub trials: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str = "scenario,length,trials,mean_ms,min_ms,max_ms";

    fn from_samples(scenario: &str, length: usize, samples: &[Duration]) -> Self {
        let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        let mean = ms.iter().sum::<f64>() / ms.len() as f64;
        let min = ms.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            scenario: scenario.to_string(),
            length,
            trials: ms.len(),
            // guards against the sum rounding a hair outside [min, max]
            mean_ms: mean.clamp(min, max),
            min_ms: min,
            max_ms: max,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4}",
            self.scenario, self.length, self.trials, self.mean_ms, self.min_ms, self.max_ms
        )
    }
}

/// Random non-padding ids for a model with `vocab` ids.
pub fn random_ids(rng: &mut impl Rng, vocab: usize, len: usize) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(1..vocab as u32)).collect()
}

/// Times `trials` predictions per length on fresh random sequences. One
/// untimed warm-up prediction precedes each length. DYNAMIC runs are never
/// truncated; FIXED runs are padded or cut to the model's length.
pub fn bench_predict(
    w: &ModelWeights,
    mode: PredictMode,
    scenario: &str,
    lengths: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<BenchRecord>, BenchError> {
    if lengths.is_empty() {
        return Err(BenchError::NoLengths);
    }
    if lengths.contains(&0) {
        return Err(BenchError::ZeroLength);
    }
    if trials < MIN_TRIALS {
        return Err(BenchError::TooFewTrials(trials));
    }
    if w.vocab_size < 2 {
        return Err(BenchError::EmptyVocabulary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(lengths.len());
    for &len in lengths {
        predict(&random_ids(&mut rng, w.vocab_size, len), w, mode, len)?;
        let mut samples = Vec::with_capacity(trials);
        for _ in 0..trials {
            let ids = random_ids(&mut rng, w.vocab_size, len);
            samples.push(predict(&ids, w, mode, len)?.elapsed);
        }
        let record = BenchRecord::from_samples(scenario, len, &samples);
        log::info!("{scenario} length {len}: mean {:.3} ms", record.mean_ms);
        records.push(record);
    }
    Ok(records)
}

/// Percentage gain of `optimized` over `baseline`: `(1 - t_opt / t_base) * 100`.
/// Negative values are regressions.
pub fn performance_gain(optimized: Duration, baseline: Duration) -> Result<f64, BenchError> {
    if baseline.is_zero() {
        return Err(BenchError::ZeroBaseline);
    }
    Ok((1.0 - optimized.as_secs_f64() / baseline.as_secs_f64()) * 100.0)
}
