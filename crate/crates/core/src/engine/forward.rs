use super::lstm::step_in_place;
use super::{EngineError, LstmParams, ModelWeights, CLASSES};

/// Sequences at least this long run the two LSTM directions on separate
/// threads.
const PARALLEL_DIRECTIONS_MIN_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOutput {
    pub logits: [f32; CLASSES],
    /// Softmax of the logits: benign, malicious.
    pub probabilities: [f64; CLASSES],
}

/// Numerically stable softmax, evaluated in double precision.
pub fn softmax(logits: [f32; CLASSES]) -> [f64; CLASSES] {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l as f64));
    let exp = logits.map(|l| (l as f64 - max).exp());
    let sum: f64 = exp.iter().sum();
    exp.map(|e| e / sum)
}

/// Runs one direction over `order` and folds batch-normalized outputs into
/// the per-channel running maximum `pooled`. `channel_offset` locates this
/// direction's channels in the batch-norm vectors.
fn run_direction<'a>(
    w: &ModelWeights,
    params: &LstmParams,
    order: impl Iterator<Item = &'a u32>,
    channel_offset: usize,
    pooled: &mut [f32],
) {
    let n = params.hidden;
    let e = w.arch.embed_dim;
    let bn = &w.batch_norm;
    let range = channel_offset..channel_offset + n;
    let (gamma, beta, mean, var) = (
        &bn.gamma[range.clone()],
        &bn.beta[range.clone()],
        &bn.mean[range.clone()],
        &bn.var[range],
    );
    let scale: Vec<f32> = gamma.iter().zip(var).map(|(g, v)| g / (v + bn.eps).sqrt()).collect();

    let mut h = vec![0.0f32; n];
    let mut c = vec![0.0f32; n];
    let mut z = vec![0.0f32; 4 * n];
    pooled.fill(f32::NEG_INFINITY);
    for &id in order {
        let x = &w.embedding[id as usize * e..(id as usize + 1) * e];
        step_in_place(params, x, &mut h, &mut c, &mut z);
        for j in 0..n {
            let y = (h[j] - mean[j]) * scale[j] + beta[j];
            if y > pooled[j] {
                pooled[j] = y;
            }
        }
    }
}

/// Full network evaluation on one id sequence.
pub fn forward(ids: &[u32], w: &ModelWeights) -> Result<ForwardOutput, EngineError> {
    if ids.is_empty() {
        return Err(EngineError::EmptySequence);
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= w.vocab_size) {
        return Err(EngineError::IdOutOfRange {
            id,
            vocab: w.vocab_size,
        });
    }
    let n = w.arch.hidden;
    let mut pooled = vec![0.0f32; 2 * n];
    let (fw_pool, bw_pool) = pooled.split_at_mut(n);
    if ids.len() >= PARALLEL_DIRECTIONS_MIN_LEN {
        std::thread::scope(|s| {
            s.spawn(|| run_direction(w, &w.backward, ids.iter().rev(), n, bw_pool));
            run_direction(w, &w.forward, ids.iter(), 0, fw_pool);
        });
    } else {
        run_direction(w, &w.forward, ids.iter(), 0, fw_pool);
        run_direction(w, &w.backward, ids.iter().rev(), n, bw_pool);
    }

    let mut a1 = vec![0.0f32; w.dense1.outputs];
    w.dense1.apply(&pooled, &mut a1);
    a1.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut a2 = vec![0.0f32; w.dense2.outputs];
    w.dense2.apply(&a1, &mut a2);
    a2.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut logits = [0.0f32; CLASSES];
    w.dense3.apply(&a2, &mut logits);
    Ok(ForwardOutput {
        logits,
        probabilities: softmax(logits),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Architecture;

    const TINY: Architecture = Architecture {
        embed_dim: 3,
        hidden: 2,
        dense1: 4,
        dense2: 3,
    };

    #[test]
    fn softmax_of_equal_logits() {
        assert_eq!(softmax([0.0, 0.0]), [0.5, 0.5]);
        let p = softmax([1000.0, -1000.0]);
        assert_eq!(p, [1.0, 0.0]);
        let a = softmax([0.3, -1.2]);
        let b = softmax([10.3, 8.8]);
        assert!((a[0] - b[0]).abs() < 1e-6);
        assert!((a[0] + a[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_model_is_undecided() {
        let w = ModelWeights::zeros(Architecture::STANDARD, 8);
        let out = forward(&[1, 2, 3, 0, 7], &w).unwrap();
        assert_eq!(out.probabilities, [0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_ids_and_empty_input() {
        let w = ModelWeights::zeros(TINY, 4);
        assert_eq!(forward(&[1, 4], &w), Err(EngineError::IdOutOfRange { id: 4, vocab: 4 }));
        assert_eq!(forward(&[], &w), Err(EngineError::EmptySequence));
    }

    #[test]
    fn deterministic_and_parallel_path_agrees() {
        let w = ModelWeights::random(TINY, 10, 3, 0.8);
        let ids: Vec<u32> = (0..PARALLEL_DIRECTIONS_MIN_LEN as u32 + 5).map(|i| i % 10).collect();
        let a = forward(&ids, &w).unwrap();
        assert_eq!(a, forward(&ids, &w).unwrap());
        let short = forward(&ids[..PARALLEL_DIRECTIONS_MIN_LEN - 1], &w).unwrap();
        assert_eq!(short, forward(&ids[..PARALLEL_DIRECTIONS_MIN_LEN - 1], &w).unwrap());
    }

    #[test]
    fn zero_backward_weights_give_constant_backward_half() {
        let mut w = ModelWeights::random(TINY, 10, 5, 0.8);
        w.backward = LstmParams::zeros(TINY.embed_dim, TINY.hidden);
        let n = TINY.hidden;
        let mut pools = Vec::new();
        for seq in [[1u32, 2, 3], [9, 9, 0], [4, 7, 5]] {
            let mut pool = vec![0.0; n];
            run_direction(&w, &w.backward, seq.iter().rev(), n, &mut pool);
            pools.push(pool);
        }
        assert!(pools.windows(2).all(|p| p[0] == p[1]));
    }
}
