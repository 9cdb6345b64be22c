use half::f16;

use super::{EngineError, ModelWeights, Precision};

/// Rounds every weight to IEEE-754 half precision and pins the model to a
/// fixed input length. Values stay widened to `f32` in memory; the
/// precision tag makes [`encode_weights`](super::encode_weights) store them
/// at 16 bits.
pub fn quantize_weights(w: &ModelWeights, length: usize) -> Result<ModelWeights, EngineError> {
    if w.precision == Precision::Half || w.fixed_length.is_some() {
        return Err(EngineError::AlreadyQuantized);
    }
    if length == 0 {
        return Err(EngineError::ZeroLength);
    }
    let mut q = w.clone();
    for (name, data) in q.tensors_mut() {
        for (index, v) in data.iter_mut().enumerate() {
            let h = f16::from_f32(*v);
            if h.is_infinite() && v.is_finite() {
                return Err(EngineError::Overflow {
                    tensor: name.to_string(),
                    index,
                    value: *v,
                });
            }
            *v = h.to_f32();
        }
    }
    q.precision = Precision::Half;
    q.fixed_length = Some(length);
    Ok(q)
}
