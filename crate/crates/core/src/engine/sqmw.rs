//! SQMW weight container.
//!
//! All integers little-endian.
//!
//! ```text
//! "SQMW"  version:u32=1  tensor_count:u32
//! tensor_count x { name_len:u16 name dtype:u8 rank:u8 dims:u32*rank payload }
//! scalar_count:u32
//! scalar_count x { name_len:u16 name value:f32 }
//! fixed_length:u32            0 for variable-length models
//! ```
//!
//! `dtype` is 0 for 32-bit and 1 for 16-bit IEEE-754 floats. The only scalar
//! defined is `bn.eps`.

use std::collections::HashMap;

use half::f16;
use thiserror::Error;

use super::{Architecture, ModelWeights, Precision};

pub const MAGIC: &[u8; 4] = b"SQMW";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_F16: u8 = 1;
pub const SCALAR_BN_EPS: &str = "bn.eps";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightsError {
    #[error("not an SQMW weight file")]
    BadMagic,
    #[error("unsupported SQMW version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated at byte {offset} while reading {what}")]
    Truncated { what: &'static str, offset: usize },
    #[error("tensor {name}: unknown dtype {dtype}")]
    UnknownDtype { name: String, dtype: u8 },
    #[error("tensor or scalar {0} appears twice")]
    Duplicate(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor {name}: non-finite value at index {index}")]
    NanInWeights { name: String, index: usize },
    #[error("{0}")]
    InvalidValue(String),
    #[error("tensors mix 16-bit and 32-bit storage")]
    MixedPrecision,
    #[error("16-bit weights require a fixed input length")]
    HalfWithoutFixedLength,
    #[error("{0} unexpected bytes after the trailer")]
    TrailingBytes(usize),
    #[error("name is not valid UTF-8")]
    BadName,
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

/// Serializes weights. Tensors are stored at the model's precision.
pub fn encode_weights(w: &ModelWeights) -> Vec<u8> {
    let half = w.precision == Precision::Half;
    let mut out = Vec::with_capacity(16 + w.parameter_count() * if half { 2 } else { 4 });
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let tensors = w.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        put_name(&mut out, t.name);
        out.push(if half { DTYPE_F16 } else { DTYPE_F32 });
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        if half {
            for &v in t.data {
                out.extend_from_slice(&f16::from_f32(v).to_le_bytes());
            }
        } else {
            for &v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.extend_from_slice(&1u32.to_le_bytes());
    put_name(&mut out, SCALAR_BN_EPS);
    out.extend_from_slice(&w.batch_norm.eps.to_le_bytes());
    out.extend_from_slice(&(w.fixed_length.unwrap_or(0) as u32).to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WeightsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(WeightsError::Truncated { what, offset: self.pos })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, WeightsError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String, WeightsError> {
        let len = self.u16("name length")? as usize;
        let raw = self.take(len, "name")?;
        String::from_utf8(raw.to_vec()).map_err(|_| WeightsError::BadName)
    }
}

struct RawTensor {
    shape: Vec<usize>,
    dtype: u8,
    data: Vec<f32>,
}

/// Loads a model with the standard layer widths.
pub fn load_weights(bytes: &[u8]) -> Result<ModelWeights, WeightsError> {
    load_weights_with(bytes, Some(Architecture::STANDARD))
}

/// Loads a model, checking shapes against `arch`. With `None` the layer
/// widths are taken from the file. The vocabulary size always comes from
/// the embedding's first dimension.
pub fn load_weights_with(bytes: &[u8], arch: Option<Architecture>) -> Result<ModelWeights, WeightsError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let count = r.u32("tensor count")?;
    let mut raw: HashMap<String, RawTensor> = HashMap::new();
    for _ in 0..count {
        let name = r.name()?;
        let dtype = r.u8("dtype")?;
        let rank = r.u8("rank")?;
        let shape = (0..rank)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let elems = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(WeightsError::Truncated {
                what: "payload",
                offset: r.pos,
            })?;
        let data: Vec<f32> = match dtype {
            DTYPE_F32 => {
                let n = elems.checked_mul(4).ok_or(WeightsError::Truncated {
                    what: "payload",
                    offset: r.pos,
                })?;
                r.take(n, "payload")?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            }
            DTYPE_F16 => {
                let n = elems.checked_mul(2).ok_or(WeightsError::Truncated {
                    what: "payload",
                    offset: r.pos,
                })?;
                r.take(n, "payload")?
                    .chunks_exact(2)
                    .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f32())
                    .collect()
            }
            _ => return Err(WeightsError::UnknownDtype { name, dtype }),
        };
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(WeightsError::NanInWeights { name, index });
        }
        if raw.contains_key(&name) {
            return Err(WeightsError::Duplicate(name));
        }
        raw.insert(name, RawTensor { shape, dtype, data });
    }

    let scalars = r.u32("scalar count")?;
    let mut eps = None;
    for _ in 0..scalars {
        let name = r.name()?;
        let value = f32::from_le_bytes(r.take(4, "scalar value")?.try_into().unwrap());
        if name == SCALAR_BN_EPS {
            if eps.replace(value).is_some() {
                return Err(WeightsError::Duplicate(name));
            }
        } else {
            log::warn!("ignoring unknown scalar {name}");
        }
    }
    let fixed = r.u32("fixed length")?;
    if r.pos != bytes.len() {
        return Err(WeightsError::TrailingBytes(bytes.len() - r.pos));
    }
    let eps = eps.ok_or_else(|| WeightsError::MissingTensor(SCALAR_BN_EPS.into()))?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(WeightsError::InvalidValue(format!(
            "bn.eps must be positive, got {eps}"
        )));
    }

    let embedding_shape = raw
        .get("embedding")
        .map(|t| t.shape.clone())
        .ok_or_else(|| WeightsError::MissingTensor("embedding".into()))?;
    let dim = |name: &str, axis: usize| raw.get(name).and_then(|t| t.shape.get(axis).copied()).unwrap_or(0);
    let arch = arch.unwrap_or(Architecture {
        embed_dim: embedding_shape.get(1).copied().unwrap_or(0),
        hidden: dim("lstm.fw.W_rec", 0),
        dense1: dim("dense1.W", 1),
        dense2: dim("dense2.W", 1),
    });
    let vocab = embedding_shape.first().copied().unwrap_or(0);
    if vocab == 0 {
        return Err(WeightsError::InvalidValue("empty vocabulary".into()));
    }

    let mut w = ModelWeights::zeros(arch, vocab);
    w.batch_norm.eps = eps;
    let mut dtypes = Vec::new();
    let shapes = arch.shapes(vocab);
    for ((name, slot), (_, expected)) in w.tensors_mut().into_iter().zip(shapes) {
        let t = raw
            .remove(name)
            .ok_or_else(|| WeightsError::MissingTensor(name.into()))?;
        if t.shape != expected {
            return Err(WeightsError::ShapeMismatch {
                name: name.into(),
                expected,
                got: t.shape,
            });
        }
        dtypes.push(t.dtype);
        *slot = t.data;
    }
    for name in raw.keys() {
        log::warn!("ignoring unknown tensor {name}");
    }
    if w.batch_norm.var.iter().any(|&v| v < 0.0) {
        return Err(WeightsError::InvalidValue("bn.var has a negative entry".into()));
    }

    w.precision = if dtypes.iter().all(|&d| d == DTYPE_F16) {
        Precision::Half
    } else if dtypes.iter().all(|&d| d == DTYPE_F32) {
        Precision::Single
    } else {
        return Err(WeightsError::MixedPrecision);
    };
    w.fixed_length = (fixed != 0).then_some(fixed as usize);
    if w.precision == Precision::Half && w.fixed_length.is_none() {
        return Err(WeightsError::HalfWithoutFixedLength);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::quantize_weights;

    const TINY: Architecture = Architecture {
        embed_dim: 3,
        hidden: 2,
        dense1: 4,
        dense2: 3,
    };

    /// Re-serializes a file with one tensor's header or payload rewritten.
    fn rewrite(bytes: &[u8], f: impl Fn(&str, &mut Vec<u8>, &mut Vec<u32>, &mut Vec<u8>)) -> Vec<u8> {
        let mut r = Reader { bytes, pos: 8 };
        let count = r.u32("").unwrap();
        let mut out = bytes[..8].to_vec();
        let mut body = Vec::new();
        let mut kept = 0u32;
        for _ in 0..count {
            let name = r.name().unwrap();
            let mut dtype = vec![r.u8("").unwrap()];
            let rank = r.u8("").unwrap();
            let mut dims: Vec<u32> = (0..rank).map(|_| r.u32("").unwrap()).collect();
            let width = if dtype[0] == DTYPE_F16 { 2 } else { 4 };
            let n: u32 = dims.iter().product();
            let mut payload = r.take(n as usize * width, "").unwrap().to_vec();
            f(&name, &mut dtype, &mut dims, &mut payload);
            if dtype.is_empty() {
                continue;
            }
            kept += 1;
            put_name(&mut body, &name);
            body.push(dtype[0]);
            body.push(dims.len() as u8);
            for d in dims {
                body.extend_from_slice(&d.to_le_bytes());
            }
            body.extend_from_slice(&payload);
        }
        out.extend_from_slice(&kept.to_le_bytes());
        out.extend_from_slice(&body);
        out.extend_from_slice(&bytes[r.pos..]);
        out
    }

    #[test]
    fn round_trip_single_and_half() {
        let w = ModelWeights::random(TINY, 7, 4, 0.9);
        let back = load_weights_with(&encode_weights(&w), Some(TINY)).unwrap();
        assert_eq!(back, w);
        assert_eq!(load_weights_with(&encode_weights(&w), None).unwrap(), w);
        let q = quantize_weights(&w, 12).unwrap();
        let back = load_weights_with(&encode_weights(&q), Some(TINY)).unwrap();
        assert_eq!(back, q);
        assert!(encode_weights(&q).len() < encode_weights(&w).len());
    }

    #[test]
    fn standard_shape_loads() {
        let w = ModelWeights::zeros(Architecture::STANDARD, 2875);
        let back = load_weights(&encode_weights(&w)).unwrap();
        assert_eq!(back.vocab_size, 2875);
        assert_eq!(back.tensors()[0].shape, vec![2875, 128]);
        assert_eq!(back.batch_norm.eps, 1e-3);
    }

    #[test]
    fn header_errors() {
        let bytes = encode_weights(&ModelWeights::zeros(TINY, 3));
        assert_eq!(load_weights(b"PK\x03\x04rest"), Err(WeightsError::BadMagic));
        assert_eq!(load_weights(b""), Err(WeightsError::BadMagic));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(
            load_weights_with(&v2, Some(TINY)),
            Err(WeightsError::UnsupportedVersion(2))
        );
        let cut = &bytes[..bytes.len() - 2];
        assert!(matches!(
            load_weights_with(cut, Some(TINY)),
            Err(WeightsError::Truncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(
            load_weights_with(&extra, Some(TINY)),
            Err(WeightsError::TrailingBytes(1))
        );
    }

    #[test]
    fn missing_tensor() {
        let bytes = encode_weights(&ModelWeights::zeros(TINY, 3));
        let cut = rewrite(&bytes, |name, dtype, _, _| {
            if name == "dense3.b" {
                dtype.clear();
            }
        });
        assert_eq!(
            load_weights_with(&cut, Some(TINY)),
            Err(WeightsError::MissingTensor("dense3.b".into()))
        );
    }

    #[test]
    fn shape_mismatch() {
        let bytes = encode_weights(&ModelWeights::zeros(Architecture::STANDARD, 5));
        let bad = rewrite(&bytes, |name, _, dims, payload| {
            if name == "dense1.W" {
                dims[0] = 513;
                payload.extend_from_slice(&[0; 64 * 4]);
            }
        });
        assert_eq!(
            load_weights(&bad),
            Err(WeightsError::ShapeMismatch {
                name: "dense1.W".into(),
                expected: vec![512, 64],
                got: vec![513, 64]
            })
        );
    }

    #[test]
    fn non_finite_and_invalid_values() {
        let bytes = encode_weights(&ModelWeights::zeros(TINY, 3));
        let nan = rewrite(&bytes, |name, _, _, payload| {
            if name == "dense2.b" {
                payload[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
            }
        });
        assert_eq!(
            load_weights_with(&nan, Some(TINY)),
            Err(WeightsError::NanInWeights {
                name: "dense2.b".into(),
                index: 1
            })
        );
        let neg = rewrite(&bytes, |name, _, _, payload| {
            if name == "bn.var" {
                payload[..4].copy_from_slice(&(-1.0f32).to_le_bytes());
            }
        });
        assert!(matches!(
            load_weights_with(&neg, Some(TINY)),
            Err(WeightsError::InvalidValue(_))
        ));
        let mut dup = bytes.clone();
        let at = dup.windows(7).position(|w| w == b"bn.mean").unwrap();
        dup[at..at + 7].copy_from_slice(b"bn.beta");
        assert_eq!(
            load_weights_with(&dup, Some(TINY)),
            Err(WeightsError::Duplicate("bn.beta".into()))
        );
    }

    #[test]
    fn precision_rules() {
        let bytes = encode_weights(&ModelWeights::zeros(TINY, 3));
        let to_half = |name: &str, dtype: &mut Vec<u8>, _: &mut Vec<u32>, payload: &mut Vec<u8>, all: bool| {
            if all || name == "embedding" {
                dtype[0] = DTYPE_F16;
                *payload = payload
                    .chunks_exact(4)
                    .flat_map(|c| f16::from_f32(f32::from_le_bytes(c.try_into().unwrap())).to_le_bytes())
                    .collect();
            }
        };
        let mixed = rewrite(&bytes, |n, d, s, p| to_half(n, d, s, p, false));
        assert_eq!(load_weights_with(&mixed, Some(TINY)), Err(WeightsError::MixedPrecision));
        let dynamic_half = rewrite(&bytes, |n, d, s, p| to_half(n, d, s, p, true));
        assert_eq!(
            load_weights_with(&dynamic_half, Some(TINY)),
            Err(WeightsError::HalfWithoutFixedLength)
        );
    }

    #[test]
    fn unknown_dtype_and_eps() {
        let bytes = encode_weights(&ModelWeights::zeros(TINY, 3));
        let bad = rewrite(&bytes, |name, dtype, _, _| {
            if name == "bn.beta" {
                dtype[0] = 7;
            }
        });
        assert_eq!(
            load_weights_with(&bad, Some(TINY)),
            Err(WeightsError::UnknownDtype {
                name: "bn.beta".into(),
                dtype: 7
            })
        );
        let mut zero_eps = bytes.clone();
        let at = zero_eps.len() - 8;
        zero_eps[at..at + 4].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(
            load_weights_with(&zero_eps, Some(TINY)),
            Err(WeightsError::InvalidValue(_))
        ));
    }
}
