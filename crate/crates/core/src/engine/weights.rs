use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CLASSES;

/// Layer widths. [`Architecture::STANDARD`] is the deployed network; smaller
/// shapes exist for tests and experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub embed_dim: usize,
    /// LSTM units per direction.
    pub hidden: usize,
    pub dense1: usize,
    pub dense2: usize,
}

impl Architecture {
    pub const STANDARD: Architecture = Architecture {
        embed_dim: 128,
        hidden: 256,
        dense1: 64,
        dense2: 32,
    };

    /// Width of the concatenated bidirectional output.
    pub fn features(&self) -> usize {
        2 * self.hidden
    }

    pub fn gates(&self) -> usize {
        4 * self.hidden
    }

    /// Expected shape of every tensor, in canonical order.
    pub fn shapes(&self, vocab: usize) -> Vec<(&'static str, Vec<usize>)> {
        let (e, h, g, f) = (self.embed_dim, self.hidden, self.gates(), self.features());
        vec![
            ("embedding", vec![vocab, e]),
            ("lstm.fw.W_in", vec![e, g]),
            ("lstm.fw.W_rec", vec![h, g]),
            ("lstm.fw.bias", vec![g]),
            ("lstm.bw.W_in", vec![e, g]),
            ("lstm.bw.W_rec", vec![h, g]),
            ("lstm.bw.bias", vec![g]),
            ("bn.gamma", vec![f]),
            ("bn.beta", vec![f]),
            ("bn.mean", vec![f]),
            ("bn.var", vec![f]),
            ("dense1.W", vec![f, self.dense1]),
            ("dense1.b", vec![self.dense1]),
            ("dense2.W", vec![self.dense1, self.dense2]),
            ("dense2.b", vec![self.dense2]),
            ("dense3.W", vec![self.dense2, CLASSES]),
            ("dense3.b", vec![CLASSES]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Half,
}

/// Parameters of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// `[input_dim, 4 * hidden]`, row-major.
    pub w_in: Vec<f32>,
    /// `[hidden, 4 * hidden]`, row-major.
    pub w_rec: Vec<f32>,
    /// `[4 * hidden]`.
    pub bias: Vec<f32>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w_in: vec![0.0; input_dim * 4 * hidden],
            w_rec: vec![0.0; hidden * 4 * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

/// Fully connected layer, `y = x W + b` with `W` stored `[inputs, outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    pub(super) fn apply(&self, x: &[f32], out: &mut [f32]) {
        out.copy_from_slice(&self.b);
        for (xi, row) in x.iter().zip(self.w.chunks_exact(self.outputs)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

pub const DEFAULT_BN_EPS: f32 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub arch: Architecture,
    pub vocab_size: usize,
    /// `[vocab_size, embed_dim]`, row-major.
    pub embedding: Vec<f32>,
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub batch_norm: BatchNorm,
    pub dense1: Dense,
    pub dense2: Dense,
    pub dense3: Dense,
    /// Storage precision of the tensors; computation is always 32-bit.
    pub precision: Precision,
    /// Input length of a static model; `None` for variable-length models.
    pub fixed_length: Option<usize>,
}

/// Borrowed view of one named tensor.
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
}

impl ModelWeights {
    /// All-zero weights with identity batch normalization.
    pub fn zeros(arch: Architecture, vocab_size: usize) -> Self {
        let f = arch.features();
        Self {
            arch,
            vocab_size,
            embedding: vec![0.0; vocab_size * arch.embed_dim],
            forward: LstmParams::zeros(arch.embed_dim, arch.hidden),
            backward: LstmParams::zeros(arch.embed_dim, arch.hidden),
            batch_norm: BatchNorm {
                gamma: vec![1.0; f],
                beta: vec![0.0; f],
                mean: vec![0.0; f],
                var: vec![1.0; f],
                eps: DEFAULT_BN_EPS,
            },
            dense1: Dense::zeros(f, arch.dense1),
            dense2: Dense::zeros(arch.dense1, arch.dense2),
            dense3: Dense::zeros(arch.dense2, CLASSES),
            precision: Precision::Single,
            fixed_length: None,
        }
    }

    /// Deterministic random weights drawn uniformly from `[-scale, scale]`.
    /// Batch-norm variances are drawn from `[0.5, 1.5]`.
    pub fn random(arch: Architecture, vocab_size: usize, seed: u64, scale: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(arch, vocab_size);
        for t in w.tensors_mut() {
            if t.0 == "bn.var" {
                t.1.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
            } else if t.0 == "bn.gamma" {
                t.1.iter_mut().for_each(|v| *v = 1.0 + rng.gen_range(-scale..=scale));
            } else {
                t.1.iter_mut().for_each(|v| *v = rng.gen_range(-scale..=scale));
            }
        }
        w
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let data: [&[f32]; 17] = [
            &self.embedding,
            &self.forward.w_in,
            &self.forward.w_rec,
            &self.forward.bias,
            &self.backward.w_in,
            &self.backward.w_rec,
            &self.backward.bias,
            &self.batch_norm.gamma,
            &self.batch_norm.beta,
            &self.batch_norm.mean,
            &self.batch_norm.var,
            &self.dense1.w,
            &self.dense1.b,
            &self.dense2.w,
            &self.dense2.b,
            &self.dense3.w,
            &self.dense3.b,
        ];
        self.arch
            .shapes(self.vocab_size)
            .into_iter()
            .zip(data)
            .map(|((name, shape), data)| TensorRef { name, shape, data })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f32>)> {
        let names = self.arch.shapes(self.vocab_size);
        let data: [&mut Vec<f32>; 17] = [
            &mut self.embedding,
            &mut self.forward.w_in,
            &mut self.forward.w_rec,
            &mut self.forward.bias,
            &mut self.backward.w_in,
            &mut self.backward.w_rec,
            &mut self.backward.bias,
            &mut self.batch_norm.gamma,
            &mut self.batch_norm.beta,
            &mut self.batch_norm.mean,
            &mut self.batch_norm.var,
            &mut self.dense1.w,
            &mut self.dense1.b,
            &mut self.dense2.w,
            &mut self.dense2.b,
            &mut self.dense3.w,
            &mut self.dense3.b,
        ];
        names.into_iter().map(|(n, _)| n).zip(data).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}
