//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use apkseq::engine::ModelWeights;

/// First-occurrence filter by quadratic scan.
pub fn dedup_quadratic<T: PartialEq + Clone>(seq: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for (i, x) in seq.iter().enumerate() {
        let mut earlier = false;
        for y in &seq[..i] {
            if y == x {
                earlier = true;
                break;
            }
        }
        if !earlier {
            out.push(x.clone());
        }
    }
    out
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One direction of the recurrent layer over `xs`, double precision,
/// element by element.
fn lstm_run(xs: &[Vec<f64>], w_in: &[f32], w_rec: &[f32], bias: &[f32], n: usize) -> Vec<Vec<f64>> {
    let e = xs.first().map_or(0, |x| x.len());
    let cols = 4 * n;
    let mut h = vec![0.0f64; n];
    let mut c = vec![0.0f64; n];
    let mut outs = Vec::new();
    for x in xs {
        let mut z = vec![0.0f64; cols];
        for col in 0..cols {
            let mut s = bias[col] as f64;
            for k in 0..e {
                s += x[k] * w_in[k * cols + col] as f64;
            }
            for k in 0..n {
                s += h[k] * w_rec[k * cols + col] as f64;
            }
            z[col] = s;
        }
        let mut h_new = vec![0.0; n];
        for j in 0..n {
            let i = sig(z[j]);
            let f = sig(z[n + j]);
            let g = z[2 * n + j].tanh();
            let o = sig(z[3 * n + j]);
            c[j] = f * c[j] + i * g;
            h_new[j] = o * c[j].tanh();
        }
        h = h_new;
        outs.push(h.clone());
    }
    outs
}

fn dense(x: &[f64], w: &[f32], b: &[f32]) -> Vec<f64> {
    let outs = b.len();
    (0..outs)
        .map(|o| {
            b[o] as f64
                + x.iter()
                    .enumerate()
                    .map(|(i, xi)| xi * w[i * outs + o] as f64)
                    .sum::<f64>()
        })
        .collect()
}

/// Straight-line evaluation of the full network. Returns (logits,
/// probabilities).
pub fn forward_oracle(ids: &[u32], w: &ModelWeights) -> ([f64; 2], [f64; 2]) {
    let e = w.arch.embed_dim;
    let n = w.arch.hidden;
    let xs: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| (0..e).map(|k| w.embedding[id as usize * e + k] as f64).collect())
        .collect();
    let fw = lstm_run(&xs, &w.forward.w_in, &w.forward.w_rec, &w.forward.bias, n);
    let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let mut bw = lstm_run(&reversed, &w.backward.w_in, &w.backward.w_rec, &w.backward.bias, n);
    bw.reverse();

    let bn = &w.batch_norm;
    let mut pooled = vec![f64::NEG_INFINITY; 2 * n];
    for t in 0..ids.len() {
        let y: Vec<f64> = fw[t].iter().chain(&bw[t]).copied().collect();
        for ch in 0..2 * n {
            let norm = bn.gamma[ch] as f64 * (y[ch] - bn.mean[ch] as f64) / (bn.var[ch] as f64 + bn.eps as f64).sqrt()
                + bn.beta[ch] as f64;
            if norm > pooled[ch] {
                pooled[ch] = norm;
            }
        }
    }
    let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
    let a1 = relu(dense(&pooled, &w.dense1.w, &w.dense1.b));
    let a2 = relu(dense(&a1, &w.dense2.w, &w.dense2.b));
    let l = dense(&a2, &w.dense3.w, &w.dense3.b);
    let m = l[0].max(l[1]);
    let (e0, e1) = ((l[0] - m).exp(), (l[1] - m).exp());
    ([l[0], l[1]], [e0 / (e0 + e1), e1 / (e0 + e1)])
}
