use super::LstmParams;

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `z += a * row`
#[inline]
pub(super) fn axpy(a: f32, row: &[f32], z: &mut [f32]) {
    for (zj, wj) in z.iter_mut().zip(row) {
        *zj += a * wj;
    }
}

/// One LSTM step writing the new state into `h` and `c` in place. `z` is
/// scratch of length `4 * hidden`.
pub(super) fn step_in_place(p: &LstmParams, x: &[f32], h: &mut [f32], c: &mut [f32], z: &mut [f32]) {
    let n = p.hidden;
    let g = 4 * n;
    z.copy_from_slice(&p.bias);
    for (xk, row) in x.iter().zip(p.w_in.chunks_exact(g)) {
        if *xk != 0.0 {
            axpy(*xk, row, z);
        }
    }
    for (hk, row) in h.iter().zip(p.w_rec.chunks_exact(g)) {
        if *hk != 0.0 {
            axpy(*hk, row, z);
        }
    }
    let (zi, rest) = z.split_at(n);
    let (zf, rest) = rest.split_at(n);
    let (zg, zo) = rest.split_at(n);
    for j in 0..n {
        let i = sigmoid(zi[j]);
        let f = sigmoid(zf[j]);
        let cand = zg[j].tanh();
        let o = sigmoid(zo[j]);
        c[j] = f * c[j] + i * cand;
        h[j] = o * c[j].tanh();
    }
}

/// Standard LSTM cell with fused gate blocks in order input, forget, cell,
/// output:
///
/// ```text
/// z = x W_in + h_prev W_rec + bias
/// c = σ(z_f) ⊙ c_prev + σ(z_i) ⊙ tanh(z_g)
/// h = σ(z_o) ⊙ tanh(c)
/// ```
///
/// Returns `(h, c)`.
pub fn lstm_step(x: &[f32], h_prev: &[f32], c_prev: &[f32], params: &LstmParams) -> (Vec<f32>, Vec<f32>) {
    assert_eq!(x.len(), params.input_dim, "input width");
    assert_eq!(h_prev.len(), params.hidden, "hidden width");
    assert_eq!(c_prev.len(), params.hidden, "cell width");
    let mut h = h_prev.to_vec();
    let mut c = c_prev.to_vec();
    let mut z = vec![0.0; 4 * params.hidden];
    step_in_place(params, x, &mut h, &mut c, &mut z);
    (h, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_zero_state() {
        let p = LstmParams::zeros(128, 256);
        let x: Vec<f32> = (0..128).map(|i| i as f32 * 0.1 - 3.0).collect();
        let (h, c) = lstm_step(&x, &[0.0; 256], &[0.0; 256], &p);
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_hand_computation() {
        // input gate σ(0) = 0.5, cell candidate tanh(atanh(0.5)) = 0.5,
        // output gate saturated to 1: c = 0.25, h = tanh(0.25)
        let mut p = LstmParams::zeros(1, 1);
        p.bias = vec![0.0, 0.0, 0.5f32.atanh(), 40.0];
        let (h, c) = lstm_step(&[0.7], &[0.0], &[0.0], &p);
        assert!((c[0] - 0.25).abs() < 1e-6, "{c:?}");
        assert!((h[0] - 0.25f32.tanh()).abs() < 1e-6, "{h:?}");
    }

    /// Gate-by-gate scalar evaluation in f64 with explicit indexing.
    fn scalar_oracle(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
        let n = p.hidden;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |gate: usize, j: usize| -> f64 {
            let col = gate * n + j;
            let mut s = p.bias[col] as f64;
            for (k, xk) in x.iter().enumerate() {
                s += xk * p.w_in[k * 4 * n + col] as f64;
            }
            for (k, hk) in h.iter().enumerate() {
                s += hk * p.w_rec[k * 4 * n + col] as f64;
            }
            s
        };
        let mut h_out = vec![0.0; n];
        let mut c_out = vec![0.0; n];
        for j in 0..n {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn random_two_unit_cells_match_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut p = LstmParams::zeros(2, 2);
            for v in p.w_in.iter_mut().chain(p.w_rec.iter_mut()).chain(p.bias.iter_mut()) {
                *v = rng.gen_range(-1.0..1.0);
            }
            let x: Vec<f32> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f32> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f32> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (h1, c1) = lstm_step(&x, &h, &c, &p);
            let widen = |v: &[f32]| v.iter().map(|&a| a as f64).collect::<Vec<_>>();
            let (h2, c2) = scalar_oracle(&widen(&x), &widen(&h), &widen(&c), &p);
            for j in 0..2 {
                assert!((h1[j] as f64 - h2[j]).abs() < 1e-6);
                assert!((c1[j] as f64 - c2[j]).abs() < 1e-6);
            }
        }
    }
}
