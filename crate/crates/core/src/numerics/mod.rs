//! Dense tensors, a reverse-mode tape, and the handful of composite blocks
//! (attention, feed-forward) the predictor and ranker are built from.

pub mod checkpoint;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::Adam;
pub use params::{ParamId, ParamStore};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Additive bias applied to masked attention scores. Finite, so the tape's
/// non-finite guard stays meaningful, yet large enough that `exp` underflows
/// to exactly zero after max-subtraction.
pub const MASK_BIAS: f64 = -1e30;

/// Scaled dot-product attention, `softmax(q·kᵀ/√d + mask)·v`.
///
/// `valid_keys[j]` marks key `j` as attendable; it applies to every query row.
pub fn attention(tape: &mut Tape, q: Var, k: Var, v: Var, valid_keys: &[bool]) -> Result<Var> {
    let d = tape.value(q).cols();
    let tk = tape.value(k).rows();
    if tape.value(k).cols() != d {
        return Err(Error::ShapeMismatch {
            op: "attention q/k",
            left: tape.value(q).shape().to_vec(),
            right: tape.value(k).shape().to_vec(),
        });
    }
    if tape.value(v).rows() != tk || valid_keys.len() != tk {
        return Err(Error::ShapeMismatch {
            op: "attention k/v/mask",
            left: tape.value(k).shape().to_vec(),
            right: vec![tape.value(v).rows(), valid_keys.len()],
        });
    }
    if !valid_keys.iter().any(|&m| m) {
        return Err(Error::FullyMasked);
    }
    let scores = tape.matmul_bt(q, k)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let bias = mask_bias_row(valid_keys);
    let bias = tape.input(bias)?;
    let masked = tape.add_row(scaled, bias)?;
    let weights = tape.softmax_rows(masked);
    tape.matmul(weights, v)
}

pub(crate) fn mask_bias_row(valid_keys: &[bool]) -> Tensor {
    let data = valid_keys
        .iter()
        .map(|&ok| if ok { 0.0 } else { MASK_BIAS })
        .collect();
    Tensor::row_vector(data).expect("mask is non-empty")
}

/// Attention split across `heads` equal column groups of `q`, `k`, `v`;
/// per-head outputs are concatenated back in head order.
pub fn multi_head_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    valid_keys: &[bool],
    heads: usize,
) -> Result<Var> {
    if heads <= 1 {
        return attention(tape, q, k, v, valid_keys);
    }
    let width = tape.value(q).cols();
    if !width.is_multiple_of(heads) {
        return Err(Error::invalid(format!(
            "model width {width} not divisible by {heads} heads"
        )));
    }
    let hd = width / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * hd, hd)?;
        let kh = tape.slice_cols(k, h * hd, hd)?;
        let vh = tape.slice_cols(v, h * hd, hd)?;
        outs.push(attention(tape, qh, kh, vh, valid_keys)?);
    }
    tape.concat_cols(&outs)
}

/// Position-wise feed-forward block `relu(x·W1 + b1)·W2 + b2`.
pub fn ffn(tape: &mut Tape, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let h = tape.matmul(x, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, w2)?;
    tape.add_row(o, b2)
}

/// Fully connected layer `x·W + b`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let h = tape.matmul(x, w)?;
    tape.add_row(h, b)
}

/// Gaussian initialisation with the given standard deviation.
pub fn normal_tensor<R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("std is finite and non-negative");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

/// Glorot-style Gaussian initialisation for a `fan_in × fan_out` matrix.
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    normal_tensor(rng, &[fan_in, fan_out], std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(tape: &mut Tape, rows: usize, cols: usize, data: &[f64]) -> Var {
        tape.input(Tensor::matrix(rows, cols, data.to_vec()).unwrap())
            .unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = leaf(&mut tape, 2, 1, &[0.0, 1.0]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let i = tape.input(Tensor::identity(3)).unwrap();
        let x = tape.input(normal_tensor(&mut rng, &[3, 4], 1.0)).unwrap();
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, 2, 3, &[0.0; 6]);
        let b = leaf(&mut tape, 2, 3, &[0.0; 6]);
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, 3, 2, &[0.0, 0.0, 2f64.ln(), 0.0, 1000.0, 0.0]);
        let y = tape.softmax_rows(x);
        let y = tape.value(y);
        assert_eq!(y.row(0), &[0.5, 0.5]);
        assert!((y.at(1, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((y.at(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((y.at(2, 0) - 1.0).abs() < 1e-12 && y.at(2, 1) < 1e-12);
    }

    #[test]
    fn single_key_attention_returns_value() {
        let mut tape = Tape::new();
        let q = leaf(&mut tape, 1, 3, &[0.3, -2.0, 5.0]);
        let k = leaf(&mut tape, 1, 3, &[1.0, 1.0, 1.0]);
        let v = leaf(&mut tape, 1, 3, &[7.0, -1.0, 0.25]);
        let o = attention(&mut tape, q, k, v, &[true]).unwrap();
        assert_eq!(tape.value(o).data(), &[7.0, -1.0, 0.25]);
    }

    #[test]
    fn identical_keys_average_values() {
        let mut tape = Tape::new();
        let q = leaf(&mut tape, 1, 2, &[0.9, -0.4]);
        let k = leaf(&mut tape, 2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let v = leaf(&mut tape, 2, 2, &[1.0, 3.0, 5.0, -1.0]);
        let o = attention(&mut tape, q, k, v, &[true, true]).unwrap();
        assert_eq!(tape.value(o).data(), &[3.0, 1.0]);
    }

    #[test]
    fn fully_masked_attention_is_an_error() {
        let mut tape = Tape::new();
        let q = leaf(&mut tape, 1, 2, &[1.0, 0.0]);
        let k = leaf(&mut tape, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let v = leaf(&mut tape, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            attention(&mut tape, q, k, v, &[false, false]),
            Err(Error::FullyMasked)
        ));
    }

    #[test]
    fn masked_keys_get_zero_weight() {
        let mut tape = Tape::new();
        let q = leaf(&mut tape, 1, 2, &[1.0, 1.0]);
        let k = leaf(&mut tape, 2, 2, &[50.0, 50.0, 0.0, 0.0]);
        let v = leaf(&mut tape, 2, 2, &[100.0, 100.0, 1.0, 2.0]);
        let o = attention(&mut tape, q, k, v, &[false, true]).unwrap();
        assert_eq!(tape.value(o).data(), &[1.0, 2.0]);
    }

    #[test]
    fn ffn_zero_weights_give_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, 2, 3, &[1.0, -2.0, 3.0, 0.5, 0.5, 0.5]);
        let w1 = leaf(&mut tape, 3, 4, &[0.0; 12]);
        let b1 = leaf(&mut tape, 1, 4, &[0.0; 4]);
        let w2 = leaf(&mut tape, 4, 3, &[0.0; 12]);
        let b2 = leaf(&mut tape, 1, 3, &[0.0; 3]);
        let o = ffn(&mut tape, x, w1, b1, w2, b2).unwrap();
        assert!(tape.value(o).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ffn_relu_blocks_negative_path() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, 1, 1, &[-1.0]);
        let one = leaf(&mut tape, 1, 1, &[1.0]);
        let zero = leaf(&mut tape, 1, 1, &[0.0]);
        let o = ffn(&mut tape, x, one, zero, one, zero).unwrap();
        assert_eq!(tape.value(o).item(), 0.0);
        let x = leaf(&mut tape, 1, 1, &[2.0]);
        let o = ffn(&mut tape, x, one, zero, one, zero).unwrap();
        assert_eq!(tape.value(o).item(), 2.0);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let z = leaf(&mut tape, 1, 4, &[0.0; 4]);
        let l = tape.cross_entropy(z, 2).unwrap();
        assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-15);

        let z = leaf(&mut tape, 1, 4, &[0.0, 30.0, 0.0, 0.0]);
        let l = tape.cross_entropy(z, 1).unwrap();
        assert!(tape.value(l).item() < 1e-12);

        assert!(matches!(
            tape.cross_entropy(z, 4),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let logits = normal_tensor(&mut rng, &[1, 7], 3.0);
            let target = trial % 7;
            let mut tape = Tape::new();
            let z = tape.input(logits.clone()).unwrap();
            let l = tape.cross_entropy(z, target).unwrap();
            let grads = tape.backward(l, &mut ParamStore::new()).unwrap();
            let max = logits.data().iter().copied().fold(f64::MIN, f64::max);
            let exps: Vec<f64> = logits.data().iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (j, g) in grads.get(z).unwrap().data().iter().enumerate() {
                let expected = exps[j] / total - if j == target { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sum_gradient_is_all_ones_and_unused_params_stay_zero() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let unused = store.add("unused", Tensor::row_vector(vec![9.0]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum(wv);
        tape.backward(loss, &mut store).unwrap();
        assert!(store.grad(w).data().iter().all(|&g| g == 1.0));
        assert_eq!(store.grad(unused).data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, 1, 2, &[1.0, 2.0]);
        assert!(matches!(
            tape.backward(x, &mut ParamStore::new()),
            Err(Error::NotScalar(_))
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut tape = Tape::new();
        let r = tape.input(Tensor::row_vector(vec![f64::NAN]).unwrap());
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn overflow_is_a_named_error() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, 1, 1, &[1e200]);
        let r = tape.matmul(a, a);
        assert!(matches!(r, Err(Error::NonFinite("matmul"))));
    }
}
