//! Layer forward/backward kernels.
//!
//! Parallel loops only ever split over independent output slots and every
//! reduction sums in a fixed order, so results are bitwise reproducible
//! regardless of the worker count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cnn::tensor::Tensor;

// ---------------------------------------------------------------------------
// convolution (valid, stride 1, square kernels)
// ---------------------------------------------------------------------------

pub fn conv_output_dim(input: usize, kernel: usize) -> usize {
    input + 1 - kernel
}

/// Valid convolution with stride 1. `weight` is (out_ch, in_ch, k, k).
pub fn conv_forward(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Tensor {
    let (oc, ic, k) = (weight.n, weight.c, weight.h);
    assert_eq!(weight.h, weight.w, "kernels are square");
    assert_eq!(input.c, ic, "input channel mismatch");
    assert_eq!(bias.len(), oc);
    let oh = conv_output_dim(input.h, k);
    let ow = conv_output_dim(input.w, k);
    let mut out = Tensor::zeros(input.n, oc, oh, ow);
    let plane = oh * ow;
    out.data
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(p, out_plane)| {
            let n = p / oc;
            let o = p % oc;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[o];
                    for i in 0..ic {
                        for ky in 0..k {
                            let in_row = input.idx(n, i, oy + ky, ox);
                            let w_row = weight.idx(o, i, ky, 0);
                            for kx in 0..k {
                                acc += input.data[in_row + kx] * weight.data[w_row + kx];
                            }
                        }
                    }
                    out_plane[oy * ow + ox] = acc;
                }
            }
        });
    out
}

/// Gradients of a valid convolution. Returns (grad_input, grad_weight,
/// grad_bias).
pub fn conv_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Vec<f64>) {
    let (oc, ic, k) = (weight.n, weight.c, weight.h);
    let (oh, ow) = (grad_out.h, grad_out.w);

    let mut grad_bias = vec![0.0; oc];
    grad_bias.par_iter_mut().enumerate().for_each(|(o, gb)| {
        let mut acc = 0.0;
        for n in 0..grad_out.n {
            let base = grad_out.idx(n, o, 0, 0);
            for i in 0..oh * ow {
                acc += grad_out.data[base + i];
            }
        }
        *gb = acc;
    });

    let mut grad_weight = Tensor::zeros(oc, ic, k, k);
    let w_plane = ic * k * k;
    grad_weight
        .data
        .par_chunks_mut(w_plane)
        .enumerate()
        .for_each(|(o, gw)| {
            for n in 0..input.n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_out.at(n, o, oy, ox);
                        for i in 0..ic {
                            for ky in 0..k {
                                let in_row = input.idx(n, i, oy + ky, ox);
                                let gw_row = (i * k + ky) * k;
                                for kx in 0..k {
                                    gw[gw_row + kx] += g * input.data[in_row + kx];
                                }
                            }
                        }
                    }
                }
            }
        });

    let mut grad_input = Tensor::zeros(input.n, ic, input.h, input.w);
    let item = ic * input.h * input.w;
    grad_input
        .data
        .par_chunks_mut(item)
        .enumerate()
        .for_each(|(n, gi)| {
            for o in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_out.at(n, o, oy, ox);
                        for i in 0..ic {
                            for ky in 0..k {
                                let gi_row = (i * input.h + oy + ky) * input.w + ox;
                                let w_row = weight.idx(o, i, ky, 0);
                                for kx in 0..k {
                                    gi[gi_row + kx] += g * weight.data[w_row + kx];
                                }
                            }
                        }
                    }
                }
            }
        });

    (grad_input, grad_weight, grad_bias)
}

// ---------------------------------------------------------------------------
// 2x2 max-pooling, stride 2, floor division on odd extents
// ---------------------------------------------------------------------------

pub fn pool_output_dim(input: usize) -> usize {
    input / 2
}

/// Max-pooling over disjoint 2x2 windows. Also returns, per output
/// element, the flat input index that held the maximum (first win on
/// ties), which the backward pass routes the gradient to.
pub fn maxpool_forward(input: &Tensor) -> (Tensor, Vec<usize>) {
    let oh = pool_output_dim(input.h);
    let ow = pool_output_dim(input.w);
    let mut out = Tensor::zeros(input.n, input.c, oh, ow);
    let mut argmax = vec![0usize; out.len()];
    let plane = oh * ow;
    out.data
        .par_chunks_mut(plane)
        .zip(argmax.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(p, (out_plane, arg_plane))| {
            let n = p / input.c;
            let c = p % input.c;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let idx = input.idx(n, c, 2 * oy + ky, 2 * ox + kx);
                            let v = input.data[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    out_plane[oy * ow + ox] = best;
                    arg_plane[oy * ow + ox] = best_idx;
                }
            }
        });
    (out, argmax)
}

pub fn maxpool_backward(input_shape: (usize, usize, usize, usize), argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let (n, c, h, w) = input_shape;
    let mut grad_input = Tensor::zeros(n, c, h, w);
    // pooling windows are disjoint, so per-plane scatter cannot race
    let in_plane = h * w;
    let out_plane = grad_out.h * grad_out.w;
    grad_input
        .data
        .par_chunks_mut(in_plane)
        .enumerate()
        .for_each(|(p, gi)| {
            let base_in = p * in_plane;
            let base_out = p * out_plane;
            for i in 0..out_plane {
                gi[argmax[base_out + i] - base_in] += grad_out.data[base_out + i];
            }
        });
    grad_input
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_input = grad_out.clone();
    for (g, &x) in grad_input.data.iter_mut().zip(input.data.iter()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    grad_input
}

// ---------------------------------------------------------------------------
// fully connected
// ---------------------------------------------------------------------------

/// Dense layer over flattened features. `weight` is (units, features).
pub fn fc_forward(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Tensor {
    let units = weight.n;
    let features = weight.features();
    assert_eq!(input.features(), features, "fc input feature mismatch");
    let mut out = Tensor::zeros(input.n, units, 1, 1);
    out.data
        .par_chunks_mut(units)
        .enumerate()
        .for_each(|(n, row)| {
            let x = input.item(n);
            for (o, r) in row.iter_mut().enumerate() {
                let wrow = &weight.data[o * features..(o + 1) * features];
                let mut acc = bias[o];
                for (wi, xi) in wrow.iter().zip(x.iter()) {
                    acc += wi * xi;
                }
                *r = acc;
            }
        });
    out
}

pub fn fc_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Vec<f64>) {
    let units = weight.n;
    let features = weight.features();

    let mut grad_weight = Tensor::zeros(units, weight.c, weight.h, weight.w);
    grad_weight
        .data
        .par_chunks_mut(features)
        .enumerate()
        .for_each(|(o, gw)| {
            for n in 0..input.n {
                let g = grad_out.data[n * units + o];
                if g != 0.0 {
                    for (gwi, xi) in gw.iter_mut().zip(input.item(n).iter()) {
                        *gwi += g * xi;
                    }
                }
            }
        });

    let mut grad_bias = vec![0.0; units];
    for n in 0..input.n {
        for (gb, &g) in grad_bias.iter_mut().zip(&grad_out.data[n * units..(n + 1) * units]) {
            *gb += g;
        }
    }

    let mut grad_input = Tensor::zeros(input.n, input.c, input.h, input.w);
    grad_input
        .data
        .par_chunks_mut(features)
        .enumerate()
        .for_each(|(n, gi)| {
            for o in 0..units {
                let g = grad_out.data[n * units + o];
                if g != 0.0 {
                    let wrow = &weight.data[o * features..(o + 1) * features];
                    for (gii, wi) in gi.iter_mut().zip(wrow.iter()) {
                        *gii += g * wi;
                    }
                }
            }
        });

    (grad_input, grad_weight, grad_bias)
}

// ---------------------------------------------------------------------------
// dropout (inverted scaling at train time)
// ---------------------------------------------------------------------------

/// Dropout mask values: 0 for dropped units, `1/keep` otherwise. The mask
/// is drawn sequentially so the RNG stream is independent of threading.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                scale
            }
        })
        .collect()
}

pub fn dropout_apply(input: &Tensor, mask: &[f64]) -> Tensor {
    let mut out = input.clone();
    for (v, &m) in out.data.iter_mut().zip(mask.iter()) {
        *v *= m;
    }
    out
}

// ---------------------------------------------------------------------------
// softmax + negative log-likelihood
// ---------------------------------------------------------------------------

/// Row-wise softmax over (n, L) logits, computed with a shifted exponent.
pub fn softmax_forward(logits: &Tensor) -> Tensor {
    let classes = logits.features();
    let mut out = logits.clone();
    for row in out.data.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    out
}

/// Mean negative log-likelihood of the targets under softmax outputs.
pub fn nll_loss(probs: &Tensor, targets: &[usize]) -> f64 {
    let classes = probs.features();
    assert_eq!(targets.len(), probs.n);
    let mut loss = 0.0;
    for (n, &t) in targets.iter().enumerate() {
        loss -= probs.data[n * classes + t].max(1e-300).ln();
    }
    loss / probs.n as f64
}

/// Closed-form gradient of mean NLL w.r.t. the softmax logits:
/// `(p - onehot) / batch`.
pub fn softmax_nll_backward(probs: &Tensor, targets: &[usize]) -> Tensor {
    let classes = probs.features();
    let inv_n = 1.0 / probs.n as f64;
    let mut grad = probs.clone();
    for (n, &t) in targets.iter().enumerate() {
        let row = &mut grad.data[n * classes..(n + 1) * classes];
        row[t] -= 1.0;
        for g in row.iter_mut() {
            *g *= inv_n;
        }
    }
    grad
}
