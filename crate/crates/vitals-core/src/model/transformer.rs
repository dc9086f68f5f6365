//! Temporal encoder: linear reduction to d_T, learned CLS token, sinusoidal
//! positional encodings, pre-norm self-attention layers, and a per-position
//! linear head emitting one scalar per frame.

use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, pow, sin, sqrt};

use crate::autodiff::{Tape, TapeError, Tensor, Var};

use super::{EncoderLayerParams, ParamVars, TransformerConfig};

const LN_EPS: f64 = 1e-5;

/// Sinusoidal positional-encoding matrix `[n, d_t]`:
/// entry (pos, 2i) = sin(pos / 10000^(2i/d_t)),
/// entry (pos, 2i+1) = cos(pos / 10000^(2i/d_t)).
pub fn positional_encoding(n: usize, d_t: usize) -> Tensor {
    assert!(d_t % 2 == 0, "positional encoding needs an even width, got {}", d_t);
    let mut data = vec![0.0; n * d_t];
    for pos in 0..n {
        for i in 0..d_t / 2 {
            let div = pow(10000.0, 2.0 * i as f64 / d_t as f64);
            let angle = pos as f64 / div;
            data[pos * d_t + 2 * i] = sin(angle);
            data[pos * d_t + 2 * i + 1] = cos(angle);
        }
    }
    Tensor::new(vec![n, d_t], data)
}

/// Smooth GELU-style activation: `x · sigmoid(1.702 x)`.
pub fn gelu(tape: &mut Tape, x: Var) -> Result<Var, TapeError> {
    let k = tape.scalar_const(1.702);
    let xs = tape.mul(x, k)?;
    let sig = tape.sigmoid(xs);
    tape.mul(x, sig)
}

/// Multi-head self-attention over `x: [m, d_t]`. Returns the attended
/// output `[m, d_t]` and the attention probabilities `[heads, m, m]`.
pub fn multi_head_attention(
    tape: &mut Tape,
    x: Var,
    layer: &EncoderLayerParams<Var>,
    heads: usize,
) -> Result<(Var, Var), TapeError> {
    let sh = tape.value(x).shape.clone();
    let (m, d_t) = (sh[0], sh[1]);
    let dh = d_t / heads;
    let split = |tape: &mut Tape, v: Var| -> Result<Var, TapeError> {
        let r = tape.reshape(v, &[m, heads, dh])?;
        tape.transpose(r, &[1, 0, 2]) // [heads, m, dh]
    };
    let q = tape.linear(x, layer.q.w, layer.q.b)?;
    let k = tape.linear(x, layer.k.w, layer.k.b)?;
    let v = tape.linear(x, layer.v.w, layer.v.b)?;
    let qh = split(tape, q)?;
    let kh = split(tape, k)?;
    let vh = split(tape, v)?;
    let kt = tape.transpose(kh, &[0, 2, 1])?; // [heads, dh, m]
    let scores = tape.matmul(qh, kt)?; // [heads, m, m]
    let scale = tape.scalar_const(1.0 / sqrt(dh as f64));
    let scaled = tape.mul(scores, scale)?;
    let probs = tape.softmax_last(scaled)?;
    let ctx = tape.matmul(probs, vh)?; // [heads, m, dh]
    let merged = tape.transpose(ctx, &[1, 0, 2])?;
    let flat = tape.reshape(merged, &[m, d_t])?;
    let out = tape.linear(flat, layer.o.w, layer.o.b)?;
    Ok((out, probs))
}

fn encoder_layer(
    tape: &mut Tape,
    x: Var,
    layer: &EncoderLayerParams<Var>,
    heads: usize,
) -> Result<(Var, Var), TapeError> {
    // Pre-norm residual: x + attn(LN(x)), then x + mlp(LN(x)).
    let n1 = tape.layer_norm(x, layer.ln1_g, layer.ln1_b, LN_EPS)?;
    let (attn, probs) = multi_head_attention(tape, n1, layer, heads)?;
    let x = tape.add(x, attn)?;
    let n2 = tape.layer_norm(x, layer.ln2_g, layer.ln2_b, LN_EPS)?;
    let h = tape.linear(n2, layer.mlp1.w, layer.mlp1.b)?;
    let h = gelu(tape, h)?;
    let h = tape.linear(h, layer.mlp2.w, layer.mlp2.b)?;
    let x = tape.add(x, h)?;
    Ok((x, probs))
}

/// Run the temporal encoder over frame features `[n, d]`, producing one
/// scalar per frame `[n]` — the predicted first-difference waveform.
/// `probs_out`, when given, collects each layer's attention probabilities.
pub fn transformer_forward(
    tape: &mut Tape,
    features: Var,
    params: &ParamVars,
    cfg: &TransformerConfig,
    mut probs_out: Option<&mut Vec<Var>>,
) -> Result<Var, TapeError> {
    let sh = tape.value(features).shape.clone();
    if sh.len() != 2 || sh[0] != cfg.n_frames {
        return Err(TapeError::ShapeMismatch {
            op: "transformer features",
            lhs: sh,
            rhs: vec![cfg.n_frames, 0],
        });
    }
    let n = cfg.n_frames;
    let mut x = tape.linear(features, params.reducer.w, params.reducer.b)?; // [n, d_t]
    if cfg.use_cls {
        x = tape.concat(&[params.cls, x], 0)?; // [n+1, d_t]
    }
    let m = n + usize::from(cfg.use_cls);
    if cfg.use_pe {
        let pe = tape.constant(positional_encoding(m, cfg.d_t));
        x = tape.add(x, pe)?;
    }
    for layer in &params.enc {
        let (next, probs) = encoder_layer(tape, x, layer, cfg.heads)?;
        x = next;
        if let Some(ref mut out) = probs_out {
            out.push(probs);
        }
    }
    if cfg.use_cls {
        x = tape.slice(x, 0, 1, n)?; // drop the CLS position
    }
    let y = tape.linear(x, params.head.w, params.head.b)?; // [n, 1]
    tape.reshape(y, &[n])
}
