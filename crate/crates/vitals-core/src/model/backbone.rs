//! Two-branch convolutional backbone with spatial attention.
//!
//! The appearance branch looks at (standardized) raw frames and produces a
//! spatial attention mask after each conv block; the motion branch processes
//! normalized frame differences, its feature maps gated elementwise by those
//! masks before every pooling stage. Global average pooling and a fully
//! connected layer turn the gated motion features into one d-vector per
//! frame. All processing is per-frame: temporal structure is left entirely
//! to the transformer.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Pad, Tape, TapeError, Tensor, Var};

use super::{BackboneConfig, Dense, ParamVars};

/// Normalize sigmoid activations into a spatial attention mask: for each
/// sample, `q = M·z / (2·Σ|z|)` where M is the number of mask cells, so the
/// mask always sums to M/2.
pub fn attention_mask(tape: &mut Tape, z_a: Var) -> Result<Var, TapeError> {
    tape.attn_mask_norm(z_a)
}

/// Intermediate views of a backbone forward pass.
pub struct BackboneSites {
    /// Frame features `[n, d]`.
    pub features: Var,
    /// Site-1 attention mask `[n, 1, h, w]`.
    pub q1: Var,
    /// Site-2 attention mask `[n, 1, h/2, w/2]`.
    pub q2: Var,
}

/// Replace the sigmoid attention activations with fixed maps (still passed
/// through the mask normalization). Used to probe what the gating admits.
pub struct AttnOverride<'a> {
    /// Site-1 activations `[n, 1, h, w]`, entries must not be all zero.
    pub z1: &'a Tensor,
    /// Site-2 activations `[n, 1, h/2, w/2]`.
    pub z2: &'a Tensor,
}

fn two_convs(
    tape: &mut Tape,
    x: Var,
    c1: &Dense<Var>,
    c2: &Dense<Var>,
) -> Result<Var, TapeError> {
    let a = tape.conv2d(x, c1.w, Some(c1.b), 1, Pad::Same)?;
    let a = tape.tanh(a);
    let b = tape.conv2d(a, c2.w, Some(c2.b), 1, Pad::Same)?;
    Ok(tape.tanh(b))
}

/// Broadcast a single-channel mask `[n, 1, h, w]` across `c` channels.
fn tile_channels(tape: &mut Tape, q: Var, c: usize) -> Result<Var, TapeError> {
    if c == 1 {
        return Ok(q);
    }
    let reps: Vec<Var> = vec![q; c];
    tape.concat(&reps, 1)
}

fn expect_frames(
    tape: &Tape,
    x: Var,
    cfg: &BackboneConfig,
    which: &'static str,
) -> Result<usize, TapeError> {
    let sh = &tape.value(x).shape;
    if sh.len() != 4 || sh[1] != cfg.input_hw || sh[2] != cfg.input_hw || sh[3] != 3 {
        return Err(TapeError::ShapeMismatch {
            op: which,
            lhs: sh.clone(),
            rhs: vec![0, cfg.input_hw, cfg.input_hw, 3],
        });
    }
    Ok(sh[0])
}

/// Full backbone pass returning features and both attention masks.
///
/// `appearance` and `motion` are `[n, h, w, 3]` channel-last frame stacks
/// (one motion difference per appearance frame). When `override_z` is given,
/// the appearance branch's sigmoid activations are replaced by the supplied
/// maps before normalization.
pub fn backbone_forward_sites(
    tape: &mut Tape,
    appearance: Var,
    motion: Var,
    params: &ParamVars,
    cfg: &BackboneConfig,
    override_z: Option<AttnOverride<'_>>,
) -> Result<BackboneSites, TapeError> {
    let n = expect_frames(tape, appearance, cfg, "backbone appearance input")?;
    let nm = expect_frames(tape, motion, cfg, "backbone motion input")?;
    if n != nm {
        return Err(TapeError::ShapeMismatch {
            op: "backbone frame counts",
            lhs: tape.value(appearance).shape.clone(),
            rhs: tape.value(motion).shape.clone(),
        });
    }
    let a = tape.transpose(appearance, &[0, 3, 1, 2])?;
    let m = tape.transpose(motion, &[0, 3, 1, 2])?;

    // Block 1 at full resolution.
    let a1 = two_convs(tape, a, &params.app.b1c1, &params.app.b1c2)?;
    let m1 = two_convs(tape, m, &params.mot.b1c1, &params.mot.b1c2)?;
    let z1 = match &override_z {
        Some(o) => tape.constant(o.z1.clone()),
        None => {
            let logits = tape.conv2d(a1, params.attn1.w, Some(params.attn1.b), 1, Pad::Same)?;
            tape.sigmoid(logits)
        }
    };
    let q1 = attention_mask(tape, z1)?;
    let q1_full = tile_channels(tape, q1, cfg.channels[0])?;
    let m1g = tape.mul(m1, q1_full)?;
    let a1p = tape.avg_pool2(a1)?;
    let m1p = tape.avg_pool2(m1g)?;

    // Block 2 at half resolution.
    let a2 = two_convs(tape, a1p, &params.app.b2c1, &params.app.b2c2)?;
    let m2 = two_convs(tape, m1p, &params.mot.b2c1, &params.mot.b2c2)?;
    let z2 = match &override_z {
        Some(o) => tape.constant(o.z2.clone()),
        None => {
            let logits = tape.conv2d(a2, params.attn2.w, Some(params.attn2.b), 1, Pad::Same)?;
            tape.sigmoid(logits)
        }
    };
    let q2 = attention_mask(tape, z2)?;
    let q2_full = tile_channels(tape, q2, cfg.channels[1])?;
    let m2g = tape.mul(m2, q2_full)?;
    let m2p = tape.avg_pool2(m2g)?;

    // Global average pool over the spatial extents, then FC to d.
    let pooled = tape.mean_last(m2p, 2)?;
    let features = tape.linear(pooled, params.fc.w, params.fc.b)?;
    Ok(BackboneSites { features, q1, q2 })
}

/// Frame features `[n, d]` from an appearance/motion window.
pub fn backbone_forward(
    tape: &mut Tape,
    appearance: Var,
    motion: Var,
    params: &ParamVars,
    cfg: &BackboneConfig,
) -> Result<Var, TapeError> {
    Ok(backbone_forward_sites(tape, appearance, motion, params, cfg, None)?.features)
}
