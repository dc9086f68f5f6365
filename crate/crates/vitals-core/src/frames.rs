//! Frame-sequence containers, bilinear resizing, the normalized
//! frame-difference transform, and window extraction for the model.
//!
//! The motion representation is the gain-invariant temporal derivative
//! `M(t) = (C(t+1) − C(t)) ⊘ (C(t+1) + C(t) + ε)`: any per-pixel illumination
//! scale common to both frames cancels in the ratio.

use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::sigproc::standardize_slice;

/// Epsilon in the frame-difference denominator: keeps black pixels finite.
pub const DIFF_EPS: f64 = 1e-8;

/// T×H×W×3 frame stack, 32-bit values in [0, 1], t-major / row-major /
/// channel-last layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Vec<f32>,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    /// Frame rate in Hz.
    pub fps: f64,
}

impl VideoClip {
    pub fn new(frames: Vec<f32>, t: usize, h: usize, w: usize, fps: f64) -> Self {
        assert!(t >= 2, "clip: need at least 2 frames, got {}", t);
        assert!(fps > 0.0, "clip: fps must be positive");
        assert_eq!(frames.len(), t * h * w * 3, "clip: buffer size mismatch");
        debug_assert!(
            frames.iter().all(|&v| (0.0..=1.0).contains(&v)),
            "clip: values outside [0, 1]"
        );
        Self { frames, t, h, w, fps }
    }

    #[inline]
    pub fn idx(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.h + y) * self.w + x) * 3 + c
    }

    pub fn at(&self, t: usize, y: usize, x: usize, c: usize) -> f32 {
        self.frames[self.idx(t, y, x, c)]
    }

    /// One frame as f64 values (H×W×3 slice copy).
    pub fn frame_f64(&self, t: usize) -> Vec<f64> {
        let plane = self.h * self.w * 3;
        self.frames[t * plane..(t + 1) * plane]
            .iter()
            .map(|&v| v as f64)
            .collect()
    }
}

/// One model input window: `n` standardized appearance frames and the `n`
/// standardized normalized differences spanning the same frames (which use
/// one extra trailing source frame).
#[derive(Debug, Clone)]
pub struct ClipBatchItem {
    /// `[n, h, w, 3]`, standardized over the whole window.
    pub appearance: Tensor,
    /// `[n, h, w, 3]`, standardized over the whole window.
    pub motion: Tensor,
    /// Index of the source clip in its manifest (0 for ad-hoc clips).
    pub clip_id: usize,
    /// First frame of the window within the source clip.
    pub start_frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameError {
    /// Clip has fewer frames than the operation needs.
    TooShort { need: usize, have: usize },
}

impl core::fmt::Display for FrameError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FrameError::TooShort { need, have } => {
                write!(f, "clip too short: need {} frames, have {}", need, have)
            }
        }
    }
}

/// Per-frame bilinear resize with corner-aligned sampling (the four corner
/// pixels map exactly onto each other, so constant and linear fields are
/// preserved).
pub fn resize_bilinear(clip: &VideoClip, out_h: usize, out_w: usize) -> VideoClip {
    assert!(clip.h >= 2 && clip.w >= 2, "resize: input must be at least 2x2");
    assert!(out_h >= 1 && out_w >= 1);
    let sy = if out_h > 1 {
        (clip.h - 1) as f64 / (out_h - 1) as f64
    } else {
        0.0
    };
    let sx = if out_w > 1 {
        (clip.w - 1) as f64 / (out_w - 1) as f64
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(clip.t * out_h * out_w * 3);
    for t in 0..clip.t {
        for oy in 0..out_h {
            let fy = oy as f64 * sy;
            let y0 = (fy as usize).min(clip.h - 1);
            let y1 = (y0 + 1).min(clip.h - 1);
            let dy = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ox as f64 * sx;
                let x0 = (fx as usize).min(clip.w - 1);
                let x1 = (x0 + 1).min(clip.w - 1);
                let dx = fx - x0 as f64;
                for c in 0..3 {
                    let v00 = clip.at(t, y0, x0, c) as f64;
                    let v01 = clip.at(t, y0, x1, c) as f64;
                    let v10 = clip.at(t, y1, x0, c) as f64;
                    let v11 = clip.at(t, y1, x1, c) as f64;
                    let top = v00 + (v01 - v00) * dx;
                    let bot = v10 + (v11 - v10) * dx;
                    let v = top + (bot - top) * dy;
                    out.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    VideoClip::new(out, clip.t, out_h, out_w, clip.fps)
}

/// Normalized frame differences for consecutive pairs: output holds T−1
/// "frames" of `(next − cur) / (next + cur + ε)`, clamped to [−1, 1],
/// in the clip's own H×W×3 layout.
pub fn frame_diff_normalized(clip: &VideoClip) -> Vec<f64> {
    assert!(clip.t >= 2);
    let plane = clip.h * clip.w * 3;
    let mut out = Vec::with_capacity((clip.t - 1) * plane);
    for t in 0..clip.t - 1 {
        let cur = &clip.frames[t * plane..(t + 1) * plane];
        let next = &clip.frames[(t + 1) * plane..(t + 2) * plane];
        for (&a, &b) in cur.iter().zip(next) {
            let (a, b) = (a as f64, b as f64);
            let m = (b - a) / (b + a + DIFF_EPS);
            out.push(m.clamp(-1.0, 1.0));
        }
    }
    out
}

/// Number of windows `window_clip` yields for a clip of `t` frames.
pub fn window_count(t: usize, n: usize, stride: usize) -> usize {
    if t < n + 1 {
        0
    } else {
        (t - 1 - n) / stride + 1
    }
}

/// Cut the clip into model windows: each item carries `n` standardized
/// appearance frames starting at `t0` and the `n` standardized normalized
/// differences over frames `t0..t0+n` (one extra source frame). Windows
/// advance by `stride` diffs; a final partial window is dropped.
pub fn window_clip(
    clip: &VideoClip,
    n: usize,
    stride: usize,
    clip_id: usize,
) -> Result<Vec<ClipBatchItem>, FrameError> {
    assert!(n >= 1 && stride >= 1);
    if clip.t < n + 1 {
        return Err(FrameError::TooShort {
            need: n + 1,
            have: clip.t,
        });
    }
    let plane = clip.h * clip.w * 3;
    let diffs = frame_diff_normalized(clip);
    let count = window_count(clip.t, n, stride);
    let mut items = Vec::with_capacity(count);
    for wi in 0..count {
        let t0 = wi * stride;
        let mut appearance: Vec<f64> = clip.frames[t0 * plane..(t0 + n) * plane]
            .iter()
            .map(|&v| v as f64)
            .collect();
        standardize_slice(&mut appearance);
        let mut motion = diffs[t0 * plane..(t0 + n) * plane].to_vec();
        standardize_slice(&mut motion);
        let shape = alloc::vec![n, clip.h, clip.w, 3];
        items.push(ClipBatchItem {
            appearance: Tensor::new(shape.clone(), appearance),
            motion: Tensor::new(shape, motion),
            clip_id,
            start_frame: t0,
        });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;

    fn random_clip(t: usize, h: usize, w: usize, seed: u64) -> VideoClip {
        let mut rng = SplitMix64::new(seed);
        let frames = (0..t * h * w * 3)
            .map(|_| (0.1 + 0.8 * rng.next_f64()) as f32)
            .collect();
        VideoClip::new(frames, t, h, w, 30.0)
    }

    #[test]
    fn diff_of_identical_frames_is_zero() {
        let frame: Vec<f32> = (0..4 * 4 * 3).map(|i| (i as f32) / 100.0).collect();
        let mut frames = frame.clone();
        frames.extend_from_slice(&frame);
        let clip = VideoClip::new(frames, 2, 4, 4, 30.0);
        assert!(frame_diff_normalized(&clip).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn diff_closed_form_tripled_frame() {
        let a = vec![0.2f32; 2 * 2 * 3];
        let b = vec![0.6f32; 2 * 2 * 3];
        let mut frames = a;
        frames.extend(b);
        let clip = VideoClip::new(frames, 2, 2, 2, 30.0);
        let expect = 0.4 / (0.8 + DIFF_EPS);
        for m in frame_diff_normalized(&clip) {
            assert!((m - expect).abs() < 1e-7, "got {}", m);
        }
    }

    #[test]
    fn diff_of_black_frames_is_zero() {
        let clip = VideoClip::new(vec![0.0; 2 * 2 * 2 * 3], 2, 2, 2, 30.0);
        assert!(frame_diff_normalized(&clip).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn diff_is_antisymmetric_under_frame_swap() {
        let clip = random_clip(2, 5, 5, 3);
        let mut rev_frames = clip.frames[5 * 5 * 3..].to_vec();
        rev_frames.extend_from_slice(&clip.frames[..5 * 5 * 3]);
        let rev = VideoClip::new(rev_frames, 2, 5, 5, 30.0);
        let fwd = frame_diff_normalized(&clip);
        let bwd = frame_diff_normalized(&rev);
        for (a, b) in fwd.iter().zip(&bwd) {
            assert!((a + b).abs() < 1e-7);
        }
    }

    #[test]
    fn diff_is_gain_invariant() {
        let clip = random_clip(3, 4, 4, 7);
        // halve instead of double so values stay in [0,1]; exact in binary fp
        let scaled = VideoClip::new(
            clip.frames.iter().map(|&v| v * 0.5).collect(),
            3,
            4,
            4,
            30.0,
        );
        let m1 = frame_diff_normalized(&clip);
        let m2 = frame_diff_normalized(&scaled);
        for (a, b) in m1.iter().zip(&m2) {
            assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn resize_constant_frame_stays_constant() {
        let clip = VideoClip::new(vec![0.4; 2 * 8 * 6 * 3], 2, 8, 6, 30.0);
        let out = resize_bilinear(&clip, 36, 36);
        assert_eq!(out.h, 36);
        assert!(out.frames.iter().all(|&v| (v - 0.4).abs() < 1e-7));
    }

    #[test]
    fn resize_is_identity_at_same_size() {
        let clip = random_clip(2, 36, 36, 11);
        let out = resize_bilinear(&clip, 36, 36);
        for (a, b) in clip.frames.iter().zip(&out.frames) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn resize_preserves_linear_ramp() {
        // horizontal ramp 0..=1 over 10 columns
        let (h, w) = (4, 10);
        let mut frames = Vec::new();
        for _t in 0..2 {
            for _y in 0..h {
                for x in 0..w {
                    for _c in 0..3 {
                        frames.push(x as f32 / (w - 1) as f32);
                    }
                }
            }
        }
        let clip = VideoClip::new(frames, 2, h, w, 30.0);
        let out = resize_bilinear(&clip, 4, 36);
        for y in 0..4 {
            for x in 0..36 {
                let expect = x as f32 / 35.0;
                let got = out.at(0, y, x, 0);
                assert!((got - expect).abs() < 1e-6, "x={} {} vs {}", x, got, expect);
            }
        }
    }

    #[test]
    fn window_counts_match_formula() {
        let clip = random_clip(201, 2, 2, 21);
        assert_eq!(window_clip(&clip, 100, 100, 0).unwrap().len(), 2);
        let clip = random_clip(101, 2, 2, 22);
        let items = window_clip(&clip, 100, 100, 0).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].motion.shape[0], 100);
        let clip = random_clip(103, 2, 2, 23);
        assert_eq!(window_clip(&clip, 100, 1, 0).unwrap().len(), 3);
    }

    #[test]
    fn window_rejects_short_clip() {
        let clip = random_clip(100, 2, 2, 24);
        let err = window_clip(&clip, 100, 1, 0).unwrap_err();
        assert_eq!(err, FrameError::TooShort { need: 101, have: 100 });
    }

    #[test]
    fn windows_are_standardized() {
        let clip = random_clip(40, 6, 6, 25);
        for item in window_clip(&clip, 16, 16, 0).unwrap() {
            for t in [&item.appearance, &item.motion] {
                let n = t.numel() as f64;
                let mean: f64 = t.data.iter().sum::<f64>() / n;
                let var: f64 = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn windows_tile_diffs_when_stride_equals_n() {
        let clip = random_clip(33, 3, 3, 26);
        let items = window_clip(&clip, 8, 8, 0).unwrap();
        assert_eq!(items.len(), 4);
        for (i, item) in items.iter().enumerate() {
            assert_eq!(item.start_frame, i * 8);
        }
    }
}
