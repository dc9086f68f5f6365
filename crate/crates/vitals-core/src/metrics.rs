//! Continuous per-frame evaluation: sliding-window rate extraction and the
//! pooled mean-absolute / root-mean-square rate errors.


use libm::sqrt;

use crate::sigproc::{sliding_rate, BandLimits, RateSeries, SigError, Waveform};

/// Per-frame rate series from a predicted waveform (sliding in-band
/// spectral peak, window `win_s` seconds, hop `stride` frames).
pub fn continuous_rates(
    wave: &Waveform,
    band: BandLimits,
    win_s: f64,
    stride: usize,
) -> Result<RateSeries, SigError> {
    sliding_rate(wave, band, win_s, stride)
}

/// Continuous MAE and RMSE between predicted and ground-truth per-frame
/// rates: `cMAE = Σ|Δ|/N` and `cRMSE = sqrt(Σ Δ²/N)` over all N frames.
pub fn cmae_crmse(pred: &RateSeries, gt: &RateSeries) -> Result<(f64, f64), SigError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(SigError::BadParam {
            detail: alloc::format!(
                "rate series lengths differ: pred {}, gt {}",
                pred.len(),
                gt.len()
            ),
        });
    }
    if pred.fs != gt.fs {
        return Err(SigError::BadParam {
            detail: alloc::format!("rate series fs differ: pred {}, gt {}", pred.fs, gt.fs),
        });
    }
    let n = pred.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for (p, g) in pred.rates_bpm.iter().zip(&gt.rates_bpm) {
        let d = (p - g).abs();
        abs_sum += d;
        sq_sum += d * d;
    }
    Ok((abs_sum / n, sqrt(sq_sum / n)))
}

/// One clip's contribution to an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipEval {
    pub clip_id: usize,
    pub cmae: f64,
    pub crmse: f64,
    pub n_frames: usize,
}

impl ClipEval {
    pub fn new(clip_id: usize, pred: &RateSeries, gt: &RateSeries) -> Result<Self, SigError> {
        let (cmae, crmse) = cmae_crmse(pred, gt)?;
        Ok(Self { clip_id, cmae, crmse, n_frames: pred.len() })
    }
}

/// Frame-pooled aggregate over all evaluated clips: every frame counts once,
/// exactly as if all error samples were concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledMetrics {
    pub cmae: f64,
    pub crmse: f64,
    pub n_frames: usize,
}

/// Pool per-clip metrics into the all-frames aggregate. Per-clip sums are
/// recovered exactly from (metric, frame count), so pooling equals a direct
/// computation over the concatenated series.
pub fn pool_metrics(clips: &[ClipEval]) -> Option<PooledMetrics> {
    let total: usize = clips.iter().map(|c| c.n_frames).sum();
    if total == 0 {
        return None;
    }
    let abs_sum: f64 = clips.iter().map(|c| c.cmae * c.n_frames as f64).sum();
    let sq_sum: f64 = clips
        .iter()
        .map(|c| c.crmse * c.crmse * c.n_frames as f64)
        .sum();
    Some(PooledMetrics {
        cmae: abs_sum / total as f64,
        crmse: sqrt(sq_sum / total as f64),
        n_frames: total,
    })
}

/// Trim both series to their common length (predictions cover only whole
/// windows, so they are often a few frames shorter than the ground truth).
pub fn align_rates(pred: &RateSeries, gt: &RateSeries) -> (RateSeries, RateSeries) {
    let n = pred.len().min(gt.len());
    let cut = |r: &RateSeries| RateSeries {
        rates_bpm: r.rates_bpm[..n].to_vec(),
        fs: r.fs,
    };
    (cut(pred), cut(gt))
}
