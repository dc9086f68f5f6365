//! End-to-end inference: window a clip, run the backbone and temporal
//! encoder per window, then integrate the predicted first differences into
//! a standardized, bandpassed waveform.

use alloc::vec::Vec;

use crate::autodiff::{Tape, TapeError, Var};
use crate::frames::{window_clip, VideoClip};
use crate::sigproc::{bandpass, cumsum, standardize, BandLimits, Waveform};

use super::{backbone_forward, transformer_forward, ModelConfig, ModelError, ModelParams, ParamVars};

/// One full forward pass on the tape: appearance/motion `[n, h, w, 3]` in,
/// predicted first-difference waveform `[n]` out.
pub fn model_forward(
    tape: &mut Tape,
    appearance: Var,
    motion: Var,
    params: &ParamVars,
    cfg: &ModelConfig,
) -> Result<Var, TapeError> {
    let features = backbone_forward(tape, appearance, motion, params, &cfg.backbone)?;
    transformer_forward(tape, features, params, &cfg.transformer, None)
}

/// Predict a physiological waveform for a whole clip.
///
/// The clip is cut into non-overlapping windows of `cfg.transformer.n_frames`
/// motion steps (a clip must be at least one frame longer than the window).
/// Per-window predictions are concatenated in clip order, cumulative-summed,
/// standardized, and bandpassed to `band`.
///
/// Each window's predicted differences are centered before concatenation:
/// the training objective subtracts the window mean (the correlation is
/// variance-normalized), so a prediction is only defined up to an additive
/// per-window constant — left in place it would integrate into a ramp that
/// buries the waveform under low-frequency energy.
pub fn infer_waveform(
    clip: &VideoClip,
    params: &ModelParams,
    cfg: &ModelConfig,
    band: BandLimits,
) -> Result<Waveform, ModelError> {
    cfg.validate()?;
    let n = cfg.transformer.n_frames;
    let items = window_clip(clip, n, n, 0)?;
    let mut diffs: Vec<f64> = Vec::with_capacity(items.len() * n);
    for item in &items {
        // A fresh tape per window keeps peak memory at one window's graph.
        let mut tape = Tape::new();
        let p = params.bind_constants(&mut tape);
        let app = tape.constant(item.appearance.clone());
        let mot = tape.constant(item.motion.clone());
        let out = model_forward(&mut tape, app, mot, &p, cfg)?;
        let vals = &tape.value(out).data;
        let mean = vals.iter().sum::<f64>() / n as f64;
        diffs.extend(vals.iter().map(|v| v - mean));
    }
    let integrated = cumsum(&Waveform::new(diffs, clip.fps));
    let (wave, _degenerate) = standardize(&integrated);
    Ok(bandpass(&wave, band)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check_subset, Tensor};
    use crate::loss::{max_cc_loss, CSource, LossConfig};
    use crate::model::{init_params, param_count};
    use crate::rng::{seeded, uniform_in};
    use crate::sigproc::{dominant_rate, HR_BAND};
    use crate::synth::{gen_pulse, render_clip, RateProfile, SceneParams};
    use alloc::vec;

    fn synth_clip(t: usize, hw: usize, bpm: f64, seed: u64) -> VideoClip {
        let fs = 30.0;
        let profile = RateProfile::constant(bpm);
        let (pulse, rate) = gen_pulse(t as f64 / fs, fs, &profile, HR_BAND, seed).unwrap();
        let flat = Waveform::new(vec![0.0; pulse.len()], fs);
        let params = SceneParams { seed, ..SceneParams::default() };
        render_clip(&params, &pulse, &flat, &rate, hw, hw).unwrap().clip
    }

    #[test]
    fn untrained_model_completes_on_101_frame_clip() {
        let cfg = ModelConfig::small();
        let params = init_params(&cfg, 7);
        let clip = synth_clip(101, cfg.backbone.input_hw, 72.0, 3);
        let wave = infer_waveform(&clip, &params, &cfg, HR_BAND).unwrap();
        // One 64-frame window fits in 101 frames at stride 64.
        assert_eq!(wave.len(), 64);
        assert!(wave.samples.iter().all(|v| v.is_finite()));
        // Bandpassed output: a rate is always recoverable in-band.
        let bpm = dominant_rate(&wave, HR_BAND).unwrap();
        assert!((42.0..=150.0).contains(&bpm));
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = ModelConfig::tiny(8);
        let params = init_params(&cfg, 1);
        let clip = synth_clip(20, cfg.backbone.input_hw, 66.0, 4);
        let a = infer_waveform(&clip, &params, &cfg, HR_BAND).unwrap();
        let b = infer_waveform(&clip, &params, &cfg, HR_BAND).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.len(), 16); // two 8-frame windows
    }

    #[test]
    fn too_short_clip_is_rejected() {
        let cfg = ModelConfig::tiny(8);
        let params = init_params(&cfg, 1);
        let clip = synth_clip(8, cfg.backbone.input_hw, 66.0, 4);
        // 8 frames = 7 diffs < one 8-step window.
        assert!(matches!(
            infer_waveform(&clip, &params, &cfg, HR_BAND),
            Err(ModelError::Frame(_))
        ));
    }

    /// Finite-difference check of the whole model: pack every parameter into
    /// one flat leaf, run backbone + transformer + correlation loss, and
    /// compare analytic gradients on a spread of coordinates.
    #[test]
    fn full_model_gradient_check() {
        let n = 8;
        let cfg = ModelConfig::tiny6(n);
        let params = init_params(&cfg, 17);
        let hw = cfg.backbone.input_hw;
        let mut rng = seeded(99);
        let app = Tensor::new(
            vec![n, hw, hw, 3],
            (0..n * hw * hw * 3).map(|_| uniform_in(&mut rng, -1.0, 1.0)).collect(),
        );
        let mot = Tensor::new(
            vec![n, hw, hw, 3],
            (0..n * hw * hw * 3).map(|_| uniform_in(&mut rng, -0.5, 0.5)).collect(),
        );
        // Reference with two in-band tones at fs = 6 Hz (bins 2 and 3 of 8,
        // 1.5 and 2.25 Hz) so the correlation peak is unique and stable
        // under perturbation.
        let fs = 6.0;
        let y_ref: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let two_pi = 2.0 * core::f64::consts::PI;
                libm::sin(two_pi * 2.0 * t) + 0.6 * libm::sin(two_pi * 3.0 * t + 0.4)
            })
            .collect();
        let loss_cfg = LossConfig {
            band: HR_BAND,
            c_source: CSource::Predicted,
            fft_len: n,
        };

        let flat = params.pack();
        let build = |tape: &mut Tape, leaf: Var| -> Result<Var, TapeError> {
            let bound = params.bind_packed(tape, leaf)?;
            let a = tape.constant(app.clone());
            let m = tape.constant(mot.clone());
            let y = model_forward(tape, a, m, &bound, &cfg)?;
            let (loss, degenerate) = max_cc_loss(tape, y, &y_ref, &loss_cfg, fs)
                .map_err(|e| TapeError::Unsupported {
                    op: "max_cc_loss",
                    detail: alloc::format!("{:?}", e),
                })?;
            assert!(!degenerate);
            Ok(loss)
        };

        // Probe a deterministic spread of coordinates across every tensor
        // family (full probing would re-run the forward ~6400 times).
        let total = flat.numel();
        assert_eq!(total, param_count(&cfg));
        let coords: Vec<usize> = (0..97).map(|i| (i * total) / 97).collect();
        let report = grad_check_subset(build, &flat, 1e-5, 1e-4, &coords).unwrap();
        assert!(
            report.pass,
            "max rel err {} at packed coordinate {}",
            report.max_rel_err, report.worst_coord
        );
    }

    #[test]
    fn infer_matches_manual_window_concatenation() {
        let cfg = ModelConfig::tiny(8);
        let params = init_params(&cfg, 23);
        let clip = synth_clip(20, cfg.backbone.input_hw, 80.0, 6);
        let items = window_clip(&clip, 8, 8, 0).unwrap();
        let mut manual = Vec::new();
        for item in &items {
            let mut tape = Tape::new();
            let p = params.bind_constants(&mut tape);
            let a = tape.constant(item.appearance.clone());
            let m = tape.constant(item.motion.clone());
            let out = model_forward(&mut tape, a, m, &p, &cfg).unwrap();
            let vals = &tape.value(out).data;
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            manual.extend(vals.iter().map(|v| v - mean));
        }
        let integrated = cumsum(&Waveform::new(manual, clip.fps));
        let (wave, _) = standardize(&integrated);
        let expect = bandpass(&wave, HR_BAND).unwrap();
        let got = infer_waveform(&clip, &params, &cfg, HR_BAND).unwrap();
        assert_eq!(got.samples, expect.samples);
    }
}
