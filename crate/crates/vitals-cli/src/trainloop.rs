//! Training driver: builds windows from dataset clips, steps the optimizer,
//! logs `step,loss,wall_ms` rows, writes periodic and final checkpoints, and
//! on a non-finite abort preserves the pre-step parameters in an abort
//! checkpoint so the failure can be inspected.

use std::path::{Path, PathBuf};
use std::time::Instant;

use vitals_core::frames::resize_bilinear;
use vitals_core::model::init_params;
use vitals_core::synth::SynthClip;
use vitals_core::train::{build_windows, TrainError, Trainer};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::csvio::{write_train_log, TrainLogRow};
use crate::CliError;

pub const TRAIN_LOG_NAME: &str = "train_log.csv";
pub const FINAL_CHECKPOINT_NAME: &str = "checkpoint_final.vtck";

/// A finished (or aborted) run's artifacts.
#[derive(Debug)]
pub struct TrainOutcome {
    pub rows: Vec<TrainLogRow>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Step `trainer` for its configured number of steps, writing artifacts
/// under `out_dir`. `checkpoint_every = 0` writes only the final checkpoint.
pub fn drive(trainer: &mut Trainer, out_dir: &Path) -> Result<TrainOutcome, CliError> {
    let steps = trainer.cfg.steps;
    let every = trainer.cfg.checkpoint_every;
    let log_path = out_dir.join(TRAIN_LOG_NAME);
    let mut rows: Vec<TrainLogRow> = Vec::with_capacity(steps);
    let mut clock = Instant::now();
    for _ in 0..steps {
        match trainer.step() {
            Ok(rec) => {
                let now = Instant::now();
                rows.push(TrainLogRow {
                    step: rec.step,
                    loss: rec.loss,
                    wall_ms: now.duration_since(clock).as_secs_f64() * 1e3,
                });
                clock = now;
                if every > 0 && rec.step % every == 0 && rec.step < steps {
                    let path = out_dir.join(format!("checkpoint_{:06}.vtck", rec.step));
                    save_checkpoint(&path, &trainer.model_cfg, &trainer.params)?;
                }
            }
            Err(TrainError::NonFinite { step }) => {
                // The trainer guarantees params are still the pre-step state.
                write_train_log(&rows, &log_path)?;
                let abort = out_dir.join(format!("checkpoint_abort_{:06}.vtck", step));
                save_checkpoint(&abort, &trainer.model_cfg, &trainer.params)?;
                return Err(CliError::runtime(format!(
                    "training aborted: non-finite loss/gradient/update at step {}; \
                     pre-step parameters saved to {}",
                    step,
                    abort.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_train_log(&rows, &log_path)?;
    let final_checkpoint = out_dir.join(FINAL_CHECKPOINT_NAME);
    save_checkpoint(&final_checkpoint, &trainer.model_cfg, &trainer.params)?;
    Ok(TrainOutcome { rows, final_checkpoint, log_path })
}

/// Build a trainer from the run configuration and dataset clips (resized to
/// the model input if the ingest section allows).
pub fn build_trainer(cfg: &RunConfig, clips: Vec<SynthClip>) -> Result<Trainer, CliError> {
    let model_cfg = cfg.model.to_core();
    let hw = model_cfg.backbone.input_hw;
    let mut prepared = Vec::with_capacity(clips.len());
    for mut sc in clips {
        if sc.clip.h != hw || sc.clip.w != hw {
            if !cfg.ingest.resize_to_model {
                return Err(CliError::Mismatch {
                    detail: format!(
                        "training clip is {}x{} but the model wants {}x{} and resizing is disabled",
                        sc.clip.h, sc.clip.w, hw, hw
                    ),
                });
            }
            sc.clip = resize_bilinear(&sc.clip, hw, hw);
        }
        prepared.push(sc);
    }
    let n = model_cfg.transformer.n_frames;
    let windows = build_windows(&prepared, n)?;
    let params = init_params(&model_cfg, cfg.train.seed);
    let trainer = Trainer::new(
        params,
        windows,
        model_cfg,
        cfg.loss.to_core(n),
        cfg.train.to_core(),
    )?;
    Ok(trainer)
}

/// Full training entry point: prepare, drive, return artifacts.
pub fn run_training(
    cfg: &RunConfig,
    clips: Vec<SynthClip>,
    out_dir: &Path,
) -> Result<TrainOutcome, CliError> {
    let mut trainer = build_trainer(cfg, clips)?;
    drive(&mut trainer, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::load_checkpoint;
    use crate::config::{LossSection, ModelSection, SynthSection};
    use crate::csvio::{read_train_log, strip_wall_ms};
    use vitals_core::model::ModelConfig;
    use vitals_core::sigproc::HR_BAND;
    use vitals_core::synth::{make_clip, RateProfile};

    fn tiny_run_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.model = ModelSection::from_core(&ModelConfig::tiny(8));
        cfg.synth = SynthSection {
            clips_train: 1,
            clips_val: 0,
            duration_s: 1.0,
            fps: 30.0,
            height: 12,
            width: 12,
            bpm_lo: 72.0,
            bpm_hi: 72.0,
            seed: 2,
            ..SynthSection::default()
        };
        // An 8-sample window at 30 Hz has no FFT bin inside the heart band;
        // a 32-point transform restores in-band bins.
        cfg.loss = LossSection { fft_len: 32, ..LossSection::default() };
        cfg.train.steps = 5;
        cfg.train.checkpoint_every = 2;
        cfg.train.seed = 1;
        cfg
    }

    fn train_clips(cfg: &RunConfig) -> Vec<SynthClip> {
        let s = &cfg.synth;
        vec![make_clip(
            &s.scene(11),
            &RateProfile::constant(72.0),
            HR_BAND,
            s.duration_s,
            s.fps,
            s.height,
            s.width,
            0.0,
            s.motion_cutoff_hz,
        )
        .unwrap()]
    }

    #[test]
    fn run_writes_log_and_checkpoints() {
        let cfg = tiny_run_config();
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_training(&cfg, train_clips(&cfg), dir.path()).unwrap();
        assert_eq!(outcome.rows.len(), 5);
        assert_eq!(outcome.rows[0].step, 1);
        assert!(outcome.rows.iter().all(|r| r.loss.is_finite() && r.wall_ms >= 0.0));

        // Periodic checkpoints at steps 2 and 4, plus the final one.
        assert!(dir.path().join("checkpoint_000002.vtck").exists());
        assert!(dir.path().join("checkpoint_000004.vtck").exists());
        let ckpt = load_checkpoint(&outcome.final_checkpoint).unwrap();
        assert_eq!(ckpt.config, cfg.model.to_core());

        let logged = read_train_log(&outcome.log_path).unwrap();
        assert_eq!(logged, outcome.rows);
    }

    #[test]
    fn reruns_match_after_stripping_wall_time() {
        let cfg = tiny_run_config();
        let a_dir = tempfile::tempdir().unwrap();
        let b_dir = tempfile::tempdir().unwrap();
        let a = run_training(&cfg, train_clips(&cfg), a_dir.path()).unwrap();
        let b = run_training(&cfg, train_clips(&cfg), b_dir.path()).unwrap();
        assert_eq!(strip_wall_ms(&a.rows), strip_wall_ms(&b.rows));
        let ckpt_a = std::fs::read(&a.final_checkpoint).unwrap();
        let ckpt_b = std::fs::read(&b.final_checkpoint).unwrap();
        assert_eq!(ckpt_a, ckpt_b);
    }

    #[test]
    fn non_finite_abort_saves_pre_step_state() {
        let cfg = tiny_run_config();
        let mut trainer = build_trainer(&cfg, train_clips(&cfg)).unwrap();
        // Poison the last parameter (the output head bias): the forward pass
        // stays well-defined until the final layer, then the loss is NaN.
        let mut flat = trainer.params.pack().data;
        let last = flat.len() - 1;
        flat[last] = f64::NAN;
        trainer.params = trainer.params.unpack(&flat).unwrap();
        let before: Vec<u64> = flat.iter().map(|v| v.to_bits()).collect();

        let dir = tempfile::tempdir().unwrap();
        let err = drive(&mut trainer, dir.path()).unwrap_err();
        assert!(err.to_string().contains("step 1"), "{}", err);
        let abort_path = dir.path().join("checkpoint_abort_000001.vtck");
        assert!(abort_path.exists());
        let saved = load_checkpoint(&abort_path).unwrap();
        let after: Vec<u64> = saved.params.pack().data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(after, before);
        // The (empty) log still exists for inspection.
        assert!(dir.path().join(TRAIN_LOG_NAME).exists());
    }

    #[test]
    fn resize_disabled_with_mismatched_clips_errors() {
        let mut cfg = tiny_run_config();
        cfg.synth.height = 8;
        cfg.synth.width = 8;
        cfg.ingest.resize_to_model = false;
        let s = &cfg.synth;
        let clips = vec![make_clip(
            &s.scene(11),
            &RateProfile::constant(72.0),
            HR_BAND,
            s.duration_s,
            s.fps,
            8,
            8,
            0.0,
            s.motion_cutoff_hz,
        )
        .unwrap()];
        assert!(matches!(
            build_trainer(&cfg, clips),
            Err(CliError::Mismatch { .. })
        ));
    }
}
