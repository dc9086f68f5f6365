//! JSON run configuration: one document with `synth`, `ingest`, `model`,
//! `train`, `loss`, and `eval` sections. Every field has an explicit default,
//! unknown keys are rejected, and every artifact-producing command writes the
//! fully resolved document beside its outputs so a run can be reproduced from
//! the echoed file alone.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vitals_core::fft::next_pow2;
use vitals_core::loss::{CSource, LossConfig};
use vitals_core::model::{BackboneConfig, ModelConfig, TransformerConfig};
use vitals_core::sigproc::{BandLimits, HR_BAND, RR_BAND};
use vitals_core::synth::SceneParams;
use vitals_core::train::TrainConfig;

use crate::{read_file, write_file, CliError};

/// File name the resolved configuration is echoed under in output dirs.
pub const RESOLVED_CONFIG_NAME: &str = "config.resolved.json";

/// `{lo, hi}` frequency band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    pub lo: f64,
    pub hi: f64,
}

impl BandSection {
    pub fn hr() -> Self {
        Self { lo: HR_BAND.lo, hi: HR_BAND.hi }
    }

    pub fn rr() -> Self {
        Self { lo: RR_BAND.lo, hi: RR_BAND.hi }
    }

    pub fn to_core(self) -> BandLimits {
        BandLimits { lo: self.lo, hi: self.hi }
    }
}

/// Synthetic-dataset parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// Number of training clips.
    pub clips_train: usize,
    /// Number of held-out validation clips.
    pub clips_val: usize,
    pub duration_s: f64,
    pub fps: f64,
    pub height: usize,
    pub width: usize,
    /// Per-clip constant rates are spread evenly across this bpm range
    /// (train and validation clips interleave so no rate repeats).
    pub bpm_lo: f64,
    pub bpm_hi: f64,
    /// RMS amplitude of the shared motion modulation (0 disables it).
    pub motion_amplitude: f64,
    pub motion_cutoff_hz: f64,
    /// Gaussian sensor noise standard deviation per value.
    pub noise_sigma: f64,
    /// Diffuse modulation mix `(motion weight, pulse weight)`.
    pub psi_gain: (f64, f64),
    /// Specular modulation mix `(motion weight, pulse weight)`.
    pub phi_gain: (f64, f64),
    /// Diffuse albedo factor outside the skin region.
    pub bg_gain: f64,
    /// Master seed; each clip derives its own child seed from it.
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let scene = SceneParams::default();
        Self {
            clips_train: 8,
            clips_val: 4,
            duration_s: 12.0,
            fps: 30.0,
            height: 36,
            width: 36,
            bpm_lo: 48.0,
            bpm_hi: 120.0,
            motion_amplitude: 0.0,
            motion_cutoff_hz: 0.35,
            noise_sigma: scene.noise_sigma,
            psi_gain: scene.psi_gain,
            phi_gain: scene.phi_gain,
            bg_gain: scene.bg_gain,
            seed: 7,
        }
    }
}

impl SynthSection {
    /// Scene parameters for one clip (everything but the per-clip seed).
    pub fn scene(&self, seed: u64) -> SceneParams {
        SceneParams {
            noise_sigma: self.noise_sigma,
            psi_gain: self.psi_gain,
            phi_gain: self.phi_gain,
            bg_gain: self.bg_gain,
            seed,
            ..SceneParams::default()
        }
    }
}

/// Clip-loading behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    /// Bilinearly resize loaded clips to the model's input size when they
    /// differ; when false a size mismatch is an error.
    pub resize_to_model: bool,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self { resize_to_model: true }
    }
}

/// Model architecture; mirrors the core configuration field-for-field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub input_hw: usize,
    pub channels: [usize; 2],
    pub d: usize,
    pub d_t: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub n_frames: usize,
    pub use_cls: bool,
    pub use_pe: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self::from_core(&ModelConfig::hr())
    }
}

impl ModelSection {
    pub fn from_core(cfg: &ModelConfig) -> Self {
        Self {
            input_hw: cfg.backbone.input_hw,
            channels: cfg.backbone.channels,
            d: cfg.backbone.d,
            d_t: cfg.transformer.d_t,
            heads: cfg.transformer.heads,
            layers: cfg.transformer.layers,
            mlp_hidden: cfg.transformer.mlp_hidden,
            n_frames: cfg.transformer.n_frames,
            use_cls: cfg.transformer.use_cls,
            use_pe: cfg.transformer.use_pe,
        }
    }

    pub fn to_core(&self) -> ModelConfig {
        ModelConfig {
            backbone: BackboneConfig {
                input_hw: self.input_hw,
                channels: self.channels,
                d: self.d,
            },
            transformer: TransformerConfig {
                d_t: self.d_t,
                heads: self.heads,
                layers: self.layers,
                mlp_hidden: self.mlp_hidden,
                n_frames: self.n_frames,
                use_cls: self.use_cls,
                use_pe: self.use_pe,
            },
        }
    }
}

/// Optimization parameters; mirrors the core configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch: usize,
    /// Seeds both the parameter initialization and window sampling.
    pub seed: u64,
    pub grad_clip: f64,
    /// Checkpoint cadence in steps (0 = only the final checkpoint).
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let core = TrainConfig::default();
        Self {
            lr: core.lr,
            beta1: core.betas.0,
            beta2: core.betas.1,
            eps: core.eps,
            steps: core.steps,
            batch: core.batch,
            seed: core.seed,
            grad_clip: core.grad_clip,
            checkpoint_every: core.checkpoint_every,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            betas: (self.beta1, self.beta2),
            eps: self.eps,
            steps: self.steps,
            batch: self.batch,
            seed: self.seed,
            grad_clip: self.grad_clip,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

/// Which signal's spectrum defines the loss's in-band power ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CSourceSection {
    Predicted,
    Reference,
}

impl CSourceSection {
    pub fn to_core(self) -> CSource {
        match self {
            CSourceSection::Predicted => CSource::Predicted,
            CSourceSection::Reference => CSource::Reference,
        }
    }
}

/// Training-loss parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub band: BandSection,
    pub c_source: CSourceSection,
    /// FFT length; 0 selects the next power of two above the window length.
    pub fft_len: usize,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            band: BandSection::hr(),
            c_source: CSourceSection::Predicted,
            fft_len: 0,
        }
    }
}

impl LossSection {
    pub fn to_core(&self, n_frames: usize) -> LossConfig {
        LossConfig {
            band: self.band.to_core(),
            c_source: self.c_source.to_core(),
            fft_len: if self.fft_len == 0 {
                next_pow2(n_frames)
            } else {
                self.fft_len
            },
        }
    }
}

/// Continuous-evaluation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub band: BandSection,
    /// Sliding spectral window in seconds.
    pub window_s: f64,
    /// Window hop in frames.
    pub stride: usize,
    /// Frames shown in mask exports.
    pub mask_frames: usize,
    /// Projection window of the plane-orthogonal-to-skin baseline, seconds.
    pub pos_window_s: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            band: BandSection::hr(),
            window_s: 10.0,
            stride: 1,
            mask_frames: 4,
            pos_window_s: 1.6,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthSection,
    pub ingest: IngestSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub loss: LossSection,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Respiration preset: wide-window model, slow band, long clips.
    pub fn rr() -> Self {
        let mut cfg = Self::default();
        cfg.model = ModelSection::from_core(&ModelConfig::rr());
        cfg.loss.band = BandSection::rr();
        cfg.eval.band = BandSection::rr();
        cfg.eval.window_s = 30.0;
        cfg.synth.duration_s = 40.0;
        cfg.synth.bpm_lo = 9.0;
        cfg.synth.bpm_hi = 19.0;
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = read_file(path)?;
        let cfg: RunConfig = serde_json::from_slice(&bytes).map_err(|e| {
            CliError::usage(format!("invalid config {}: {}", path.display(), e))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field sanity checks beyond what serde enforces.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model
            .to_core()
            .validate()
            .map_err(|e| CliError::usage(format!("invalid model section: {}", e)))?;
        self.train
            .to_core()
            .validate()
            .map_err(|e| CliError::usage(format!("invalid train section: {}", e)))?;
        for (name, band) in [("loss", self.loss.band), ("eval", self.eval.band)] {
            if !(band.lo > 0.0) || !(band.hi > band.lo) {
                return Err(CliError::usage(format!(
                    "invalid {} band: need 0 < lo < hi, got [{}, {}]",
                    name, band.lo, band.hi
                )));
            }
        }
        let s = &self.synth;
        if s.height < 4 || s.width < 4 {
            return Err(CliError::usage("synth frames must be at least 4x4"));
        }
        if !(s.fps > 0.0) || !(s.duration_s > 0.0) {
            return Err(CliError::usage("synth fps and duration must be positive"));
        }
        if !(s.bpm_lo > 0.0) || !(s.bpm_hi >= s.bpm_lo) {
            return Err(CliError::usage("synth bpm range must satisfy 0 < lo <= hi"));
        }
        if s.clips_train == 0 && s.clips_val == 0 {
            return Err(CliError::usage("synth must produce at least one clip"));
        }
        if self.eval.stride == 0 {
            return Err(CliError::usage("eval stride must be at least 1"));
        }
        if !(self.eval.window_s > 0.0) {
            return Err(CliError::usage("eval window must be positive"));
        }
        if self.eval.mask_frames == 0 {
            return Err(CliError::usage("mask export needs at least one frame"));
        }
        Ok(())
    }

    /// Fully resolved JSON (every field explicit), trailing newline.
    pub fn resolved_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Echo the resolved configuration into `out_dir`.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<(), CliError> {
        write_file(&out_dir.join(RESOLVED_CONFIG_NAME), self.resolved_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_materialize_and_round_trip() {
        let cfg = RunConfig::default();
        let json = cfg.resolved_json();
        // Every section and every default value is spelled out.
        for key in [
            "synth", "ingest", "model", "train", "loss", "eval", "clips_train",
            "resize_to_model", "n_frames", "checkpoint_every", "c_source", "window_s",
        ] {
            assert!(json.contains(key), "resolved config missing {}", key);
        }
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shipped_bands_appear_verbatim() {
        let hr = RunConfig::default().resolved_json();
        assert!(hr.contains("\"lo\": 0.7") && hr.contains("\"hi\": 2.5"), "{}", hr);
        let rr = RunConfig::rr().resolved_json();
        assert!(rr.contains("\"lo\": 0.13") && rr.contains("\"hi\": 0.34"), "{}", rr);
    }

    #[test]
    fn unknown_keys_rejected_at_any_level() {
        let top: Result<RunConfig, _> = serde_json::from_str(r#"{"bogus": 1}"#);
        assert!(top.unwrap_err().to_string().contains("bogus"));
        let nested: Result<RunConfig, _> =
            serde_json::from_str(r#"{"train": {"learning_rate": 0.1}}"#);
        assert!(nested.unwrap_err().to_string().contains("learning_rate"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"train": {"steps": 5}}"#).unwrap();
        assert_eq!(cfg.train.steps, 5);
        assert_eq!(cfg.train.lr, TrainConfig::default().lr);
        assert_eq!(cfg.model, ModelSection::default());
    }

    #[test]
    fn model_section_round_trips_through_core() {
        for core in [
            ModelConfig::hr(),
            ModelConfig::rr(),
            ModelConfig::tiny(8),
            ModelConfig::small(),
        ] {
            assert_eq!(ModelSection::from_core(&core).to_core(), core);
        }
    }

    #[test]
    fn loss_section_auto_fft_len() {
        let loss = LossSection::default();
        assert_eq!(loss.to_core(100).fft_len, 128);
        let fixed = LossSection { fft_len: 64, ..LossSection::default() };
        assert_eq!(fixed.to_core(100).fft_len, 64);
    }

    #[test]
    fn validate_rejects_bad_band_and_sizes() {
        let mut cfg = RunConfig::default();
        cfg.eval.band = BandSection { lo: 2.5, hi: 0.7 };
        assert!(matches!(cfg.validate(), Err(CliError::Usage { .. })));
        let mut cfg = RunConfig::default();
        cfg.synth.height = 2;
        assert!(matches!(cfg.validate(), Err(CliError::Usage { .. })));
    }

    #[test]
    fn load_reports_usage_error_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"synth": {"fps": "fast"}}"#).unwrap();
        match RunConfig::load(&path) {
            Err(e @ CliError::Usage { .. }) => {
                assert_eq!(e.exit_code(), 2);
                assert!(e.to_string().contains("cfg.json"));
            }
            other => panic!("expected usage error, got {:?}", other),
        }
    }
}
