//! Deterministic training loop: windowed clips with ground-truth pulse
//! first-differences, the frequency-domain correlation loss, global-norm
//! gradient clipping, and Adam on a packed parameter vector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{pow, sqrt};

use crate::autodiff::{Tape, TapeError, Tensor, Var};
use crate::frames::{window_clip, ClipBatchItem, FrameError};
use crate::loss::{max_cc_loss, LossConfig, LossError};
use crate::model::{model_forward, ModelConfig, ModelError, ModelParams};
use crate::rng::{seeded, uniform, Rng};
use crate::synth::SynthClip;

/// Optimizer and loop settings. `lr = 0` is allowed (a frozen run is the
/// cheapest determinism probe); negative or non-finite rates are not.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub steps: usize,
    /// Windows sampled (and averaged) per optimizer step.
    pub batch: usize,
    pub seed: u64,
    /// Maximum global gradient norm before the Adam update.
    pub grad_clip: f64,
    /// Snapshot cadence for the caller's observer; 0 disables periodic
    /// snapshots (the final state is always reported).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            steps: 100,
            batch: 1,
            seed: 0,
            grad_clip: 1.0,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(TrainError::BadParam { detail: "lr must be finite and >= 0".into() });
        }
        if self.steps == 0 {
            return Err(TrainError::BadParam { detail: "steps must be >= 1".into() });
        }
        if self.batch == 0 {
            return Err(TrainError::BadParam { detail: "batch must be >= 1".into() });
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(TrainError::BadParam { detail: "betas must lie in [0, 1)".into() });
        }
        if !(self.grad_clip > 0.0) {
            return Err(TrainError::BadParam { detail: "grad_clip must be > 0".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// No usable training window (all clips too short or degenerate).
    NoWindows,
    /// Loss or gradient became non-finite; `params` still hold the pre-step
    /// values so the caller can checkpoint them.
    NonFinite { step: usize },
    /// Ground-truth span does not cover the requested window.
    LengthMismatch { need: usize, have: usize },
    BadParam { detail: String },
    Frame(FrameError),
    Loss(LossError),
    Model(ModelError),
    Tape(TapeError),
}

impl From<FrameError> for TrainError {
    fn from(e: FrameError) -> Self {
        TrainError::Frame(e)
    }
}
impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        TrainError::Loss(e)
    }
}
impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}
impl From<TapeError> for TrainError {
    fn from(e: TapeError) -> Self {
        TrainError::Tape(e)
    }
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::NoWindows => write!(f, "no trainable windows in the dataset"),
            TrainError::NonFinite { step } => {
                write!(f, "non-finite loss or gradient at step {}", step)
            }
            TrainError::LengthMismatch { need, have } => {
                write!(f, "ground truth too short: need {} samples, have {}", need, have)
            }
            TrainError::BadParam { detail } => write!(f, "bad training parameter: {}", detail),
            TrainError::Frame(e) => write!(f, "{}", e),
            TrainError::Loss(e) => write!(f, "{}", e),
            TrainError::Model(e) => write!(f, "{}", e),
            TrainError::Tape(e) => write!(f, "{}", e),
        }
    }
}

/// First differences of the ground-truth pulse over a window of `n` motion
/// steps starting at `start_frame`: entry k is
/// `pulse[start_frame + k + 1] − pulse[start_frame + k]`.
pub fn ground_truth_diff(
    pulse: &[f64],
    start_frame: usize,
    n: usize,
) -> Result<Vec<f64>, TrainError> {
    let need = start_frame + n + 1;
    if pulse.len() < need {
        return Err(TrainError::LengthMismatch { need, have: pulse.len() });
    }
    Ok((0..n)
        .map(|k| pulse[start_frame + k + 1] - pulse[start_frame + k])
        .collect())
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// One training window: preprocessed frames plus aligned ground-truth
/// first differences.
#[derive(Debug, Clone)]
pub struct TrainWindow {
    pub item: ClipBatchItem,
    pub gt_diff: Vec<f64>,
    pub fs: f64,
}

/// Cut every clip into disjoint windows of `n` motion steps and pair each
/// with its ground-truth pulse differences. Windows whose ground truth is
/// (near-)constant are excluded — the loss has nothing to match there.
pub fn build_windows(clips: &[SynthClip], n: usize) -> Result<Vec<TrainWindow>, TrainError> {
    let mut out = Vec::new();
    for (clip_id, sc) in clips.iter().enumerate() {
        let items = window_clip(&sc.clip, n, n, clip_id)?;
        for item in items {
            let gt = ground_truth_diff(&sc.pulse.samples, item.start_frame, n)?;
            if variance(&gt) <= 1e-12 {
                continue;
            }
            out.push(TrainWindow { item, gt_diff: gt, fs: sc.clip.fps });
        }
    }
    if out.is_empty() {
        return Err(TrainError::NoWindows);
    }
    Ok(out)
}

/// Scale `g` so its Euclidean norm is at most `max_norm`; returns the norm
/// it had before clipping.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = sqrt(g.iter().map(|v| v * v).sum::<f64>());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for v in g.iter_mut() {
            *v *= s;
        }
    }
    norm
}

/// Adam moment buffers over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// One bias-corrected update of `theta` in place.
    pub fn update(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = cfg.betas;
        let mc = 1.0 - pow(b1, self.t as f64);
        let vc = 1.0 - pow(b2, self.t as f64);
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / mc;
            let v_hat = self.v[i] / vc;
            theta[i] -= cfg.lr * m_hat / (sqrt(v_hat) + cfg.eps);
        }
    }
}

/// Per-step outcome for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub loss: f64,
    /// Pre-clip global gradient norm.
    pub grad_norm: f64,
    /// True when every sampled window's prediction was degenerate.
    pub all_degenerate: bool,
}

/// Deterministic trainer: owns the parameters, optimizer state, and window
/// sampler. Drive it with [`Trainer::step`] (the caller handles timing,
/// logging, and checkpoint IO) or [`Trainer::run`].
pub struct Trainer {
    pub params: ModelParams,
    pub model_cfg: ModelConfig,
    pub loss_cfg: LossConfig,
    pub cfg: TrainConfig,
    windows: Vec<TrainWindow>,
    adam: AdamState,
    rng: Rng,
    step: usize,
}

impl Trainer {
    pub fn new(
        params: ModelParams,
        windows: Vec<TrainWindow>,
        model_cfg: ModelConfig,
        loss_cfg: LossConfig,
        cfg: TrainConfig,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        model_cfg.validate()?;
        if windows.is_empty() {
            return Err(TrainError::NoWindows);
        }
        let n = model_cfg.transformer.n_frames;
        for w in &windows {
            if w.gt_diff.len() != n {
                return Err(TrainError::LengthMismatch { need: n, have: w.gt_diff.len() });
            }
        }
        let dim = params.count();
        let rng = seeded(cfg.seed);
        Ok(Self {
            params,
            model_cfg,
            loss_cfg,
            cfg,
            windows,
            adam: AdamState::new(dim),
            rng,
            step: 0,
        })
    }

    /// Steps completed so far.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn sample_index(&mut self) -> usize {
        let u = uniform(&mut self.rng);
        let i = (u * self.windows.len() as f64) as usize;
        i.min(self.windows.len() - 1)
    }

    /// One optimizer step: sample `batch` windows, average their losses,
    /// backpropagate, clip, and update. On a non-finite loss or gradient the
    /// parameters are left untouched (pre-step state) and an error reports
    /// the 1-based step index.
    pub fn step(&mut self) -> Result<StepRecord, TrainError> {
        let step = self.step + 1;
        let flat = self.params.pack();
        let dim = flat.numel();
        let mut tape = Tape::new();
        let leaf = tape.leaf(flat);
        let bound = self.params.bind_packed(&mut tape, leaf)?;

        let mut losses: Vec<Var> = Vec::with_capacity(self.cfg.batch);
        let mut all_degenerate = true;
        for _ in 0..self.cfg.batch {
            let idx = self.sample_index();
            let w = &self.windows[idx];
            let app = tape.constant(w.item.appearance.clone());
            let mot = tape.constant(w.item.motion.clone());
            let y = model_forward(&mut tape, app, mot, &bound, &self.model_cfg)?;
            let (loss, degenerate) = max_cc_loss(&mut tape, y, &w.gt_diff, &self.loss_cfg, w.fs)?;
            all_degenerate &= degenerate;
            losses.push(loss);
        }
        let mut total = losses[0];
        for &l in &losses[1..] {
            total = tape.add(total, l)?;
        }
        let inv = tape.scalar_const(1.0 / self.cfg.batch as f64);
        let mean_loss = tape.mul(total, inv)?;
        let loss_val = tape.value(mean_loss).data[0];
        if !loss_val.is_finite() {
            return Err(TrainError::NonFinite { step });
        }
        tape.backward(mean_loss)?;
        let mut grad = tape.grad(leaf).to_vec();
        if grad.is_empty() {
            // Every contribution was a constant (degenerate predictions):
            // zero gradient, but the step still counts.
            grad = vec![0.0; dim];
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite { step });
        }
        let grad_norm = clip_global_norm(&mut grad, self.cfg.grad_clip);
        let mut theta = tape.value(leaf).data.clone();
        self.adam.update(&mut theta, &grad, &self.cfg);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite { step });
        }
        self.params = self.params.unpack(&theta)?;
        self.step = step;
        Ok(StepRecord { step, loss: loss_val, grad_norm, all_degenerate })
    }

    /// Run `cfg.steps` steps, invoking `observer` after each one with the
    /// record and the post-step parameters. Checkpoint cadence is the
    /// observer's business: it sees every step.
    pub fn run(
        &mut self,
        mut observer: impl FnMut(&StepRecord, &ModelParams),
    ) -> Result<Vec<StepRecord>, TrainError> {
        let mut records = Vec::with_capacity(self.cfg.steps);
        for _ in 0..self.cfg.steps {
            let rec = self.step()?;
            observer(&rec, &self.params);
            records.push(rec);
        }
        Ok(records)
    }
}

impl ModelParams {
    /// Rebuild a parameter set from a flat vector laid out in canonical
    /// order (the inverse of [`ModelParams::pack`]).
    pub fn unpack(&self, flat: &[f64]) -> Result<ModelParams, TrainError> {
        if flat.len() != self.count() {
            return Err(TrainError::LengthMismatch { need: self.count(), have: flat.len() });
        }
        let mut off = 0usize;
        let out = self.try_map::<Tensor, TrainError>(&mut |t| {
            let piece = Tensor::new(t.shape.clone(), flat[off..off + t.numel()].to_vec());
            off += t.numel();
            Ok(piece)
        })?;
        Ok(out)
    }
}
