//! Continuous-evaluation reports: run a method over every manifest clip,
//! extract per-frame rates from its predicted waveform, score against the
//! per-frame ground truth, and pool per-clip absolute/squared error sums
//! into one aggregate over all scored frames. Per-clip failures are recorded
//! and excluded from the aggregate rather than poisoning it.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vitals_core::baselines::{green_method, ica_method, pos_method, spatial_average};
use vitals_core::frames::resize_bilinear;
use vitals_core::metrics::{align_rates, continuous_rates, pool_metrics, ClipEval};
use vitals_core::model::{infer_waveform, ModelConfig, ModelParams};
use vitals_core::sigproc::RateSeries;

use crate::config::{BandSection, EvalSection, IngestSection};
use crate::manifest::{load_clip, ClipEntry, Manifest, Split};
use crate::CliError;

/// What to run per clip.
pub enum MethodSpec<'a> {
    Green,
    Pos,
    Ica,
    Model {
        params: &'a ModelParams,
        config: &'a ModelConfig,
    },
}

impl MethodSpec<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::Green => "green",
            MethodSpec::Pos => "pos",
            MethodSpec::Ica => "ica",
            MethodSpec::Model { .. } => "model",
        }
    }
}

/// Everything an evaluation run reads.
pub struct EvalContext<'a> {
    pub base: &'a Path,
    pub manifest: &'a Manifest,
    /// Restrict to one split; `None` evaluates every clip.
    pub split: Option<Split>,
    pub eval: &'a EvalSection,
    pub ingest: &'a IngestSection,
    /// 1 forces the sequential path; anything else uses the thread pool.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    pub clip_id: usize,
    /// Scored frames (0 when the clip failed).
    pub n_frames: usize,
    pub cmae: Option<f64>,
    pub crmse: Option<f64>,
    /// Failure description; failed clips are excluded from the aggregate.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub cmae: f64,
    pub crmse: f64,
    /// Total scored frames pooled across clips.
    pub n_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub band: BandSection,
    pub window_s: f64,
    pub stride: usize,
    pub clips: Vec<ClipReport>,
    /// `None` only when every clip failed.
    pub aggregate: Option<AggregateReport>,
    /// Number of failed (excluded) clips; nonzero marks partial coverage.
    pub failed_clips: usize,
}

/// A finished run: the report plus each scored clip's predicted rates
/// (aligned to the scored span), for per-clip CSV export.
pub struct EvalRun {
    pub report: EvalReport,
    pub predictions: Vec<(usize, RateSeries)>,
}

fn eval_one(
    spec: &MethodSpec<'_>,
    ctx: &EvalContext<'_>,
    entry: &ClipEntry,
) -> Result<(ClipEval, RateSeries), CliError> {
    let clip = load_clip(ctx.base, entry)?;
    let band = ctx.eval.band.to_core();
    let wave = match spec {
        MethodSpec::Green => {
            let trace = spatial_average(&clip.clip, None).map_err(CliError::from)?;
            green_method(&trace, band)?
        }
        MethodSpec::Pos => {
            let trace = spatial_average(&clip.clip, None).map_err(CliError::from)?;
            pos_method(&trace, band, ctx.eval.pos_window_s)?
        }
        MethodSpec::Ica => {
            let trace = spatial_average(&clip.clip, None).map_err(CliError::from)?;
            // Convergence fallback inside ica_method is not a failure.
            ica_method(&trace, band, entry.seed)?.0
        }
        MethodSpec::Model { params, config } => {
            let hw = config.backbone.input_hw;
            let video = if clip.clip.h == hw && clip.clip.w == hw {
                clip.clip
            } else if ctx.ingest.resize_to_model {
                resize_bilinear(&clip.clip, hw, hw)
            } else {
                return Err(CliError::Mismatch {
                    detail: format!(
                        "clip {} is {}x{} but the model wants {}x{} and resizing is disabled",
                        entry.clip_id, clip.clip.h, clip.clip.w, hw, hw
                    ),
                });
            };
            infer_waveform(&video, params, config, band)?
        }
    };
    let pred = continuous_rates(&wave, band, ctx.eval.window_s, ctx.eval.stride)?;
    let (pred, gt) = align_rates(&pred, &clip.rate_gt);
    let eval = ClipEval::new(entry.clip_id, &pred, &gt)?;
    Ok((eval, pred))
}

/// Run `spec` over the selected clips and build the report.
pub fn run_eval(spec: &MethodSpec<'_>, ctx: &EvalContext<'_>) -> Result<EvalRun, CliError> {
    let entries: Vec<&ClipEntry> = match ctx.split {
        Some(split) => ctx.manifest.split(split),
        None => ctx.manifest.clips.iter().collect(),
    };
    if entries.is_empty() {
        return Err(CliError::usage("no clips selected for evaluation"));
    }
    let outcomes: Vec<Result<(ClipEval, RateSeries), CliError>> = if ctx.threads == 1 {
        entries.iter().map(|e| eval_one(spec, ctx, e)).collect()
    } else {
        entries.par_iter().map(|e| eval_one(spec, ctx, e)).collect()
    };

    let mut clips = Vec::with_capacity(outcomes.len());
    let mut scored = Vec::new();
    let mut predictions = Vec::new();
    let mut failed = 0usize;
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok((eval, pred)) => {
                clips.push(ClipReport {
                    clip_id: entry.clip_id,
                    n_frames: eval.n_frames,
                    cmae: Some(eval.cmae),
                    crmse: Some(eval.crmse),
                    error: None,
                });
                predictions.push((entry.clip_id, pred));
                scored.push(eval);
            }
            Err(e) => {
                failed += 1;
                clips.push(ClipReport {
                    clip_id: entry.clip_id,
                    n_frames: 0,
                    cmae: None,
                    crmse: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let aggregate = pool_metrics(&scored).map(|p| AggregateReport {
        cmae: p.cmae,
        crmse: p.crmse,
        n_frames: p.n_frames,
    });
    if let Some(agg) = &aggregate {
        debug_assert!(agg.cmae <= agg.crmse + 1e-12);
    }
    Ok(EvalRun {
        report: EvalReport {
            method: spec.label().to_string(),
            band: ctx.eval.band,
            window_s: ctx.eval.window_s,
            stride: ctx.eval.stride,
            clips,
            aggregate,
            failed_clips: failed,
        },
        predictions,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width human-readable table.
    pub fn human_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "method: {}   band: [{}, {}] Hz   window: {} s   stride: {}\n",
            self.method, self.band.lo, self.band.hi, self.window_s, self.stride
        ));
        out.push_str(&format!(
            "{:>8} {:>10} {:>10} {:>10}  {}\n",
            "clip", "cMAE", "cRMSE", "frames", "status"
        ));
        for c in &self.clips {
            match (&c.cmae, &c.crmse, &c.error) {
                (Some(mae), Some(rmse), None) => out.push_str(&format!(
                    "{:>8} {:>10.4} {:>10.4} {:>10}  ok\n",
                    c.clip_id, mae, rmse, c.n_frames
                )),
                _ => out.push_str(&format!(
                    "{:>8} {:>10} {:>10} {:>10}  FAILED: {}\n",
                    c.clip_id,
                    "-",
                    "-",
                    0,
                    c.error.as_deref().unwrap_or("unknown")
                )),
            }
        }
        match &self.aggregate {
            Some(a) => out.push_str(&format!(
                "{:>8} {:>10.4} {:>10.4} {:>10}  pooled over {} clips ({} failed)\n",
                "ALL",
                a.cmae,
                a.crmse,
                a.n_frames,
                self.clips.len() - self.failed_clips,
                self.failed_clips
            )),
            None => out.push_str("aggregate: none (every clip failed)\n"),
        }
        out
    }
}
