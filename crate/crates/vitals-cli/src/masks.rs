//! Attention-mask export: run the backbone over a clip, collect the deeper
//! attention site's normalized mask for evenly spaced frames, and write a
//! per-frame min-max normalized PGM (P5) strip plus the raw values as CSV.

use std::path::Path;

use vitals_core::autodiff::Tape;
use vitals_core::frames::{window_clip, VideoClip};
use vitals_core::model::{backbone_forward_sites, ModelConfig, ModelParams};
use vitals_core::synth::skin_region;

use crate::{write_file, CliError};

/// Raw site-2 masks for the selected frames.
#[derive(Debug, Clone)]
pub struct MaskExport {
    /// Source frame index of each exported mask.
    pub frames: Vec<usize>,
    /// One row-major `mask_h × mask_w` map per exported frame.
    pub maps: Vec<Vec<f64>>,
    pub mask_h: usize,
    pub mask_w: usize,
}

impl MaskExport {
    /// Mean mask value inside/outside the clip's central skin region, per
    /// exported frame (the region bounds scale down with the mask).
    pub fn skin_means(&self) -> Vec<(f64, f64)> {
        let (y0, y1, x0, x1) = skin_region(self.mask_h, self.mask_w);
        self.maps
            .iter()
            .map(|map| {
                let (mut ins, mut outs) = ((0.0, 0usize), (0.0, 0usize));
                for y in 0..self.mask_h {
                    for x in 0..self.mask_w {
                        let v = map[y * self.mask_w + x];
                        if y >= y0 && y < y1 && x >= x0 && x < x1 {
                            ins = (ins.0 + v, ins.1 + 1);
                        } else {
                            outs = (outs.0 + v, outs.1 + 1);
                        }
                    }
                }
                (ins.0 / ins.1.max(1) as f64, outs.0 / outs.1.max(1) as f64)
            })
            .collect()
    }
}

/// Compute site-2 masks for `k` evenly spaced frames of the windowed span.
/// The clip must already match the model's input size.
pub fn compute_masks(
    clip: &VideoClip,
    params: &ModelParams,
    cfg: &ModelConfig,
    k: usize,
) -> Result<MaskExport, CliError> {
    cfg.validate()?;
    if k == 0 {
        return Err(CliError::usage("mask export needs at least one frame"));
    }
    let n = cfg.transformer.n_frames;
    let items = window_clip(clip, n, n, 0)?;
    let mut all: Vec<Vec<f64>> = Vec::new();
    let (mut mask_h, mut mask_w) = (0usize, 0usize);
    for item in &items {
        let mut tape = Tape::new();
        let p = params.bind_constants(&mut tape);
        let app = tape.constant(item.appearance.clone());
        let mot = tape.constant(item.motion.clone());
        let sites = backbone_forward_sites(&mut tape, app, mot, &p, &cfg.backbone, None)?;
        let q2 = tape.value(sites.q2);
        // [n, 1, h2, w2] → one map per frame.
        mask_h = q2.shape[2];
        mask_w = q2.shape[3];
        let plane = mask_h * mask_w;
        for f in 0..q2.shape[0] {
            all.push(q2.data[f * plane..(f + 1) * plane].to_vec());
        }
    }
    let total = all.len();
    let picks: Vec<usize> = if k == 1 {
        vec![0]
    } else {
        (0..k.min(total))
            .map(|j| j * (total - 1) / (k.min(total) - 1).max(1))
            .collect()
    };
    Ok(MaskExport {
        maps: picks.iter().map(|&i| all[i].clone()).collect(),
        // Windows tile the clip with stride n, so the i-th processed frame
        // is the i-th clip frame.
        frames: picks,
        mask_h,
        mask_w,
    })
}

/// Per-frame min-max normalization to u8 (a constant map becomes 0).
fn normalize_u8(map: &[f64]) -> Vec<u8> {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; map.len()];
    }
    map.iter()
        .map(|&v| (255.0 * (v - lo) / (hi - lo)).round() as u8)
        .collect()
}

const SEPARATOR_PX: usize = 1;

/// Binary PGM strip: the exported masks side by side with 1-px separators.
pub fn pgm_strip(export: &MaskExport) -> Vec<u8> {
    let k = export.maps.len();
    let tiles: Vec<Vec<u8>> = export.maps.iter().map(|m| normalize_u8(m)).collect();
    let width = k * export.mask_w + k.saturating_sub(1) * SEPARATOR_PX;
    let mut out = format!("P5\n{} {}\n255\n", width, export.mask_h).into_bytes();
    for y in 0..export.mask_h {
        for (ti, tile) in tiles.iter().enumerate() {
            if ti > 0 {
                out.extend_from_slice(&[0u8; SEPARATOR_PX]);
            }
            out.extend_from_slice(&tile[y * export.mask_w..(y + 1) * export.mask_w]);
        }
    }
    out
}

/// Raw mask values, one row per pixel: `frame,y,x,q`.
pub fn mask_csv(export: &MaskExport) -> String {
    let mut out = String::from("frame,y,x,q\n");
    for (frame, map) in export.frames.iter().zip(&export.maps) {
        for y in 0..export.mask_h {
            for x in 0..export.mask_w {
                out.push_str(&format!("{},{},{},{}\n", frame, y, x, map[y * export.mask_w + x]));
            }
        }
    }
    out
}

/// Compute and write both artifacts, returning the export for inspection.
pub fn export_masks(
    clip: &VideoClip,
    params: &ModelParams,
    cfg: &ModelConfig,
    k: usize,
    pgm_path: &Path,
    csv_path: &Path,
) -> Result<MaskExport, CliError> {
    let export = compute_masks(clip, params, cfg, k)?;
    write_file(pgm_path, &pgm_strip(&export))?;
    write_file(csv_path, mask_csv(&export).as_bytes())?;
    Ok(export)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vitals_core::model::init_params;
    use vitals_core::rng::SplitMix64;
    use vitals_core::sigproc::HR_BAND;
    use vitals_core::synth::{make_clip, RateProfile, SceneParams};

    fn synth_clip(frames_hint_s: f64) -> VideoClip {
        make_clip(
            &SceneParams { seed: 9, ..SceneParams::default() },
            &RateProfile::constant(72.0),
            HR_BAND,
            frames_hint_s,
            30.0,
            12,
            12,
            0.0,
            0.35,
        )
        .unwrap()
        .clip
    }

    #[test]
    fn untrained_masks_export_with_valid_geometry() {
        let clip = synth_clip(2.0); // 60 frames
        let cfg = ModelConfig::tiny(16);
        let params = init_params(&cfg, 4);
        let dir = tempfile::tempdir().unwrap();
        let pgm_path = dir.path().join("masks.pgm");
        let csv_path = dir.path().join("masks.csv");
        let export = export_masks(&clip, &params, &cfg, 3, &pgm_path, &csv_path).unwrap();
        assert_eq!(export.maps.len(), 3);
        assert_eq!((export.mask_h, export.mask_w), (6, 6));
        assert!(export.maps.iter().flatten().all(|v| v.is_finite()));

        let pgm = std::fs::read(&pgm_path).unwrap();
        let header = format!("P5\n{} {}\n255\n", 3 * 6 + 2, 6);
        assert!(pgm.starts_with(header.as_bytes()));
        assert_eq!(pgm.len(), header.len() + 6 * (3 * 6 + 2));

        let csv = std::fs::read_to_string(&csv_path).unwrap();
        assert!(csv.starts_with("frame,y,x,q\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 36);
    }

    #[test]
    fn identical_frames_produce_identical_masks() {
        // A static clip: every frame equals frame 0.
        let mut rng = SplitMix64::new(5);
        let frame: Vec<f32> = (0..12 * 12 * 3)
            .map(|_| (0.2 + 0.6 * rng.next_f64()) as f32)
            .collect();
        let mut frames = Vec::new();
        for _ in 0..33 {
            frames.extend_from_slice(&frame);
        }
        let clip = VideoClip::new(frames, 33, 12, 12, 30.0);
        let cfg = ModelConfig::tiny(8);
        let params = init_params(&cfg, 11);
        let export = compute_masks(&clip, &params, &cfg, 4).unwrap();
        for map in &export.maps[1..] {
            assert_eq!(map, &export.maps[0]);
        }
    }

    #[test]
    fn exports_are_deterministic() {
        let clip = synth_clip(2.0);
        let cfg = ModelConfig::tiny(16);
        let params = init_params(&cfg, 4);
        let a = compute_masks(&clip, &params, &cfg, 2).unwrap();
        let b = compute_masks(&clip, &params, &cfg, 2).unwrap();
        assert_eq!(pgm_strip(&a), pgm_strip(&b));
        assert_eq!(mask_csv(&a), mask_csv(&b));
    }

    #[test]
    fn constant_map_normalizes_to_zero_and_short_clip_errors() {
        assert_eq!(normalize_u8(&[0.25; 9]), vec![0; 9]);
        let clip = synth_clip(0.2); // 6 frames
        let cfg = ModelConfig::tiny(16);
        let params = init_params(&cfg, 4);
        assert!(compute_masks(&clip, &params, &cfg, 2).is_err());
    }
}
