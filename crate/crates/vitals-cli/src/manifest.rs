//! Dataset manifest: a JSON index over rendered clips and their ground
//! truth. `make_dataset` renders train/validation clips at constant rates
//! spread across a bpm range (the two splits interleave, so no rate is
//! shared), writes each clip with its pulse/motion/rate files, and returns
//! the manifest that the baseline, train, and eval commands consume.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vitals_core::rng::SplitMix64;
use vitals_core::sigproc::BandLimits;
use vitals_core::synth::{make_clip, RateProfile, SynthClip};

use crate::config::SynthSection;
use crate::csvio::{read_rates_csv, read_waveform_csv, write_rates_csv, write_waveform_csv};
use crate::rvid::{read_rvid, write_rvid};
use crate::{read_file, write_file, CliError};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl core::fmt::Display for Split {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
        }
    }
}

/// One clip's files (paths relative to the manifest's directory) and the
/// parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub clip_id: usize,
    pub split: Split,
    pub rvid: String,
    pub pulse_csv: String,
    pub motion_csv: String,
    pub rates_csv: String,
    pub bpm: f64,
    pub seed: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub clips: Vec<ClipEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> Vec<&ClipEntry> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        write_file(&dir.join(MANIFEST_NAME), json.as_bytes())
    }
}

/// Load a manifest; returns it with its base directory (entries hold paths
/// relative to that directory).
pub fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf), CliError> {
    let bytes = read_file(path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::format(path, 0, format!("bad manifest: {}", e)))?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok((manifest, base))
}

/// Reload one clip with its generating signals and labels.
pub fn load_clip(base: &Path, entry: &ClipEntry) -> Result<SynthClip, CliError> {
    let clip = read_rvid(&base.join(&entry.rvid))?;
    if clip.t != entry.frames || clip.h != entry.height || clip.w != entry.width {
        return Err(CliError::Mismatch {
            detail: format!(
                "clip {} is {}x{}x{} but the manifest says {}x{}x{}",
                entry.clip_id, clip.t, clip.h, clip.w, entry.frames, entry.height, entry.width
            ),
        });
    }
    let pulse = read_waveform_csv(&base.join(&entry.pulse_csv), entry.fps)?;
    let motion = read_waveform_csv(&base.join(&entry.motion_csv), entry.fps)?;
    let rate_gt = read_rates_csv(&base.join(&entry.rates_csv), entry.fps)?;
    for (name, len) in [
        ("pulse", pulse.len()),
        ("motion", motion.len()),
        ("rates", rate_gt.len()),
    ] {
        if len != entry.frames {
            return Err(CliError::Mismatch {
                detail: format!(
                    "clip {}: {} track has {} samples, expected {}",
                    entry.clip_id, name, len, entry.frames
                ),
            });
        }
    }
    Ok(SynthClip { clip, pulse, motion, rate_gt })
}

/// `n` rates across `[lo, hi]`: endpoints included for the train split,
/// midpoints of an (n+1)-piece partition for the val split, so the two
/// splits never coincide.
fn spread(lo: f64, hi: f64, n: usize, interior: bool) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if interior {
        (0..n)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
            .collect()
    } else if n == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Render the full dataset under `out_dir` and write its manifest there.
/// `band` bounds the admissible pulse rates (the run's evaluation band).
pub fn make_dataset(
    synth: &SynthSection,
    band: BandLimits,
    out_dir: &Path,
) -> Result<Manifest, CliError> {
    let mut seeder = SplitMix64::new(synth.seed);
    let plan: Vec<(Split, f64)> = spread(synth.bpm_lo, synth.bpm_hi, synth.clips_train, false)
        .into_iter()
        .map(|bpm| (Split::Train, bpm))
        .chain(
            spread(synth.bpm_lo, synth.bpm_hi, synth.clips_val, true)
                .into_iter()
                .map(|bpm| (Split::Val, bpm)),
        )
        .collect();
    let mut clips = Vec::with_capacity(plan.len());
    for (clip_id, (split, bpm)) in plan.into_iter().enumerate() {
        let seed = seeder.next_u64();
        let scene = synth.scene(seed);
        let rendered = make_clip(
            &scene,
            &RateProfile::constant(bpm),
            band,
            synth.duration_s,
            synth.fps,
            synth.height,
            synth.width,
            synth.motion_amplitude,
            synth.motion_cutoff_hz,
        )
        .map_err(|e| CliError::runtime(format!("clip {} synthesis failed: {}", clip_id, e)))?;
        let entry = ClipEntry {
            clip_id,
            split,
            rvid: format!("clips/clip_{:03}.rvid", clip_id),
            pulse_csv: format!("gt/clip_{:03}.pulse.csv", clip_id),
            motion_csv: format!("gt/clip_{:03}.motion.csv", clip_id),
            rates_csv: format!("gt/clip_{:03}.rates.csv", clip_id),
            bpm,
            seed,
            frames: rendered.clip.t,
            height: rendered.clip.h,
            width: rendered.clip.w,
            fps: synth.fps,
        };
        write_rvid(&rendered.clip, &out_dir.join(&entry.rvid))?;
        write_waveform_csv(&rendered.pulse, &out_dir.join(&entry.pulse_csv))?;
        write_waveform_csv(&rendered.motion, &out_dir.join(&entry.motion_csv))?;
        write_rates_csv(&rendered.rate_gt, &out_dir.join(&entry.rates_csv))?;
        clips.push(entry);
    }
    let manifest = Manifest { version: 1, clips };
    manifest.save(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vitals_core::sigproc::HR_BAND;

    fn tiny_section() -> SynthSection {
        SynthSection {
            clips_train: 2,
            clips_val: 1,
            duration_s: 2.0,
            fps: 10.0,
            height: 8,
            width: 8,
            bpm_lo: 60.0,
            bpm_hi: 90.0,
            seed: 3,
            ..SynthSection::default()
        }
    }

    #[test]
    fn dataset_round_trips_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let made = make_dataset(&tiny_section(), HR_BAND, dir.path()).unwrap();
        assert_eq!(made.clips.len(), 3);
        let (loaded, base) = load_manifest(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(loaded, made);
        for entry in &loaded.clips {
            let clip = load_clip(&base, entry).unwrap();
            assert_eq!(clip.clip.t, entry.frames);
            assert_eq!(clip.pulse.len(), entry.frames);
            assert_eq!(clip.rate_gt.rates_bpm[0], entry.bpm);
        }
    }

    #[test]
    fn splits_interleave_and_never_share_rates() {
        let mut section = tiny_section();
        section.clips_train = 4;
        section.clips_val = 3;
        let dir = tempfile::tempdir().unwrap();
        let manifest = make_dataset(&section, HR_BAND, dir.path()).unwrap();
        let train: Vec<f64> = manifest.split(Split::Train).iter().map(|c| c.bpm).collect();
        let val: Vec<f64> = manifest.split(Split::Val).iter().map(|c| c.bpm).collect();
        assert_eq!(train.len(), 4);
        assert_eq!(val.len(), 3);
        assert_eq!(train, vec![60.0, 70.0, 80.0, 90.0]);
        assert_eq!(val, vec![65.0, 75.0, 85.0]);
        for v in &val {
            assert!(train.iter().all(|t| t != v));
        }
        // All clips get distinct derived seeds.
        let mut seeds: Vec<u64> = manifest.clips.iter().map(|c| c.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), manifest.clips.len());
    }

    #[test]
    fn regeneration_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = make_dataset(&tiny_section(), HR_BAND, dir_a.path()).unwrap();
        let b = make_dataset(&tiny_section(), HR_BAND, dir_b.path()).unwrap();
        assert_eq!(a, b);
        for entry in &a.clips {
            let bytes_a = std::fs::read(dir_a.path().join(&entry.rvid)).unwrap();
            let bytes_b = std::fs::read(dir_b.path().join(&entry.rvid)).unwrap();
            assert_eq!(bytes_a, bytes_b, "clip {} differs", entry.clip_id);
        }
    }

    #[test]
    fn out_of_band_rate_is_runtime_error() {
        let mut section = tiny_section();
        section.bpm_lo = 10.0; // below the HR band
        section.bpm_hi = 20.0;
        let dir = tempfile::tempdir().unwrap();
        match make_dataset(&section, HR_BAND, dir.path()) {
            Err(e @ CliError::Runtime { .. }) => assert_eq!(e.exit_code(), 1),
            other => panic!("expected runtime error, got {:?}", other),
        }
    }

    #[test]
    fn mismatched_rvid_dims_detected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = make_dataset(&tiny_section(), HR_BAND, dir.path()).unwrap();
        let mut entry = manifest.clips[0].clone();
        entry.frames += 1;
        match load_clip(dir.path(), &entry) {
            Err(CliError::Mismatch { detail }) => assert!(detail.contains("manifest")),
            other => panic!("expected mismatch, got {:?}", other),
        }
    }
}
