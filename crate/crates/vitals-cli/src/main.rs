//! `vitals` — synthetic-data generation, classical baselines, model
//! training, inference, continuous evaluation, and attention-mask export for
//! camera-based heart/respiration-rate estimation.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use vitals_cli::checkpoint::{load_checkpoint, require_matching_config, Checkpoint};
use vitals_cli::config::RunConfig;
use vitals_cli::csvio::{write_rates_csv, write_waveform_csv};
use vitals_cli::manifest::{load_clip, load_manifest, make_dataset, Split};
use vitals_cli::masks::export_masks;
use vitals_cli::report::{run_eval, EvalContext, EvalRun, MethodSpec};
use vitals_cli::rvid::read_rvid;
use vitals_cli::trainloop::run_training;
use vitals_cli::{write_file, CliError};
use vitals_core::frames::{resize_bilinear, VideoClip};
use vitals_core::metrics::continuous_rates;
use vitals_core::model::infer_waveform;
use vitals_core::sigproc::dominant_rate;

#[derive(Parser)]
#[command(
    name = "vitals",
    version,
    about = "Heart/respiration rate estimation toolkit: synthesis, baselines, training, evaluation"
)]
struct Cli {
    /// JSON run configuration; every omitted field takes its default.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    /// Override the config's synth and train seeds.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; 1 is the bit-exact sequential path.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset and write its manifest.
    Synth,
    /// Run a classical baseline (green | pos | ica) over manifest clips.
    Baseline {
        /// One of: green, pos, ica.
        method: String,
        /// Path to a dataset manifest.json.
        manifest: PathBuf,
        /// Clip subset: train, val, or all.
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// Train a model on the manifest's train split.
    Train {
        /// Path to a dataset manifest.json.
        manifest: PathBuf,
    },
    /// Predict a waveform and per-frame rates for one clip.
    Infer {
        /// Path to an .rvid clip.
        clip: PathBuf,
        /// Path to a .vtck checkpoint.
        checkpoint: PathBuf,
    },
    /// Evaluate a baseline name or a checkpoint path over manifest clips.
    Eval {
        /// One of green, pos, ica — or a path to a .vtck checkpoint.
        method_or_checkpoint: String,
        /// Path to a dataset manifest.json.
        manifest: PathBuf,
        /// Clip subset: train, val, or all.
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// Export attention masks for one clip.
    Masks {
        /// Path to an .rvid clip.
        clip: PathBuf,
        /// Path to a .vtck checkpoint.
        checkpoint: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e);
        std::process::exit(e.exit_code());
    }
}

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{} not found: {}", what, path.display())))
    }
}

fn parse_split(s: &str) -> Result<Option<Split>, CliError> {
    match s {
        "train" => Ok(Some(Split::Train)),
        "val" => Ok(Some(Split::Val)),
        "all" => Ok(None),
        other => Err(CliError::usage(format!(
            "unknown split {:?}, expected train, val, or all",
            other
        ))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    if cli.threads > 1 {
        // Ignore the error if a pool already exists (e.g. under a test
        // harness); the explicit size is best-effort there.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let mut cfg = match &cli.config {
        Some(path) => {
            require_exists(path, "config")?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;

    match &cli.command {
        Command::Synth => cmd_synth(&cfg, &cli.out),
        Command::Baseline { method, manifest, split } => {
            let spec = match method.as_str() {
                "green" => MethodSpec::Green,
                "pos" => MethodSpec::Pos,
                "ica" => MethodSpec::Ica,
                other => {
                    return Err(CliError::usage(format!(
                        "unknown baseline {:?}, expected green, pos, or ica",
                        other
                    )))
                }
            };
            cmd_eval_spec(&cfg, &cli, &spec, manifest, parse_split(split)?)
        }
        Command::Train { manifest } => cmd_train(&cfg, &cli.out, manifest),
        Command::Infer { clip, checkpoint } => cmd_infer(&cfg, &cli, clip, checkpoint),
        Command::Eval { method_or_checkpoint, manifest, split } => {
            let split = parse_split(split)?;
            match method_or_checkpoint.as_str() {
                "green" => cmd_eval_spec(&cfg, &cli, &MethodSpec::Green, manifest, split),
                "pos" => cmd_eval_spec(&cfg, &cli, &MethodSpec::Pos, manifest, split),
                "ica" => cmd_eval_spec(&cfg, &cli, &MethodSpec::Ica, manifest, split),
                path => {
                    let ckpt = load_model(&cfg, &cli, Path::new(path))?;
                    let spec = MethodSpec::Model {
                        params: &ckpt.params,
                        config: &ckpt.config,
                    };
                    cmd_eval_spec(&cfg, &cli, &spec, manifest, split)
                }
            }
        }
        Command::Masks { clip, checkpoint } => cmd_masks(&cfg, &cli, clip, checkpoint),
    }
}

/// Load a checkpoint; when the user supplied a config, its model section
/// must agree with the checkpoint's embedded one.
fn load_model(cfg: &RunConfig, cli: &Cli, path: &Path) -> Result<Checkpoint, CliError> {
    require_exists(path, "checkpoint")?;
    let ckpt = load_checkpoint(path)?;
    if cli.config.is_some() {
        require_matching_config(&ckpt.config, &cfg.model.to_core())?;
    }
    Ok(ckpt)
}

/// Load an .rvid clip and fit it to the model input size per the ingest
/// section.
fn load_clip_for_model(
    cfg: &RunConfig,
    path: &Path,
    input_hw: usize,
) -> Result<VideoClip, CliError> {
    require_exists(path, "clip")?;
    let clip = read_rvid(path)?;
    if clip.h == input_hw && clip.w == input_hw {
        return Ok(clip);
    }
    if !cfg.ingest.resize_to_model {
        return Err(CliError::Mismatch {
            detail: format!(
                "clip is {}x{} but the model wants {}x{} and resizing is disabled",
                clip.h, clip.w, input_hw, input_hw
            ),
        });
    }
    Ok(resize_bilinear(&clip, input_hw, input_hw))
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let manifest = make_dataset(&cfg.synth, cfg.eval.band.to_core(), out)?;
    cfg.write_resolved(out)?;
    println!(
        "wrote {} clips ({} train, {} val) under {}",
        manifest.clips.len(),
        manifest.split(Split::Train).len(),
        manifest.split(Split::Val).len(),
        out.display()
    );
    println!("manifest: {}", out.join("manifest.json").display());
    Ok(())
}

fn write_eval_outputs(run: &EvalRun, out: &Path) -> Result<(), CliError> {
    write_file(&out.join("report.json"), run.report.to_json().as_bytes())?;
    for (clip_id, rates) in &run.predictions {
        write_rates_csv(rates, &out.join(format!("rates/clip_{:03}.rates.csv", clip_id)))?;
    }
    Ok(())
}

fn cmd_eval_spec(
    cfg: &RunConfig,
    cli: &Cli,
    spec: &MethodSpec<'_>,
    manifest_path: &Path,
    split: Option<Split>,
) -> Result<(), CliError> {
    require_exists(manifest_path, "manifest")?;
    let (manifest, base) = load_manifest(manifest_path)?;
    let ctx = EvalContext {
        base: &base,
        manifest: &manifest,
        split,
        eval: &cfg.eval,
        ingest: &cfg.ingest,
        threads: cli.threads,
    };
    let run = run_eval(spec, &ctx)?;
    write_eval_outputs(&run, &cli.out)?;
    cfg.write_resolved(&cli.out)?;
    print!("{}", run.report.human_table());
    println!("report: {}", cli.out.join("report.json").display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &Path, manifest_path: &Path) -> Result<(), CliError> {
    require_exists(manifest_path, "manifest")?;
    let (manifest, base) = load_manifest(manifest_path)?;
    let entries = manifest.split(Split::Train);
    let mut clips = Vec::with_capacity(entries.len());
    for entry in entries {
        clips.push(load_clip(&base, entry)?);
    }
    let outcome = run_training(cfg, clips, out)?;
    cfg.write_resolved(out)?;
    let last = outcome.rows.last().expect("at least one step");
    println!("trained {} steps; final loss {}", last.step, last.loss);
    println!("checkpoint: {}", outcome.final_checkpoint.display());
    println!("log: {}", outcome.log_path.display());
    Ok(())
}

fn cmd_infer(
    cfg: &RunConfig,
    cli: &Cli,
    clip_path: &Path,
    checkpoint: &Path,
) -> Result<(), CliError> {
    let ckpt = load_model(cfg, cli, checkpoint)?;
    let clip = load_clip_for_model(cfg, clip_path, ckpt.config.backbone.input_hw)?;
    let band = cfg.eval.band.to_core();
    let wave = infer_waveform(&clip, &ckpt.params, &ckpt.config, band)?;
    let rates = continuous_rates(&wave, band, cfg.eval.window_s, cfg.eval.stride)?;
    write_waveform_csv(&wave, &cli.out.join("waveform.csv"))?;
    write_rates_csv(&rates, &cli.out.join("rates.csv"))?;
    cfg.write_resolved(&cli.out)?;
    let rate = dominant_rate(&wave, band)?;
    println!(
        "predicted {} samples over {:.2} s; dominant rate {:.1} bpm",
        wave.len(),
        wave.duration_s(),
        rate
    );
    println!("waveform: {}", cli.out.join("waveform.csv").display());
    println!("rates: {}", cli.out.join("rates.csv").display());
    Ok(())
}

fn cmd_masks(
    cfg: &RunConfig,
    cli: &Cli,
    clip_path: &Path,
    checkpoint: &Path,
) -> Result<(), CliError> {
    let ckpt = load_model(cfg, cli, checkpoint)?;
    let clip = load_clip_for_model(cfg, clip_path, ckpt.config.backbone.input_hw)?;
    let pgm = cli.out.join("masks.pgm");
    let csv = cli.out.join("masks_raw.csv");
    let export = export_masks(
        &clip,
        &ckpt.params,
        &ckpt.config,
        cfg.eval.mask_frames,
        &pgm,
        &csv,
    )?;
    cfg.write_resolved(&cli.out)?;
    for ((frame, map), (inside, outside)) in export
        .frames
        .iter()
        .zip(export.maps.iter().map(|m| m.len()))
        .zip(export.skin_means())
    {
        println!(
            "frame {:>4}: {} mask values, skin-region mean {:.6}, elsewhere {:.6}",
            frame, map, inside, outside
        );
    }
    println!("masks: {}", pgm.display());
    println!("raw values: {}", csv.display());
    Ok(())
}
