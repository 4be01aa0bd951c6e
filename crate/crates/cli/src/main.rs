use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use labnet_core::datagen::{bucket_counts, load_example, read_dataset, read_manifest, DatasetWriter, Simulator};
use labnet_core::eval::{evaluate, Estimator};
use labnet_core::model::{locate_frames, LabNet, LocationTrack};
use labnet_core::spatial::AzimuthBucket;
use labnet_core::train::{Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT};
use labnet_core::{AudioSegment, Checkpoint, Profile, RunConfig};
use serde_json::json;

const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Parser)]
#[command(name = "labnet", version, about = "Location-aware beamforming for two-speaker separation")]
struct Cli {
    /// TOML run configuration layered over the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for simulation, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Base settings: `paper` sizes or the single-core `desk` scale.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// Output directory (simulate, train, separate) or file (evaluate, locate).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render simulated mixtures into `<out>/<split>/`.
    Simulate {
        /// Examples per split, overriding the configuration.
        #[arg(long)]
        n: Option<usize>,
        /// Only this split.
        #[arg(long, value_parser = SPLITS)]
        split: Option<String>,
    },
    /// Train on `<data>/train`, validating on `<data>/val` when present.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Continue from a checkpoint that carries optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a dataset split and write a report.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_if_eq("mode", "model"))]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Model)]
        mode: Mode,
        /// Also write an SVG scatter plot.
        #[arg(long)]
        plot: bool,
    },
    /// Write the two separated sources of a multichannel WAV.
    Separate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Print per-frame DOAs and coordinates of both sources as CSV.
    Locate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Model,
    /// References as estimates.
    Oracle,
    /// Reference-channel mixture as both estimates.
    Passthrough,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, cli.profile).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::for_profile(cli.profile.unwrap_or_default()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    match cli.command {
        Command::Simulate { n, split } => simulate(&cfg, required(&cli.out)?, n, split.as_deref()),
        Command::Train { data, resume } => train(&cfg, &data, required(&cli.out)?, resume.as_deref()),
        Command::Evaluate {
            data,
            checkpoint,
            mode,
            plot,
        } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("report.json"));
            let expected = cli.config.is_some().then_some(&cfg);
            cmd_evaluate(expected, &data, checkpoint.as_deref(), mode, &out, plot)
        }
        Command::Separate { checkpoint, input } => separate(&checkpoint, &input, required(&cli.out)?),
        Command::Locate { checkpoint, input } => locate(&checkpoint, &input, cli.out.as_deref()),
    }
}

fn required(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().ok_or_else(|| anyhow!("--out is required for this command"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn simulate(cfg: &RunConfig, out: &Path, n: Option<usize>, only: Option<&str>) -> Result<()> {
    let sim = Simulator::new(cfg.simulation.clone())?;
    let mut summary = serde_json::Map::new();
    for split in SPLITS.into_iter().filter(|s| only.map_or(true, |o| o == *s)) {
        let count = n.unwrap_or(match split {
            "train" => cfg.dataset.train,
            "val" => cfg.dataset.val,
            _ => cfg.dataset.test,
        });
        let dir = out.join(split);
        let mut writer = DatasetWriter::create(&dir, false)?;
        for index in 0..count as u64 {
            writer.write(&sim.generate(cfg.seed, split, index)?)?;
        }
        let counts = bucket_counts(&read_manifest(&dir)?);
        let mut shares = serde_json::Map::new();
        let mut line = format!("{split}: {count} examples");
        for (bucket, c) in AzimuthBucket::ALL.iter().zip(counts) {
            let pct = if count == 0 { 0.0 } else { 100.0 * c as f64 / count as f64 };
            line += &format!(", {} {pct:.1}%", bucket.label());
            shares.insert(bucket.label().into(), json!(pct));
        }
        println!("{line}");
        summary.insert(split.into(), json!({ "count": count, "bucket_percent": shares }));
    }
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    write_json(
        &out.join("summary.json"),
        &json!({ "seed": cfg.seed, "profile": cfg.profile, "splits": summary }),
    )
}

fn train(cfg: &RunConfig, data: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    let train_set = read_dataset(data.join("train")).context("reading the training split")?;
    let val_dir = data.join("val");
    let val_set = if val_dir.exists() { read_dataset(&val_dir)? } else { Vec::new() };
    log::info!("{} training and {} validation examples", train_set.len(), val_set.len());
    let trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            log::info!("resuming at step {}", ck.state.step);
            Trainer::resume(ck)?
        }
        None => {
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
            Trainer::new(LabNet::new(cfg.model.clone(), cfg.seed)?, cfg.train.clone())?
        }
    };
    let mut trainer = trainer.with_output(out)?;
    let summary = trainer.run(&train_set, &val_set)?;
    if !out.join(BEST_CHECKPOINT).exists() {
        std::fs::copy(out.join(LAST_CHECKPOINT), out.join(BEST_CHECKPOINT))?;
    }
    log::info!("finished after {} steps", summary.steps);
    write_json(&out.join("summary.json"), &serde_json::to_value(&summary)?)
}

/// Top-level model fields that differ between two configurations.
fn differing_fields(a: &labnet_core::ModelConfig, b: &labnet_core::ModelConfig) -> Result<Vec<String>> {
    let (a, b) = (serde_json::to_value(a)?, serde_json::to_value(b)?);
    let (Some(a), Some(b)) = (a.as_object(), b.as_object()) else {
        bail!("model configurations are not objects");
    };
    Ok(a.iter().filter(|(k, v)| b.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect())
}

fn load_model(path: &Path) -> Result<LabNet> {
    Ok(Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?.model)
}

fn cmd_evaluate(
    expected: Option<&RunConfig>,
    data: &Path,
    checkpoint: Option<&Path>,
    mode: Mode,
    out: &Path,
    plot: bool,
) -> Result<()> {
    let model = checkpoint.map(load_model).transpose()?;
    if let (Some(model), Some(cfg)) = (&model, expected) {
        let diff = differing_fields(&cfg.model, &model.config)?;
        if !diff.is_empty() {
            bail!(
                "checkpoint does not match the configured model; differing settings: {}",
                diff.join(", ")
            );
        }
    }
    let reference_channel = model.as_ref().map_or(0, |m| m.config.reference_channel);
    let estimator = match mode {
        Mode::Model => Estimator::Model(model.as_ref().ok_or_else(|| anyhow!("--checkpoint is required"))?),
        Mode::Oracle => Estimator::Oracle,
        Mode::Passthrough => Estimator::PassThrough,
    };
    let examples = read_manifest(data)?.into_iter().map(|m| load_example(data, m));
    let report = evaluate(examples, estimator, reference_channel)?;
    report.write(out, plot)?;
    match &report.average {
        Some(avg) => log::info!(
            "{} examples: SI-SDR {:.2} dB, DOA MAE {}",
            report.total,
            avg.si_sdr,
            avg.doa_mae.map_or("n/a".into(), |m| format!("{m:.2} deg"))
        ),
        None => log::info!("no examples to evaluate"),
    }
    Ok(())
}

fn separate(checkpoint: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let mixture = AudioSegment::read_wav(input)?;
    let sep = model.infer(&mixture)?;
    std::fs::create_dir_all(out)?;
    for (i, wave) in sep.waveforms.into_iter().enumerate() {
        let path = out.join(format!("source{i}.wav"));
        AudioSegment::mono(wave, mixture.sample_rate())?.write_wav(&path)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn locate(checkpoint: &Path, input: &Path, out: Option<&Path>) -> Result<()> {
    let model = load_model(checkpoint)?;
    let cfg = &model.config;
    if !cfg.locator_enabled() || cfg.observers() != 2 {
        bail!("locating needs a model with a two-observer locator");
    }
    let mixture = AudioSegment::read_wav(input)?;
    let sep = model.infer(&mixture)?;
    let tracks: Vec<LocationTrack> = if sep.locations.is_empty() {
        sep.doa_spectra
            .iter()
            .map(|s| locate_frames(s, &cfg.codec, cfg.geometry.baseline()))
            .collect::<labnet_core::Result<_>>()?
    } else {
        sep.locations
    };
    let hop = cfg.stft.hop() as f64 / cfg.stft.sample_rate as f64;
    let mut csv = String::from("source,frame,time_s,theta1,theta2,x,y,degenerate\n");
    for (source, track) in tracks.iter().enumerate() {
        for t in 0..track.frames() {
            let [t1, t2] = track.doas[t];
            let [x, y] = track.xy[t];
            csv += &format!(
                "{source},{t},{:.4},{t1:.3},{t2:.3},{x:.4},{y:.4},{}\n",
                t as f64 * hop,
                track.degenerate[t]
            );
        }
    }
    print!("{csv}");
    if let Some(path) = out {
        std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
