//! Mixture rendering, example generation and on-disk datasets.
//!
//! Layout: `<dir>/<id>.mix.wav`, `<id>.src0.wav`, `<id>.src1.wav` and one
//! JSON object per example in `<dir>/manifest.jsonl`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rir::{convolve, rir_anechoic, RirSet};
use super::scene::{sample_scene, RoomSpec, SceneConstraints, ScenePlacement};
use super::source::{synthetic_voice, Corpus, DrySignal, SourceSpec};
use crate::dsp::{AudioSegment, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::spatial::{ArrayGeometry, AzimuthBucket, SourceLocation};

pub const MANIFEST: &str = "manifest.jsonl";

/// Everything known about how an example was made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub id: String,
    pub seed: u64,
    pub index: u64,
    pub room: RoomSpec,
    pub placement: ScenePlacement,
    pub locations: [SourceLocation; 2],
    pub bucket: AzimuthBucket,
    /// Gain applied to mixture and references to keep peaks within ±1.
    pub normalization: f64,
    pub sample_rate: u32,
    pub samples: usize,
    pub speakers: [String; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureExample {
    pub mixture: AudioSegment,
    pub references: [AudioSegment; 2],
    pub metadata: SceneMetadata,
}

impl MixtureExample {
    /// Same example as stored in a float WAV.
    pub fn quantized(&self) -> Self {
        Self {
            mixture: self.mixture.quantized_f32(),
            references: [self.references[0].quantized_f32(), self.references[1].quantized_f32()],
            metadata: self.metadata.clone(),
        }
    }
}

/// Convolves each dry signal with its responses, sums, truncates to `len`
/// and peak-normalizes when any sample would leave `[-1, 1]`.
pub fn render_mixture(
    mut metadata: SceneMetadata,
    dry: [&[f64]; 2],
    rirs: [&RirSet; 2],
    len: usize,
) -> Result<MixtureExample> {
    let sample_rate = rirs[0].sample_rate;
    if rirs[1].sample_rate != sample_rate || rirs[0].channels() != rirs[1].channels() {
        return Err(Error::GeometryMismatch("source responses disagree in rate or channels".into()));
    }
    if len == 0 {
        return Err(Error::invalid("mixture length must be positive"));
    }
    for d in dry {
        if d.len() < len {
            return Err(Error::invalid(format!("dry signal has {} samples, need {len}", d.len())));
        }
    }
    let mut refs: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|s| rirs[s].taps.iter().map(|h| convolve(dry[s], h, len)).collect())
        .collect();
    let mix_peak = (0..len)
        .flat_map(|i| (0..refs[0].len()).map(move |m| (i, m)))
        .map(|(i, m)| (refs[0][m][i] + refs[1][m][i]).abs())
        .fold(0.0, f64::max);
    let ref_peak = refs.iter().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let peak = mix_peak.max(ref_peak);
    let factor = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if factor != 1.0 {
        for v in refs.iter_mut().flatten().flatten() {
            *v *= factor;
        }
    }
    let mixture: Vec<Vec<f64>> = refs[0]
        .iter()
        .zip(&refs[1])
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    metadata.normalization = factor;
    metadata.samples = len;
    metadata.sample_rate = sample_rate;
    let mut refs = refs.into_iter();
    Ok(MixtureExample {
        mixture: AudioSegment::new(mixture, sample_rate)?,
        references: [
            AudioSegment::new(refs.next().unwrap(), sample_rate)?,
            AudioSegment::new(refs.next().unwrap(), sample_rate)?,
        ],
        metadata,
    })
}

/// Parameters of a simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub geometry: ArrayGeometry,
    pub constraints: SceneConstraints,
    pub source: SourceSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            duration_s: 4.0,
            geometry: ArrayGeometry::default(),
            constraints: SceneConstraints::default(),
            source: SourceSpec::Synthetic,
        }
    }
}

impl SimulationConfig {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}

/// Independent RNG stream of one example.
pub fn example_rng(master_seed: u64, split: &str, index: u64) -> ChaCha8Rng {
    // FNV-1a of the split name keeps splits on disjoint streams
    let tag = split
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ tag);
    rng.set_stream(index);
    rng
}

/// Generates examples for one split; holds the opened corpus if any.
pub struct Simulator {
    config: SimulationConfig,
    corpus: Option<Corpus>,
}

impl Simulator {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.constraints.validate()?;
        config.geometry.validate()?;
        if !(config.duration_s > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        let corpus = match &config.source {
            SourceSpec::Synthetic => None,
            SourceSpec::Corpus { dir } => Some(Corpus::open(dir)?),
        };
        Ok(Self { config, corpus })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn generate(&self, master_seed: u64, split: &str, index: u64) -> Result<MixtureExample> {
        let cfg = &self.config;
        let mut rng = example_rng(master_seed, split, index);
        let (room, placement) = sample_scene(&mut rng, &cfg.constraints, &cfg.geometry)?;
        let len = cfg.samples();
        let dry: [DrySignal; 2] = match &self.corpus {
            Some(c) => c.draw_pair(&mut rng, len, cfg.sample_rate)?,
            None => [0, 1].map(|s| DrySignal {
                samples: synthetic_voice(&mut rng, len, cfg.sample_rate),
                speaker: format!("synthetic-{index}-{s}"),
                origin: "synthetic".into(),
            }),
        };
        let rirs = rir_anechoic(&placement, &cfg.geometry, cfg.sample_rate);
        let locations = placement.locations(&cfg.geometry)?;
        let metadata = SceneMetadata {
            id: format!("{split}-{index:06}"),
            seed: master_seed,
            index,
            room,
            bucket: AzimuthBucket::of_pair(&locations[0], &locations[1]),
            locations,
            placement,
            normalization: 1.0,
            sample_rate: cfg.sample_rate,
            samples: len,
            speakers: [dry[0].speaker.clone(), dry[1].speaker.clone()],
        };
        render_mixture(metadata, [&dry[0].samples, &dry[1].samples], [&rirs[0], &rirs[1]], len)
    }
}

/// Appends examples to a dataset directory.
pub struct DatasetWriter {
    dir: PathBuf,
    manifest: File,
    written: usize,
}

impl DatasetWriter {
    /// Opens `dir` for writing. An existing manifest is an error unless
    /// `append` is set.
    pub fn create(dir: impl AsRef<Path>, append: bool) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(MANIFEST);
        if path.exists() && !append {
            return Err(Error::invalid(format!(
                "{} already exists; pass the append flag to extend it",
                path.display()
            )));
        }
        let manifest = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir,
            manifest,
            written: 0,
        })
    }

    pub fn write(&mut self, example: &MixtureExample) -> Result<()> {
        let id = &example.metadata.id;
        example.mixture.write_wav(self.dir.join(format!("{id}.mix.wav")))?;
        for (s, r) in example.references.iter().enumerate() {
            r.write_wav(self.dir.join(format!("{id}.src{s}.wav")))?;
        }
        let line = serde_json::to_string(&example.metadata)?;
        let path = self.dir.join(MANIFEST);
        writeln!(self.manifest, "{line}").map_err(|e| Error::io(&path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }
}

pub fn write_dataset(examples: &[MixtureExample], dir: impl AsRef<Path>, append: bool) -> Result<()> {
    let mut w = DatasetWriter::create(dir, append)?;
    examples.iter().try_for_each(|e| w.write(e))
}

/// Manifest records of a dataset directory.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<SceneMetadata>> {
    let path = dir.as_ref().join(MANIFEST);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            what: "manifest",
            path: path.clone(),
            reason: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}

/// Loads the audio of one manifest record.
pub fn load_example(dir: impl AsRef<Path>, metadata: SceneMetadata) -> Result<MixtureExample> {
    let dir = dir.as_ref();
    let id = &metadata.id;
    let load = |suffix: &str| -> Result<AudioSegment> {
        let path = dir.join(format!("{id}.{suffix}.wav"));
        let a = AudioSegment::read_wav(&path)?;
        if a.len() != metadata.samples || a.sample_rate() != metadata.sample_rate {
            return Err(Error::Malformed {
                what: "example audio",
                path,
                reason: format!(
                    "{} samples at {} Hz, manifest says {} at {} Hz",
                    a.len(),
                    a.sample_rate(),
                    metadata.samples,
                    metadata.sample_rate
                ),
            });
        }
        Ok(a)
    };
    Ok(MixtureExample {
        mixture: load("mix")?,
        references: [load("src0")?, load("src1")?],
        metadata,
    })
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<MixtureExample>> {
    let dir = dir.as_ref();
    read_manifest(dir)?
        .into_iter()
        .map(|m| load_example(dir, m))
        .collect()
}

/// Example count per bucket, in [`AzimuthBucket::ALL`] order.
pub fn bucket_counts(metadata: &[SceneMetadata]) -> [usize; 4] {
    let mut counts = [0; 4];
    for m in metadata {
        counts[AzimuthBucket::ALL.iter().position(|b| *b == m.bucket).unwrap()] += 1;
    }
    counts
}
