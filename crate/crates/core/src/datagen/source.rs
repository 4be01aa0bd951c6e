//! Dry single-speaker material: a procedural voice-like generator and a
//! corpus directory reader (`<corpus>/<speaker>/*.wav`).

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::AudioSegment;
use crate::error::{Error, Result};

/// One dry utterance and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct DrySignal {
    pub samples: Vec<f64>,
    pub speaker: String,
    pub origin: String,
}

/// Where dry sources are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceSpec {
    /// Procedural harmonic voices; each draw is a new speaker.
    Synthetic,
    /// Directory of speaker subdirectories holding mono WAV files.
    Corpus { dir: PathBuf },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Synthetic
    }
}

/// Voiced syllables on a drifting pitch with two formant resonances,
/// separated by short pauses and occasional fricative noise.
pub fn synthetic_voice<R: Rng>(rng: &mut R, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let f0_base = rng.gen_range(90.0..260.0);
    let formants = [rng.gen_range(300.0..850.0), rng.gen_range(900.0..2400.0)];
    let mut out = vec![0.0; len];
    let mut pos = 0usize;
    let mut phase = 0.0f64;
    while pos < len {
        let syllable = (rng.gen_range(0.10..0.28) * fs) as usize;
        let gap = (rng.gen_range(0.02..0.12) * fs) as usize;
        let glide = rng.gen_range(-0.25..0.25);
        let level = rng.gen_range(0.5..1.0);
        let shift = [rng.gen_range(0.85..1.15), rng.gen_range(0.85..1.15)];
        let fricative = rng.gen_bool(0.3);
        for i in 0..syllable.min(len - pos) {
            let u = i as f64 / syllable as f64;
            let f0 = f0_base * (1.0 + glide * (u - 0.5));
            phase += 2.0 * std::f64::consts::PI * f0 / fs;
            let env = (std::f64::consts::PI * u).sin().powf(0.7) * level;
            let mut v = 0.0;
            let mut h = 1.0;
            while h * f0 < 0.45 * fs.min(16_000.0) {
                let f = h * f0;
                let gain: f64 = formants
                    .iter()
                    .zip(shift)
                    .map(|(&fm, s)| {
                        let d = (f - fm * s) / (0.15 * fm);
                        (-d * d).exp()
                    })
                    .sum::<f64>()
                    + 0.05 / h;
                v += gain * (h * phase).sin();
                h += 1.0;
            }
            if fricative && u > 0.7 {
                v += rng.gen_range(-0.3..0.3);
            }
            out[pos + i] = env * v;
        }
        pos += syllable + gap;
    }
    normalize_rms(&mut out, 0.05);
    out
}

/// Scales to the given RMS (silent input is left alone).
pub fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        for v in x.iter_mut() {
            *v *= target / rms;
        }
    }
}

/// Speaker directories and their files, sorted for reproducibility.
#[derive(Clone, Debug)]
pub struct Corpus {
    speakers: Vec<(String, Vec<PathBuf>)>,
}

impl Corpus {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = |d: &Path| -> Result<Vec<PathBuf>> {
            let mut v: Vec<PathBuf> = std::fs::read_dir(d)
                .map_err(|e| Error::io(d, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            v.sort();
            Ok(v)
        };
        let mut speakers = Vec::new();
        for sub in entries(dir)?.into_iter().filter(|p| p.is_dir()) {
            let files: Vec<PathBuf> = entries(&sub)?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
                .collect();
            if !files.is_empty() {
                let name = sub.file_name().unwrap_or_default().to_string_lossy().into_owned();
                speakers.push((name, files));
            }
        }
        if speakers.len() < 2 {
            return Err(Error::Malformed {
                what: "corpus",
                path: dir.to_path_buf(),
                reason: format!("need at least two speaker directories with WAV files, found {}", speakers.len()),
            });
        }
        Ok(Self { speakers })
    }

    pub fn speaker_count(&self) -> usize {
        self.speakers.len()
    }

    /// Two utterances from different speakers, each at least `len` samples
    /// (shorter files are looped) and cropped at a random offset.
    pub fn draw_pair<R: Rng>(&self, rng: &mut R, len: usize, sample_rate: u32) -> Result<[DrySignal; 2]> {
        let a = rng.gen_range(0..self.speakers.len());
        let mut b = rng.gen_range(0..self.speakers.len() - 1);
        if b >= a {
            b += 1;
        }
        let mut draw = |s: usize| -> Result<DrySignal> {
            let (name, files) = &self.speakers[s];
            let path = &files[rng.gen_range(0..files.len())];
            let audio = AudioSegment::read_wav(path)?;
            if audio.channel_count() != 1 || audio.sample_rate() != sample_rate {
                return Err(Error::Malformed {
                    what: "corpus file",
                    path: path.clone(),
                    reason: format!(
                        "expected mono {sample_rate} Hz, got {} channels at {} Hz",
                        audio.channel_count(),
                        audio.sample_rate()
                    ),
                });
            }
            let src = audio.channel(0);
            let offset = if src.len() > len { rng.gen_range(0..=src.len() - len) } else { 0 };
            let samples = (0..len).map(|i| src[(offset + i) % src.len()]).collect();
            Ok(DrySignal {
                samples,
                speaker: name.clone(),
                origin: path.display().to_string(),
            })
        };
        Ok([draw(a)?, draw(b)?])
    }
}
