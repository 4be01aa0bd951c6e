use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Multichannel waveform, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSegment {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioSegment {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("audio segment needs at least one channel"));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::invalid("audio segment is empty"));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::invalid("channels have different lengths"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("audio contains non-finite samples"));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|v| v * factor).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Reads a RIFF WAV file. Integer PCM is mapped to `[-1, 1)`.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
        let spec = reader.spec();
        let m = spec.channels as usize;
        let interleaved: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?,
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(wav_err)?
            }
        };
        let mut channels = vec![Vec::with_capacity(interleaved.len() / m.max(1)); m];
        for frame in interleaved.chunks_exact(m) {
            for (c, v) in channels.iter_mut().zip(frame) {
                c.push(*v);
            }
        }
        Self::new(channels, spec.sample_rate).map_err(|e| Error::Malformed {
            what: "wav",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Writes interleaved 32-bit float WAV.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let wav_err = |source| Error::Wav {
            path: path.to_path_buf(),
            source,
        };
        let spec = hound::WavSpec {
            channels: self.channel_count() as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
        for i in 0..self.len() {
            for c in &self.channels {
                writer.write_sample(c[i] as f32).map_err(wav_err)?;
            }
        }
        writer.finalize().map_err(wav_err)
    }

    /// Same segment rounded to `f32` precision, i.e. what a float WAV stores.
    pub fn quantized_f32(&self) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|&v| v as f32 as f64).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}
