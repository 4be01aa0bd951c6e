//! Room impulse responses: the built-in anechoic provider and ingestion of
//! externally simulated responses.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::scene::ScenePlacement;
use crate::dsp::AudioSegment;
use crate::error::{Error, Result};
use crate::spatial::ArrayGeometry;

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Length of the fractional-delay kernel.
pub const SINC_TAPS: usize = 81;

/// Multichannel impulse response of one source.
#[derive(Clone, Debug, PartialEq)]
pub struct RirSet {
    pub sample_rate: u32,
    /// Per microphone.
    pub taps: Vec<Vec<f64>>,
}

impl RirSet {
    pub fn channels(&self) -> usize {
        self.taps.len()
    }
}

/// Windowed-sinc impulse at a fractional `delay` (samples), `gain` scaled.
fn fractional_impulse(delay: f64, gain: f64) -> Vec<f64> {
    let half = (SINC_TAPS / 2) as isize;
    let center = delay.round() as isize;
    let len = (center + half + 1).max(1) as usize;
    let mut h = vec![0.0; len];
    for n in (center - half).max(0)..=center + half {
        let x = n as f64 - delay;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        // Blackman window spanning the kernel
        let u = (x + half as f64 + 1.0) / (SINC_TAPS as f64 + 1.0);
        let w = if (0.0..=1.0).contains(&u) {
            0.42 - 0.5 * (2.0 * std::f64::consts::PI * u).cos() + 0.08 * (4.0 * std::f64::consts::PI * u).cos()
        } else {
            0.0
        };
        h[n as usize] = gain * sinc * w;
    }
    h
}

/// Direct-path responses from every source to every microphone: delay
/// `r/c`, amplitude `1/max(r, 0.1)`.
pub fn rir_anechoic(placement: &ScenePlacement, geometry: &ArrayGeometry, sample_rate: u32) -> [RirSet; 2] {
    let mics = placement.mic_positions(geometry);
    [0, 1].map(|s| {
        let src = placement.source_positions[s];
        RirSet {
            sample_rate,
            taps: mics
                .iter()
                .map(|m| {
                    let r = ((src[0] - m[0]).powi(2) + (src[1] - m[1]).powi(2) + (src[2] - m[2]).powi(2)).sqrt();
                    fractional_impulse(r / SPEED_OF_SOUND * sample_rate as f64, 1.0 / r.max(0.1))
                })
                .collect(),
        }
    })
}

/// Linear convolution, truncated to `out_len` samples.
pub fn convolve(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    let nonzero = h.iter().filter(|v| **v != 0.0).count();
    if x.is_empty() || h.is_empty() {
        return vec![0.0; out_len];
    }
    if nonzero <= 256 {
        let mut y = vec![0.0; out_len];
        for (k, &hk) in h.iter().enumerate() {
            if hk == 0.0 || k >= out_len {
                continue;
            }
            for (yi, xi) in y[k..].iter_mut().zip(x) {
                *yi += hk * xi;
            }
        }
        return y;
    }
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |s: &[f64]| {
        let mut v: Vec<Complex64> = s.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        v.resize(n, Complex64::new(0.0, 0.0));
        v
    };
    let (mut a, mut b) = (pad(x), pad(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let mut y: Vec<f64> = a.iter().take(full.min(out_len)).map(|c| c.re / n as f64).collect();
    y.resize(out_len, 0.0);
    y
}

/// Geometry recorded next to an ingested response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RirSidecar {
    pub sample_rate: u32,
    /// Room coordinates of each microphone, meters.
    pub mic_positions: Vec<[f64; 3]>,
    pub source_position: [f64; 3],
}

fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("json")
}

/// Writes `taps` as a float WAV plus its JSON sidecar.
pub fn write_rirs(path: impl AsRef<Path>, rirs: &RirSet, sidecar: &RirSidecar) -> Result<()> {
    let path = path.as_ref();
    let len = rirs.taps.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let channels = rirs
        .taps
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.resize(len, 0.0);
            t
        })
        .collect();
    AudioSegment::new(channels, rirs.sample_rate)?.write_wav(path)?;
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(sidecar)?).map_err(|e| Error::io(&side, e))
}

/// Loads responses and checks them against the expected microphone layout
/// and sample rate. `expected_mics` are room coordinates.
pub fn ingest_rirs(path: impl AsRef<Path>, expected_mics: &[[f64; 3]], sample_rate: u32) -> Result<(RirSet, RirSidecar)> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: RirSidecar = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        what: "RIR sidecar",
        path: side.clone(),
        reason: e.to_string(),
    })?;
    let audio = AudioSegment::read_wav(path)?;
    if audio.sample_rate() != sample_rate || sidecar.sample_rate != sample_rate {
        return Err(Error::GeometryMismatch(format!(
            "{}: sample rate {} Hz (sidecar {} Hz), expected {sample_rate} Hz",
            path.display(),
            audio.sample_rate(),
            sidecar.sample_rate
        )));
    }
    if audio.channel_count() != expected_mics.len() || sidecar.mic_positions.len() != expected_mics.len() {
        return Err(Error::GeometryMismatch(format!(
            "{}: {} channels / {} sidecar microphones, expected {}",
            path.display(),
            audio.channel_count(),
            sidecar.mic_positions.len(),
            expected_mics.len()
        )));
    }
    for (i, (a, b)) in sidecar.mic_positions.iter().zip(expected_mics).enumerate() {
        if (0..3).any(|k| (a[k] - b[k]).abs() > 1e-6) {
            return Err(Error::GeometryMismatch(format!(
                "{}: microphone {i} at {a:?}, scene expects {b:?}",
                path.display()
            )));
        }
    }
    Ok((
        RirSet {
            sample_rate,
            taps: audio.into_channels(),
        },
        sidecar,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn placement(src: [[f64; 3]; 2]) -> ScenePlacement {
        ScenePlacement {
            array_origin: [0.0, 0.0, 1.0],
            array_axis: [1.0, 0.0],
            source_positions: src,
            source_distances: [0.0; 2],
            inter_source_distance: 0.0,
        }
    }

    fn peak_index(h: &[f64]) -> usize {
        (0..h.len()).max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs())).unwrap()
    }

    #[test]
    fn integer_delay_peak() {
        let geom = ArrayGeometry::linear(&[0.1]);
        let p = placement([[0.0, 3.43, 1.0], [0.1, 1.0, 1.0]]);
        let rirs = rir_anechoic(&p, &geom, 16_000);
        let h = &rirs[0].taps[0];
        assert_eq!(peak_index(h), 160);
        assert!((h[160] - 1.0 / 3.43).abs() < 1e-12);
    }

    #[test]
    fn equidistant_mics_match() {
        let geom = ArrayGeometry::linear(&[0.2]);
        let p = placement([[0.1, 2.0, 1.0], [0.1, 1.0, 1.0]]);
        let rirs = rir_anechoic(&p, &geom, 16_000);
        assert_eq!(rirs[0].taps[0], rirs[0].taps[1]);
    }

    #[test]
    fn far_field_delay() {
        let geom = ArrayGeometry::linear(&[0.28]);
        let theta: f64 = 60f64.to_radians();
        let r = 300.0;
        let p = placement([[0.14 + r * theta.cos(), r * theta.sin(), 1.0], [0.0, 1.0, 1.0]]);
        let rirs = rir_anechoic(&p, &geom, 16_000);
        let centroid = |h: &[f64]| {
            let e: f64 = h.iter().map(|v| v * v).sum();
            h.iter().enumerate().map(|(n, v)| n as f64 * v * v).sum::<f64>() / e
        };
        let lag = centroid(&rirs[0].taps[0]) - centroid(&rirs[0].taps[1]);
        let expect = 0.28 * theta.cos() / SPEED_OF_SOUND * 16_000.0;
        assert!((lag - expect).abs() <= 0.5 + 1e-9, "{lag} vs {expect}");
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let h: Vec<f64> = (0..300).map(|i| ((i * 5) % 11) as f64 * 0.1).collect();
        let fast = convolve(&x, &h, 700);
        let mut slow = vec![0.0; 700];
        for (i, xi) in x.iter().enumerate() {
            for (k, hk) in h.iter().enumerate() {
                if i + k < 700 {
                    slow[i + k] += xi * hk;
                }
            }
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ingestion_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let geom = ArrayGeometry::default();
        let p = placement([[0.5, 2.0, 1.0], [1.0, 1.0, 1.0]]);
        let mics = p.mic_positions(&geom);
        let rirs = rir_anechoic(&p, &geom, 16_000);
        let mut quantized = rirs[0].clone();
        let len = quantized.taps.iter().map(Vec::len).max().unwrap();
        for t in &mut quantized.taps {
            t.resize(len, 0.0);
            for v in t.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        let side = RirSidecar {
            sample_rate: 16_000,
            mic_positions: mics.clone(),
            source_position: p.source_positions[0],
        };
        let path = dir.path().join("a.wav");
        write_rirs(&path, &quantized, &side).unwrap();
        let (back, meta) = ingest_rirs(&path, &mics, 16_000).unwrap();
        assert_eq!(back, quantized);
        assert_eq!(meta, side);

        assert!(matches!(ingest_rirs(&path, &mics[..5], 16_000), Err(Error::GeometryMismatch(_))));
        assert!(matches!(ingest_rirs(&path, &mics, 8_000), Err(Error::GeometryMismatch(_))));
        std::fs::write(dir.path().join("a.json"), "{not json").unwrap();
        assert!(matches!(ingest_rirs(&path, &mics, 16_000), Err(Error::Malformed { .. })));
    }
}
