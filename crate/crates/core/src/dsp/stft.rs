//! Short-time Fourier transform with reflect center padding and
//! weighted overlap-add synthesis normalized by the summed squared window.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::audio::AudioSegment;
use crate::autodiff::{Backward, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Analysis parameters. The window is always Hamming (periodic).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub window_ms: f64,
    pub hop_fraction: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            fft_size: 512,
            window_ms: 32.0,
            hop_fraction: 0.5,
        }
    }
}

impl StftConfig {
    pub fn window_length(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self) -> usize {
        ((self.window_length() as f64 * self.hop_fraction).round() as usize).max(1)
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Center padding applied on each side before framing.
    pub fn pad(&self) -> usize {
        self.fft_size / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::invalid("fft size must be even and at least 2"));
        }
        let win = self.window_length();
        if win == 0 || win > self.fft_size {
            return Err(Error::invalid(format!(
                "window of {win} samples does not fit fft size {}",
                self.fft_size
            )));
        }
        if !(self.hop_fraction > 0.0 && self.hop_fraction <= 1.0) {
            return Err(Error::invalid("hop fraction must be in (0, 1]"));
        }
        Ok(())
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        (len + 2 * self.pad() - self.fft_size) / self.hop() + 1
    }
}

/// Complex STFT laid out `[T, F, M]` (frame, bin, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub(crate) values: Vec<Complex64>,
    frames: usize,
    bins: usize,
    channels: usize,
    signal_len: usize,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn from_values(
        values: Vec<Complex64>,
        frames: usize,
        channels: usize,
        signal_len: usize,
        config: StftConfig,
    ) -> Result<Self> {
        let bins = config.freq_bins();
        if values.len() != frames * bins * channels {
            return Err(Error::invalid("spectrogram values do not match [T, F, M]"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("spectrogram contains non-finite values"));
        }
        Ok(Self {
            values,
            frames,
            bins,
            channels,
            signal_len,
            config,
        })
    }

    pub fn zeros(frames: usize, channels: usize, signal_len: usize, config: StftConfig) -> Self {
        let bins = config.freq_bins();
        Self {
            values: vec![Complex64::new(0.0, 0.0); frames * bins * channels],
            frames,
            bins,
            channels,
            signal_len,
            config,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, t: usize, f: usize, m: usize) -> usize {
        (t * self.bins + f) * self.channels + m
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize, m: usize) -> Complex64 {
        self.values[self.index(t, f, m)]
    }

    /// Single channel view as a new `[T, F, 1]` spectrogram.
    pub fn channel(&self, m: usize) -> Self {
        let values = self.values.iter().skip(m).step_by(self.channels).copied().collect();
        Self {
            values,
            channels: 1,
            ..self.clone()
        }
    }

    /// Interleaved `[T, F, M, 2]` real tensor.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.values.iter().flat_map(|c| [c.re, c.im]).collect();
        Tensor::new(&[self.frames, self.bins, self.channels, 2], data)
    }

    /// Inverse of [`Self::to_tensor`] for a `[T, F, M, 2]` or `[T, F, 2]` tensor.
    pub fn from_tensor(t: &Tensor, signal_len: usize, config: StftConfig) -> Result<Self> {
        let s = t.shape();
        let (frames, channels) = match s.len() {
            4 => (s[0], s[2]),
            3 => (s[0], 1),
            _ => return Err(Error::invalid(format!("unexpected spectrogram tensor shape {s:?}"))),
        };
        let values = t.data().chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        Self::from_values(values, frames, channels, signal_len, config)
    }
}

/// Window, FFT plans and synthesis normalization for one configuration
/// and signal length.
pub struct StftPlan {
    config: StftConfig,
    signal_len: usize,
    frames: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `1 / Σ w²` over the padded signal (zero where uncovered).
    inv_norm: Vec<f64>,
}

impl StftPlan {
    pub fn new(config: StftConfig, signal_len: usize) -> Result<Self> {
        config.validate()?;
        let n = config.fft_size;
        let win_len = config.window_length();
        let pad = config.pad();
        if signal_len < win_len || signal_len <= pad {
            return Err(Error::invalid(format!(
                "signal of {signal_len} samples is shorter than one analysis window ({win_len}) \
                 or the reflect padding ({pad})"
            )));
        }
        let frames = config.frame_count(signal_len);
        let hop = config.hop();
        let offset = (n - win_len) / 2;
        let mut window = vec![0.0; n];
        for i in 0..win_len {
            window[offset + i] = 0.54 - 0.46 * (2.0 * PI * i as f64 / win_len as f64).cos();
        }
        let padded = signal_len + 2 * pad;
        let mut norm = vec![0.0; padded.max(n + hop * (frames - 1))];
        for t in 0..frames {
            for (i, w) in window.iter().enumerate() {
                norm[t * hop + i] += w * w;
            }
        }
        let inv_norm = norm.iter().map(|&v| if v > 1e-10 { 1.0 / v } else { 0.0 }).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            signal_len,
            frames,
            window,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            inv_norm,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    fn check_coverage(&self) -> Result<()> {
        let pad = self.config.pad();
        if self.inv_norm[pad..pad + self.signal_len].iter().any(|&v| v == 0.0) {
            return Err(Error::Degenerate(
                "synthesis window normalization is zero inside the signal".into(),
            ));
        }
        Ok(())
    }

    fn padded(&self, x: &[f64]) -> Vec<f64> {
        let pad = self.config.pad();
        let len = x.len();
        let mut out = Vec::with_capacity(len + 2 * pad);
        out.extend((1..=pad).rev().map(|i| x[i]));
        out.extend_from_slice(x);
        out.extend((0..pad).map(|i| x[len - 2 - i]));
        out
    }

    /// Spectrum of every frame of one channel, appended to `out` as `[T, F]`.
    fn analyze_channel(&self, x: &[f64]) -> Vec<Complex64> {
        let n = self.config.fft_size;
        let bins = self.config.freq_bins();
        let hop = self.config.hop();
        let padded = self.padded(x);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut out = Vec::with_capacity(self.frames * bins);
        for t in 0..self.frames {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(padded[t * hop + i] * self.window[i], 0.0);
            }
            self.forward.process(&mut buf);
            out.extend_from_slice(&buf[..bins]);
        }
        out
    }

    pub fn stft(&self, segment: &AudioSegment) -> Result<ComplexSpectrogram> {
        if segment.len() != self.signal_len {
            return Err(Error::invalid("segment length does not match the plan"));
        }
        if segment.sample_rate() != self.config.sample_rate {
            return Err(Error::invalid(format!(
                "segment sample rate {} differs from the configured {}",
                segment.sample_rate(),
                self.config.sample_rate
            )));
        }
        let m = segment.channel_count();
        let bins = self.config.freq_bins();
        let mut spec = ComplexSpectrogram::zeros(self.frames, m, self.signal_len, self.config);
        for c in 0..m {
            let ch = self.analyze_channel(segment.channel(c));
            for (i, v) in ch.into_iter().enumerate() {
                let (t, f) = (i / bins, i % bins);
                let idx = spec.index(t, f, c);
                spec.values[idx] = v;
            }
        }
        Ok(spec)
    }

    /// Inverse transform of one channel given frame spectra `[T, F]`.
    fn synthesize(&self, frames: impl Fn(usize, usize) -> Complex64) -> Vec<f64> {
        let n = self.config.fft_size;
        let bins = self.config.freq_bins();
        let hop = self.config.hop();
        let pad = self.config.pad();
        let mut acc = vec![0.0; self.inv_norm.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..self.frames {
            for k in 0..bins {
                buf[k] = frames(t, k);
            }
            // Hermitian extension; DC and Nyquist are taken as real
            buf[0].im = 0.0;
            buf[n / 2].im = 0.0;
            for k in 1..n / 2 {
                buf[n - k] = buf[k].conj();
            }
            self.inverse.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                acc[t * hop + i] += b.re / n as f64 * self.window[i];
            }
        }
        (0..self.signal_len)
            .map(|i| acc[pad + i] * self.inv_norm[pad + i])
            .collect()
    }

    pub fn istft(&self, spec: &ComplexSpectrogram) -> Result<AudioSegment> {
        if spec.frames() != self.frames || spec.config() != &self.config {
            return Err(Error::invalid("spectrogram does not match the plan"));
        }
        self.check_coverage()?;
        let channels = (0..spec.channels())
            .map(|c| self.synthesize(|t, f| spec.get(t, f, c)))
            .collect();
        AudioSegment::new(channels, self.config.sample_rate)
    }

    /// Adjoint of single-channel synthesis: maps a waveform gradient to
    /// gradients of the `[T, F, 2]` real/imag frame spectra.
    fn synthesize_adjoint(&self, grad: &[f64]) -> Vec<f64> {
        let n = self.config.fft_size;
        let bins = self.config.freq_bins();
        let hop = self.config.hop();
        let pad = self.config.pad();
        let mut padded = vec![0.0; self.inv_norm.len()];
        for (i, g) in grad.iter().enumerate() {
            padded[pad + i] = g * self.inv_norm[pad + i];
        }
        let mut out = vec![0.0; self.frames * bins * 2];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..self.frames {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(padded[t * hop + i] * self.window[i] / n as f64, 0.0);
            }
            self.forward.process(&mut buf);
            for k in 0..bins {
                let c = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
                let o = (t * bins + k) * 2;
                out[o] = c * buf[k].re;
                out[o + 1] = if c == 1.0 { 0.0 } else { c * buf[k].im };
            }
        }
        out
    }

    /// Differentiable single-channel inverse: `[T, F, 2]` → `[L]`.
    pub fn istft_graph(self: &Arc<Self>, g: &mut Graph, spec: Var) -> Result<Var> {
        let bins = self.config.freq_bins();
        if g.shape(spec) != [self.frames, bins, 2] {
            return Err(Error::invalid(format!(
                "istft expects [{}, {bins}, 2], got {:?}",
                self.frames,
                g.shape(spec)
            )));
        }
        self.check_coverage()?;
        let data = g.value(spec).data();
        let wave = self.synthesize(|t, f| {
            let o = (t * bins + f) * 2;
            Complex64::new(data[o], data[o + 1])
        });
        let value = Tensor::new(&[self.signal_len], wave);
        Ok(g.record(value, &[spec], IstftOp(Arc::clone(self))))
    }
}

struct IstftOp(Arc<StftPlan>);

impl Backward for IstftOp {
    fn backward(&self, grad: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let g = self.0.synthesize_adjoint(grad.data());
        vec![Some(Tensor::new(inputs[0].shape(), g))]
    }
}

/// One-shot forward transform.
pub fn stft(segment: &AudioSegment, config: &StftConfig) -> Result<ComplexSpectrogram> {
    StftPlan::new(*config, segment.len())?.stft(segment)
}

/// One-shot inverse transform; output length equals the analyzed length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioSegment> {
    StftPlan::new(*spec.config(), spec.signal_len())?.istft(spec)
}
