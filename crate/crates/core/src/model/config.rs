use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::spatial::{ArrayGeometry, SpatialCodecConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnConfig {
    pub layers: usize,
    pub hidden: usize,
}

/// Architecture of the full network. Turning off both embeddings removes
/// the locator and leaves the covariance-only recurrent beamformer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub stft: StftConfig,
    pub geometry: ArrayGeometry,
    pub codec: SpatialCodecConfig,
    pub reference_channel: usize,
    pub sources: usize,
    /// `K`; filters cover a `(2K+1) × (2K+1)` neighbourhood.
    pub crf_half_width: usize,
    pub crf_rnn: RnnConfig,
    /// Affine layers after the recurrent stack; all but the last use ReLU.
    pub crf_head_layers: usize,
    pub crf_head_width: usize,
    pub doa_rnn: RnnConfig,
    /// `(time, angle)` kernel of the second locator convolution.
    pub doa_conv_kernel: (usize, usize),
    pub bf_rnn: RnnConfig,
    pub use_direction_embedding: bool,
    pub use_location_embedding: bool,
    /// Blocks separation-loss gradients from flowing into the locator
    /// through the decoded coordinates.
    pub locator_stop_gradient: bool,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    /// Full-size configuration.
    pub fn paper() -> Self {
        Self {
            stft: StftConfig::default(),
            geometry: ArrayGeometry::default(),
            codec: SpatialCodecConfig::default(),
            reference_channel: 0,
            sources: 2,
            crf_half_width: 1,
            crf_rnn: RnnConfig { layers: 2, hidden: 500 },
            crf_head_layers: 4,
            crf_head_width: 500,
            doa_rnn: RnnConfig { layers: 2, hidden: 210 },
            doa_conv_kernel: (5, 5),
            bf_rnn: RnnConfig { layers: 2, hidden: 300 },
            use_direction_embedding: true,
            use_location_embedding: true,
            locator_stop_gradient: false,
            layer_norm_eps: 1e-5,
        }
    }

    /// Scaled-down configuration that trains on a single CPU core.
    pub fn desk() -> Self {
        Self {
            stft: StftConfig {
                fft_size: 128,
                window_ms: 8.0,
                ..StftConfig::default()
            },
            ..Self::paper().with_width_multiplier(0.1)
        }
    }

    /// Every hidden width multiplied by `factor` (rounded up, at least 1).
    pub fn with_width_multiplier(mut self, factor: f64) -> Self {
        let scale = |h: usize| ((h as f64 * factor).ceil() as usize).max(1);
        self.crf_rnn.hidden = scale(self.crf_rnn.hidden);
        self.crf_head_width = scale(self.crf_head_width);
        self.doa_rnn.hidden = scale(self.doa_rnn.hidden);
        self.bf_rnn.hidden = scale(self.bf_rnn.hidden);
        self
    }

    /// Baseline ablation: no direction or location inputs.
    pub fn without_locator(mut self) -> Self {
        self.use_direction_embedding = false;
        self.use_location_embedding = false;
        self
    }

    pub fn locator_enabled(&self) -> bool {
        self.use_direction_embedding || self.use_location_embedding
    }

    pub fn channels(&self) -> usize {
        self.geometry.mic_count()
    }

    pub fn taps(&self) -> usize {
        (2 * self.crf_half_width + 1).pow(2)
    }

    pub fn observers(&self) -> usize {
        self.codec.observers
    }

    /// Width of the spatial spectrum block, `bins · N`.
    pub fn doa_width(&self) -> usize {
        self.codec.bins * self.codec.observers
    }

    /// Per-frame input width of the filter estimator, `F · M`.
    pub fn crf_input_width(&self) -> usize {
        self.stft.freq_bins() * self.channels()
    }

    /// Per-frame output width of the filter estimator:
    /// `F · sources · 2 branches · M · taps · 2 (re, im)`.
    pub fn crf_head_output(&self) -> usize {
        self.stft.freq_bins() * self.sources * 2 * self.channels() * self.taps() * 2
    }

    /// Per-unit width of one covariance feature block, `2M²`.
    pub fn covariance_width(&self) -> usize {
        2 * self.channels() * self.channels()
    }

    /// Beamformer input width per T-F unit.
    pub fn beamformer_input_width(&self) -> usize {
        let mut w = 2 * self.covariance_width();
        if self.use_direction_embedding {
            w += self.doa_width();
        }
        if self.use_location_embedding {
            w += 2;
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.geometry.validate()?;
        self.codec.validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.sources != 2 {
            return bad("exactly two sources are supported");
        }
        if self.channels() < 2 {
            return bad("at least two microphones are required");
        }
        if self.reference_channel >= self.channels() {
            return bad("reference channel out of range");
        }
        for (name, r) in [("crf", self.crf_rnn), ("doa", self.doa_rnn), ("bf", self.bf_rnn)] {
            if r.layers == 0 || r.hidden == 0 {
                return Err(Error::Config(format!("{name} recurrent stack needs layers and hidden > 0")));
            }
        }
        if self.crf_head_layers == 0 || self.crf_head_width == 0 {
            return bad("filter head needs at least one layer");
        }
        let (kt, ka) = self.doa_conv_kernel;
        if kt % 2 == 0 || ka % 2 == 0 {
            return bad("locator convolution kernel must be odd-sized");
        }
        if self.use_location_embedding && self.codec.observers != 2 {
            return bad("location embedding needs two observers");
        }
        Ok(())
    }
}
