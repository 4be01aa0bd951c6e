//! Waveform ↔ time-frequency conversion and network input features.

mod audio;
mod features;
mod stft;

pub use audio::{AudioSegment, DEFAULT_SAMPLE_RATE};
pub use features::{extract_features, FeaturePack};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, StftPlan};
