//! Simulated two-speaker scenes, impulse responses, mixtures and datasets.

mod dataset;
mod rir;
mod scene;
mod source;

pub use dataset::{
    bucket_counts, example_rng, load_example, read_dataset, read_manifest, render_mixture, write_dataset,
    DatasetWriter, MixtureExample, SceneMetadata, SimulationConfig, Simulator, MANIFEST,
};
pub use rir::{convolve, ingest_rirs, rir_anechoic, write_rirs, RirSet, RirSidecar, SINC_TAPS, SPEED_OF_SOUND};
pub use scene::{placement_bucket, sample_scene, RoomSpec, SceneConstraints, ScenePlacement};
pub use source::{normalize_rms, synthetic_voice, Corpus, DrySignal, SourceSpec};
