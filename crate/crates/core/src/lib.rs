pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod dsp;
pub mod eval;
mod error;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod spatial;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{DatasetSizes, Profile, RunConfig};
pub use datagen::{MixtureExample, SimulationConfig, Simulator};
pub use dsp::AudioSegment;
pub use error::{Error, Result};
pub use metrics::EvalReport;
pub use model::{LabNet, ModelConfig};
pub use train::{TrainConfig, Trainer};
