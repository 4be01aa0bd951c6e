//! Trainable network blocks and their composition.

mod beamformer;
mod config;
mod covariance;
mod crf;
mod doa;
mod labnet;
mod location;
mod params;

pub use beamformer::{apply_beamforming, beamform_graph, beamformer_forward};
pub use config::{ModelConfig, RnnConfig};
pub use covariance::{covariance, outer_product};
pub use crf::{apply_crf, apply_crf_graph, crf_estimator_forward, CrfFilters};
pub use doa::{direction_embedding, doa_estimator_forward};
pub use labnet::{init_params, param_layout, ForwardOutput, Init, LabNet, ParamSpec, PreparedInput, Separation};
pub use location::{location_graph, locate_frames, triangulation_jacobian, LocationTrack, FALLBACK_XY};
pub use params::{Bound, ParamStore};
