//! Full network: filter estimation, covariances, locator, beamformers and
//! synthesis, composed on one autodiff graph.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::beamformer::{beamform_graph, beamformer_forward};
use super::config::ModelConfig;
use super::covariance::normalized_covariance;
use super::crf::{apply_crf_graph, crf_estimator_forward};
use super::doa::{direction_embedding, doa_estimator_forward};
use super::location::{location_graph, LocationTrack};
use super::params::{fan_in_uniform, orthogonal_gates, Bound, ParamStore};
use crate::autodiff::{Graph, Tensor, Var};
use crate::dsp::{extract_features, AudioSegment, ComplexSpectrogram, FeaturePack, StftPlan};
use crate::error::{Error, Result};

/// Everything derived from a mixture before the trainable path.
pub struct PreparedInput {
    pub plan: Arc<StftPlan>,
    pub spec: ComplexSpectrogram,
    pub features: FeaturePack,
    mixture_tensor: Tensor,
}

impl PreparedInput {
    pub fn new(mixture: &AudioSegment, config: &ModelConfig) -> Result<Self> {
        if mixture.channel_count() != config.channels() {
            return Err(Error::invalid(format!(
                "mixture has {} channels, model expects {}",
                mixture.channel_count(),
                config.channels()
            )));
        }
        if mixture.sample_rate() != config.stft.sample_rate {
            return Err(Error::invalid(format!(
                "mixture is sampled at {} Hz, model expects {} Hz",
                mixture.sample_rate(),
                config.stft.sample_rate
            )));
        }
        let plan = Arc::new(StftPlan::new(config.stft, mixture.len())?);
        let spec = plan.stft(mixture)?;
        let features = extract_features(&spec, config.reference_channel)?;
        let mixture_tensor = spec.to_tensor();
        Ok(Self {
            plan,
            spec,
            features,
            mixture_tensor,
        })
    }

    pub fn frames(&self) -> usize {
        self.spec.frames()
    }
}

/// Graph handles produced by one forward pass.
pub struct ForwardOutput {
    /// Per source, `[L]`.
    pub waveforms: Vec<Var>,
    /// Per source, beamformed spectrum `[T, F, 2]`.
    pub spectra: Vec<Var>,
    /// Per source, spatial spectra `[T, N, bins]`; empty without the locator.
    pub doa_spectra: Vec<Var>,
    /// Per source, covariance features `[T, F, 4M²]`.
    pub covariances: Vec<Var>,
    /// Per source; empty unless the location embedding is on.
    pub locations: Vec<LocationTrack>,
}

/// Plain-valued result of [`LabNet::infer`].
#[derive(Clone, Debug)]
pub struct Separation {
    pub waveforms: Vec<Vec<f64>>,
    /// Per source, `[T, N, bins]`; empty without the locator.
    pub doa_spectra: Vec<Vec<f64>>,
    pub locations: Vec<LocationTrack>,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabNet {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl LabNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { config, params })
    }

    /// Records the full network on `g` with parameters bound as `p`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, input: &PreparedInput) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let frames = input.frames();
        let (bins, m) = (cfg.stft.freq_bins(), cfg.channels());
        let groups = cfg.sources * 2;

        let head = crf_estimator_forward(g, p, &input.features, cfg)?;
        let estimates = apply_crf_graph(g, head, &input.spec, cfg.crf_half_width, groups)?;

        let mut out = ForwardOutput {
            waveforms: Vec::new(),
            spectra: Vec::new(),
            doa_spectra: Vec::new(),
            covariances: Vec::new(),
            locations: Vec::new(),
        };
        for source in 0..cfg.sources {
            let speech = g.select_first(estimates, 2 * source);
            let interf = g.select_first(estimates, 2 * source + 1);
            let speech = normalized_covariance(g, p, "cov.speech", speech, cfg.layer_norm_eps);
            let interf = normalized_covariance(g, p, "cov.interf", interf, cfg.layer_norm_eps);
            let phi = g.concat_last(&[speech, interf]);
            debug_assert_eq!(g.shape(phi), &[frames, bins, 4 * m * m]);

            let mut location = None;
            if cfg.locator_enabled() {
                let spectra = doa_estimator_forward(g, p, phi, cfg)?;
                out.doa_spectra.push(spectra);
                if cfg.use_location_embedding {
                    let (xy, track) = location_graph(
                        g,
                        spectra,
                        &cfg.codec,
                        cfg.geometry.baseline(),
                        cfg.locator_stop_gradient,
                    )?;
                    location = Some(xy);
                    out.locations.push(track);
                }
            }

            let weights = beamformer_forward(g, p, &format!("bf{source}"), phi, location, cfg)?;
            let spec = beamform_graph(g, weights, &input.mixture_tensor)?;
            out.waveforms.push(input.plan.istft_graph(g, spec)?);
            out.spectra.push(spec);
            out.covariances.push(phi);
        }
        Ok(out)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, mixture: &AudioSegment) -> Result<Separation> {
        let input = PreparedInput::new(mixture, &self.config)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let out = self.forward(&mut g, &p, &input)?;
        Ok(Separation {
            waveforms: out.waveforms.iter().map(|&v| g.value(v).data().to_vec()).collect(),
            doa_spectra: out.doa_spectra.iter().map(|&v| g.value(v).data().to_vec()).collect(),
            locations: out.locations,
            frames: input.frames(),
        })
    }

    /// Materialized direction embeddings `[T, F, bins·N]`, one per source.
    pub fn direction_embeddings(&self, mixture: &AudioSegment) -> Result<Vec<Tensor>> {
        if !self.config.locator_enabled() {
            return Err(Error::invalid("model has no locator"));
        }
        let input = PreparedInput::new(mixture, &self.config)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let out = self.forward(&mut g, &p, &input)?;
        Ok(out
            .covariances
            .iter()
            .map(|&phi| {
                let d = direction_embedding(&mut g, &p, phi);
                g.value(d).clone()
            })
            .collect())
    }
}

/// How a parameter tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±1/√fan_in`.
    FanIn(usize),
    /// Three orthogonal `H × H` gate blocks.
    OrthogonalGates,
    Zeros,
    Ones,
    Constant(f64),
    /// Zeros except a one at the given index.
    OneHot(usize),
}

/// Name, shape and initializer of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

fn gru_specs(out: &mut Vec<ParamSpec>, prefix: &str, input: usize, layers: usize, hidden: usize) {
    let mut width = input;
    for layer in 0..layers {
        let name = format!("{prefix}{layer}");
        out.push(spec(format!("{name}.w_x"), &[width, 3 * hidden], Init::FanIn(width)));
        out.push(spec(format!("{name}.b_x"), &[3 * hidden], Init::Zeros));
        out.push(spec(format!("{name}.w_h"), &[hidden, 3 * hidden], Init::OrthogonalGates));
        out.push(spec(format!("{name}.b_h"), &[3 * hidden], Init::Zeros));
        width = hidden;
    }
}

/// Logit of the average value of an encoded spatial spectrum, so the
/// untrained locator starts near the target's mean level rather than 0.5.
fn spectrum_prior_logit(cfg: &ModelConfig) -> f64 {
    let mass = cfg.codec.sigma * std::f64::consts::PI.sqrt() / cfg.codec.theta_step;
    let mean = (mass / cfg.codec.bins as f64).clamp(1e-3, 0.5);
    (mean / (1.0 - mean)).ln()
}

/// Every parameter the configuration implies, in initialization order.
///
/// Affine and convolution kernels are fan-in uniform, recurrent kernels
/// orthogonal, biases zero and normalization scales one. The locator's
/// output bias sits at the spectrum prior. The beamformer
/// output bias starts on the reference channel so an untrained network
/// passes the reference microphone through.
pub fn param_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    let m = cfg.channels();
    let cov = cfg.covariance_width();

    let input = cfg.crf_input_width();
    s.push(spec("crf.input_norm.gamma", &[input], Init::Ones));
    s.push(spec("crf.input_norm.beta", &[input], Init::Zeros));
    gru_specs(&mut s, "crf.gru", input, cfg.crf_rnn.layers, cfg.crf_rnn.hidden);
    let mut width = cfg.crf_rnn.hidden;
    for layer in 0..cfg.crf_head_layers {
        let out = if layer + 1 == cfg.crf_head_layers {
            cfg.crf_head_output()
        } else {
            cfg.crf_head_width
        };
        s.push(spec(format!("crf.fc{layer}.w"), &[width, out], Init::FanIn(width)));
        s.push(spec(format!("crf.fc{layer}.b"), &[out], Init::Zeros));
        width = out;
    }

    for branch in ["speech", "interf"] {
        s.push(spec(format!("cov.{branch}.gamma"), &[cov], Init::Ones));
        s.push(spec(format!("cov.{branch}.beta"), &[cov], Init::Zeros));
    }

    if cfg.locator_enabled() {
        let (n, doa) = (cfg.observers(), cfg.doa_width());
        let (kt, ka) = cfg.doa_conv_kernel;
        s.push(spec("doa.conv1.w", &[2 * cov, doa], Init::FanIn(2 * cov)));
        s.push(spec("doa.conv1.b", &[doa], Init::Zeros));
        s.push(spec("doa.conv2.w", &[n, n, kt, ka], Init::FanIn(n * kt * ka)));
        s.push(spec("doa.conv2.b", &[n], Init::Zeros));
        gru_specs(&mut s, "doa.gru", doa, cfg.doa_rnn.layers, cfg.doa_rnn.hidden);
        s.push(spec("doa.out.w", &[cfg.doa_rnn.hidden, doa], Init::FanIn(cfg.doa_rnn.hidden)));
        s.push(spec("doa.out.b", &[doa], Init::Constant(spectrum_prior_logit(cfg))));
    }

    let h = cfg.bf_rnn.hidden;
    let fan_in = cfg.beamformer_input_width();
    for source in 0..cfg.sources {
        let p = format!("bf{source}");
        s.push(spec(format!("{p}.in.cov.w"), &[2 * cov, h], Init::FanIn(fan_in)));
        if cfg.use_direction_embedding {
            s.push(spec(format!("{p}.in.dir.w"), &[cfg.doa_width(), h], Init::FanIn(fan_in)));
        }
        if cfg.use_location_embedding {
            s.push(spec(format!("{p}.in.loc.w"), &[2, h], Init::FanIn(fan_in)));
        }
        s.push(spec(format!("{p}.in.b"), &[h], Init::Zeros));
        gru_specs(&mut s, &format!("{p}.gru"), h, cfg.bf_rnn.layers, h);
        s.push(spec(format!("{p}.out.w"), &[h, 2 * m], Init::FanIn(h)));
        s.push(spec(format!("{p}.out.b"), &[2 * m], Init::OneHot(2 * cfg.reference_channel)));
    }
    s
}

/// Fresh parameters drawn in [`param_layout`] order.
pub fn init_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut store = ParamStore::new();
    for p in param_layout(cfg) {
        let t = match p.init {
            Init::FanIn(fan_in) => fan_in_uniform(&p.shape, fan_in, rng),
            Init::OrthogonalGates => orthogonal_gates(p.shape[0], rng),
            Init::Zeros => Tensor::zeros(&p.shape),
            Init::Ones => Tensor::full(&p.shape, 1.0),
            Init::Constant(v) => Tensor::full(&p.shape, v),
            Init::OneHot(i) => {
                let mut t = Tensor::zeros(&p.shape);
                t.data_mut()[i] = 1.0;
                t
            }
        };
        store.insert(p.name, t);
    }
    store
}
