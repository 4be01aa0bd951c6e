//! Training loop: azimuth-sorted targets, multitask loss, gradient
//! clipping, Adam with linear warm-up, validation and checkpointing.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::checkpoint::{Checkpoint, TrainState};
use crate::datagen::MixtureExample;
use crate::error::{Error, Result};
use crate::eval::score_separation;
use crate::metrics::bucket_report;
use crate::model::{LabNet, ModelConfig, ParamStore, PreparedInput, Separation};
use crate::objectives::{azimuth_order, doa_loss, doa_loss_graph, wsdr_loss, wsdr_loss_graph, LossWeights};
use crate::spatial::encode_spatial_spectrum;

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs of linear learning-rate warm-up.
    pub warmup_epochs: usize,
    pub grad_clip_norm: f64,
    pub epochs: usize,
    /// Stops early after this many optimizer steps.
    pub max_steps: Option<usize>,
    pub loss: LossWeights,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Validate every this many steps as well as at each epoch end.
    pub validate_every: Option<usize>,
    /// Informational; computation always runs on the CPU.
    pub device: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            learning_rate: 1e-4,
            warmup_epochs: 1,
            grad_clip_norm: 3.0,
            epochs: 40,
            max_steps: None,
            loss: LossWeights::default(),
            seed: 0,
            adam: AdamConfig::default(),
            validate_every: None,
            device: "cpu".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0 && self.grad_clip_norm > 0.0 && self.adam.eps > 0.0;
        if self.batch_size == 0 || self.epochs == 0 || !positive {
            return Err(Error::Config(
                "batch size, epochs, learning rate, clip norm and eps must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.validate_every == Some(0) || self.max_steps == Some(0) {
            return Err(Error::Config("validate_every and max_steps must be positive".into()));
        }
        self.loss.validate()
    }

    pub fn steps_per_epoch(&self, examples: usize) -> usize {
        examples.div_ceil(self.batch_size).max(1)
    }

    /// Learning rate of the 1-based optimizer step `step`.
    pub fn learning_rate_at(&self, step: usize, steps_per_epoch: usize) -> f64 {
        let warmup = self.warmup_epochs * steps_per_epoch;
        if warmup == 0 || step >= warmup {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / warmup as f64
        }
    }
}

/// One mixture with its azimuth-sorted training targets.
pub struct TrainExample {
    pub id: String,
    pub input: PreparedInput,
    pub mixture: Vec<f64>,
    /// Reference-channel source signals, ascending centroid DOA.
    pub targets: [Vec<f64>; 2],
    /// Per sorted source, `[T, N, bins]` encoded ground truth.
    pub doa_targets: [Vec<f64>; 2],
}

impl TrainExample {
    pub fn new(example: &MixtureExample, config: &ModelConfig) -> Result<Self> {
        let input = PreparedInput::new(&example.mixture, config)?;
        let ch = config.reference_channel;
        let order = azimuth_order(&example.metadata.locations);
        let frames = input.frames();
        let doa_target = |source: usize| -> Result<Vec<f64>> {
            let mut frame = Vec::with_capacity(config.doa_width());
            for theta in example.metadata.locations[source].observer_doas(config.observers()) {
                frame.extend(encode_spatial_spectrum(theta, &config.codec)?);
            }
            Ok(frame.repeat(frames))
        };
        Ok(Self {
            id: example.metadata.id.clone(),
            mixture: example.mixture.channel(ch).to_vec(),
            targets: [0, 1].map(|k| example.references[order[k]].channel(ch).to_vec()),
            doa_targets: [doa_target(order[0])?, doa_target(order[1])?],
            input,
        })
    }
}

/// Loss terms of one example or batch mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    /// `Σ_i L_DOA`.
    pub doa: f64,
    /// `Σ_i L_wSDR`.
    pub wsdr: f64,
}

impl LossParts {
    fn add_scaled(&mut self, other: &LossParts, k: f64) {
        self.total += k * other.total;
        self.doa += k * other.doa;
        self.wsdr += k * other.wsdr;
    }
}

/// Total loss of one example and its parameter gradients.
pub fn example_gradients(
    model: &LabNet,
    example: &TrainExample,
    weights: (f64, f64),
) -> Result<(LossParts, ParamStore)> {
    let (alpha, beta) = weights;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, true);
    let out = model.forward(&mut g, &p, &example.input)?;
    let mut parts = LossParts::default();
    let mut total = g.constant(Tensor::scalar(0.0));
    for source in 0..2 {
        let w = wsdr_loss_graph(&mut g, &example.mixture, &example.targets[source], out.waveforms[source])?;
        parts.wsdr += g.value(w).data()[0];
        let w = g.scale(w, beta);
        total = g.add(total, w);
        if let Some(&spectra) = out.doa_spectra.get(source) {
            let d = doa_loss_graph(&mut g, spectra, &example.doa_targets[source])?;
            parts.doa += g.value(d).data()[0];
            let d = g.scale(d, alpha);
            total = g.add(total, d);
        }
    }
    parts.total = g.value(total).data()[0];
    let grads = g.backward(total);
    Ok((parts, p.gradients(&grads, &model.params)))
}

/// Loss of an already computed separation of `prepared`.
pub fn separation_loss(prepared: &TrainExample, sep: &Separation, weights: (f64, f64)) -> Result<LossParts> {
    let mut parts = LossParts::default();
    for source in 0..2 {
        parts.wsdr += wsdr_loss(&prepared.mixture, &prepared.targets[source], &sep.waveforms[source])?;
        if let Some(spectra) = sep.doa_spectra.get(source) {
            parts.doa += doa_loss(spectra, &prepared.doa_targets[source], sep.frames)?;
        }
    }
    parts.total = weights.0 * parts.doa + weights.1 * parts.wsdr;
    Ok(parts)
}

pub fn global_norm(grads: &ParamStore) -> f64 {
    grads
        .iter()
        .map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        for (_, t) in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// Adam update with bias correction for the 1-based step `t`.
pub fn adam_update(
    params: &mut ParamStore,
    grads: &ParamStore,
    m: &mut ParamStore,
    v: &mut ParamStore,
    t: usize,
    lr: f64,
    cfg: &AdamConfig,
) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("gradient for every parameter").data();
        let m = m.get_mut(name).expect("first moment for every parameter").data_mut();
        let v = v.get_mut(name).expect("second moment for every parameter").data_mut();
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
}

/// Example order of a 1-based epoch; depends only on the seed.
pub fn epoch_order(seed: u64, epoch: usize, examples: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..examples).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Step {
        step: usize,
        epoch: usize,
        lr: f64,
        loss: LossParts,
        /// Before clipping.
        grad_norm: f64,
        batch: Vec<String>,
    },
    WeightSwitch {
        epoch: usize,
        step: usize,
        alpha: f64,
        beta: f64,
    },
    Validation {
        step: usize,
        epoch: usize,
        loss: LossParts,
        si_sdr: f64,
        best: bool,
    },
    Epoch {
        epoch: usize,
        train_loss: f64,
        val_loss: Option<f64>,
        val_si_sdr: Option<f64>,
    },
}

/// Outcome of [`Trainer::run`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub epochs_completed: usize,
    pub best_val_si_sdr: Option<f64>,
    pub best_step: Option<usize>,
    pub final_train_loss: Option<f64>,
}

pub struct Trainer {
    pub model: LabNet,
    pub config: TrainConfig,
    pub state: TrainState,
    adam_m: ParamStore,
    adam_v: ParamStore,
    out_dir: Option<PathBuf>,
    log: Vec<LogEvent>,
    /// Best validated parameters when nothing is written to disk.
    best: Option<ParamStore>,
}

impl Trainer {
    pub fn new(model: LabNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam_m = model.params.zeros_like();
        let adam_v = model.params.zeros_like();
        Ok(Self {
            model,
            config,
            state: TrainState::default(),
            adam_m,
            adam_v,
            out_dir: None,
            log: Vec::new(),
            best: None,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ck: Checkpoint) -> Result<Self> {
        let config: TrainConfig = match ck.train {
            Some(v) => serde_json::from_value(v)?,
            None => return Err(Error::Checkpoint("checkpoint carries no training configuration".into())),
        };
        let (Some(m), Some(v)) = (ck.adam_m, ck.adam_v) else {
            return Err(Error::Checkpoint("checkpoint carries no optimizer state".into()));
        };
        let mut t = Self::new(ck.model, config)?;
        t.adam_m = m;
        t.adam_v = v;
        t.state = ck.state;
        Ok(t)
    }

    /// Writes checkpoints and the log below `dir`.
    pub fn with_output(mut self, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.out_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    /// Parameters with the best validation score so far, else the current ones.
    pub fn best_model(&self) -> Result<LabNet> {
        if let Some(params) = &self.best {
            return Ok(LabNet {
                config: self.model.config.clone(),
                params: params.clone(),
            });
        }
        match &self.out_dir {
            Some(dir) if dir.join(BEST_CHECKPOINT).exists() => Ok(Checkpoint::load(dir.join(BEST_CHECKPOINT))?.model),
            _ => Ok(self.model.clone()),
        }
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            model: self.model.clone(),
            train: Some(serde_json::to_value(&self.config)?),
            state: self.state.clone(),
            adam_m: Some(self.adam_m.clone()),
            adam_v: Some(self.adam_v.clone()),
        })
    }

    fn emit(&mut self, event: LogEvent) -> Result<()> {
        match &event {
            LogEvent::Step { step, epoch, loss, grad_norm, .. } => log::debug!(
                "step {step} (epoch {epoch}): loss {:.5} doa {:.5} wsdr {:.5} |g| {grad_norm:.3}",
                loss.total,
                loss.doa,
                loss.wsdr
            ),
            LogEvent::WeightSwitch { epoch, alpha, beta, .. } => {
                log::info!("epoch {epoch}: loss weights now alpha={alpha} beta={beta}")
            }
            LogEvent::Validation { step, si_sdr, best, .. } => {
                log::info!("step {step}: validation SI-SDR {si_sdr:.2} dB{}", if *best { " (best)" } else { "" })
            }
            LogEvent::Epoch {
                epoch,
                train_loss,
                val_loss,
                ..
            } => log::info!("epoch {epoch}: train loss {train_loss:.5}, validation loss {val_loss:?}"),
        }
        if let Some(dir) = &self.out_dir {
            use std::io::Write;
            let path = dir.join(TRAIN_LOG);
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{}", serde_json::to_string(&event)?).map_err(|e| Error::io(&path, e))?;
        }
        self.log.push(event);
        Ok(())
    }

    /// One optimizer step on `batch` at the given 1-based epoch.
    pub fn step(&mut self, batch: &[TrainExample], epoch: usize, steps_per_epoch: usize) -> Result<LogEvent> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let ids: Vec<String> = batch.iter().map(|e| e.id.clone()).collect();
        let weights = self.config.loss.at(epoch);
        let k = 1.0 / batch.len() as f64;
        let mut grads = self.model.params.zeros_like();
        let mut loss = LossParts::default();
        for example in batch {
            let (parts, g) = example_gradients(&self.model, example, weights)?;
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    batch: ids.join(","),
                    detail: format!("example {} gave loss {:?}", example.id, parts),
                });
            }
            loss.add_scaled(&parts, k);
            for (name, acc) in grads.iter_mut() {
                let src = g.get(name).expect("gradient for every parameter").data();
                acc.data_mut().iter_mut().zip(src).for_each(|(a, b)| *a += k * b);
            }
        }
        let grad_norm = clip_global_norm(&mut grads, self.config.grad_clip_norm);
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteLoss {
                batch: ids.join(","),
                detail: format!("gradient norm {grad_norm}"),
            });
        }
        let step = self.state.step + 1;
        let lr = self.config.learning_rate_at(step, steps_per_epoch);
        adam_update(
            &mut self.model.params,
            &grads,
            &mut self.adam_m,
            &mut self.adam_v,
            step,
            lr,
            &self.config.adam,
        );
        self.state.step = step;
        let event = LogEvent::Step {
            step,
            epoch,
            lr,
            loss,
            grad_norm,
            batch: ids,
        };
        self.emit(event.clone())?;
        Ok(event)
    }

    fn validate(&mut self, val: &[MixtureExample], epoch: usize) -> Result<(LossParts, f64)> {
        let weights = self.config.loss.at(epoch);
        let mut loss = LossParts::default();
        let k = 1.0 / val.len() as f64;
        let mut records = Vec::with_capacity(val.len());
        for example in val {
            let prepared = TrainExample::new(example, &self.model.config)?;
            let sep = self.model.infer(&example.mixture)?;
            loss.add_scaled(&separation_loss(&prepared, &sep, weights)?, k);
            records.push(score_separation(example, &sep, &self.model.config)?);
        }
        let report = bucket_report(records);
        let si_sdr = report.average.map_or(f64::NEG_INFINITY, |a| a.si_sdr);
        let best = self.state.best_val_si_sdr.map_or(true, |b| si_sdr > b);
        if best {
            self.state.best_val_si_sdr = Some(si_sdr);
            self.state.best_step = Some(self.state.step);
            match &self.out_dir {
                Some(dir) => self.checkpoint()?.save(dir.join(BEST_CHECKPOINT))?,
                None => self.best = Some(self.model.params.clone()),
            }
        }
        self.emit(LogEvent::Validation {
            step: self.state.step,
            epoch,
            loss,
            si_sdr,
            best,
        })?;
        Ok((loss, si_sdr))
    }

    /// Trains from the current step to the configured end. Validation
    /// examples drive best-checkpoint selection; without them the final
    /// parameters are kept.
    pub fn run(&mut self, train: &[MixtureExample], val: &[MixtureExample]) -> Result<TrainSummary> {
        if train.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        let spe = self.config.steps_per_epoch(train.len());
        let total = spe * self.config.epochs;
        let end = self.config.max_steps.map_or(total, |m| m.min(total));
        let mut last_loss = None;
        let mut epochs_completed = self.state.step / spe;

        while self.state.step < end {
            let epoch = self.state.step / spe + 1;
            let order = epoch_order(self.config.seed, epoch, train.len());
            let first = self.state.step % spe;
            if first == 0 && self.config.loss.switches_at(epoch) {
                let (alpha, beta) = self.config.loss.at(epoch);
                let step = self.state.step + 1;
                self.emit(LogEvent::WeightSwitch { epoch, step, alpha, beta })?;
            }
            let mut epoch_loss = 0.0;
            let mut epoch_steps = 0;
            for b in first..spe {
                if self.state.step >= end {
                    break;
                }
                let lo = b * self.config.batch_size;
                let hi = (lo + self.config.batch_size).min(train.len());
                let batch = order[lo..hi]
                    .iter()
                    .map(|&i| TrainExample::new(&train[i], &self.model.config))
                    .collect::<Result<Vec<_>>>()?;
                if let LogEvent::Step { loss, .. } = self.step(&batch, epoch, spe)? {
                    epoch_loss += loss.total;
                    epoch_steps += 1;
                    last_loss = Some(loss.total);
                }
                let periodic = self.config.validate_every.is_some_and(|n| self.state.step % n == 0);
                if periodic && !val.is_empty() && self.state.step % spe != 0 {
                    self.validate(val, epoch)?;
                }
            }
            let finished = self.state.step % spe == 0;
            let (mut val_loss, mut val_si_sdr) = (None, None);
            if (finished || self.state.step >= end) && !val.is_empty() {
                let (l, s) = self.validate(val, epoch)?;
                val_loss = Some(l.total);
                val_si_sdr = Some(s);
            }
            if finished {
                epochs_completed = epoch;
                self.emit(LogEvent::Epoch {
                    epoch,
                    train_loss: epoch_loss / epoch_steps.max(1) as f64,
                    val_loss,
                    val_si_sdr,
                })?;
            }
            if let Some(dir) = &self.out_dir {
                self.checkpoint()?.save(dir.join(LAST_CHECKPOINT))?;
            }
        }
        Ok(TrainSummary {
            steps: self.state.step,
            epochs_completed,
            best_val_si_sdr: self.state.best_val_si_sdr,
            best_step: self.state.best_step,
            final_train_loss: last_loss,
        })
    }
}
