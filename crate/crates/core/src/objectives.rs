//! Training losses and label ordering.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::spatial::SourceLocation;

/// Guard added to cosine denominators.
pub const WSDR_EPS: f64 = 1e-8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Negative cosine similarity `−⟨x, x̂⟩ / (‖x‖·‖x̂‖ + ε)`.
pub fn l_sdr(x: &[f64], estimate: &[f64]) -> f64 {
    -dot(x, estimate) / (norm(x) * norm(estimate) + WSDR_EPS)
}

/// Energy weight `γ = ‖s‖² / (‖s‖² + ‖y − s‖²)`.
pub fn wsdr_gamma(mixture: &[f64], target: &[f64]) -> f64 {
    let es = dot(target, target);
    let en: f64 = mixture.iter().zip(target).map(|(y, s)| (y - s) * (y - s)).sum();
    es / (es + en + WSDR_EPS)
}

fn check_lengths(mixture: &[f64], target: &[f64], estimate_len: usize) -> Result<()> {
    if mixture.len() != target.len() || target.len() != estimate_len {
        return Err(Error::invalid(format!(
            "wSDR operands differ in length: {}, {}, {estimate_len}",
            mixture.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Weighted SDR loss in `[−1, 1]`.
pub fn wsdr_loss(mixture: &[f64], target: &[f64], estimate: &[f64]) -> Result<f64> {
    check_lengths(mixture, target, estimate.len())?;
    let gamma = wsdr_gamma(mixture, target);
    let noise: Vec<f64> = mixture.iter().zip(target).map(|(y, s)| y - s).collect();
    let noise_est: Vec<f64> = mixture.iter().zip(estimate).map(|(y, s)| y - s).collect();
    Ok(gamma * l_sdr(target, estimate) + (1.0 - gamma) * l_sdr(&noise, &noise_est))
}

fn l_sdr_graph(g: &mut Graph, x: &[f64], estimate: Var) -> Var {
    let nx = norm(x);
    if nx == 0.0 {
        return g.constant(Tensor::scalar(0.0));
    }
    let xc = g.constant(Tensor::new(&[x.len()], x.to_vec()));
    let prod = g.mul(xc, estimate);
    let num = g.sum(prod);
    let sq = g.square(estimate);
    let energy = g.sum(sq);
    let ne = g.sqrt(energy);
    let denom = g.scale(ne, nx);
    let denom = g.add_scalar(denom, WSDR_EPS);
    let ratio = g.div(num, denom);
    g.scale(ratio, -1.0)
}

/// Differentiable [`wsdr_loss`] with respect to `estimate [L]`.
pub fn wsdr_loss_graph(g: &mut Graph, mixture: &[f64], target: &[f64], estimate: Var) -> Result<Var> {
    check_lengths(mixture, target, g.value(estimate).len())?;
    let gamma = wsdr_gamma(mixture, target);
    let noise: Vec<f64> = mixture.iter().zip(target).map(|(y, s)| y - s).collect();
    let first = l_sdr_graph(g, target, estimate);
    let y = g.constant(Tensor::new(&[mixture.len()], mixture.to_vec()));
    let noise_est = g.sub(y, estimate);
    let second = l_sdr_graph(g, &noise, noise_est);
    let first = g.scale(first, gamma);
    let second = g.scale(second, 1.0 - gamma);
    Ok(g.add(first, second))
}

/// Squared error summed over observers and bins, averaged over frames.
/// Both operands are `[T, N, bins]` flattened.
pub fn doa_loss(estimate: &[f64], target: &[f64], frames: usize) -> Result<f64> {
    if estimate.len() != target.len() || frames == 0 || estimate.len() % frames != 0 {
        return Err(Error::invalid(format!(
            "DOA spectra disagree: {} vs {} values over {frames} frames",
            estimate.len(),
            target.len()
        )));
    }
    Ok(estimate.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / frames as f64)
}

/// Differentiable [`doa_loss`]; `estimate` is `[T, N, bins]`.
pub fn doa_loss_graph(g: &mut Graph, estimate: Var, target: &[f64]) -> Result<Var> {
    let shape = g.shape(estimate).to_vec();
    if shape.is_empty() || g.value(estimate).len() != target.len() {
        return Err(Error::invalid(format!(
            "DOA target has {} values, estimate is {shape:?}",
            target.len()
        )));
    }
    let t = g.constant(Tensor::new(&shape, target.to_vec()));
    let d = g.sub(estimate, t);
    let sq = g.square(d);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / shape[0] as f64))
}

/// Task weights in force from `from_epoch` (1-based) onwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossStage {
    pub from_epoch: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Piecewise-constant `(α, β)` schedule over epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub schedule: Vec<LossStage>,
}

impl Default for LossWeights {
    /// DOA emphasis for ten epochs, separation emphasis afterwards.
    fn default() -> Self {
        Self {
            schedule: vec![
                LossStage {
                    from_epoch: 1,
                    alpha: 5.0,
                    beta: 1.0,
                },
                LossStage {
                    from_epoch: 11,
                    alpha: 1.0,
                    beta: 10.0,
                },
            ],
        }
    }
}

impl LossWeights {
    pub fn constant(alpha: f64, beta: f64) -> Self {
        Self {
            schedule: vec![LossStage {
                from_epoch: 1,
                alpha,
                beta,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.schedule.first().ok_or_else(|| Error::Config("empty loss schedule".into()))?;
        if first.from_epoch != 1 {
            return Err(Error::Config("loss schedule must start at epoch 1".into()));
        }
        for w in self.schedule.windows(2) {
            if w[1].from_epoch <= w[0].from_epoch {
                return Err(Error::Config("loss schedule epochs must increase".into()));
            }
        }
        if self.schedule.iter().any(|s| !(s.alpha >= 0.0 && s.beta >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    /// `(α, β)` for a 1-based epoch.
    pub fn at(&self, epoch: usize) -> (f64, f64) {
        self.schedule
            .iter()
            .rev()
            .find(|s| s.from_epoch <= epoch)
            .or(self.schedule.first())
            .map_or((1.0, 1.0), |s| (s.alpha, s.beta))
    }

    /// Whether the weights change when entering `epoch`.
    pub fn switches_at(&self, epoch: usize) -> bool {
        epoch > 1 && self.schedule.iter().any(|s| s.from_epoch == epoch)
    }
}

/// `α·Σ L_DOA + β·Σ L_wSDR`.
pub fn multitask_loss(doa: &[f64], wsdr: &[f64], weights: &LossWeights, epoch: usize) -> f64 {
    let (alpha, beta) = weights.at(epoch);
    alpha * doa.iter().sum::<f64>() + beta * wsdr.iter().sum::<f64>()
}

/// Order of sources ascending by centroid DOA, ties by `θ₁`, then index.
pub fn azimuth_order(locations: &[SourceLocation]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..locations.len()).collect();
    idx.sort_by(|&a, &b| {
        let (la, lb) = (&locations[a], &locations[b]);
        la.doa_centroid
            .total_cmp(&lb.doa_centroid)
            .then(la.doas[0].total_cmp(&lb.doas[0]))
            .then(a.cmp(&b))
    });
    idx
}

/// Reorders labels by [`azimuth_order`].
pub fn sort_by_azimuth<T>(labels: Vec<(T, SourceLocation)>) -> Vec<(T, SourceLocation)> {
    let locs: Vec<SourceLocation> = labels.iter().map(|(_, l)| *l).collect();
    let order = azimuth_order(&locs);
    let mut slots: Vec<Option<(T, SourceLocation)>> = labels.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().expect("permutation")).collect()
}
