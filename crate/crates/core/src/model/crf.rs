//! Complex ratio filters: estimation from input features and application to
//! the mixture over a `(2K+1) × (2K+1)` time-frequency neighbourhood.

use num_complex::Complex64;

use super::config::ModelConfig;
use super::params::Bound;
use crate::autodiff::{Backward, Graph, Tensor, Var};
use crate::dsp::{ComplexSpectrogram, FeaturePack};
use crate::error::{Error, Result};

/// Filters for one source/branch, `[T, F, M, taps]` with taps ordered
/// `(τ₁ + K)·(2K+1) + (τ₂ + K)` (time offset major).
#[derive(Clone, Debug, PartialEq)]
pub struct CrfFilters {
    pub values: Vec<Complex64>,
    pub half_width: usize,
}

impl CrfFilters {
    pub fn taps(&self) -> usize {
        (2 * self.half_width + 1).pow(2)
    }
}

/// Geometry of the filter kernel shared by the plain and graph paths.
#[derive(Clone, Copy)]
struct Layout {
    frames: usize,
    bins: usize,
    channels: usize,
    half_width: usize,
}

impl Layout {
    fn taps(&self) -> usize {
        (2 * self.half_width + 1).pow(2)
    }

    /// Calls `f(unit, tap, neighbour_unit)` for every in-range neighbour,
    /// where units index `[T, F]`.
    #[inline]
    fn for_each_neighbour(&self, mut f: impl FnMut(usize, usize, usize)) {
        let k = self.half_width as isize;
        let width = 2 * k + 1;
        for t in 0..self.frames {
            for fr in 0..self.bins {
                let unit = t * self.bins + fr;
                for d1 in -k..=k {
                    let tt = t as isize + d1;
                    if tt < 0 || tt >= self.frames as isize {
                        continue;
                    }
                    for d2 in -k..=k {
                        let ff = fr as isize + d2;
                        if ff < 0 || ff >= self.bins as isize {
                            continue;
                        }
                        let tap = ((d1 + k) * width + (d2 + k)) as usize;
                        f(unit, tap, tt as usize * self.bins + ff as usize);
                    }
                }
            }
        }
    }
}

/// Filtered estimate `[T, F, M]`; neighbours outside the grid count as zero.
pub fn apply_crf(spec: &ComplexSpectrogram, filters: &CrfFilters) -> Result<Vec<Complex64>> {
    let layout = Layout {
        frames: spec.frames(),
        bins: spec.bins(),
        channels: spec.channels(),
        half_width: filters.half_width,
    };
    let taps = layout.taps();
    if filters.values.len() != spec.values().len() * taps {
        return Err(Error::invalid(format!(
            "filters hold {} values, expected {}",
            filters.values.len(),
            spec.values().len() * taps
        )));
    }
    let m_len = layout.channels;
    let y = spec.values();
    let mut out = vec![Complex64::new(0.0, 0.0); y.len()];
    layout.for_each_neighbour(|unit, tap, nb| {
        for m in 0..m_len {
            out[unit * m_len + m] += filters.values[(unit * m_len + m) * taps + tap] * y[nb * m_len + m];
        }
    });
    Ok(out)
}

/// Graph op applying all `G` filter groups at once.
///
/// `filters`: `[T, G, F, M, taps, 2]`; output: `[G, T, F, M, 2]`.
struct ApplyCrfOp {
    layout: Layout,
    groups: usize,
    mixture: Vec<f64>,
}

impl ApplyCrfOp {
    #[inline]
    fn filter_index(&self, t: usize, g: usize, fr: usize, m: usize, tap: usize) -> usize {
        let l = &self.layout;
        ((((t * self.groups + g) * l.bins + fr) * l.channels + m) * l.taps() + tap) * 2
    }

    fn forward(&self, filters: &[f64]) -> Vec<f64> {
        let l = self.layout;
        let plane = l.frames * l.bins * l.channels * 2;
        let mut out = vec![0.0; self.groups * plane];
        for g in 0..self.groups {
            let dst = &mut out[g * plane..(g + 1) * plane];
            l.for_each_neighbour(|unit, tap, nb| {
                let (t, fr) = (unit / l.bins, unit % l.bins);
                for m in 0..l.channels {
                    let c = self.filter_index(t, g, fr, m, tap);
                    let (a, b) = (filters[c], filters[c + 1]);
                    let yi = (nb * l.channels + m) * 2;
                    let (p, q) = (self.mixture[yi], self.mixture[yi + 1]);
                    let o = (unit * l.channels + m) * 2;
                    dst[o] += a * p - b * q;
                    dst[o + 1] += a * q + b * p;
                }
            });
        }
        out
    }
}

impl Backward for ApplyCrfOp {
    fn backward(&self, grad: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let l = self.layout;
        let plane = l.frames * l.bins * l.channels * 2;
        let g_all = grad.data();
        let mut df = vec![0.0; inputs[0].len()];
        for g in 0..self.groups {
            let gd = &g_all[g * plane..(g + 1) * plane];
            l.for_each_neighbour(|unit, tap, nb| {
                let (t, fr) = (unit / l.bins, unit % l.bins);
                for m in 0..l.channels {
                    let o = (unit * l.channels + m) * 2;
                    let (gr, gi) = (gd[o], gd[o + 1]);
                    let yi = (nb * l.channels + m) * 2;
                    let (p, q) = (self.mixture[yi], self.mixture[yi + 1]);
                    let c = self.filter_index(t, g, fr, m, tap);
                    df[c] += gr * p + gi * q;
                    df[c + 1] += gi * p - gr * q;
                }
            });
        }
        vec![Some(Tensor::new(inputs[0].shape(), df))]
    }
}

/// Applies head output `[T, G·F·M·taps·2]` to the mixture, giving `[G, T, F, M, 2]`.
pub fn apply_crf_graph(
    g: &mut Graph,
    head: Var,
    mixture: &ComplexSpectrogram,
    half_width: usize,
    groups: usize,
) -> Result<Var> {
    let layout = Layout {
        frames: mixture.frames(),
        bins: mixture.bins(),
        channels: mixture.channels(),
        half_width,
    };
    let expect = layout.frames * groups * layout.bins * layout.channels * layout.taps() * 2;
    if g.value(head).len() != expect {
        return Err(Error::invalid(format!(
            "filter head has {} values, expected {expect}",
            g.value(head).len()
        )));
    }
    let op = ApplyCrfOp {
        layout,
        groups,
        mixture: mixture.to_tensor().into_data(),
    };
    let out = op.forward(g.value(head).data());
    let shape = [groups, layout.frames, layout.bins, layout.channels, 2];
    Ok(g.record(Tensor::new(&shape, out), &[head], op))
}

/// Recurrent filter estimator: per-frame `[magnitude ‖ cosIPD]` features →
/// (input normalization) → recurrent stack → affine head. Returns the raw
/// head output `[T, sources·2·F·M·taps·2]`, laid out
/// `[source, branch, F, M, tap, re/im]` within a frame.
pub fn crf_estimator_forward(
    g: &mut Graph,
    p: &Bound,
    features: &FeaturePack,
    config: &ModelConfig,
) -> Result<Var> {
    let width = config.crf_input_width();
    if features.bins != config.stft.freq_bins() || features.pairs + 1 != config.channels() {
        return Err(Error::invalid(format!(
            "features are {}×{} pairs, model expects {} bins and {} pairs",
            features.bins,
            features.pairs,
            config.stft.freq_bins(),
            config.channels() - 1
        )));
    }
    let x = g.constant(features.frame_matrix());
    debug_assert_eq!(g.shape(x)[1], width);
    let x = g.layer_norm(x, config.layer_norm_eps);
    let x = g.mul_row(x, p.var("crf.input_norm.gamma"));
    let x = g.add_bias(x, p.var("crf.input_norm.beta"));
    let mut h = gru_stack(g, p, "crf.gru", x, config.crf_rnn.layers, 1)?;
    for layer in 0..config.crf_head_layers {
        let w = p.var(&format!("crf.fc{layer}.w"));
        let b = p.var(&format!("crf.fc{layer}.b"));
        h = g.linear(h, w, b);
        if layer + 1 < config.crf_head_layers {
            h = g.relu(h);
        }
    }
    Ok(h)
}

/// Stack of recurrent layers over `x [T, B·I]` viewed as `[T, B, I]`;
/// returns `[T, B·H]`-shaped `[T, B, H]` flattened to `[T·B, H]` rows when
/// `batch > 1`, or `[T, H]` when `batch == 1`.
pub(crate) fn gru_stack(
    g: &mut Graph,
    p: &Bound,
    prefix: &str,
    x: Var,
    layers: usize,
    batch: usize,
) -> Result<Var> {
    let steps = g.shape(x)[0];
    let mut h = x;
    for layer in 0..layers {
        let wx = p.var(&format!("{prefix}{layer}.w_x"));
        let bx = p.var(&format!("{prefix}{layer}.b_x"));
        let wh = p.var(&format!("{prefix}{layer}.w_h"));
        let bh = p.var(&format!("{prefix}{layer}.b_h"));
        let gates = g.shape(wx)[1];
        let gx = g.linear(h, wx, bx);
        let gx = g.reshape(gx, &[steps, batch, gates]);
        let out = g.gru(gx, wh, bh);
        let hidden = gates / 3;
        h = if batch == 1 {
            g.reshape(out, &[steps, hidden])
        } else {
            g.reshape(out, &[steps, batch, hidden])
        };
    }
    Ok(h)
}
