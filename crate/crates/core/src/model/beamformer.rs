//! Recurrent beamformer: per-unit conditioning features → frame-level
//! complex channel weights, and their application to the mixture.

use num_complex::Complex64;

use super::config::ModelConfig;
use super::crf::gru_stack;
use super::params::Bound;
use crate::autodiff::{Backward, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// `Σ_m conj(w_m)·Y_m` per unit; `weights` and `spec` are `[.., M]`.
pub fn apply_beamforming(weights: &[Complex64], spec: &[Complex64], channels: usize) -> Result<Vec<Complex64>> {
    if weights.len() != spec.len() || spec.len() % channels != 0 {
        return Err(Error::invalid(format!(
            "beamforming weights ({}) and mixture ({}) disagree",
            weights.len(),
            spec.len()
        )));
    }
    Ok(weights
        .chunks_exact(channels)
        .zip(spec.chunks_exact(channels))
        .map(|(w, y)| w.iter().zip(y).map(|(w, y)| w.conj() * y).sum())
        .collect())
}

struct BeamformOp {
    mixture: Vec<f64>,
    channels: usize,
}

impl Backward for BeamformOp {
    fn backward(&self, grad: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let m = self.channels;
        let mut dw = vec![0.0; inputs[0].len()];
        for ((d, y), g) in dw
            .chunks_exact_mut(2 * m)
            .zip(self.mixture.chunks_exact(2 * m))
            .zip(grad.data().chunks_exact(2))
        {
            for c in 0..m {
                let (p, q) = (y[2 * c], y[2 * c + 1]);
                d[2 * c] = g[0] * p + g[1] * q;
                d[2 * c + 1] = g[0] * q - g[1] * p;
            }
        }
        vec![Some(Tensor::new(inputs[0].shape(), dw))]
    }
}

/// Graph form: `weights [T, F, M, 2]` against a constant mixture of the
/// same shape → `[T, F, 2]`.
pub fn beamform_graph(g: &mut Graph, weights: Var, mixture: &Tensor) -> Result<Var> {
    let shape = g.shape(weights).to_vec();
    if shape != mixture.shape() || shape.len() != 4 || shape[3] != 2 {
        return Err(Error::invalid(format!(
            "weights {shape:?} do not match mixture {:?}",
            mixture.shape()
        )));
    }
    let m = shape[2];
    let w = g.value(weights).data();
    let y = mixture.data();
    let mut out = Vec::with_capacity(shape[0] * shape[1] * 2);
    for (wu, yu) in w.chunks_exact(2 * m).zip(y.chunks_exact(2 * m)) {
        let (mut re, mut im) = (0.0, 0.0);
        for c in 0..m {
            let (u, v, p, q) = (wu[2 * c], wu[2 * c + 1], yu[2 * c], yu[2 * c + 1]);
            re += u * p + v * q;
            im += u * q - v * p;
        }
        out.push(re);
        out.push(im);
    }
    let op = BeamformOp {
        mixture: y.to_vec(),
        channels: m,
    };
    Ok(g.record(Tensor::new(&[shape[0], shape[1], 2], out), &[weights], op))
}

/// Beamforming weights `[T, F, M, 2]` for one source.
///
/// `phi`: `[T, F, 4M²]` normalized speech ‖ interference covariances;
/// `location`: `[T, 2]` frame coordinates when the location embedding is on.
/// The direction embedding enters through the locator's projection, folded
/// into the input layer (`Φ·W_c·W_dir = Φ·(W_c·W_dir)`).
pub fn beamformer_forward(
    g: &mut Graph,
    p: &Bound,
    prefix: &str,
    phi: Var,
    location: Option<Var>,
    config: &ModelConfig,
) -> Result<Var> {
    let shape = g.shape(phi).to_vec();
    let m = config.channels();
    if shape.len() != 3 || shape[2] != 2 * config.covariance_width() {
        return Err(Error::invalid(format!(
            "beamformer expects [T, F, {}] covariance features, got {shape:?}",
            2 * config.covariance_width()
        )));
    }
    if location.is_some() != config.use_location_embedding {
        return Err(Error::invalid("location input must match use_location_embedding"));
    }
    let (frames, bins) = (shape[0], shape[1]);
    let mut w_in = p.var(&format!("{prefix}.in.cov.w"));
    let mut b_in = p.var(&format!("{prefix}.in.b"));
    if config.use_direction_embedding {
        let w_dir = p.var(&format!("{prefix}.in.dir.w"));
        let folded = g.matmul(p.var("doa.conv1.w"), w_dir);
        w_in = g.add(w_in, folded);
        let b_c = g.reshape(p.var("doa.conv1.b"), &[1, config.doa_width()]);
        let b_dir = g.matmul(b_c, w_dir);
        let b_dir = g.reshape(b_dir, &[config.bf_rnn.hidden]);
        b_in = g.add(b_in, b_dir);
    }
    let mut h = g.linear(phi, w_in, b_in);
    if let Some(loc) = location {
        let l = g.matmul(loc, p.var(&format!("{prefix}.in.loc.w")));
        let l = g.repeat_axis(l, 1, bins);
        h = g.add(h, l);
    }
    let h = gru_stack(g, p, &format!("{prefix}.gru"), h, config.bf_rnn.layers, bins)?;
    let w = g.linear(h, p.var(&format!("{prefix}.out.w")), p.var(&format!("{prefix}.out.b")));
    Ok(g.reshape(w, &[frames, bins, m, 2]))
}
