//! DOA estimator: covariance features → direction embedding → frequency
//! aggregation → time/angle convolution → recurrent refinement → spatial
//! spectra.
//!
//! The first convolution is a 1×1 projection, so averaging its output over
//! frequency equals projecting the frequency-averaged covariance features.
//! The training path uses the cheaper form; [`direction_embedding`]
//! materializes the full `[T, F, bins·N]` tensor when it is needed.

use super::config::ModelConfig;
use super::crf::gru_stack;
use super::params::Bound;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// `D_i`: `phi [T, F, 4M²]` → `[T, F, bins·N]` (observer-major).
pub fn direction_embedding(g: &mut Graph, p: &Bound, phi: Var) -> Var {
    g.linear(phi, p.var("doa.conv1.w"), p.var("doa.conv1.b"))
}

/// Spatial spectra `[T, N, bins]` in `(0, 1)` for one source.
pub fn doa_estimator_forward(g: &mut Graph, p: &Bound, phi: Var, config: &ModelConfig) -> Result<Var> {
    let shape = g.shape(phi).to_vec();
    if shape.len() != 3 || shape[2] != 2 * config.covariance_width() {
        return Err(Error::invalid(format!(
            "locator expects [T, F, {}] covariance features, got {shape:?}",
            2 * config.covariance_width()
        )));
    }
    let frames = shape[0];
    let (n, bins) = (config.observers(), config.codec.bins);
    let pooled = g.mean_axis(phi, 1);
    let d = direction_embedding(g, p, pooled);
    let d = g.reshape(d, &[frames, n, bins]);
    let c = g.conv2d_same(d, p.var("doa.conv2.w"), p.var("doa.conv2.b"));
    let c = g.relu(c);
    let c = g.reshape(c, &[frames, n * bins]);
    let h = gru_stack(g, p, "doa.gru", c, config.doa_rnn.layers, 1)?;
    let logits = g.linear(h, p.var("doa.out.w"), p.var("doa.out.b"));
    let s = g.sigmoid(logits);
    Ok(g.reshape(s, &[frames, n, bins]))
}
