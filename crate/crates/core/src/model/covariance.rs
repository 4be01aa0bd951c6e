//! Per-unit spatial covariance `e·eᴴ` of multichannel estimates, and its
//! real-valued `[real ‖ imag]` flattening.

use num_complex::Complex64;

use super::params::Bound;
use crate::autodiff::{Backward, Graph, Tensor, Var};

/// Raw `M × M` outer product (row-major) of one channel vector.
pub fn outer_product(est: &[Complex64]) -> Vec<Complex64> {
    let m = est.len();
    let mut out = Vec::with_capacity(m * m);
    for j in 0..m {
        for k in 0..m {
            out.push(est[j] * est[k].conj());
        }
    }
    out
}

/// Raw covariance for every unit of an `[.., M]` estimate.
pub fn covariance(est: &[Complex64], channels: usize) -> Vec<Complex64> {
    est.chunks_exact(channels).flat_map(outer_product).collect()
}

/// Flattened covariance over `[.., M, 2]` → `[.., 2M²]` (real block, then
/// imaginary block).
struct CovarianceOp {
    channels: usize,
}

fn covariance_forward(src: &[f64], m: usize) -> Vec<f64> {
    let units = src.len() / (2 * m);
    let w = 2 * m * m;
    let mut out = vec![0.0; units * w];
    for (e, dst) in src.chunks_exact(2 * m).zip(out.chunks_exact_mut(w)) {
        for j in 0..m {
            let (aj, bj) = (e[2 * j], e[2 * j + 1]);
            for k in 0..m {
                let (ak, bk) = (e[2 * k], e[2 * k + 1]);
                dst[j * m + k] = aj * ak + bj * bk;
                dst[m * m + j * m + k] = bj * ak - aj * bk;
            }
        }
    }
    debug_assert_eq!(units * 2 * m, src.len());
    out
}

impl Backward for CovarianceOp {
    fn backward(&self, grad: &Tensor, inputs: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let m = self.channels;
        let src = inputs[0].data();
        let mut dx = vec![0.0; src.len()];
        for ((e, d), g) in src
            .chunks_exact(2 * m)
            .zip(dx.chunks_exact_mut(2 * m))
            .zip(grad.data().chunks_exact(2 * m * m))
        {
            for j in 0..m {
                let (aj, bj) = (e[2 * j], e[2 * j + 1]);
                for k in 0..m {
                    let (ak, bk) = (e[2 * k], e[2 * k + 1]);
                    let (gr, gi) = (g[j * m + k], g[m * m + j * m + k]);
                    d[2 * j] += ak * gr - bk * gi;
                    d[2 * j + 1] += bk * gr + ak * gi;
                    d[2 * k] += aj * gr + bj * gi;
                    d[2 * k + 1] += bj * gr - aj * gi;
                }
            }
        }
        vec![Some(Tensor::new(inputs[0].shape(), dx))]
    }
}

impl Graph {
    /// `[.., M, 2]` complex vectors → `[.., 2M²]` flattened outer products.
    pub fn covariance(&mut self, est: Var) -> Var {
        let shape = self.shape(est).to_vec();
        let n = shape.len();
        assert!(n >= 2 && shape[n - 1] == 2, "covariance input must end in [M, 2]");
        let m = shape[n - 2];
        let out = covariance_forward(self.value(est).data(), m);
        let mut out_shape = shape[..n - 2].to_vec();
        out_shape.push(2 * m * m);
        self.record(Tensor::new(&out_shape, out), &[est], CovarianceOp { channels: m })
    }
}

/// Covariance of `est [.., M, 2]` normalized over the `2M²` feature axis
/// with the learnable affine of `prefix`.
pub(crate) fn normalized_covariance(g: &mut Graph, p: &Bound, prefix: &str, est: Var, eps: f64) -> Var {
    let raw = g.covariance(est);
    let n = g.layer_norm(raw, eps);
    let n = g.mul_row(n, p.var(&format!("{prefix}.gamma")));
    g.add_bias(n, p.var(&format!("{prefix}.beta")))
}
