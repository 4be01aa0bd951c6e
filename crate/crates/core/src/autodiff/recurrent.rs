//! Fused gated-recurrent-unit layer.
//!
//! Gate layout along the `3H` axis is `[reset, update, candidate]`:
//!
//! ```text
//! r  = σ(gx_r + h·W_r + b_r)
//! z  = σ(gx_z + h·W_z + b_z)
//! n  = tanh(gx_n + r ⊙ (h·W_n + b_n))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! The input projection `gx = x·W_x + b_x` is computed outside with an
//! ordinary matmul so that the op only carries the recurrence.

use super::graph::{sigmoid_scalar, Backward, Graph, Var};
use super::tensor::{gemm, Tensor};

struct GruOp {
    steps: usize,
    batch: usize,
    hidden: usize,
    /// reset, update, candidate and `h·W_n + b_n`, each `[T, B, H]`.
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

impl Backward for GruOp {
    fn backward(
        &self,
        grad: &Tensor,
        inputs: &[&Tensor],
        output: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let (t_len, b, h) = (self.steps, self.batch, self.hidden);
        let w = inputs[1].data();
        let hs = output.data();
        let g = grad.data();
        let step = b * h;

        let mut dgx = vec![0.0; t_len * b * 3 * h];
        let mut dw = vec![0.0; h * 3 * h];
        let mut db = vec![0.0; 3 * h];
        let mut carry = vec![0.0; step];
        let mut dgh = vec![0.0; b * 3 * h];
        let zeros = vec![0.0; step];

        for t in (0..t_len).rev() {
            let prev = if t > 0 { &hs[(t - 1) * step..t * step] } else { &zeros[..] };
            let base = t * step;
            for bi in 0..b {
                for j in 0..h {
                    let i = bi * h + j;
                    let dh = g[base + i] + carry[i];
                    let (r, z, n, hn) = (
                        self.r[base + i],
                        self.z[base + i],
                        self.n[base + i],
                        self.hn[base + i],
                    );
                    let dn = dh * (1.0 - z);
                    let dz = dh * (prev[i] - n);
                    let da_n = dn * (1.0 - n * n);
                    let dr = da_n * hn;
                    let da_r = dr * r * (1.0 - r);
                    let da_z = dz * z * (1.0 - z);
                    let gx_row = (t * b + bi) * 3 * h;
                    dgx[gx_row + j] = da_r;
                    dgx[gx_row + h + j] = da_z;
                    dgx[gx_row + 2 * h + j] = da_n;
                    let gh_row = bi * 3 * h;
                    dgh[gh_row + j] = da_r;
                    dgh[gh_row + h + j] = da_z;
                    dgh[gh_row + 2 * h + j] = da_n * r;
                    carry[i] = dh * z;
                }
            }
            if needs[1] && t > 0 {
                gemm(h, b, 3 * h, prev, true, &dgh, false, 1.0, &mut dw);
            }
            if needs[2] {
                for row in dgh.chunks_exact(3 * h) {
                    for (a, v) in db.iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
            // carry += dgh · W^T
            gemm(b, 3 * h, h, &dgh, false, w, true, 1.0, &mut carry);
        }

        vec![
            needs[0].then(|| Tensor::new(inputs[0].shape(), dgx)),
            needs[1].then(|| Tensor::new(inputs[1].shape(), dw)),
            needs[2].then(|| Tensor::new(inputs[2].shape(), db)),
        ]
    }
}

impl Graph {
    /// Runs the recurrence over `gx [T, B, 3H]` with recurrent kernel
    /// `w_h [H, 3H]` and bias `b_h [3H]`, starting from a zero state.
    /// Returns the hidden sequence `[T, B, H]`.
    pub fn gru(&mut self, gx: Var, w_h: Var, b_h: Var) -> Var {
        let shape = self.value(gx).shape().to_vec();
        assert_eq!(shape.len(), 3, "gru input must be [T, B, 3H], got {shape:?}");
        let (t_len, b, h3) = (shape[0], shape[1], shape[2]);
        assert_eq!(h3 % 3, 0);
        let h = h3 / 3;
        assert_eq!(self.value(w_h).shape(), &[h, h3]);
        assert_eq!(self.value(b_h).len(), h3);

        let gxd = self.value(gx).data();
        let w = self.value(w_h).data();
        let bias = self.value(b_h).data();
        let step = b * h;
        let mut out = vec![0.0; t_len * step];
        let mut r = vec![0.0; t_len * step];
        let mut z = vec![0.0; t_len * step];
        let mut n = vec![0.0; t_len * step];
        let mut hn = vec![0.0; t_len * step];
        let mut gh = vec![0.0; b * h3];
        let mut prev = vec![0.0; step];

        for t in 0..t_len {
            for row in gh.chunks_exact_mut(h3) {
                row.copy_from_slice(bias);
            }
            gemm(b, h, h3, &prev, false, w, false, 1.0, &mut gh);
            for bi in 0..b {
                let gx_row = &gxd[(t * b + bi) * h3..][..h3];
                let gh_row = &gh[bi * h3..][..h3];
                for j in 0..h {
                    let i = t * step + bi * h + j;
                    let rv = sigmoid_scalar(gx_row[j] + gh_row[j]);
                    let zv = sigmoid_scalar(gx_row[h + j] + gh_row[h + j]);
                    let hnv = gh_row[2 * h + j];
                    let nv = (gx_row[2 * h + j] + rv * hnv).tanh();
                    let hp = prev[bi * h + j];
                    out[i] = (1.0 - zv) * nv + zv * hp;
                    r[i] = rv;
                    z[i] = zv;
                    n[i] = nv;
                    hn[i] = hnv;
                }
            }
            prev.copy_from_slice(&out[t * step..(t + 1) * step]);
        }

        let op = GruOp {
            steps: t_len,
            batch: b,
            hidden: h,
            r,
            z,
            n,
            hn,
        };
        self.record(Tensor::new(&[t_len, b, h], out), &[gx, w_h, b_h], op)
    }
}
