//! Same-padded 2-D convolution over an `[H, C, W]` layout (rows, channels,
//! columns). Used for time × angle maps where rows are frames.

use super::graph::{Backward, Graph, Var};
use super::tensor::Tensor;

#[derive(Clone, Copy)]
struct Dims {
    rows: usize,
    cols: usize,
    c_in: usize,
    c_out: usize,
    kr: usize,
    kc: usize,
}

impl Dims {
    /// Calls `f(out_index, in_index, weight_index)` for every valid tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (pr, pc) = ((self.kr / 2) as isize, (self.kc / 2) as isize);
        for r in 0..self.rows {
            for co in 0..self.c_out {
                for ci in 0..self.c_in {
                    for a in 0..self.kr {
                        let rr = r as isize + a as isize - pr;
                        if rr < 0 || rr >= self.rows as isize {
                            continue;
                        }
                        for bb in 0..self.kc {
                            let w_idx = ((co * self.c_in + ci) * self.kr + a) * self.kc + bb;
                            let shift = bb as isize - pc;
                            let lo = (-shift).max(0) as usize;
                            let hi = (self.cols as isize - shift).min(self.cols as isize).max(0) as usize;
                            for c in lo..hi {
                                let out_idx = (r * self.c_out + co) * self.cols + c;
                                let in_idx = (rr as usize * self.c_in + ci) * self.cols
                                    + (c as isize + shift) as usize;
                                f(out_idx, in_idx, w_idx);
                            }
                        }
                    }
                }
            }
        }
    }
}

struct Conv2dOp(Dims);

impl Backward for Conv2dOp {
    fn backward(
        &self,
        grad: &Tensor,
        inputs: &[&Tensor],
        _output: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let g = grad.data();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        self.0.for_each_tap(|o, i, k| {
            dx[i] += g[o] * w[k];
            dw[k] += g[o] * x[i];
        });
        let db = needs[2].then(|| {
            let d = self.0;
            let mut db = vec![0.0; d.c_out];
            for r in 0..d.rows {
                for (co, acc) in db.iter_mut().enumerate() {
                    *acc += g[(r * d.c_out + co) * d.cols..][..d.cols].iter().sum::<f64>();
                }
            }
            Tensor::new(inputs[2].shape(), db)
        });
        vec![
            needs[0].then(|| Tensor::new(inputs[0].shape(), dx)),
            needs[1].then(|| Tensor::new(inputs[1].shape(), dw)),
            db,
        ]
    }
}

impl Graph {
    /// `x [H, C_in, W]`, `w [C_out, C_in, kH, kW]` (odd kernel), `b [C_out]`
    /// → `[H, C_out, W]` with zero same-padding.
    pub fn conv2d_same(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 3, "conv input must be [H, C, W]");
        assert_eq!(ws.len(), 4, "conv kernel must be [Co, Ci, kH, kW]");
        assert_eq!(xs[1], ws[1], "conv channel mismatch");
        assert!(ws[2] % 2 == 1 && ws[3] % 2 == 1, "conv kernel must be odd-sized");
        let dims = Dims {
            rows: xs[0],
            cols: xs[2],
            c_in: xs[1],
            c_out: ws[0],
            kr: ws[2],
            kc: ws[3],
        };
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        assert_eq!(bd.len(), dims.c_out);
        let mut out = vec![0.0; dims.rows * dims.c_out * dims.cols];
        for r in 0..dims.rows {
            for co in 0..dims.c_out {
                out[(r * dims.c_out + co) * dims.cols..][..dims.cols].fill(bd[co]);
            }
        }
        dims.for_each_tap(|o, i, k| out[o] += xd[i] * wd[k]);
        let shape = [dims.rows, dims.c_out, dims.cols];
        self.record(Tensor::new(&shape, out), &[x, w, b], Conv2dOp(dims))
    }
}
