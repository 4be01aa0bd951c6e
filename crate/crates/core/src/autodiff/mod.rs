//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation of one forward pass; calling
//! [`Graph::backward`] on a scalar produces gradients for every node that
//! depends on a trainable leaf. Heavy domain kernels (recurrences,
//! convolutions, complex filtering) are recorded as single fused nodes with
//! hand-written adjoints.

mod conv;
mod graph;
mod recurrent;
mod tensor;

pub use graph::{Backward, Gradients, Graph, Var};
pub use tensor::Tensor;

/// Central finite-difference derivative of `f` with respect to `x[index]`.
pub fn central_difference(
    x: &mut Tensor,
    index: usize,
    step: f64,
    mut f: impl FnMut(&Tensor) -> f64,
) -> f64 {
    let orig = x.data()[index];
    x.data_mut()[index] = orig + step;
    let plus = f(x);
    x.data_mut()[index] = orig - step;
    let minus = f(x);
    x.data_mut()[index] = orig;
    (plus - minus) / (2.0 * step)
}

/// Relative disagreement between an analytic and a numeric derivative.
/// Values whose magnitudes are both below `floor` compare in absolute terms.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Checks every input entry of a scalar function built on a graph.
    fn check(inputs: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let eval = |vals: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone())).collect();
            let out = build(&mut g, &vars);
            g.value(out).item()
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars);
        let grads = g.backward(out);
        for (slot, var) in vars.iter().enumerate() {
            let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[slot].shape()));
            for i in 0..inputs[slot].len() {
                let mut vals = inputs.clone();
                let mut x = vals[slot].clone();
                let numeric = central_difference(&mut x, i, 1e-6, |t| {
                    vals[slot] = t.clone();
                    eval(&vals)
                });
                let err = relative_error(analytic.data()[i], numeric, 1e-4);
                assert!(
                    err < 1e-5,
                    "input {slot}[{i}]: analytic {} numeric {numeric}",
                    analytic.data()[i]
                );
            }
        }
    }

    fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random(g.shape(y), &mut rng);
        let w = g.constant(w);
        let p = g.mul(y, w);
        g.sum(p)
    }

    #[test]
    fn elementwise_and_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[3, 4], &mut rng).map(|v| v + 3.0);
        check(vec![a, b], |g, v| {
            let s = g.add(v[0], v[1]);
            let d = g.div(s, v[1]);
            let m = g.mul(d, v[0]);
            let t = g.tanh(m);
            let q = g.sigmoid(t);
            let r = g.sub(q, v[0]);
            let sq = g.square(r);
            let sh = g.add_scalar(sq, 1.0);
            let rt = g.sqrt(sh);
            let mean = g.mean_axis(rt, 1);
            let rep = g.repeat_axis(mean, 1, 2);
            let sum = g.sum_axis(rep, 0);
            weighted_sum(g, sum, 9)
        });
    }

    #[test]
    fn matmul_bias_and_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[2, 3, 4], &mut rng);
        let w = random(&[4, 5], &mut rng);
        let b = random(&[5], &mut rng);
        let s = random(&[5], &mut rng);
        check(vec![x, w, b, s], |g, v| {
            let y = g.linear(v[0], v[1], v[2]);
            let y = g.mul_row(y, v[3]);
            let y = g.relu(y);
            let a = g.slice_last(y, 1, 3);
            let c = g.concat_last(&[a, y]);
            let c = g.select_first(c, 1);
            let c = g.reshape(c, &[24]);
            let c = g.scale(c, 0.5);
            weighted_sum(g, c, 3)
        });
    }

    #[test]
    fn layer_norm_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[4, 6], &mut rng);
        check(vec![x], |g, v| {
            let y = g.layer_norm(v[0], 1e-5);
            weighted_sum(g, y, 4)
        });
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[2, 4], vec![1.0, 2.0, 3.0, 4.0, -5.0, 0.0, 5.0, 10.0]));
        let y = g.layer_norm(x, 0.0);
        for row in g.value(y).data().chunks(4) {
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gx = random(&[5, 2, 9], &mut rng);
        let w = random(&[3, 9], &mut rng);
        let b = random(&[9], &mut rng);
        check(vec![gx, w, b], |g, v| {
            let h = g.gru(v[0], v[1], v[2]);
            weighted_sum(g, h, 5)
        });
    }

    #[test]
    fn gru_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (t_len, h) = (4, 2);
        let gx = random(&[t_len, 1, 3 * h], &mut rng);
        let w = random(&[h, 3 * h], &mut rng);
        let b = random(&[3 * h], &mut rng);
        let mut g = Graph::new();
        let (vx, vw, vb) = (g.constant(gx.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let out = g.gru(vx, vw, vb);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut state = vec![0.0; h];
        for t in 0..t_len {
            let x = &gx.data()[t * 3 * h..][..3 * h];
            let mut gh = b.data().to_vec();
            for (j, ghj) in gh.iter_mut().enumerate() {
                for (i, s) in state.iter().enumerate() {
                    *ghj += s * w.data()[i * 3 * h + j];
                }
            }
            let next: Vec<f64> = (0..h)
                .map(|j| {
                    let r = sig(x[j] + gh[j]);
                    let z = sig(x[h + j] + gh[h + j]);
                    let n = (x[2 * h + j] + r * gh[2 * h + j]).tanh();
                    (1.0 - z) * n + z * state[j]
                })
                .collect();
            state = next;
            for j in 0..h {
                assert!((g.value(out).data()[t * h + j] - state[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conv_gradient_and_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(&[4, 2, 6], &mut rng);
        let w = random(&[3, 2, 3, 5], &mut rng);
        let b = random(&[3], &mut rng);

        let mut g = Graph::new();
        let (vx, vw, vb) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = g.conv2d_same(vx, vw, vb);
        let at = |r: isize, c: usize, col: isize| -> f64 {
            if r < 0 || r >= 4 || col < 0 || col >= 6 {
                0.0
            } else {
                x.data()[(r as usize * 2 + c) * 6 + col as usize]
            }
        };
        for r in 0..4 {
            for co in 0..3 {
                for col in 0..6 {
                    let mut acc = b.data()[co];
                    for ci in 0..2 {
                        for a in 0..3 {
                            for bb in 0..5 {
                                acc += w.data()[((co * 2 + ci) * 3 + a) * 5 + bb]
                                    * at(r as isize + a as isize - 1, ci, col as isize + bb as isize - 2);
                            }
                        }
                    }
                    let got = g.value(y).data()[(r * 3 + co) * 6 + col];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }

        check(vec![x, w, b], |g, v| {
            let y = g.conv2d_same(v[0], v[1], v[2]);
            weighted_sum(g, y, 7)
        });
    }

    #[test]
    fn detached_branch_gets_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]));
        let d = g.detach(x);
        let y = g.mul(x, d);
        let s = g.sum(y);
        let grads = g.backward(s);
        // d(x * stop(x))/dx = stop(x)
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 2.0]);
        assert!(grads.get(d).is_none());
    }
}
