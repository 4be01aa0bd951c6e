use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Graph, Tensor, Var};

/// Named trainable tensors, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Places every tensor on the graph, trainable or frozen.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Zero-filled store with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }
}

/// Graph handles for a [`ParamStore`].
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not registered"))
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    /// Gradients per parameter name; parameters not reached get zeros.
    pub fn gradients(&self, grads: &Gradients, store: &ParamStore) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, t) in store.iter() {
            let g = self
                .vars
                .get(name)
                .and_then(|v| grads.get(*v).cloned())
                .unwrap_or_else(|| Tensor::zeros(t.shape()));
            out.insert(name.clone(), g);
        }
        out
    }
}

/// Uniform `±1/√fan_in` initialization.
pub(crate) fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

/// `[rows, cols]` with orthonormal columns (rows ≥ cols) or rows.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, k) = (rows.max(cols), rows.min(cols));
    // k orthonormal vectors of length n by Gram-Schmidt on gaussian draws
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Recurrent kernel `[H, 3H]` made of three orthogonal `H × H` gate blocks.
pub(crate) fn orthogonal_gates(hidden: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let blocks: Vec<Vec<f64>> = (0..3).map(|_| orthogonal(hidden, hidden, rng)).collect();
    let mut out = vec![0.0; hidden * 3 * hidden];
    for r in 0..hidden {
        for (gate, block) in blocks.iter().enumerate() {
            out[r * 3 * hidden + gate * hidden..][..hidden]
                .copy_from_slice(&block[r * hidden..(r + 1) * hidden]);
        }
    }
    Tensor::new(&[hidden, 3 * hidden], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = orthogonal_gates(5, &mut rng);
        for gate in 0..3 {
            for a in 0..5 {
                for b in 0..5 {
                    let dot: f64 = (0..5)
                        .map(|r| w.data()[r * 15 + gate * 5 + a] * w.data()[r * 15 + gate * 5 + b])
                        .sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn bind_and_collect() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::new(&[2], vec![1.0, 2.0]));
        store.insert("b", Tensor::new(&[2], vec![3.0, 4.0]));
        let mut g = Graph::new();
        let bound = store.bind(&mut g, true);
        let p = g.mul(bound.var("a"), bound.var("a"));
        let s = g.sum(p);
        let grads = g.backward(s);
        let named = bound.gradients(&grads, &store);
        assert_eq!(named.get("a").unwrap().data(), &[2.0, 4.0]);
        assert_eq!(named.get("b").unwrap().data(), &[0.0, 0.0]);
    }
}
