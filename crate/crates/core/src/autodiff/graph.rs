use super::tensor::{gemm, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Reverse-mode rule of a recorded operation.
///
/// `needs[i]` tells whether input `i` wants a gradient; entries for inputs
/// that do not may be returned as `None`.
pub trait Backward {
    fn backward(
        &self,
        grad: &Tensor,
        inputs: &[&Tensor],
        output: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>>;
}

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    op: Option<Box<dyn Backward>>,
    requires_grad: bool,
}

/// Tape of recorded operations. One graph per forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Copy of `x` cut off from the tape.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            op: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an operation whose forward value has already been computed.
    pub fn record(&mut self, value: Tensor, inputs: &[Var], op: impl Backward + 'static) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents: inputs.iter().map(|v| v.0).collect(),
            op: if requires_grad { Some(Box::new(op)) } else { None },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward() needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = node.op.as_ref() else { continue };
            let Some(grad) = grads[idx].take() else { continue };
            let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            let parent_grads = op.backward(&grad, &inputs, &node.value, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, g), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let (Some(g), true) = (g, need) else { continue };
                debug_assert_eq!(g.shape(), self.nodes[p].value.shape());
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Gradients { grads }
    }
}

// ---------------------------------------------------------------------------
// elementwise

struct AddOp;
impl Backward for AddOp {
    fn backward(&self, g: &Tensor, _: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(g.clone()), Some(g.clone())]
    }
}

struct SubOp;
impl Backward for SubOp {
    fn backward(&self, g: &Tensor, _: &[&Tensor], _: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        vec![
            Some(g.clone()),
            needs[1].then(|| g.map(|v| -v)),
        ]
    }
}

struct MulOp;
impl Backward for MulOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let prod = |a: &Tensor| {
            let data = g.data().iter().zip(a.data()).map(|(g, a)| g * a).collect();
            Tensor::new(g.shape(), data)
        };
        vec![needs[0].then(|| prod(x[1])), needs[1].then(|| prod(x[0]))]
    }
}

struct DivOp;
impl Backward for DivOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], out: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let ga = needs[0].then(|| {
            let data = g.data().iter().zip(x[1].data()).map(|(g, b)| g / b).collect();
            Tensor::new(g.shape(), data)
        });
        let gb = needs[1].then(|| {
            let data = g
                .data()
                .iter()
                .zip(out.data())
                .zip(x[1].data())
                .map(|((g, q), b)| -g * q / b)
                .collect();
            Tensor::new(g.shape(), data)
        });
        vec![ga, gb]
    }
}

struct ScaleOp(f64);
impl Backward for ScaleOp {
    fn backward(&self, g: &Tensor, _: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(g.map(|v| v * self.0))]
    }
}

struct ShiftOp;
impl Backward for ShiftOp {
    fn backward(&self, g: &Tensor, _: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(g.clone())]
    }
}

/// Unary op with derivative expressed through input and output values.
struct UnaryOp(fn(f64, f64) -> f64);
impl Backward for UnaryOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], out: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let d = self.0;
        let data = g
            .data()
            .iter()
            .zip(x[0].data())
            .zip(out.data())
            .map(|((g, &x), &y)| g * d(x, y))
            .collect();
        vec![Some(Tensor::new(g.shape(), data))]
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    sigmoid(v)
}

/// Adds a vector along the trailing axis.
struct AddBiasOp;
impl Backward for AddBiasOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let n = x[1].len();
        let gb = needs[1].then(|| {
            let mut acc = vec![0.0; n];
            for row in g.data().chunks_exact(n) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            Tensor::new(x[1].shape(), acc)
        });
        vec![needs[0].then(|| g.clone()), gb]
    }
}

/// Multiplies by a vector along the trailing axis.
struct MulRowOp;
impl Backward for MulRowOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let n = x[1].len();
        let row = x[1].data();
        let gx = needs[0].then(|| {
            let mut out = g.clone();
            for chunk in out.data_mut().chunks_exact_mut(n) {
                for (v, s) in chunk.iter_mut().zip(row) {
                    *v *= s;
                }
            }
            out
        });
        let gr = needs[1].then(|| {
            let mut acc = vec![0.0; n];
            for (gc, xc) in g.data().chunks_exact(n).zip(x[0].data().chunks_exact(n)) {
                for ((a, gv), xv) in acc.iter_mut().zip(gc).zip(xc) {
                    *a += gv * xv;
                }
            }
            Tensor::new(x[1].shape(), acc)
        });
        vec![gx, gr]
    }
}

// ---------------------------------------------------------------------------
// linear algebra and reductions

/// `[.., k] · [k, n] -> [.., n]`
struct MatMulOp {
    m: usize,
    k: usize,
    n: usize,
}
impl Backward for MatMulOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let ga = needs[0].then(|| {
            let mut out = vec![0.0; m * k];
            gemm(m, n, k, g.data(), false, x[1].data(), true, 0.0, &mut out);
            Tensor::new(x[0].shape(), out)
        });
        let gb = needs[1].then(|| {
            let mut out = vec![0.0; k * n];
            gemm(k, m, n, x[0].data(), true, g.data(), false, 0.0, &mut out);
            Tensor::new(x[1].shape(), out)
        });
        vec![ga, gb]
    }
}

struct SumAllOp;
impl Backward for SumAllOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(Tensor::full(x[0].shape(), g.item()))]
    }
}

/// Sum over one axis, viewed as `[outer, axis, inner]`.
struct SumAxisOp {
    outer: usize,
    axis: usize,
    inner: usize,
    scale: f64,
}
impl Backward for SumAxisOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let mut out = vec![0.0; x[0].len()];
        let gd = g.data();
        for o in 0..self.outer {
            for a in 0..self.axis {
                let dst = &mut out[(o * self.axis + a) * self.inner..][..self.inner];
                let src = &gd[o * self.inner..][..self.inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s * self.scale;
                }
            }
        }
        vec![Some(Tensor::new(x[0].shape(), out))]
    }
}

/// Inserts a broadcast axis of length `count` at position `axis`.
struct RepeatAxisOp {
    outer: usize,
    count: usize,
    inner: usize,
}
impl Backward for RepeatAxisOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let mut out = vec![0.0; x[0].len()];
        let gd = g.data();
        for o in 0..self.outer {
            let dst = &mut out[o * self.inner..][..self.inner];
            for c in 0..self.count {
                let src = &gd[(o * self.count + c) * self.inner..][..self.inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        vec![Some(Tensor::new(x[0].shape(), out))]
    }
}

struct ReshapeOp;
impl Backward for ReshapeOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(g.clone().reshape(x[0].shape()))]
    }
}

/// Concatenation along the trailing axis.
struct ConcatLastOp {
    widths: Vec<usize>,
}
impl Backward for ConcatLastOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let total: usize = self.widths.iter().sum();
        let rows = g.len() / total.max(1);
        let mut offset = 0;
        let mut result = Vec::with_capacity(x.len());
        for (i, &w) in self.widths.iter().enumerate() {
            if needs[i] {
                let mut out = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    out.extend_from_slice(&g.data()[r * total + offset..][..w]);
                }
                result.push(Some(Tensor::new(x[i].shape(), out)));
            } else {
                result.push(None);
            }
            offset += w;
        }
        result
    }
}

/// Slice `[start, start+len)` of the trailing axis.
struct SliceLastOp {
    start: usize,
    len: usize,
}
impl Backward for SliceLastOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let width = x[0].last_dim();
        let mut out = vec![0.0; x[0].len()];
        for (dst, src) in out.chunks_exact_mut(width).zip(g.data().chunks_exact(self.len)) {
            dst[self.start..self.start + self.len].copy_from_slice(src);
        }
        vec![Some(Tensor::new(x[0].shape(), out))]
    }
}

/// Slice `[start, start+len)` of the leading axis.
struct SliceFirstOp {
    offset: usize,
}
impl Backward for SliceFirstOp {
    fn backward(&self, g: &Tensor, x: &[&Tensor], _: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let mut out = vec![0.0; x[0].len()];
        out[self.offset..self.offset + g.len()].copy_from_slice(g.data());
        vec![Some(Tensor::new(x[0].shape(), out))]
    }
}

/// Normalization to zero mean / unit variance over the trailing axis.
struct LayerNormOp {
    inv_std: Vec<f64>,
}
impl Backward for LayerNormOp {
    fn backward(&self, g: &Tensor, _: &[&Tensor], out: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let n = out.last_dim();
        let mut dx = vec![0.0; out.len()];
        for (r, ((dxr, gr), yr)) in dx
            .chunks_exact_mut(n)
            .zip(g.data().chunks_exact(n))
            .zip(out.data().chunks_exact(n))
            .enumerate()
        {
            let mean_g = gr.iter().sum::<f64>() / n as f64;
            let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            for ((d, gv), yv) in dxr.iter_mut().zip(gr).zip(yr) {
                *d = self.inv_std[r] * (gv - mean_g - yv * mean_gy);
            }
        }
        vec![Some(Tensor::new(out.shape(), dx))]
    }
}

impl Graph {
    fn zip_values(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_values(a, b, |x, y| x + y);
        self.record(v, &[a, b], AddOp)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_values(a, b, |x, y| x - y);
        self.record(v, &[a, b], SubOp)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_values(a, b, |x, y| x * y);
        self.record(v, &[a, b], MulOp)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_values(a, b, |x, y| x / y);
        self.record(v, &[a, b], DivOp)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x).map(|v| v * factor);
        self.record(v, &[x], ScaleOp(factor))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|v| v + c);
        self.record(v, &[x], ShiftOp)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, d: fn(f64, f64) -> f64) -> Var {
        let v = self.value(x).map(f);
        self.record(v, &[x], UnaryOp(d))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, |x, _| 2.0 * x)
    }

    /// Square root with a zero subgradient at 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, |_, y| if y > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let n = self.value(bias).len();
        assert_eq!(self.value(x).last_dim(), n, "bias width mismatch");
        let mut v = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for row in v.data_mut().chunks_exact_mut(n) {
            for (a, bv) in row.iter_mut().zip(&b) {
                *a += bv;
            }
        }
        self.record(v, &[x, bias], AddBiasOp)
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let n = self.value(row).len();
        assert_eq!(self.value(x).last_dim(), n, "row width mismatch");
        let mut v = self.value(x).clone();
        let r = self.value(row).data().to_vec();
        for chunk in v.data_mut().chunks_exact_mut(n) {
            for (a, s) in chunk.iter_mut().zip(&r) {
                *a *= s;
            }
        }
        self.record(v, &[x, row], MulRowOp)
    }

    /// `x [.., k] · w [k, n] -> [.., n]`
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 2, "matmul rhs must be 2-D, got {ws:?}");
        let k = *xs.last().expect("matmul lhs must not be scalar");
        assert_eq!(k, ws[0], "matmul inner dims {xs:?} x {ws:?}");
        let n = ws[1];
        let m = self.value(x).len() / k.max(1);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(x).data(), false, self.value(w).data(), false, 0.0, &mut out);
        let mut shape = xs;
        *shape.last_mut().unwrap() = n;
        self.record(Tensor::new(&shape, out), &[x, w], MatMulOp { m, k, n })
    }

    /// `x · w + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.record(v, &[x], SumAllOp)
    }

    fn reduce_axis(&mut self, x: Var, axis: usize, scale: f64, keep: bool) -> Var {
        let shape = self.value(x).shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..][..inner];
            for a in 0..len {
                for (d, s) in dst.iter_mut().zip(&src[(o * len + a) * inner..][..inner]) {
                    *d += s;
                }
            }
            for d in dst.iter_mut() {
                *d *= scale;
            }
        }
        let mut new_shape = shape;
        if keep {
            new_shape[axis] = 1;
        } else {
            new_shape.remove(axis);
        }
        let op = SumAxisOp {
            outer,
            axis: len,
            inner,
            scale,
        };
        self.record(Tensor::new(&new_shape, out), &[x], op)
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Var {
        self.reduce_axis(x, axis, 1.0, false)
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Var {
        let len = self.value(x).shape()[axis];
        self.reduce_axis(x, axis, 1.0 / len as f64, false)
    }

    /// Inserts a new axis of length `count` at `axis` by repetition.
    pub fn repeat_axis(&mut self, x: Var, axis: usize, count: usize) -> Var {
        let shape = self.value(x).shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis..].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * count * inner);
        for o in 0..outer {
            let block = &src[o * inner..][..inner];
            for _ in 0..count {
                out.extend_from_slice(block);
            }
        }
        let mut new_shape = shape;
        new_shape.insert(axis, count);
        let op = RepeatAxisOp { outer, count, inner };
        self.record(Tensor::new(&new_shape, out), &[x], op)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let v = self.value(x).clone().reshape(shape);
        self.record(v, &[x], ReshapeOp)
    }

    /// Concatenates along the trailing axis; leading shapes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let lead = {
            let s = self.value(parts[0]).shape();
            s[..s.len() - 1].to_vec()
        };
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).last_dim()).collect();
        for &p in parts {
            let s = self.value(p).shape();
            assert_eq!(&s[..s.len() - 1], &lead[..], "concat leading shapes differ");
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..][..w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.record(Tensor::new(&shape, out), parts, ConcatLastOp { widths })
    }

    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Var {
        let width = self.value(x).last_dim();
        assert!(start + len <= width, "slice out of range");
        let mut out = Vec::with_capacity(self.value(x).len() / width * len);
        for row in self.value(x).data().chunks_exact(width) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = self.value(x).shape().to_vec();
        *shape.last_mut().unwrap() = len;
        self.record(Tensor::new(&shape, out), &[x], SliceLastOp { start, len })
    }

    /// Selects entry `index` of the leading axis, dropping that axis.
    pub fn select_first(&mut self, x: Var, index: usize) -> Var {
        let shape = self.value(x).shape().to_vec();
        assert!(index < shape[0], "index out of range");
        let inner: usize = shape[1..].iter().product();
        let offset = index * inner;
        let out = self.value(x).data()[offset..offset + inner].to_vec();
        self.record(Tensor::new(&shape[1..], out), &[x], SliceFirstOp { offset })
    }

    /// Layer normalization over the trailing axis, without affine terms.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let n = self.value(x).last_dim();
        let mut out = self.value(x).clone();
        let mut inv_std = Vec::with_capacity(out.len() / n);
        for row in out.data_mut().chunks_exact_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * s;
            }
            inv_std.push(s);
        }
        self.record(out, &[x], LayerNormOp { inv_std })
    }
}
