use crate::element::Element;
use crate::error::{mismatch, NnError, Result};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, k: Var, b: Var, patches: Vec<T> },
    Relu(Var),
    Fcl { x: Var, w: Var, b: Var },
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    GlobalSoftmax(Var),
    Concat(Var, Var),
    AddScalar(Var),
    Square(Var),
    Sum(Var),
    Nmse { pred: Var, label: Tensor<T>, label_energy: T },
    Mean(Vec<Var>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records a computation in topological order for reverse-mode differentiation.
///
/// Node `i` only ever reads nodes `< i`, so walking the nodes backwards is a
/// valid reverse topological order.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar root with respect to every node that influences it.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_of<T: Element>(t: &Tensor<T>, rank: usize, op: &'static str) -> Result<()> {
    if t.rank() != rank {
        return Err(NnError::ShapeMismatch {
            op,
            left: t.shape().to_vec(),
            right: vec![rank],
        });
    }
    Ok(())
}

fn slot<'g, T: Element>(grads: &'g mut [Option<Tensor<T>>], v: Var, shape: &[usize]) -> &'g mut [T] {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)).data_mut()
}

fn accumulate<T: Element>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        empty => *empty = Some(g),
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest `|x|` over the inputs of every recorded ReLU (infinite if none).
    pub fn relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.value(x)),
                _ => None,
            })
            .flat_map(|t| t.data().iter().map(|v| v.as_f64().abs()))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Stride-1 cross-correlation with zero padding `k/2` on an `(H, W, Cin)`
    /// input; kernel `(k, k, Cin, Cout)` with `k` odd, bias `(Cout)`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (xv, kv, bv) = (self.value(x), self.value(k), self.value(b));
        shape_of(xv, 3, "conv2d input")?;
        shape_of(kv, 4, "conv2d kernel")?;
        let (h, w, cin) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (kh, kw, kcin, cout) = (kv.shape()[0], kv.shape()[1], kv.shape()[2], kv.shape()[3]);
        if kh != kw || kh % 2 == 0 {
            return Err(NnError::InvalidConfig(format!("conv2d kernel must be square and odd, got {kh}x{kw}")));
        }
        if kcin != cin {
            return Err(mismatch("conv2d channels", xv.shape(), kv.shape()));
        }
        if bv.shape() != [cout] {
            return Err(mismatch("conv2d bias", bv.shape(), &[cout]));
        }
        let patch = kh * kw * cin;
        let patches = im2col(xv.data(), h, w, cin, kh);
        let mut out = vec![T::zero(); h * w * cout];
        for row in out.chunks_exact_mut(cout) {
            row.copy_from_slice(bv.data());
        }
        T::gemm(h * w, patch, cout, false, &patches, false, kv.data(), T::one(), &mut out);
        let value = Tensor::from_vec(&[h, w, cout], out)?;
        Ok(self.push(value, Op::Conv2d { x, k, b, patches }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(x))
    }

    /// Per-column affine map: `w·x + b` with `x` of shape `(C, L)`.
    pub fn fcl(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        shape_of(xv, 2, "fcl input")?;
        shape_of(wv, 2, "fcl weight")?;
        let (c, l) = (xv.shape()[0], xv.shape()[1]);
        let (co, wc) = (wv.shape()[0], wv.shape()[1]);
        if wc != c {
            return Err(mismatch("fcl", wv.shape(), xv.shape()));
        }
        if bv.shape() != [co] {
            return Err(mismatch("fcl bias", bv.shape(), &[co]));
        }
        let mut out = vec![T::zero(); co * l];
        for (row, &bias) in out.chunks_exact_mut(l).zip(bv.data()) {
            row.fill(bias);
        }
        T::gemm(co, c, l, false, wv.data(), false, xv.data(), T::one(), &mut out);
        let value = Tensor::from_vec(&[co, l], out)?;
        Ok(self.push(value, Op::Fcl { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        shape_of(av, 2, "matmul lhs")?;
        shape_of(bv, 2, "matmul rhs")?;
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        if bv.shape()[0] != k {
            return Err(mismatch("matmul", av.shape(), bv.shape()));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, false, av.data(), false, bv.data(), T::zero(), &mut out);
        let value = Tensor::from_vec(&[m, n], out)?;
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        shape_of(xv, 2, "transpose")?;
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let value = Tensor::from_vec(&[c, r], transpose2(xv.data(), r, c))?;
        Ok(self.push(value, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Softmax normalized over every entry of the tensor jointly.
    pub fn global_softmax(&mut self, x: Var) -> Var {
        let value = softmax_all(self.value(x));
        self.push(value, Op::GlobalSoftmax(x))
    }

    /// Channel concatenation of `(H, W, C1)` and `(H, W, C2)`, `a` first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        shape_of(av, 3, "concat lhs")?;
        shape_of(bv, 3, "concat rhs")?;
        if av.shape()[..2] != bv.shape()[..2] {
            return Err(mismatch("concat_channels", av.shape(), bv.shape()));
        }
        let (h, w, c1, c2) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
        let mut out = Vec::with_capacity(h * w * (c1 + c2));
        for p in 0..h * w {
            out.extend_from_slice(&av.data()[p * c1..(p + 1) * c1]);
            out.extend_from_slice(&bv.data()[p * c2..(p + 1) * c2]);
        }
        let value = Tensor::from_vec(&[h, w, c1 + c2], out)?;
        Ok(self.push(value, Op::Concat(a, b)))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.push(value, Op::Square(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `‖pred − label‖² / ‖label‖²`; the label is a constant.
    pub fn nmse(&mut self, pred: Var, label: &Tensor<T>) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != label.shape() {
            return Err(mismatch("nmse", pv.shape(), label.shape()));
        }
        let label_energy: T = label.data().iter().map(|&v| v * v).sum();
        if !(label_energy > T::zero()) {
            return Err(NnError::ZeroLabel(0));
        }
        let err: T = pv.data().iter().zip(label.data()).map(|(&p, &l)| (p - l) * (p - l)).sum();
        Ok(self.push(
            Tensor::scalar(err / label_energy),
            Op::Nmse {
                pred,
                label: label.clone(),
                label_energy,
            },
        ))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        let mut s = T::zero();
        for &x in xs {
            let v = self.value(x);
            if v.len() != 1 {
                return Err(mismatch("mean", v.shape(), &[]));
            }
            s += v.item();
        }
        let value = Tensor::scalar(s / T::lit(xs.len() as f64));
        Ok(self.push(value, Op::Mean(xs.to_vec())))
    }

    /// Reverse sweep from a single-element `root`.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), T::one()));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, g, &mut grads);
        }
        Gradients { grads }
    }

    fn backward_node(&self, node: &Node<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b, patches } => {
                let xv = self.value(*x);
                let kv = self.value(*k);
                let (h, w, cin) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let ks = kv.shape()[0];
                let cout = kv.shape()[3];
                let patch = ks * ks * cin;
                T::gemm(patch, h * w, cout, true, patches, false, g.data(), T::one(), slot(grads, *k, kv.shape()));
                let db = slot(grads, *b, &[cout]);
                for row in g.data().chunks_exact(cout) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                let mut dp = vec![T::zero(); h * w * patch];
                T::gemm(h * w, cout, patch, false, g.data(), true, kv.data(), T::zero(), &mut dp);
                col2im(&dp, h, w, cin, ks, slot(grads, *x, xv.shape()));
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = slot(grads, *x, xv.shape());
                for ((d, &v), &gv) in dx.iter_mut().zip(xv.data()).zip(g.data()) {
                    if v > T::zero() {
                        *d += gv;
                    }
                }
            }
            Op::Fcl { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (c, l) = (xv.shape()[0], xv.shape()[1]);
                let co = wv.shape()[0];
                T::gemm(co, l, c, false, g.data(), true, xv.data(), T::one(), slot(grads, *w, wv.shape()));
                T::gemm(c, co, l, true, wv.data(), false, g.data(), T::one(), slot(grads, *x, xv.shape()));
                let db = slot(grads, *b, &[co]);
                for (d, row) in db.iter_mut().zip(g.data().chunks_exact(l)) {
                    *d += row.iter().copied().sum();
                }
            }
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                T::gemm(m, n, k, false, g.data(), true, bv.data(), T::one(), slot(grads, *a, av.shape()));
                T::gemm(k, m, n, true, av.data(), false, g.data(), T::one(), slot(grads, *b, bv.shape()));
            }
            Op::Transpose(x) => {
                let xv = self.value(*x);
                let (r, c) = (xv.shape()[0], xv.shape()[1]);
                let t = Tensor::from_vec(xv.shape(), transpose2(g.data(), c, r)).expect("transpose shape");
                accumulate(grads, *x, t);
            }
            Op::Reshape(x) => {
                let t = g.reshaped(self.value(*x).shape()).expect("reshape shape");
                accumulate(grads, *x, t);
            }
            Op::GlobalSoftmax(x) => {
                let y = &node.value;
                let s: T = y.data().iter().zip(g.data()).map(|(&a, &b)| a * b).sum();
                let dx = slot(grads, *x, y.shape());
                for ((d, &yv), &gv) in dx.iter_mut().zip(y.data()).zip(g.data()) {
                    *d += yv * (gv - s);
                }
            }
            Op::Concat(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (c1, c2) = (av.shape()[2], bv.shape()[2]);
                let positions = av.len() / c1.max(1);
                {
                    let da = slot(grads, *a, av.shape());
                    for p in 0..positions {
                        for c in 0..c1 {
                            da[p * c1 + c] += g.data()[p * (c1 + c2) + c];
                        }
                    }
                }
                let db = slot(grads, *b, bv.shape());
                for p in 0..positions {
                    for c in 0..c2 {
                        db[p * c2 + c] += g.data()[p * (c1 + c2) + c1 + c];
                    }
                }
            }
            Op::AddScalar(x) => accumulate(grads, *x, g),
            Op::Square(x) => {
                let xv = self.value(*x);
                let two = T::lit(2.0);
                let dx = slot(grads, *x, xv.shape());
                for ((d, &v), &gv) in dx.iter_mut().zip(xv.data()).zip(g.data()) {
                    *d += two * v * gv;
                }
            }
            Op::Sum(x) => {
                let gv = g.item();
                for d in slot(grads, *x, self.value(*x).shape()) {
                    *d += gv;
                }
            }
            Op::Nmse {
                pred,
                label,
                label_energy,
            } => {
                let pv = self.value(*pred);
                let coef = T::lit(2.0) * g.item() / *label_energy;
                let dp = slot(grads, *pred, pv.shape());
                for ((d, &p), &l) in dp.iter_mut().zip(pv.data()).zip(label.data()) {
                    *d += coef * (p - l);
                }
            }
            Op::Mean(xs) => {
                let gv = g.item() / T::lit(xs.len() as f64);
                for &x in xs {
                    slot(grads, x, self.value(x).shape())[0] += gv;
                }
            }
        }
    }
}

fn transpose2<T: Copy>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for j in 0..cols {
        for i in 0..rows {
            out.push(data[i * cols + j]);
        }
    }
    out
}

pub(crate) fn softmax_all<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let max = x.data().iter().copied().fold(T::neg_infinity(), T::max);
    let e = x.map(|v| (v - max).exp());
    let total: T = e.data().iter().copied().sum();
    e.map(|v| v / total)
}

/// Row `(i, j)` of the patch matrix holds the `k×k×Cin` window centred at
/// `(i, j)`, ordered `(dy, dx, c)`, with zeros outside the image.
fn im2col<T: Element>(x: &[T], h: usize, w: usize, cin: usize, k: usize) -> Vec<T> {
    let pad = k / 2;
    let patch = k * k * cin;
    let mut out = vec![T::zero(); h * w * patch];
    for i in 0..h {
        for j in 0..w {
            let base = (i * w + j) * patch;
            for dy in 0..k {
                let Some(y) = (i + dy).checked_sub(pad).filter(|&y| y < h) else { continue };
                for dx in 0..k {
                    let Some(xx) = (j + dx).checked_sub(pad).filter(|&xx| xx < w) else { continue };
                    let src = (y * w + xx) * cin;
                    let dst = base + (dy * k + dx) * cin;
                    out[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im<T: Element>(dp: &[T], h: usize, w: usize, cin: usize, k: usize, dx: &mut [T]) {
    let pad = k / 2;
    let patch = k * k * cin;
    for i in 0..h {
        for j in 0..w {
            let base = (i * w + j) * patch;
            for dy in 0..k {
                let Some(y) = (i + dy).checked_sub(pad).filter(|&y| y < h) else { continue };
                for dxo in 0..k {
                    let Some(xx) = (j + dxo).checked_sub(pad).filter(|&xx| xx < w) else { continue };
                    let dst = (y * w + xx) * cin;
                    let src = base + (dy * k + dxo) * cin;
                    for c in 0..cin {
                        dx[dst + c] += dp[src + c];
                    }
                }
            }
        }
    }
}
