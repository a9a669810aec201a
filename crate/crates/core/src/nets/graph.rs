//! Tape-based reverse-mode differentiation over a fixed operator set.
//!
//! A [`Graph`] records every operation eagerly: values are computed when a
//! node is added, and [`Graph::backward`] walks the tape in reverse to
//! accumulate gradients. Parameters are borrowed, not copied, so building a
//! graph over a large network costs only the activations.

use super::tensor::{Real, Tensor};
use std::borrow::Cow;
use std::rc::Rc;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row partition of a stacked tensor: rows `offsets[s]..offsets[s+1]`
/// belong to segment `s`. Empty segments are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    pub fn from_counts(counts: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        for c in counts {
            let last = *offsets.last().unwrap();
            offsets.push(last + c);
        }
        Self { offsets }
    }

    pub fn from_offsets(offsets: Vec<usize>) -> Self {
        assert!(!offsets.is_empty() && offsets[0] == 0);
        assert!(offsets.windows(2).all(|w| w[0] <= w[1]));
        Self { offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn count(&self, s: usize) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    MulCol(Var, Var),
    ScaleCols(Var, Rc<Vec<T>>),
    ClampCols(Var, Rc<Vec<T>>, Rc<Vec<T>>),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SegMean(Var, Rc<Segments>),
    SegSum(Var, Rc<Segments>),
    SegBroadcast(Var, Rc<Segments>),
    SegSoftmax(Var, Rc<Segments>),
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].take()
    }
}

pub struct Graph<'a, T: Real = f32> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Real> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Graph<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Borrowed constant, e.g. target-network weights.
    pub fn constant(&mut self, t: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf; its gradient is kept by `backward`.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Param,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned trainable leaf, used by gradient checks.
    pub fn param_owned(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Param,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies the value of `v` into a new constant leaf (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.input(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `x + b` with `b` a single row broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let xv = self.value(x);
        let bv = self.value(b);
        let c = xv.cols();
        assert_eq!(bv.len(), c, "bias width {} vs input width {}", bv.len(), c);
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, &bb) in row.iter_mut().zip(bv.data()) {
                *o = *o + bb;
            }
        }
        self.push(out, Op::AddBias(x, b), &[x, b])
    }

    /// `x·w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_bias(h, b)
    }

    fn check_same(&self, a: Var, b: Var) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "elementwise operands differ in shape"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b);
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b);
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b);
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b);
        let out = self
            .value(a)
            .zip_map(self.value(b), |x, y| if y < x { y } else { x });
        self.push(out, Op::Min(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v + s);
        self.push(out, Op::AddScalar(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, Op::Tanh(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.exp());
        self.push(out, Op::Exp(x), &[x])
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.value(x).map(softplus);
        self.push(out, Op::Softplus(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square(x), &[x])
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(rows, total);
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat row mismatch");
            for r in 0..rows {
                out.data_mut()[r * total + off..r * total + off + w]
                    .copy_from_slice(v.row_slice(r));
            }
            off += w;
        }
        self.push(out, Op::Concat(parts.to_vec()), parts)
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let v = self.value(x);
        let (rows, cols) = (v.rows(), v.cols());
        assert!(start <= end && end <= cols);
        let w = end - start;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&v.row_slice(r)[start..end]);
        }
        let out = Tensor::matrix(rows, w, data);
        self.push(out, Op::Slice(x, start), &[x])
    }

    /// Row sums, `[n, m] -> [n, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let rows = v.rows();
        let data = (0..rows)
            .map(|r| v.row_slice(r).iter().copied().sum())
            .collect();
        let out = Tensor::matrix(rows, 1, data);
        self.push(out, Op::SumCols(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.len().max(1);
        let s: T = v.data().iter().copied().sum();
        self.push(Tensor::scalar(s / T::of(n as f64)), Op::Mean(x), &[x])
    }

    /// Multiplies each row of `x` by the matching entry of column `col`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let xv = self.value(x);
        let cv = self.value(col);
        assert_eq!(cv.len(), xv.rows(), "mul_col length mismatch");
        let c = xv.cols();
        let mut out = xv.clone();
        for (row, &s) in out.data_mut().chunks_mut(c.max(1)).zip(cv.data()) {
            for o in row.iter_mut() {
                *o = *o * s;
            }
        }
        self.push(out, Op::MulCol(x, col), &[x, col])
    }

    /// Multiplies column `c` of `x` by the constant `scales[c]`.
    pub fn scale_cols(&mut self, x: Var, scales: &[T]) -> Var {
        let xv = self.value(x);
        assert_eq!(scales.len(), xv.cols());
        let c = xv.cols();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, &s) in row.iter_mut().zip(scales) {
                *o = *o * s;
            }
        }
        self.push(out, Op::ScaleCols(x, Rc::new(scales.to_vec())), &[x])
    }

    /// Clamps column `c` of `x` into `[lo[c], hi[c]]`; the gradient is zero
    /// outside the interval.
    pub fn clamp_cols(&mut self, x: Var, lo: &[T], hi: &[T]) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        assert!(lo.len() == c && hi.len() == c);
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            for ((o, &l), &h) in row.iter_mut().zip(lo).zip(hi) {
                *o = (*o).max(l).min(h);
            }
        }
        self.push(
            out,
            Op::ClampCols(x, Rc::new(lo.to_vec()), Rc::new(hi.to_vec())),
            &[x],
        )
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let c = v.cols();
        let mut out = v.clone();
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push(out, Op::SoftmaxRows(x), &[x])
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let c = v.cols();
        let mut out = v.clone();
        for row in out.data_mut().chunks_mut(c) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<T>().ln();
            for z in row.iter_mut() {
                *z = *z - lse;
            }
        }
        self.push(out, Op::LogSoftmaxRows(x), &[x])
    }

    /// Per-segment mean of rows, `[R, m] -> [S, m]`; empty segments give 0.
    pub fn seg_mean(&mut self, x: Var, seg: &Rc<Segments>) -> Var {
        let v = self.value(x);
        assert_eq!(v.rows(), seg.total_rows());
        let c = v.cols();
        let mut out = Tensor::zeros(seg.len(), c);
        for s in 0..seg.len() {
            let n = seg.count(s);
            if n == 0 {
                continue;
            }
            let inv = T::one() / T::of(n as f64);
            let dst = &mut out.data_mut()[s * c..(s + 1) * c];
            for r in seg.range(s) {
                for (d, &x) in dst.iter_mut().zip(v.row_slice(r)) {
                    *d = *d + x;
                }
            }
            for d in dst.iter_mut() {
                *d = *d * inv;
            }
        }
        self.push(out, Op::SegMean(x, seg.clone()), &[x])
    }

    /// Per-segment sum of rows, `[R, m] -> [S, m]`.
    pub fn seg_sum(&mut self, x: Var, seg: &Rc<Segments>) -> Var {
        let v = self.value(x);
        assert_eq!(v.rows(), seg.total_rows());
        let c = v.cols();
        let mut out = Tensor::zeros(seg.len(), c);
        for s in 0..seg.len() {
            let dst = &mut out.data_mut()[s * c..(s + 1) * c];
            for r in seg.range(s) {
                for (d, &x) in dst.iter_mut().zip(v.row_slice(r)) {
                    *d = *d + x;
                }
            }
        }
        self.push(out, Op::SegSum(x, seg.clone()), &[x])
    }

    /// Repeats segment row `s` for every member row, `[S, m] -> [R, m]`.
    pub fn seg_broadcast(&mut self, x: Var, seg: &Rc<Segments>) -> Var {
        let v = self.value(x);
        assert_eq!(v.rows(), seg.len());
        let c = v.cols();
        let mut out = Tensor::zeros(seg.total_rows(), c);
        for s in 0..seg.len() {
            for r in seg.range(s) {
                out.data_mut()[r * c..(r + 1) * c].copy_from_slice(v.row_slice(s));
            }
        }
        self.push(out, Op::SegBroadcast(x, seg.clone()), &[x])
    }

    /// Softmax of a column vector within each segment.
    pub fn seg_softmax(&mut self, col: Var, seg: &Rc<Segments>) -> Var {
        let v = self.value(col);
        assert_eq!(v.cols(), 1);
        assert_eq!(v.rows(), seg.total_rows());
        let mut out = v.clone();
        for s in 0..seg.len() {
            let r = seg.range(s);
            softmax_in_place(&mut out.data_mut()[r]);
        }
        self.push(out, Op::SegSoftmax(col, seg.clone()), &[col])
    }

    /// Reverse sweep from a scalar `loss`. Only nodes that depend on a
    /// parameter receive gradients.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[loss.0] = Some(Tensor::full(1, 1, T::one()));
        let g_iter = (0..=loss.0).rev();
        for i in g_iter {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf | Op::Param => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(i, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.nodes[a.0].needs_grad {
                    // dA = dC · B^T
                    let mut da = Tensor::zeros(m, k);
                    T::gemm(
                        m,
                        n,
                        k,
                        g.data(),
                        n as isize,
                        1,
                        bv.data(),
                        1,
                        n as isize,
                        T::zero(),
                        da.data_mut(),
                        k as isize,
                        1,
                    );
                    let da = Tensor::from_vec(av.shape().to_vec(), da.into_data());
                    self.accumulate(grads, *a, da);
                }
                if self.nodes[b.0].needs_grad {
                    // dB = A^T · dC
                    let mut db = Tensor::zeros(k, n);
                    T::gemm(
                        k,
                        m,
                        n,
                        av.data(),
                        1,
                        k as isize,
                        g.data(),
                        n as isize,
                        1,
                        T::zero(),
                        db.data_mut(),
                        n as isize,
                        1,
                    );
                    let db = Tensor::from_vec(bv.shape().to_vec(), db.into_data());
                    self.accumulate(grads, *b, db);
                }
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if self.nodes[b.0].needs_grad {
                    let c = g.cols();
                    let mut db = vec![T::zero(); c];
                    for row in g.data().chunks(c) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d = *d + v;
                        }
                    }
                    let bshape = self.value(*b).shape().to_vec();
                    self.accumulate(grads, *b, Tensor::from_vec(bshape, db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, g.zip_map(bv, |gg, y| gg * y));
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, g.zip_map(av, |gg, x| gg * x));
                }
            }
            Op::Min(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let mut ga = g.clone();
                let mut gb = g.clone();
                for idx in 0..g.len() {
                    if bv.data()[idx] < av.data()[idx] {
                        ga.data_mut()[idx] = T::zero();
                    } else {
                        gb.data_mut()[idx] = T::zero();
                    }
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Scale(x, s) => {
                let s = *s;
                self.accumulate(grads, *x, g.map(|v| v * s));
            }
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = g.zip_map(xv, |gg, v| if v > T::zero() { gg } else { T::zero() });
                self.accumulate(grads, *x, d);
            }
            Op::Tanh(x) => {
                let d = g.zip_map(out, |gg, y| gg * (T::one() - y * y));
                self.accumulate(grads, *x, d);
            }
            Op::Exp(x) => {
                let d = g.zip_map(out, |gg, y| gg * y);
                self.accumulate(grads, *x, d);
            }
            Op::Softplus(x) => {
                let xv = self.value(*x);
                let d = g.zip_map(xv, |gg, v| gg * sigmoid(v));
                self.accumulate(grads, *x, d);
            }
            Op::Square(x) => {
                let xv = self.value(*x);
                let two = T::of(2.0);
                let d = g.zip_map(xv, |gg, v| gg * two * v);
                self.accumulate(grads, *x, d);
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.nodes[p.0].needs_grad {
                        let mut data = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            data.extend_from_slice(&g.data()[r * total + off..r * total + off + w]);
                        }
                        let shape = self.value(p).shape().to_vec();
                        self.accumulate(grads, p, Tensor::from_vec(shape, data));
                    }
                    off += w;
                }
            }
            Op::Slice(x, start) => {
                let xv = self.value(*x);
                let (rows, cols) = (xv.rows(), xv.cols());
                let w = g.cols();
                let mut d = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    d.data_mut()[r * cols + start..r * cols + start + w]
                        .copy_from_slice(g.row_slice(r));
                }
                let d = Tensor::from_vec(xv.shape().to_vec(), d.into_data());
                self.accumulate(grads, *x, d);
            }
            Op::SumCols(x) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut d = Vec::with_capacity(xv.len());
                for &gg in g.data() {
                    d.extend(std::iter::repeat_n(gg, c));
                }
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape().to_vec(), d));
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                let gg = g.item();
                self.accumulate(
                    grads,
                    *x,
                    Tensor::from_vec(xv.shape().to_vec(), vec![gg; xv.len()]),
                );
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let gg = g.item() / T::of(xv.len().max(1) as f64);
                self.accumulate(
                    grads,
                    *x,
                    Tensor::from_vec(xv.shape().to_vec(), vec![gg; xv.len()]),
                );
            }
            Op::MulCol(x, col) => {
                let xv = self.value(*x);
                let cv = self.value(*col);
                let c = xv.cols();
                if self.nodes[x.0].needs_grad {
                    let mut d = g.clone();
                    for (row, &s) in d.data_mut().chunks_mut(c.max(1)).zip(cv.data()) {
                        for o in row.iter_mut() {
                            *o = *o * s;
                        }
                    }
                    self.accumulate(grads, *x, d);
                }
                if self.nodes[col.0].needs_grad {
                    let data: Vec<T> = (0..xv.rows())
                        .map(|r| {
                            g.row_slice(r)
                                .iter()
                                .zip(xv.row_slice(r))
                                .map(|(&a, &b)| a * b)
                                .sum()
                        })
                        .collect();
                    self.accumulate(grads, *col, Tensor::from_vec(cv.shape().to_vec(), data));
                }
            }
            Op::ScaleCols(x, scales) => {
                let c = g.cols();
                let mut d = g.clone();
                for row in d.data_mut().chunks_mut(c) {
                    for (o, &s) in row.iter_mut().zip(scales.iter()) {
                        *o = *o * s;
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::ClampCols(x, lo, hi) => {
                let xv = self.value(*x);
                let c = g.cols();
                let mut d = g.clone();
                for (row, xrow) in d.data_mut().chunks_mut(c).zip(xv.data().chunks(c)) {
                    for (k, o) in row.iter_mut().enumerate() {
                        if xrow[k] < lo[k] || xrow[k] > hi[k] {
                            *o = T::zero();
                        }
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::SoftmaxRows(x) => {
                let c = g.cols();
                let mut d = g.clone();
                for (drow, yrow) in d.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    softmax_backward(drow, yrow);
                }
                self.accumulate(grads, *x, d);
            }
            Op::LogSoftmaxRows(x) => {
                let c = g.cols();
                let mut d = g.clone();
                for (drow, yrow) in d.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    let gs: T = drow.iter().copied().sum();
                    for (dd, &ly) in drow.iter_mut().zip(yrow) {
                        *dd = *dd - ly.exp() * gs;
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::SegMean(x, seg) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut d = Tensor::zeros(xv.rows(), c);
                for s in 0..seg.len() {
                    let n = seg.count(s);
                    if n == 0 {
                        continue;
                    }
                    let inv = T::one() / T::of(n as f64);
                    for r in seg.range(s) {
                        for (o, &gg) in d.data_mut()[r * c..(r + 1) * c]
                            .iter_mut()
                            .zip(g.row_slice(s))
                        {
                            *o = gg * inv;
                        }
                    }
                }
                let d = Tensor::from_vec(xv.shape().to_vec(), d.into_data());
                self.accumulate(grads, *x, d);
            }
            Op::SegSum(x, seg) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut d = Tensor::zeros(xv.rows(), c);
                for s in 0..seg.len() {
                    for r in seg.range(s) {
                        d.data_mut()[r * c..(r + 1) * c].copy_from_slice(g.row_slice(s));
                    }
                }
                let d = Tensor::from_vec(xv.shape().to_vec(), d.into_data());
                self.accumulate(grads, *x, d);
            }
            Op::SegBroadcast(x, seg) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut d = Tensor::zeros(seg.len(), c);
                for s in 0..seg.len() {
                    let dst = &mut d.data_mut()[s * c..(s + 1) * c];
                    for r in seg.range(s) {
                        for (o, &gg) in dst.iter_mut().zip(g.row_slice(r)) {
                            *o = *o + gg;
                        }
                    }
                }
                let d = Tensor::from_vec(xv.shape().to_vec(), d.into_data());
                self.accumulate(grads, *x, d);
            }
            Op::SegSoftmax(col, seg) => {
                let mut d = g.clone();
                for s in 0..seg.len() {
                    let r = seg.range(s);
                    softmax_backward(&mut d.data_mut()[r.clone()], &out.data()[r]);
                }
                self.accumulate(grads, *col, d);
            }
        }
    }
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for z in row.iter_mut() {
        *z = (*z - m).exp();
        s = s + *z;
    }
    for z in row.iter_mut() {
        *z = *z / s;
    }
}

/// In place: `d <- y * (d - <d, y>)`.
fn softmax_backward<T: Real>(d: &mut [T], y: &[T]) {
    let dot: T = d.iter().zip(y).map(|(&a, &b)| a * b).sum();
    for (dd, &yy) in d.iter_mut().zip(y) {
        *dd = yy * (*dd - dot);
    }
}

pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
