use super::graph::{Graph, Segments, Var};
use super::tensor::{Real, Tensor};
use super::NetError;
use rand::Rng;
use std::rc::Rc;

/// Named, ordered collection of parameter tensors owned by one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor as a trainable leaf.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a, T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t)).collect()
    }

    /// Registers every tensor as a constant.
    pub fn bind_const<'a>(&'a self, g: &mut Graph<'a, T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.constant(t)).collect()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.all_finite())
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn polyak_from(&mut self, online: &ParamSet<T>, tau: T) {
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            for (a, &b) in t.data_mut().iter_mut().zip(o.data()) {
                *a = (T::one() - tau) * *a + tau * b;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// Layer widths `[in, h1, .., out]` and one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    /// `FC(h)-ReLU`.
    pub fn fc_relu(input: usize, hidden: usize) -> Self {
        Self {
            widths: vec![input, hidden],
            activations: vec![Activation::Relu],
        }
    }

    /// `FC(h)-ReLU-FC(out)`.
    pub fn fc_relu_fc(input: usize, hidden: usize, out: usize) -> Self {
        Self {
            widths: vec![input, hidden, out],
            activations: vec![Activation::Relu, Activation::Identity],
        }
    }

    pub fn linear(input: usize, out: usize) -> Self {
        Self {
            widths: vec![input, out],
            activations: vec![Activation::Identity],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: Option<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights and bias drawn from `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn init<R: Rng>(
        ps: &mut ParamSet<f32>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f32).sqrt();
        let w: Vec<f32> = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let w = ps.add(format!("{name}.w"), Tensor::matrix(in_dim, out_dim, w));
        let b = bias.then(|| {
            let b: Vec<f32> = (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
            ps.add(format!("{name}.b"), Tensor::matrix(1, out_dim, b))
        });
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, p: &[Var], x: Var) -> Var {
        let h = g.matmul(x, p[self.w]);
        match self.b {
            Some(b) => g.add_bias(h, p[b]),
            None => h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn init<R: Rng>(ps: &mut ParamSet<f32>, name: &str, spec: MlpSpec, rng: &mut R) -> Self {
        assert_eq!(spec.widths.len(), spec.activations.len() + 1);
        let layers = spec
            .widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::init(ps, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Self { spec, layers }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, p: &[Var], x: Var) -> Var {
        let mut h = x;
        for (layer, act) in self.layers.iter().zip(&self.spec.activations) {
            h = layer.forward(g, p, h);
            if *act == Activation::Relu {
                h = g.relu(h);
            }
        }
        h
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }
}

/// Evaluates an MLP on a batch `[n, in]` without recording gradients.
pub fn mlp_forward<T: Real>(
    mlp: &Mlp,
    params: &ParamSet<T>,
    input: &Tensor<T>,
) -> Result<Tensor<T>, NetError> {
    if input.cols() != mlp.spec.input_dim() {
        return Err(NetError::Shape(format!(
            "input has {} columns, network expects {}",
            input.cols(),
            mlp.spec.input_dim()
        )));
    }
    for l in &mlp.layers {
        let w = params.get(l.w);
        if w.rows() != l.in_dim || w.cols() != l.out_dim {
            return Err(NetError::Shape(format!(
                "weight {} is {}x{}, layer expects {}x{}",
                params.names()[l.w],
                w.rows(),
                w.cols(),
                l.in_dim,
                l.out_dim
            )));
        }
    }
    let mut g = Graph::new();
    let p = params.bind_const(&mut g);
    let x = g.input(input.clone());
    let y = mlp.forward(&mut g, &p, x);
    Ok(g.value(y).clone())
}

/// Single-query scaled dot-product attention over a variable-size set of
/// rows. Rows are embedded per-row, the query is the mean of the projected
/// rows, and the output is the attention-weighted sum of values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionEncoder {
    pub embed: Mlp,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub key_dim: usize,
}

impl AttentionEncoder {
    pub fn init<R: Rng>(
        ps: &mut ParamSet<f32>,
        name: &str,
        row_dim: usize,
        hidden: usize,
        key_dim: usize,
        rng: &mut R,
    ) -> Self {
        let embed = Mlp::init(
            ps,
            &format!("{name}.embed"),
            MlpSpec::fc_relu_fc(row_dim, hidden, key_dim),
            rng,
        );
        let wq = Linear::init(ps, &format!("{name}.q"), key_dim, key_dim, false, rng);
        let wk = Linear::init(ps, &format!("{name}.k"), key_dim, key_dim, false, rng);
        let wv = Linear::init(ps, &format!("{name}.v"), key_dim, key_dim, false, rng);
        Self {
            embed,
            wq,
            wk,
            wv,
            key_dim,
        }
    }

    pub fn row_dim(&self) -> usize {
        self.embed.spec.input_dim()
    }

    /// `rows` is `[R, row_dim]` stacked over `seg`; returns `[S, key_dim]`.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        p: &[Var],
        rows: Var,
        seg: &Rc<Segments>,
    ) -> Var {
        if seg.total_rows() == 0 {
            return g.input(Tensor::zeros(seg.len(), self.key_dim));
        }
        let h = self.embed.forward(g, p, rows);
        let q_rows = self.wq.forward(g, p, h);
        let k = self.wk.forward(g, p, h);
        let v = self.wv.forward(g, p, h);
        let q = g.seg_mean(q_rows, seg);
        let qb = g.seg_broadcast(q, seg);
        let qk = g.mul(qb, k);
        let scores = g.sum_cols(qk);
        let scores = g.scale(scores, T::of(1.0 / (self.key_dim as f64).sqrt()));
        let attn = g.seg_softmax(scores, seg);
        let weighted = g.mul_col(v, attn);
        g.seg_sum(weighted, seg)
    }
}

/// Two independent attention encoders, one per message stream; their
/// outputs are concatenated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEncoder {
    pub current: AttentionEncoder,
    pub next: AttentionEncoder,
}

impl MessageEncoder {
    pub fn init<R: Rng>(
        ps: &mut ParamSet<f32>,
        name: &str,
        dims: (usize, usize),
        hidden: usize,
        key_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            current: AttentionEncoder::init(ps, &format!("{name}.c"), dims.0, hidden, key_dim, rng),
            next: AttentionEncoder::init(ps, &format!("{name}.n"), dims.1, hidden, key_dim, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.current.key_dim + self.next.key_dim
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, p: &[Var], msgs: &MessageVars) -> Var {
        let c = self.current.forward(g, p, msgs.current, &msgs.seg);
        let n = self.next.forward(g, p, msgs.next, &msgs.seg);
        g.concat(&[c, n])
    }
}

/// Graph handles for a batch of message sets.
#[derive(Debug, Clone)]
pub struct MessageVars {
    pub current: Var,
    pub next: Var,
    pub seg: Rc<Segments>,
}

/// Encodes two message streams for a single receiver: `rows_current` and
/// `rows_next` are row-major with `K` rows each. `K = 0` gives zeros.
pub fn attention_encode(
    encoder: &MessageEncoder,
    params: &ParamSet<f32>,
    rows_current: &[f32],
    rows_next: &[f32],
    k: usize,
) -> Vec<f32> {
    let mut g = Graph::new();
    let p = params.bind_const(&mut g);
    let current = g.input(Tensor::matrix(
        k,
        encoder.current.row_dim(),
        rows_current.to_vec(),
    ));
    let next = g.input(Tensor::matrix(
        k,
        encoder.next.row_dim(),
        rows_next.to_vec(),
    ));
    let mv = MessageVars {
        current,
        next,
        seg: Rc::new(Segments::from_counts([k])),
    };
    let out = encoder.forward(&mut g, &p, &mv);
    g.value(out).data().to_vec()
}
