use super::graph::{Graph, Segments, Var};
use super::layers::{Linear, MessageEncoder, MessageVars, Mlp, MlpSpec, ParamSet};
use super::tensor::{Real, Tensor};
use rand::Rng;
use std::rc::Rc;

/// Shape of one network: observation trunk, optional action input (critics),
/// optional message encoder, body and a linear head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetSpec {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub msg_dims: Option<(usize, usize)>,
    pub hidden: usize,
    pub key_dim: usize,
    pub out_dim: usize,
}

/// `head(MLP2([MLP1([obs; action]); enc_c(M_c); enc_n(M_n)]))`
///
/// MLP1 and MLP2 are `FC(hidden)-ReLU`; the per-row message embeddings are
/// `FC(hidden)-ReLU-FC(key_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub spec: NetSpec,
    pub params: ParamSet<f32>,
    trunk: Mlp,
    encoder: Option<MessageEncoder>,
    body: Mlp,
    head: Linear,
}

/// A batch of message sets in host memory: rows of every receiver stacked,
/// with `counts[b]` rows for batch entry `b`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MessageBatch {
    pub current: Vec<f32>,
    pub next: Vec<f32>,
    pub counts: Vec<usize>,
}

impl MessageBatch {
    pub fn rows(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn push_set(&mut self, current: &[f32], next: &[f32], count: usize) {
        self.current.extend_from_slice(current);
        self.next.extend_from_slice(next);
        self.counts.push(count);
    }

    pub fn bind<'a, T: Real>(&self, g: &mut Graph<'a, T>, dims: (usize, usize)) -> MessageVars {
        let r = self.rows();
        debug_assert_eq!(self.current.len(), r * dims.0);
        debug_assert_eq!(self.next.len(), r * dims.1);
        let current = g.input(Tensor::matrix(
            r,
            dims.0,
            self.current.iter().map(|&x| T::of(x as f64)).collect(),
        ));
        let next = g.input(Tensor::matrix(
            r,
            dims.1,
            self.next.iter().map(|&x| T::of(x as f64)).collect(),
        ));
        MessageVars {
            current,
            next,
            seg: Rc::new(Segments::from_counts(self.counts.iter().copied())),
        }
    }
}

impl Net {
    pub fn new<R: Rng>(spec: NetSpec, name: &str, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let trunk = Mlp::init(
            &mut params,
            &format!("{name}.mlp1"),
            MlpSpec::fc_relu(spec.obs_dim + spec.action_dim, spec.hidden),
            rng,
        );
        let encoder = spec.msg_dims.map(|dims| {
            MessageEncoder::init(
                &mut params,
                &format!("{name}.enc"),
                dims,
                spec.hidden,
                spec.key_dim,
                rng,
            )
        });
        let enc_out = encoder.as_ref().map_or(0, |e| e.output_dim());
        let body = Mlp::init(
            &mut params,
            &format!("{name}.mlp2"),
            MlpSpec::fc_relu(spec.hidden + enc_out, spec.hidden),
            rng,
        );
        let head = Linear::init(
            &mut params,
            &format!("{name}.head"),
            spec.hidden,
            spec.out_dim,
            true,
            rng,
        );
        Self {
            spec,
            params,
            trunk,
            encoder,
            body,
            head,
        }
    }

    pub fn head(&self) -> Linear {
        self.head
    }

    /// Sets head output columns `cols` to the constant `bias` with zero
    /// weights.
    pub fn set_head_constant(&mut self, cols: std::ops::Range<usize>, bias: f32) {
        let out = self.spec.out_dim;
        let w = self.params.tensors_mut()[self.head.w].data_mut();
        for r in 0..self.spec.hidden {
            for c in cols.clone() {
                w[r * out + c] = 0.0;
            }
        }
        if let Some(b) = self.head.b {
            let bd = self.params.tensors_mut()[b].data_mut();
            for c in cols {
                bd[c] = bias;
            }
        }
    }

    /// Records a forward pass. `p` comes from binding `self.params` (or a
    /// cast copy) on `g`.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        p: &[Var],
        obs: Var,
        action: Option<Var>,
        msgs: Option<&MessageVars>,
    ) -> Var {
        let x = match action {
            Some(a) => g.concat(&[obs, a]),
            None => obs,
        };
        let h = self.trunk.forward(g, p, x);
        let h = match (&self.encoder, msgs) {
            (Some(enc), Some(m)) => {
                let e = enc.forward(g, p, m);
                g.concat(&[h, e])
            }
            (Some(enc), None) => {
                let rows = g.value(h).rows();
                let z = g.input(Tensor::zeros(rows, enc.output_dim()));
                g.concat(&[h, z])
            }
            (None, _) => h,
        };
        let h = self.body.forward(g, p, h);
        self.head.forward(g, p, h)
    }

    /// Forward pass without gradients on host data.
    pub fn eval(
        &self,
        obs: &Tensor<f32>,
        action: Option<&Tensor<f32>>,
        msgs: Option<&MessageBatch>,
    ) -> Tensor<f32> {
        let mut g = Graph::new();
        let p = self.params.bind_const(&mut g);
        let o = g.input(obs.clone());
        let a = action.map(|a| g.input(a.clone()));
        let m = match (msgs, self.spec.msg_dims) {
            (Some(m), Some(d)) => Some(m.bind(&mut g, d)),
            _ => None,
        };
        let y = self.forward(&mut g, &p, o, a, m.as_ref());
        g.value(y).clone()
    }
}

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Affine squash of a Gaussian pre-activation `u`:
/// `a = clamp(center + half_range * tanh(u), lo, hi)` per dimension, in
/// normalized action units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashMap {
    pub center: [f64; 2],
    pub half_range: [f64; 2],
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl SquashMap {
    /// Maps `tanh` onto the full normalized box `[0,1] x [-1,1]`.
    pub fn full_range() -> Self {
        Self {
            center: [0.5, 0.0],
            half_range: [0.5, 1.0],
            lo: [0.0, -1.0],
            hi: [1.0, 1.0],
        }
    }

    /// Residual around a base action with the given half-ranges, clamped to
    /// the normalized box.
    pub fn residual(base: [f64; 2], scale: [f64; 2]) -> Self {
        Self {
            center: base,
            half_range: scale,
            lo: [0.0, -1.0],
            hi: [1.0, 1.0],
        }
    }
}

/// Draws (or, with `noise = None`, takes the mean of) a tanh-squashed
/// Gaussian. Returns the mapped action and the log-density of the unclamped
/// mapped value, including the change-of-variables correction.
pub fn sample_continuous(
    mean: [f64; 2],
    log_std: [f64; 2],
    map: &SquashMap,
    noise: Option<[f64; 2]>,
) -> ([f64; 2], f64) {
    let eps = noise.unwrap_or([0.0, 0.0]);
    let mut out = [0.0; 2];
    let mut logp = 0.0;
    for d in 0..2 {
        let ls = log_std[d].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = mean[d] + ls.exp() * eps[d];
        let t = u.tanh();
        out[d] = (map.center[d] + map.half_range[d] * t).clamp(map.lo[d], map.hi[d]);
        logp += -0.5 * eps[d] * eps[d] - ls - 0.5 * (2.0 * std::f64::consts::PI).ln();
        logp -= map.half_range[d].ln() + log1m_tanh2(u);
    }
    (out, logp)
}

/// `ln(1 - tanh(u)^2)` without cancellation.
pub fn log1m_tanh2(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - super::graph::softplus(-2.0 * u))
}

/// Categorical draw over two logits; index 1 means "move" (`f = 1`).
/// Deterministic mode takes the argmax with ties going to 1.
pub fn sample_binary<R: Rng>(logits: [f64; 2], rng: Option<&mut R>) -> (u8, f64) {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    let logp = [logits[0] - lse, logits[1] - lse];
    let f = match rng {
        None => u8::from(logits[1] >= logits[0]),
        Some(r) => {
            let p1 = logp[1].exp();
            u8::from(r.gen::<f64>() < p1)
        }
    };
    (f, logp[f as usize])
}

/// Differentiable counterpart of [`sample_continuous`] for a batch.
///
/// `head` is `[B, 4]` (means then raw log-stds), `base` and `eps` are
/// `[B, 2]`. Returns the action `[B, 2]` and log-probability `[B, 1]`.
pub fn squashed_gaussian<T: Real>(
    g: &mut Graph<'_, T>,
    head: Var,
    base: Var,
    eps: &Tensor<T>,
    half_range: [f64; 2],
) -> (Var, Var) {
    let b = g.value(head).rows();
    let mean = g.slice_cols(head, 0, 2);
    let ls_raw = g.slice_cols(head, 2, 4);
    let ls = g.clamp_cols(ls_raw, &[T::of(LOG_STD_MIN); 2], &[T::of(LOG_STD_MAX); 2]);
    let std = g.exp(ls);
    let e = g.input(eps.clone());
    let noise = g.mul(std, e);
    let u = g.add(mean, noise);
    let t = g.tanh(u);
    let res = g.scale_cols(t, &[T::of(half_range[0]), T::of(half_range[1])]);
    let pre = g.add(base, res);
    let action = g.clamp_cols(pre, &[T::zero(), -T::one()], &[T::one(), T::one()]);

    // log-prob: constant part + (-sum ls) + (-sum ln(1 - tanh^2 u))
    let c0 = -(2.0 * std::f64::consts::PI).ln() - half_range[0].ln() - half_range[1].ln();
    let consts: Vec<T> = (0..b)
        .map(|r| {
            let e0 = eps.get(r, 0).as_f64();
            let e1 = eps.get(r, 1).as_f64();
            T::of(c0 - 0.5 * (e0 * e0 + e1 * e1))
        })
        .collect();
    let consts = g.input(Tensor::matrix(b, 1, consts));
    let sum_ls = g.sum_cols(ls);
    let m2u = g.scale(u, T::of(-2.0));
    let sp = g.softplus(m2u);
    let usp = g.add(u, sp);
    let l1 = g.scale(usp, T::of(-2.0));
    let l1 = g.add_scalar(l1, T::of(2.0 * std::f64::consts::LN_2));
    let sum_l1 = g.sum_cols(l1);
    let neg = g.add(sum_ls, sum_l1);
    let logp = g.sub(consts, neg);
    (action, logp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> NetSpec {
        NetSpec {
            obs_dim: 5,
            action_dim: 0,
            msg_dims: Some((3, 2)),
            hidden: 16,
            key_dim: 4,
            out_dim: 4,
        }
    }

    #[test]
    fn deterministic_sample_is_squashed_mean() {
        let map = SquashMap::full_range();
        let (a, _) = sample_continuous([0.3, -0.7], [-1e9, -1e9], &map, Some([1.0, 1.0]));
        assert!((a[0] - (0.5 + 0.5 * 0.3f64.tanh())).abs() < 1e-2);
        let (a, _) = sample_continuous([0.3, -0.7], [0.0, 0.0], &map, None);
        assert_eq!(a[0], 0.5 + 0.5 * 0.3f64.tanh());
        assert_eq!(a[1], (-0.7f64).tanh());
    }

    #[test]
    fn binary_tie_moves() {
        assert_eq!(sample_binary::<ChaCha8Rng>([0.0, 0.0], None).0, 1);
        assert_eq!(sample_binary::<ChaCha8Rng>([10.0, -10.0], None).0, 0);
        let (f, lp) = sample_binary::<ChaCha8Rng>([10.0, -10.0], None);
        assert_eq!(f, 0);
        assert!(lp.exp() > 0.999_999);
    }

    #[test]
    fn graph_and_host_sampling_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = Tensor::<f64>::matrix(2, 4, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let base = Tensor::<f64>::matrix(2, 2, vec![0.4, 0.1, 0.9, -0.5]);
        let eps = Tensor::<f64>::matrix(2, 2, (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let hr = [0.5, 0.25];
        let mut g = Graph::<f64>::new();
        let h = g.input(head.clone());
        let b = g.input(base.clone());
        let (a, lp) = squashed_gaussian(&mut g, h, b, &eps, hr);
        for r in 0..2 {
            let map = SquashMap::residual([base.get(r, 0), base.get(r, 1)], hr);
            let (ha, hl) = sample_continuous(
                [head.get(r, 0), head.get(r, 1)],
                [head.get(r, 2), head.get(r, 3)],
                &map,
                Some([eps.get(r, 0), eps.get(r, 1)]),
            );
            assert!((g.value(a).get(r, 0) - ha[0]).abs() < 1e-12);
            assert!((g.value(a).get(r, 1) - ha[1]).abs() < 1e-12);
            assert!((g.value(lp).get(r, 0) - hl).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_messages_equal_empty_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Net::new(spec(), "t", &mut rng);
        let obs = Tensor::matrix(2, 5, (0..10).map(|i| i as f32 * 0.1).collect());
        let empty = MessageBatch {
            counts: vec![0, 0],
            ..Default::default()
        };
        let a = net.eval(&obs, None, None);
        let b = net.eval(&obs, None, Some(&empty));
        assert_eq!(a, b);
    }

    #[test]
    fn zeroed_head_columns_output_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Net::new(spec(), "t", &mut rng);
        net.set_head_constant(0..2, 0.0);
        net.set_head_constant(2..4, -1.0);
        let obs = Tensor::matrix(1, 5, vec![0.3, -0.2, 0.9, 0.0, 1.0]);
        let y = net.eval(&obs, None, None);
        assert_eq!(y.data(), &[0.0, 0.0, -1.0, -1.0]);
    }
}
