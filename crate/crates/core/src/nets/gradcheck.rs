//! Central-difference checks of the tape's analytic gradients.
//!
//! Every fixture builds a small graph in `f64` from random inputs, reduces
//! its output to `sum(out * W)` with a random constant `W`, and compares the
//! gradient of every input against `(L(x + h) - L(x - h)) / 2h`.

use super::graph::{Graph, Segments, Var};
use super::layers::{AttentionEncoder, ParamSet};
use super::tensor::Tensor;
use rand::Rng;
use std::rc::Rc;

const H: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

type Build = Box<dyn Fn(&mut Graph<'_, f64>, &[Var]) -> Var>;

/// One random instance of an operator.
pub struct Fixture {
    pub op: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    weights: Option<Tensor<f64>>,
    build: Build,
    /// Graph used for the numeric side when it differs from `build`.
    reference: Option<Build>,
}

/// Names of all checked operators, in fixture order.
pub const OPS: [&str; 31] = [
    "matmul",
    "add_bias",
    "affine",
    "add",
    "sub",
    "mul",
    "min",
    "scale",
    "add_scalar",
    "relu",
    "tanh",
    "exp",
    "softplus",
    "square",
    "concat",
    "slice_cols",
    "sum_cols",
    "sum",
    "mean",
    "mul_col",
    "scale_cols",
    "clamp_cols",
    "softmax_rows",
    "log_softmax_rows",
    "seg_mean",
    "seg_sum",
    "seg_broadcast",
    "seg_softmax",
    "detach",
    "mlp",
    "attention",
];

fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

/// Uniform values at least `gap` away from every point in `kinks`.
fn away_from<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    kinks: &[f64],
    gap: f64,
) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| loop {
            let x: f64 = rng.gen_range(-1.0..1.0);
            if kinks.iter().all(|k| (x - k).abs() > gap) {
                break x;
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data)
}

fn segments<R: Rng>(rng: &mut R) -> Rc<Segments> {
    loop {
        let counts: Vec<usize> = (0..rng.gen_range(1..=4))
            .map(|_| rng.gen_range(0..=4))
            .collect();
        if counts.iter().sum::<usize>() > 0 {
            return Rc::new(Segments::from_counts(counts));
        }
    }
}

fn unary(op: &'static str, x: Tensor<f64>, f: fn(&mut Graph<'_, f64>, Var) -> Var) -> Fixture {
    Fixture {
        op,
        inputs: vec![x],
        weights: None,
        build: Box::new(move |g, v| f(g, v[0])),
        reference: None,
    }
}

fn binary(
    op: &'static str,
    a: Tensor<f64>,
    b: Tensor<f64>,
    f: fn(&mut Graph<'_, f64>, Var, Var) -> Var,
) -> Fixture {
    Fixture {
        op,
        inputs: vec![a, b],
        weights: None,
        build: Box::new(move |g, v| f(g, v[0], v[1])),
        reference: None,
    }
}

impl Fixture {
    /// A random instance of operator `op` (one of [`OPS`]).
    pub fn random<R: Rng>(op: &str, rng: &mut R) -> Fixture {
        let r = rng.gen_range(1..=4);
        let c = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=4);
        let op = OPS
            .iter()
            .copied()
            .find(|&o| o == op)
            .unwrap_or_else(|| panic!("unknown op {op}"));
        match op {
            "matmul" => binary(op, uniform(rng, r, k), uniform(rng, k, c), |g, a, b| {
                g.matmul(a, b)
            }),
            "add_bias" => binary(op, uniform(rng, r, c), uniform(rng, 1, c), |g, a, b| {
                g.add_bias(a, b)
            }),
            "affine" => Fixture {
                op,
                inputs: vec![uniform(rng, r, k), uniform(rng, k, c), uniform(rng, 1, c)],
                weights: None,
                build: Box::new(|g, v| g.affine(v[0], v[1], v[2])),
                reference: None,
            },
            "add" => binary(op, uniform(rng, r, c), uniform(rng, r, c), |g, a, b| {
                g.add(a, b)
            }),
            "sub" => binary(op, uniform(rng, r, c), uniform(rng, r, c), |g, a, b| {
                g.sub(a, b)
            }),
            "mul" => binary(op, uniform(rng, r, c), uniform(rng, r, c), |g, a, b| {
                g.mul(a, b)
            }),
            "min" => {
                let a = uniform(rng, r, c);
                // keep the pair away from ties, where min has no derivative
                let shift = away_from(rng, r, c, &[0.0], 0.05);
                let b = a.zip_map(&shift, |x, s| x + s);
                binary(op, a, b, |g, a, b| g.min(a, b))
            }
            "scale" => unary(op, uniform(rng, r, c), |g, x| g.scale(x, -1.7)),
            "add_scalar" => unary(op, uniform(rng, r, c), |g, x| g.add_scalar(x, 0.3)),
            "relu" => unary(op, away_from(rng, r, c, &[0.0], 0.05), |g, x| g.relu(x)),
            "tanh" => unary(op, uniform(rng, r, c), |g, x| g.tanh(x)),
            "exp" => unary(op, uniform(rng, r, c), |g, x| g.exp(x)),
            "softplus" => unary(op, uniform(rng, r, c).map(|x| 4.0 * x), |g, x| {
                g.softplus(x)
            }),
            "square" => unary(op, uniform(rng, r, c), |g, x| g.square(x)),
            "concat" => Fixture {
                op,
                inputs: vec![uniform(rng, r, c), uniform(rng, r, k), uniform(rng, r, 1)],
                weights: None,
                build: Box::new(|g, v| g.concat(v)),
                reference: None,
            },
            "slice_cols" => {
                let cols = c + 2;
                unary(op, uniform(rng, r, cols), |g, x| {
                    let w = g.value(x).cols();
                    g.slice_cols(x, 1, w - 1)
                })
            }
            "sum_cols" => unary(op, uniform(rng, r, c), |g, x| g.sum_cols(x)),
            "sum" => unary(op, uniform(rng, r, c), |g, x| g.sum(x)),
            "mean" => unary(op, uniform(rng, r, c), |g, x| g.mean(x)),
            "mul_col" => binary(op, uniform(rng, r, c), uniform(rng, r, 1), |g, a, b| {
                g.mul_col(a, b)
            }),
            "scale_cols" => {
                let s: Vec<f64> = (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect();
                Fixture {
                    op,
                    inputs: vec![uniform(rng, r, c)],
                    weights: None,
                    build: Box::new(move |g, v| g.scale_cols(v[0], &s)),
                    reference: None,
                }
            }
            "clamp_cols" => {
                let lo = vec![-0.5; c];
                let hi = vec![0.5; c];
                Fixture {
                    op,
                    inputs: vec![away_from(rng, r, c, &[-0.5, 0.5], 0.05)],
                    weights: None,
                    build: Box::new(move |g, v| g.clamp_cols(v[0], &lo, &hi)),
                    reference: None,
                }
            }
            "softmax_rows" => unary(op, uniform(rng, r, c), |g, x| g.softmax_rows(x)),
            "log_softmax_rows" => unary(op, uniform(rng, r, c), |g, x| g.log_softmax_rows(x)),
            "seg_mean" | "seg_sum" | "seg_softmax" => {
                let seg = segments(rng);
                let cols = if op == "seg_softmax" { 1 } else { c };
                let x = uniform(rng, seg.total_rows(), cols);
                Fixture {
                    op,
                    inputs: vec![x],
                    weights: None,
                    build: Box::new(move |g, v| match op {
                        "seg_mean" => g.seg_mean(v[0], &seg),
                        "seg_sum" => g.seg_sum(v[0], &seg),
                        _ => g.seg_softmax(v[0], &seg),
                    }),
                    reference: None,
                }
            }
            "seg_broadcast" => {
                let seg = segments(rng);
                let x = uniform(rng, seg.len(), c);
                Fixture {
                    op,
                    inputs: vec![x],
                    weights: None,
                    build: Box::new(move |g, v| g.seg_broadcast(v[0], &seg)),
                    reference: None,
                }
            }
            // x * stop_gradient(x): the gradient flows through one factor
            // only, so the numeric side holds the detached copy fixed
            "detach" => {
                let x = uniform(rng, r, c);
                let frozen = x.clone();
                Fixture {
                    op,
                    inputs: vec![x],
                    weights: None,
                    build: Box::new(|g, v| {
                        let d = g.detach(v[0]);
                        g.mul(v[0], d)
                    }),
                    reference: Some(Box::new(move |g, v| {
                        let d = g.input(frozen.clone());
                        g.mul(v[0], d)
                    })),
                }
            }
            "mlp" | "attention" => Self::network(op, rng),
            _ => unreachable!(),
        }
    }

    /// Composite fixtures over the network layers, differentiated with
    /// respect to both inputs and parameters.
    fn network<R: Rng>(op: &'static str, rng: &mut R) -> Fixture {
        let row_dim = rng.gen_range(1..=3);
        let mut ps = ParamSet::<f32>::new();
        let enc = AttentionEncoder::init(&mut ps, "e", row_dim, 5, 3, rng);
        // replace the small initial weights so relu kinks are rarely near
        let mut inputs: Vec<Tensor<f64>> = ps
            .cast::<f64>()
            .tensors()
            .iter()
            .map(|t| {
                Tensor::from_vec(
                    t.shape().to_vec(),
                    (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let n_params = inputs.len();
        if op == "mlp" {
            let rows = rng.gen_range(1..=4);
            inputs.push(uniform(rng, rows, row_dim));
            return Fixture {
                op,
                inputs,
                weights: None,
                build: Box::new(move |g, v| enc.embed.forward(g, &v[..n_params], v[n_params])),
                reference: None,
            };
        }
        let seg = segments(rng);
        inputs.push(uniform(rng, seg.total_rows(), row_dim));
        Fixture {
            op,
            inputs,
            weights: None,
            build: Box::new(move |g, v| enc.forward(g, &v[..n_params], v[n_params], &seg)),
            reference: None,
        }
    }

    fn loss(&self, inputs: &[Tensor<f64>], weights: &Tensor<f64>) -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param_owned(t.clone())).collect();
        let out = (self.reference.as_ref().unwrap_or(&self.build))(&mut g, &vars);
        let w = g.input(weights.clone());
        let prod = g.mul(out, w);
        let l = g.sum(prod);
        g.value(l).item()
    }

    /// Largest floored relative error over all input entries:
    /// `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
    pub fn max_relative_error<R: Rng>(&mut self, rng: &mut R) -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = self
            .inputs
            .iter()
            .map(|t| g.param_owned(t.clone()))
            .collect();
        let out = (self.build)(&mut g, &vars);
        let shape = g.value(out).clone();
        if self.weights.is_none() {
            let w = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            self.weights = Some(Tensor::from_vec(shape.shape().to_vec(), w));
        }
        let weights = self.weights.clone().unwrap();
        let w = g.input(weights.clone());
        let prod = g.mul(out, w);
        let l = g.sum(prod);
        let grads = g.backward(l);

        let mut worst = 0.0f64;
        let mut probe = self.inputs.clone();
        for (n, v) in vars.iter().enumerate() {
            let analytic = grads
                .wrt(*v)
                .cloned()
                .unwrap_or_else(|| self.inputs[n].map(|_| 0.0));
            for e in 0..self.inputs[n].len() {
                let x0 = self.inputs[n].data()[e];
                probe[n].data_mut()[e] = x0 + H;
                let up = self.loss(&probe, &weights);
                probe[n].data_mut()[e] = x0 - H;
                let down = self.loss(&probe, &weights);
                probe[n].data_mut()[e] = x0;
                let numeric = (up - down) / (2.0 * H);
                let a = analytic.data()[e];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
                worst = worst.max(err);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_op_passes_a_few_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for op in OPS {
            for _ in 0..5 {
                let e = Fixture::random(op, &mut rng).max_relative_error(&mut rng);
                assert!(e < 1e-4, "{op}: {e}");
            }
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        // relu evaluated right on its kink has a one-sided derivative
        let mut f = unary("relu", Tensor::matrix(1, 1, vec![0.0]), |g, x| g.relu(x));
        f.weights = Some(Tensor::matrix(1, 1, vec![1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(f.max_relative_error(&mut rng) > 0.1);
    }
}
