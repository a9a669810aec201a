use super::{PatienceMessage, StateMessage};
use crate::env::Observation;
use crate::geom2d::{Action, ActionLimits};
use crate::nets::network::{LOG_STD_MAX, LOG_STD_MIN};
use crate::nets::{sample_continuous, MessageBatch, PolicyBundle, SquashMap, Tensor};

/// Batched network queries made by the protocol. Actor heads are
/// `[mean_v, mean_w, log_std_v, log_std_w]` of the residual around the DWA
/// suggestion.
pub trait Models {
    fn residual_scale(&self) -> [f64; 2];
    /// Whether patience message rows keep the repeated patience entry.
    fn duplicate_patience(&self) -> bool {
        true
    }
    fn solitary_heads(&self, obs: &[&Observation]) -> Vec<[f64; 4]>;
    /// Solitary action value `Q_mu(o, a)`.
    fn solitary_q(&self, obs: &[&Observation], actions: &[Action]) -> Vec<f64>;
    fn filter_logits(&self, obs: &[&Observation], msgs: &[Vec<PatienceMessage>]) -> Vec<[f64; 2]>;
    fn nav_heads(&self, obs: &[&Observation], msgs: &[Vec<StateMessage>]) -> Vec<[f64; 4]>;
}

/// Turns an actor head into an action around the observation's DWA
/// suggestion. `noise = None` gives the deterministic action. Returns the
/// action and its log-density.
///
/// A zero residual reproduces the DWA suggestion bit for bit.
pub fn head_action(
    head: [f64; 4],
    obs: &Observation,
    scale: [f64; 2],
    noise: Option<[f64; 2]>,
) -> (Action, f64) {
    let map = SquashMap::residual(obs.dwa_normalized(), scale);
    let (_, logp) = sample_continuous([head[0], head[1]], [head[2], head[3]], &map, noise);
    let eps = noise.unwrap_or([0.0; 2]);
    let lim = ActionLimits::for_map(obs.map_size);
    let r =
        |d: usize| (head[d] + head[d + 2].clamp(LOG_STD_MIN, LOG_STD_MAX).exp() * eps[d]).tanh();
    let base = obs.dwa_suggestion;
    let a = Action::new(
        (base.v + scale[0] * lim.v_max * r(0)).clamp(0.0, lim.v_max),
        (base.w + scale[1] * lim.w_max * r(1)).clamp(-lim.w_max, lim.w_max),
    );
    (a, logp)
}

/// Action in normalized units `(v / v_max, w / w_max)`.
pub fn normalized_action(a: Action, map_size: f64) -> [f32; 2] {
    let lim = ActionLimits::for_map(map_size);
    [(a.v / lim.v_max) as f32, (a.w / lim.w_max) as f32]
}

fn obs_tensor(obs: &[&Observation], dim: usize) -> Tensor<f32> {
    let mut data = Vec::with_capacity(obs.len() * dim);
    for o in obs {
        o.write_features(&mut data);
    }
    Tensor::matrix(obs.len(), dim, data)
}

/// Network rows of one patience message. Offsets are divided by the
/// communication range.
pub fn patience_rows(
    m: &PatienceMessage,
    comm_range: f64,
    duplicate: bool,
    current: &mut Vec<f32>,
    next: &mut Vec<f32>,
) {
    current.push((m.delta_now[0] / comm_range) as f32);
    current.push((m.delta_now[1] / comm_range) as f32);
    current.push(m.rel_patience as f32);
    next.push((m.delta_next[0] / comm_range) as f32);
    next.push((m.delta_next[1] / comm_range) as f32);
    if duplicate {
        next.push(m.rel_patience_2 as f32);
    }
}

pub fn state_rows(m: &StateMessage, comm_range: f64, current: &mut Vec<f32>, next: &mut Vec<f32>) {
    current.push((m.gated_delta_now[0] / comm_range) as f32);
    current.push((m.gated_delta_now[1] / comm_range) as f32);
    next.push((m.gated_delta_next[0] / comm_range) as f32);
    next.push((m.gated_delta_next[1] / comm_range) as f32);
}

fn comm_range(o: &Observation) -> f64 {
    0.15 * o.map_size
}

fn rows4(t: &Tensor<f32>) -> Vec<[f64; 4]> {
    (0..t.rows())
        .map(|r| [0, 1, 2, 3].map(|c| t.get(r, c) as f64))
        .collect()
}

impl Models for PolicyBundle {
    fn residual_scale(&self) -> [f64; 2] {
        self.config.residual_scale
    }

    fn duplicate_patience(&self) -> bool {
        self.config.duplicate_patience
    }

    fn solitary_heads(&self, obs: &[&Observation]) -> Vec<[f64; 4]> {
        if obs.is_empty() {
            return Vec::new();
        }
        rows4(&self.solitary_head(&obs_tensor(obs, self.config.obs_dim)))
    }

    fn solitary_q(&self, obs: &[&Observation], actions: &[Action]) -> Vec<f64> {
        if obs.is_empty() {
            return Vec::new();
        }
        let a: Vec<f32> = obs
            .iter()
            .zip(actions)
            .flat_map(|(o, a)| normalized_action(*a, o.map_size))
            .collect();
        let q = PolicyBundle::solitary_q(
            self,
            &obs_tensor(obs, self.config.obs_dim),
            &Tensor::matrix(obs.len(), 2, a),
        );
        q.into_iter().map(f64::from).collect()
    }

    fn filter_logits(&self, obs: &[&Observation], msgs: &[Vec<PatienceMessage>]) -> Vec<[f64; 2]> {
        if obs.is_empty() {
            return Vec::new();
        }
        let mut b = MessageBatch::default();
        for (o, ms) in obs.iter().zip(msgs) {
            for m in ms {
                patience_rows(
                    m,
                    comm_range(o),
                    self.config.duplicate_patience,
                    &mut b.current,
                    &mut b.next,
                );
            }
            b.counts.push(ms.len());
        }
        let l = self.cf2_logits(&obs_tensor(obs, self.config.obs_dim), &b);
        (0..l.rows())
            .map(|r| [l.get(r, 0) as f64, l.get(r, 1) as f64])
            .collect()
    }

    fn nav_heads(&self, obs: &[&Observation], msgs: &[Vec<StateMessage>]) -> Vec<[f64; 4]> {
        if obs.is_empty() {
            return Vec::new();
        }
        let mut b = MessageBatch::default();
        for (o, ms) in obs.iter().zip(msgs) {
            for m in ms {
                state_rows(m, comm_range(o), &mut b.current, &mut b.next);
            }
            b.counts.push(ms.len());
        }
        rows4(&self.nav_head(&obs_tensor(obs, self.config.obs_dim), &b))
    }
}
