//! Soft actor-critic updates: a continuous variant for the residual actors
//! and an expectation-form discrete variant for the binary filter.

use super::transition::{StoredAction, Transition};
use super::LearnError;
use crate::env::OBS_DIM;
use crate::nets::network::squashed_gaussian;
use crate::nets::optim::ScalarAdam;
use crate::nets::{Adam, Graph, MessageBatch, Net, ParamSet, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacConfig {
    pub gamma: f64,
    pub init_temperature: f64,
    pub tau: f64,
    pub target_interval: u64,
    pub lr: f64,
    pub batch_size: usize,
    /// Gradient steps per training phase.
    pub iterations: u64,
    /// Leading gradient steps of each stream that update only the critics.
    pub critic_warmup: u64,
    pub buffer_capacity: usize,
    pub auto_temperature: bool,
    /// Entropy target of the continuous actors.
    pub target_entropy: f64,
    /// Entropy target of the binary filter, in nats.
    pub target_entropy_discrete: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            init_temperature: 0.01,
            tau: 0.005,
            target_interval: 1,
            lr: 0.001,
            batch_size: 256,
            iterations: 1_000_000,
            critic_warmup: 10_000,
            buffer_capacity: 1_500_000,
            auto_temperature: true,
            target_entropy: -2.0,
            target_entropy_discrete: 0.5 * std::f64::consts::LN_2,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), String> {
        let pos = [
            ("gamma", self.gamma),
            ("init_temperature", self.init_temperature),
            ("tau", self.tau),
            ("lr", self.lr),
        ];
        for (k, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("sac.{k} must be positive, got {v}"));
            }
        }
        if self.gamma >= 1.0 || self.tau > 1.0 {
            return Err("sac.gamma must be below 1 and sac.tau at most 1".into());
        }
        if self.batch_size == 0
            || self.buffer_capacity < self.batch_size
            || self.target_interval == 0
        {
            return Err("sac.batch_size, sac.buffer_capacity and sac.target_interval must be positive, with capacity >= batch".into());
        }
        Ok(())
    }
}

/// Losses of one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacLosses {
    pub critic: f64,
    /// `None` during critic warm-up.
    pub actor: Option<f64>,
    pub temperature: f64,
    /// Mean policy entropy on the batch (estimated from log-probabilities
    /// for the continuous actors).
    pub entropy: f64,
}

/// A sampled mini-batch in network layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Tensor<f32>,
    pub msgs: MessageBatch,
    pub actions: Tensor<f32>,
    pub binary: Vec<u8>,
    pub rewards: Vec<f32>,
    pub next_obs: Tensor<f32>,
    pub next_msgs: MessageBatch,
    pub done: Vec<f32>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let b = ts.len();
        let mut obs = Vec::with_capacity(b * OBS_DIM);
        let mut next_obs = Vec::with_capacity(b * OBS_DIM);
        let mut msgs = MessageBatch::default();
        let mut next_msgs = MessageBatch::default();
        let mut actions = Vec::with_capacity(b * 2);
        let mut binary = Vec::with_capacity(b);
        for t in ts {
            obs.extend_from_slice(&t.obs);
            next_obs.extend_from_slice(&t.next_obs);
            msgs.push_set(&t.msgs.current, &t.msgs.next, t.msgs.count);
            next_msgs.push_set(&t.next_msgs.current, &t.next_msgs.next, t.next_msgs.count);
            match t.action {
                StoredAction::Continuous(a) => {
                    actions.extend_from_slice(&a);
                    binary.push(1);
                }
                StoredAction::Binary(f) => {
                    actions.extend_from_slice(&[0.0, 0.0]);
                    binary.push(f);
                }
            }
        }
        Self {
            obs: Tensor::matrix(b, OBS_DIM, obs),
            msgs,
            actions: Tensor::matrix(b, 2, actions),
            binary,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_obs: Tensor::matrix(b, OBS_DIM, next_obs),
            next_msgs,
            done: ts.iter().map(|t| f32::from(u8::from(t.done))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// DWA suggestion columns of the observations, `[B, 2]`.
    fn base(obs: &Tensor<f32>) -> Tensor<f32> {
        let b = obs.rows();
        let mut d = Vec::with_capacity(b * 2);
        for r in 0..b {
            d.push(obs.get(r, OBS_DIM - 2));
            d.push(obs.get(r, OBS_DIM - 1));
        }
        Tensor::matrix(b, 2, d)
    }
}

/// Optimizer and target state of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamLearner {
    pub targets: [ParamSet<f32>; 2],
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub log_alpha: f64,
    pub alpha_opt: ScalarAdam,
    pub updates: u64,
}

impl StreamLearner {
    pub fn new(actor: &Net, critics: &[Net; 2], cfg: &SacConfig) -> Self {
        let lr = cfg.lr as f32;
        Self {
            targets: [critics[0].params.clone(), critics[1].params.clone()],
            actor_opt: Adam::new(&actor.params, lr),
            critic_opts: [
                Adam::new(&critics[0].params, lr),
                Adam::new(&critics[1].params, lr),
            ],
            log_alpha: cfg.init_temperature.ln(),
            alpha_opt: ScalarAdam::new(cfg.lr),
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

fn normal_tensor<R: Rng>(rows: usize, rng: &mut R) -> Tensor<f32> {
    Tensor::matrix(
        rows,
        2,
        (0..rows * 2)
            .map(|_| rng.sample::<f32, _>(StandardNormal))
            .collect(),
    )
}

fn msg_vars(
    g: &mut Graph<'_, f32>,
    net: &Net,
    m: &MessageBatch,
) -> Option<crate::nets::layers::MessageVars> {
    net.spec.msg_dims.map(|d| m.bind(g, d))
}

fn grads_for(grads: &mut crate::nets::Gradients<f32>, vars: &[Var]) -> Vec<Option<Tensor<f32>>> {
    vars.iter().map(|&v| grads.take(v)).collect()
}

fn check_finite(what: &str, x: f64, updates: u64) -> Result<(), LearnError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(LearnError::NonFinite(format!(
            "{what} is {x} at update {updates}"
        )))
    }
}

/// Twin critics regressed on `targets`, then Polyak-averaged targets.
fn critic_step(
    critics: &mut [Net; 2],
    learner: &mut StreamLearner,
    obs: &Tensor<f32>,
    msgs: &MessageBatch,
    actions: Option<&Tensor<f32>>,
    pick: Option<&Tensor<f32>>,
    y: &Tensor<f32>,
    cfg: &SacConfig,
) -> Result<f64, LearnError> {
    let mut total = 0.0;
    for k in 0..2 {
        let (loss_v, mut grads, vars) = {
            let net = &critics[k];
            let mut g = Graph::new();
            let p = net.params.bind(&mut g);
            let o = g.input(obs.clone());
            let a = actions.map(|a| g.input(a.clone()));
            let m = msg_vars(&mut g, net, msgs);
            let q = net.forward(&mut g, &p, o, a, m.as_ref());
            let q = match pick {
                Some(onehot) => {
                    let oh = g.input(onehot.clone());
                    let qm = g.mul(q, oh);
                    g.sum_cols(qm)
                }
                None => q,
            };
            let yv = g.input(y.clone());
            let d = g.sub(q, yv);
            let sq = g.square(d);
            let loss = g.mean(sq);
            let lv = g.value(loss).item() as f64;
            (lv, g.backward(loss), p)
        };
        check_finite("critic loss", loss_v, learner.updates)?;
        let gr = grads_for(&mut grads, &vars);
        learner.critic_opts[k].update(&mut critics[k].params, &gr);
        total += loss_v;
    }
    if learner.updates.is_multiple_of(cfg.target_interval) {
        for k in 0..2 {
            learner.targets[k].polyak_from(&critics[k].params, cfg.tau as f32);
        }
    }
    Ok(total / 2.0)
}

/// One gradient step for a residual actor and its twin critics.
pub fn sac_update_continuous<R: Rng>(
    actor: &mut Net,
    critics: &mut [Net; 2],
    learner: &mut StreamLearner,
    batch: &Batch,
    residual_scale: [f64; 2],
    cfg: &SacConfig,
    rng: &mut R,
) -> Result<SacLosses, LearnError> {
    let b = batch.len();
    let alpha = learner.alpha();
    let gamma = cfg.gamma as f32;

    // Bellman targets with the current actor and the target critics.
    let y = {
        let mut g = Graph::new();
        let pa = actor.params.bind_const(&mut g);
        let o2 = g.input(batch.next_obs.clone());
        let m2 = msg_vars(&mut g, actor, &batch.next_msgs);
        let head = actor.forward(&mut g, &pa, o2, None, m2.as_ref());
        let base = g.input(Batch::base(&batch.next_obs));
        let eps = normal_tensor(b, rng);
        let (a2, logp2) = squashed_gaussian(&mut g, head, base, &eps, residual_scale);
        let mut qs = Vec::new();
        for k in 0..2 {
            let pt = learner.targets[k].bind_const(&mut g);
            let m = msg_vars(&mut g, &critics[k], &batch.next_msgs);
            qs.push(critics[k].forward(&mut g, &pt, o2, Some(a2), m.as_ref()));
        }
        let qmin = g.min(qs[0], qs[1]);
        let q = g.value(qmin);
        let lp = g.value(logp2);
        let y: Vec<f32> = (0..b)
            .map(|r| {
                let soft = q.get(r, 0) - alpha as f32 * lp.get(r, 0);
                batch.rewards[r] + gamma * (1.0 - batch.done[r]) * soft
            })
            .collect();
        Tensor::matrix(b, 1, y)
    };
    let critic_loss = critic_step(
        critics,
        learner,
        &batch.obs,
        &batch.msgs,
        Some(&batch.actions),
        None,
        &y,
        cfg,
    )?;

    let mut losses = SacLosses {
        critic: critic_loss,
        actor: None,
        temperature: alpha,
        entropy: f64::NAN,
    };
    if learner.updates >= cfg.critic_warmup {
        let (actor_loss, mean_logp, mut grads, vars) = {
            let mut g = Graph::new();
            let pa = actor.params.bind(&mut g);
            let o = g.input(batch.obs.clone());
            let m = msg_vars(&mut g, actor, &batch.msgs);
            let head = actor.forward(&mut g, &pa, o, None, m.as_ref());
            let base = g.input(Batch::base(&batch.obs));
            let eps = normal_tensor(b, rng);
            let (a, logp) = squashed_gaussian(&mut g, head, base, &eps, residual_scale);
            let mut qs = Vec::new();
            for c in critics.iter() {
                let pc = c.params.bind_const(&mut g);
                let mc = msg_vars(&mut g, c, &batch.msgs);
                qs.push(c.forward(&mut g, &pc, o, Some(a), mc.as_ref()));
            }
            let qmin = g.min(qs[0], qs[1]);
            let al = g.scale(logp, alpha as f32);
            let d = g.sub(al, qmin);
            let loss = g.mean(d);
            let lv = g.value(loss).item() as f64;
            let mlp = g.value(logp).data().iter().map(|&x| x as f64).sum::<f64>() / b as f64;
            (lv, mlp, g.backward(loss), pa)
        };
        check_finite("actor loss", actor_loss, learner.updates)?;
        let gr = grads_for(&mut grads, &vars);
        learner.actor_opt.update(&mut actor.params, &gr);
        if cfg.auto_temperature {
            let grad = -(mean_logp + cfg.target_entropy);
            learner.alpha_opt.update(&mut learner.log_alpha, grad);
        }
        losses.actor = Some(actor_loss);
        losses.entropy = -mean_logp;
        losses.temperature = learner.alpha();
    }
    learner.updates += 1;
    if !actor.params.all_finite() || !critics.iter().all(|c| c.params.all_finite()) {
        return Err(LearnError::NonFinite(format!(
            "parameters after update {}",
            learner.updates
        )));
    }
    Ok(losses)
}

/// One gradient step for the binary filter and its twin critics. Critics
/// output one value per decision; index 1 means move.
pub fn sac_update_discrete(
    actor: &mut Net,
    critics: &mut [Net; 2],
    learner: &mut StreamLearner,
    batch: &Batch,
    cfg: &SacConfig,
) -> Result<SacLosses, LearnError> {
    let b = batch.len();
    let alpha = learner.alpha();
    let gamma = cfg.gamma as f32;

    let y = {
        let mut g = Graph::new();
        let pa = actor.params.bind_const(&mut g);
        let o2 = g.input(batch.next_obs.clone());
        let m2 = msg_vars(&mut g, actor, &batch.next_msgs);
        let logits = actor.forward(&mut g, &pa, o2, None, m2.as_ref());
        let logp = g.log_softmax_rows(logits);
        let mut qs = Vec::new();
        for k in 0..2 {
            let pt = learner.targets[k].bind_const(&mut g);
            let m = msg_vars(&mut g, &critics[k], &batch.next_msgs);
            qs.push(critics[k].forward(&mut g, &pt, o2, None, m.as_ref()));
        }
        let qmin = g.min(qs[0], qs[1]);
        let (q, lp) = (g.value(qmin), g.value(logp));
        let y: Vec<f32> = (0..b)
            .map(|r| {
                let v: f32 = (0..2)
                    .map(|c| lp.get(r, c).exp() * (q.get(r, c) - alpha as f32 * lp.get(r, c)))
                    .sum();
                batch.rewards[r] + gamma * (1.0 - batch.done[r]) * v
            })
            .collect();
        Tensor::matrix(b, 1, y)
    };
    let onehot = Tensor::matrix(
        b,
        2,
        batch
            .binary
            .iter()
            .flat_map(|&f| if f == 1 { [0.0, 1.0] } else { [1.0, 0.0] })
            .collect(),
    );
    let critic_loss = critic_step(
        critics,
        learner,
        &batch.obs,
        &batch.msgs,
        None,
        Some(&onehot),
        &y,
        cfg,
    )?;

    // Policy entropy is reported at every step, including warm-up.
    let (actor_loss, entropy, mut grads, vars) = {
        let mut g = Graph::new();
        let pa = actor.params.bind(&mut g);
        let o = g.input(batch.obs.clone());
        let m = msg_vars(&mut g, actor, &batch.msgs);
        let logits = actor.forward(&mut g, &pa, o, None, m.as_ref());
        let logp = g.log_softmax_rows(logits);
        let p = g.exp(logp);
        let qmin = {
            let mut qv = Vec::with_capacity(b * 2);
            let q1 = critics[0].eval(&batch.obs, None, Some(&batch.msgs));
            let q2 = critics[1].eval(&batch.obs, None, Some(&batch.msgs));
            for (a, c) in q1.data().iter().zip(q2.data()) {
                qv.push(a.min(*c));
            }
            g.input(Tensor::matrix(b, 2, qv))
        };
        let al = g.scale(logp, alpha as f32);
        let d = g.sub(al, qmin);
        let w = g.mul(p, d);
        let per = g.sum_cols(w);
        let loss = g.mean(per);
        let lv = g.value(loss).item() as f64;
        let (pv, lpv) = (g.value(p), g.value(logp));
        let ent = -(0..b)
            .map(|r| {
                (0..2)
                    .map(|c| (pv.get(r, c) * lpv.get(r, c)) as f64)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / b as f64;
        (lv, ent, g.backward(loss), pa)
    };
    let mut losses = SacLosses {
        critic: critic_loss,
        actor: None,
        temperature: alpha,
        entropy,
    };
    if learner.updates >= cfg.critic_warmup {
        check_finite("filter actor loss", actor_loss, learner.updates)?;
        let gr = grads_for(&mut grads, &vars);
        learner.actor_opt.update(&mut actor.params, &gr);
        if cfg.auto_temperature {
            let grad = entropy - cfg.target_entropy_discrete;
            learner.alpha_opt.update(&mut learner.log_alpha, grad);
        }
        losses.actor = Some(actor_loss);
        losses.temperature = learner.alpha();
    }
    learner.updates += 1;
    if !actor.params.all_finite() || !critics.iter().all(|c| c.params.all_finite()) {
        return Err(LearnError::NonFinite(format!(
            "parameters after update {}",
            learner.updates
        )));
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::transition::MsgSet;
    use crate::nets::{BundleConfig, PolicyBundle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_bundle(seed: u64) -> PolicyBundle {
        PolicyBundle::new(
            BundleConfig {
                hidden: 16,
                key_dim: 8,
                ..BundleConfig::default()
            },
            seed,
        )
    }

    fn obs(k: usize) -> Vec<f32> {
        (0..OBS_DIM)
            .map(|j| ((j * 7 + k * 3) % 11) as f32 / 11.0)
            .collect()
    }

    fn cont(k: usize, reward: f32, done: bool) -> Transition {
        Transition {
            stream: crate::learn::Stream::Solitary,
            obs: obs(k),
            msgs: MsgSet::default(),
            action: StoredAction::Continuous([0.3, -0.2]),
            reward,
            next_obs: obs(k + 1),
            next_msgs: MsgSet::default(),
            done,
        }
    }

    fn filter(k: usize, f: u8, reward: f32) -> Transition {
        let mut m = MsgSet::default();
        m.current.extend_from_slice(&[0.2, -0.1, 0.5]);
        m.next.extend_from_slice(&[0.25, -0.1, 0.5]);
        m.count = 1;
        Transition {
            stream: crate::learn::Stream::Filter,
            obs: obs(k),
            msgs: m,
            action: StoredAction::Binary(f),
            reward,
            next_obs: vec![0.0; OBS_DIM],
            next_msgs: MsgSet::default(),
            done: true,
        }
    }

    #[test]
    fn terminal_zero_reward_loss_is_mean_square_q() {
        let mut b = small_bundle(1);
        let ts: Vec<Transition> = (0..6).map(|k| cont(k, 0.0, true)).collect();
        let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
        let expect: f64 = b
            .solitary_critics
            .iter()
            .map(|c| {
                let q = c.eval(&batch.obs, Some(&batch.actions), None);
                q.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / q.data().len() as f64
            })
            .sum::<f64>()
            / 2.0;
        let cfg = SacConfig::default();
        let mut l = StreamLearner::new(&b.solitary_actor, &b.solitary_critics, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = sac_update_continuous(
            &mut b.solitary_actor,
            &mut b.solitary_critics,
            &mut l,
            &batch,
            [0.5, 0.5],
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!(
            (out.critic - expect).abs() < 1e-6 * (1.0 + expect),
            "{} vs {expect}",
            out.critic
        );
        assert!(out.actor.is_none(), "warm-up skips the actor");
    }

    #[test]
    fn targets_follow_polyak_average() {
        let mut b = small_bundle(2);
        let cfg = SacConfig {
            tau: 0.1,
            ..SacConfig::default()
        };
        let mut l = StreamLearner::new(&b.solitary_actor, &b.solitary_critics, &cfg);
        let old = b.solitary_critics[0].params.clone();
        let ts: Vec<Transition> = (0..4).map(|k| cont(k, 1.0, false)).collect();
        let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        sac_update_continuous(
            &mut b.solitary_actor,
            &mut b.solitary_critics,
            &mut l,
            &batch,
            [0.5, 0.5],
            &cfg,
            &mut rng,
        )
        .unwrap();
        let new = &b.solitary_critics[0].params;
        for ((t, o), n) in l.targets[0]
            .tensors()
            .iter()
            .zip(old.tensors())
            .zip(new.tensors())
        {
            for ((&tv, &ov), &nv) in t.data().iter().zip(o.data()).zip(n.data()) {
                let e = 0.9 * ov + 0.1 * nv;
                assert!((tv - e).abs() < 1e-6, "{tv} vs {e}");
            }
        }
    }

    #[test]
    fn actor_is_frozen_during_warmup() {
        let mut b = small_bundle(3);
        let cfg = SacConfig {
            critic_warmup: 3,
            ..SacConfig::default()
        };
        let mut l = StreamLearner::new(&b.solitary_actor, &b.solitary_critics, &cfg);
        let before = b.solitary_actor.params.clone();
        let ts: Vec<Transition> = (0..4).map(|k| cont(k, 1.0, false)).collect();
        let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for step in 0..4 {
            let out = sac_update_continuous(
                &mut b.solitary_actor,
                &mut b.solitary_critics,
                &mut l,
                &batch,
                [0.5, 0.5],
                &cfg,
                &mut rng,
            )
            .unwrap();
            if step < 3 {
                assert_eq!(b.solitary_actor.params, before);
                assert!(out.actor.is_none());
            } else {
                assert_ne!(b.solitary_actor.params, before);
                assert!(out.actor.is_some());
            }
        }
    }

    #[test]
    fn critic_fits_a_single_terminal_transition() {
        let mut b = small_bundle(4);
        let cfg = SacConfig {
            critic_warmup: u64::MAX,
            ..SacConfig::default()
        };
        let mut l = StreamLearner::new(&b.solitary_actor, &b.solitary_critics, &cfg);
        let t = cont(0, 2.5, true);
        let batch = Batch::from_transitions(&[&t]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..400 {
            sac_update_continuous(
                &mut b.solitary_actor,
                &mut b.solitary_critics,
                &mut l,
                &batch,
                [0.5, 0.5],
                &cfg,
                &mut rng,
            )
            .unwrap();
        }
        for c in &b.solitary_critics {
            let q = c.eval(&batch.obs, Some(&batch.actions), None).item();
            assert!((q - 2.5).abs() < 0.05, "q = {q}");
        }
    }

    #[test]
    fn untrained_filter_has_uniform_entropy() {
        let mut b = small_bundle(5);
        let cfg = SacConfig::default();
        let mut l = StreamLearner::new(&b.cf2_actor, &b.cf2_critics, &cfg);
        let ts = [filter(0, 1, 0.0), filter(1, 0, 0.0)];
        let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
        let out = sac_update_discrete(&mut b.cf2_actor, &mut b.cf2_critics, &mut l, &batch, &cfg)
            .unwrap();
        assert!(
            (out.entropy - std::f64::consts::LN_2).abs() < 1e-6,
            "{}",
            out.entropy
        );
    }

    #[test]
    fn filter_bandit_matches_boltzmann_policy() {
        // Moving pays 1, stopping pays 0, both terminal. With a fixed
        // temperature the soft-optimal policy is p(move) = e^(1/a) / (1 + e^(1/a)).
        let alpha: f64 = 0.5;
        let mut b = small_bundle(6);
        let cfg = SacConfig {
            init_temperature: alpha,
            auto_temperature: false,
            critic_warmup: 50,
            ..SacConfig::default()
        };
        let mut l = StreamLearner::new(&b.cf2_actor, &b.cf2_critics, &cfg);
        let ts: Vec<Transition> = (0..8)
            .map(|k| filter(0, (k % 2) as u8, (k % 2) as f32))
            .collect();
        let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
        for _ in 0..800 {
            sac_update_discrete(&mut b.cf2_actor, &mut b.cf2_critics, &mut l, &batch, &cfg)
                .unwrap();
        }
        let logits = b.cf2_actor.eval(&batch.obs, None, Some(&batch.msgs));
        let (z0, z1) = (logits.get(0, 0) as f64, logits.get(0, 1) as f64);
        let p_move = 1.0 / (1.0 + (z0 - z1).exp());
        let expect = (1.0 / alpha).exp() / (1.0 + (1.0 / alpha).exp());
        assert!(
            (p_move - expect).abs() < 0.03,
            "p(move) = {p_move}, expected {expect}"
        );
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut b = small_bundle(7);
            let cfg = SacConfig {
                critic_warmup: 1,
                ..SacConfig::default()
            };
            let mut l = StreamLearner::new(&b.solitary_actor, &b.solitary_critics, &cfg);
            let ts: Vec<Transition> = (0..5).map(|k| cont(k, k as f32, k == 4)).collect();
            let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..5 {
                sac_update_continuous(
                    &mut b.solitary_actor,
                    &mut b.solitary_critics,
                    &mut l,
                    &batch,
                    [0.5, 0.5],
                    &cfg,
                    &mut rng,
                )
                .unwrap();
            }
            (b, l)
        };
        assert_eq!(run(), run());
    }
}
