//! The fairness protocol: patience accounting, patience and state messages,
//! the move/stay filter, default actions, improvements and the
//! fairness-efficiency reward.
//!
//! The free functions here are pure and operate on plain arrays indexed by
//! agent. [`protocol`] wires them into one simulation step and [`episode`]
//! runs whole episodes.

pub mod episode;
mod models;
pub mod protocol;

pub use episode::{run_episode, EpisodeOutput, TraceRow};
pub use models::{head_action, normalized_action, patience_rows, state_rows, Models};
pub use protocol::{step_protocol, Ablations, PolicyKind, ProtocolConfig, StepRecord};

use crate::env::Observation;
use crate::geom2d::{relative_offset, Action, Pose};

/// Weights of the fairness-efficiency reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessConstants {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FairnessConstants {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.1,
        }
    }
}

/// Which agents the patience normalizer sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// The receiver and its neighbors.
    #[default]
    WithSelf,
    /// The neighbors only.
    NeighborsOnly,
}

/// Running patience of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PatienceLedger {
    rho: Vec<f64>,
    last_update: Vec<Option<u32>>,
}

impl PatienceLedger {
    pub fn new(n: usize) -> Self {
        Self {
            rho: vec![0.0; n],
            last_update: vec![None; n],
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.rho[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    /// Adds `gap` to agent `i` for step `t`. A second update in the same
    /// step is a logic error.
    pub fn add(&mut self, i: usize, t: u32, gap: f64) -> f64 {
        assert!(
            self.last_update[i].is_none_or(|u| u < t),
            "patience of agent {i} updated twice at t={t}"
        );
        self.last_update[i] = Some(t);
        self.rho[i] += gap;
        self.rho[i]
    }

    /// Overwrites every value; used by the fixed-priority ablation.
    pub fn set_all(&mut self, values: &[f64]) {
        self.rho.copy_from_slice(values);
    }
}

/// A scalar action-value function of the solitary policy.
pub trait Critic {
    fn q(&self, obs: &Observation, a: Action) -> f64;
}

impl<F: Fn(&Observation, Action) -> f64> Critic for F {
    fn q(&self, obs: &Observation, a: Action) -> f64 {
        self(obs, a)
    }
}

/// `rho_i += Q(o, a_hat) - Q(o, a)`; returns the new value.
pub fn update_patience(
    ledger: &mut PatienceLedger,
    i: usize,
    t: u32,
    obs: &Observation,
    a_hat: Action,
    a: Action,
    critic: &dyn Critic,
) -> f64 {
    let gap = critic.q(obs, a_hat) - critic.q(obs, a);
    ledger.add(i, t, gap)
}

pub fn patience_denominator(rho: &[f64], i: usize, neighbors: &[usize], mode: Denominator) -> f64 {
    let s: f64 = neighbors.iter().map(|&j| rho[j]).sum();
    match mode {
        Denominator::WithSelf => rho[i] + s,
        Denominator::NeighborsOnly => s,
    }
}

/// `(rho_j - rho_i) / denom`, or 0 for a zero denominator.
pub fn relative_patience(rho: &[f64], i: usize, j: usize, denom: f64) -> f64 {
    if denom == 0.0 {
        0.0
    } else {
        (rho[j] - rho[i]) / denom
    }
}

/// Message from agent `j` to agent `i` about `j`'s position, predicted next
/// position and relative patience. The patience entry appears twice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatienceMessage {
    pub delta_now: [f64; 2],
    pub rel_patience: f64,
    pub delta_next: [f64; 2],
    pub rel_patience_2: f64,
}

/// Message from agent `j` to agent `i`, zeroed when `j` stays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMessage {
    pub gated_delta_now: [f64; 2],
    pub gated_delta_next: [f64; 2],
}

/// Messages received by agent `i`, one per neighbor in `neighbors` order.
pub fn build_patience_messages(
    poses: &[Pose],
    rho: &[f64],
    predicted: &[Pose],
    i: usize,
    neighbors: &[usize],
    mode: Denominator,
) -> Vec<PatienceMessage> {
    let denom = patience_denominator(rho, i, neighbors, mode);
    neighbors
        .iter()
        .map(|&j| {
            let rel = relative_patience(rho, i, j, denom);
            PatienceMessage {
                delta_now: relative_offset(poses[j], poses[i]),
                rel_patience: rel,
                delta_next: relative_offset(predicted[j], poses[i]),
                rel_patience_2: rel,
            }
        })
        .collect()
}

pub fn build_state_messages(
    poses: &[Pose],
    predicted: &[Pose],
    f: &[u8],
    i: usize,
    neighbors: &[usize],
) -> Vec<StateMessage> {
    neighbors
        .iter()
        .map(|&j| {
            if f[j] == 0 {
                StateMessage {
                    gated_delta_now: [0.0; 2],
                    gated_delta_next: [0.0; 2],
                }
            } else {
                StateMessage {
                    gated_delta_now: relative_offset(poses[j], poses[i]),
                    gated_delta_next: relative_offset(predicted[j], poses[i]),
                }
            }
        })
        .collect()
}

/// The filtered action `f * nu`.
pub fn filter_action(f: u8, nu: Action) -> Action {
    if f == 0 {
        Action::STOP
    } else {
        nu
    }
}

/// `Q(o, a) - Q(o, a_bar)`.
pub fn improvement(critic: &dyn Critic, obs: &Observation, a: Action, a_bar: Action) -> f64 {
    critic.q(obs, a) - critic.q(obs, a_bar)
}

/// Reward of agent `i`'s filter. `rho` and `xi` are indexed by agent.
pub fn fairness_efficiency_reward(
    f_i: u8,
    i: usize,
    rho: &[f64],
    xi: &[f64],
    neighbors: &[usize],
    constants: FairnessConstants,
    mode: Denominator,
) -> f64 {
    if f_i == 1 {
        return 0.0;
    }
    let denom = patience_denominator(rho, i, neighbors, mode);
    if denom == 0.0 {
        return 0.0;
    }
    let weighted: f64 = neighbors.iter().map(|&j| (rho[j] - rho[i]) * xi[j]).sum();
    (constants.alpha * weighted - constants.beta * rho[i]) / denom
}

/// `sum_j xi_j * x_j / sum_j xi_j`.
pub fn weighted_mean(x: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
}

/// Weighted population variance of `x` with weights `w`.
pub fn weighted_variance(x: &[f64], w: &[f64]) -> f64 {
    let m = weighted_mean(x, w);
    let sw: f64 = w.iter().sum();
    x.iter()
        .zip(w)
        .map(|(a, b)| b * (a - m) * (a - m))
        .sum::<f64>()
        / sw
}

/// Partial derivative of [`weighted_variance`] with respect to `x[i]`.
pub fn weighted_variance_grad(x: &[f64], w: &[f64], i: usize) -> f64 {
    let m = weighted_mean(x, w);
    let sw: f64 = w.iter().sum();
    2.0 * w[i] * (x[i] - m) / sw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{observe, EnvParams};
    use crate::geom2d::WorldMap;
    use proptest::prelude::*;

    fn obs() -> Observation {
        observe(
            Pose::new(10.0, 10.0, 0.0),
            [50.0, 50.0],
            &WorldMap::empty(128.0),
            &[],
            &EnvParams::default(),
        )
    }

    #[test]
    fn patience_stays_zero_when_following_mu() {
        let mut l = PatienceLedger::new(1);
        let q = |_: &Observation, a: Action| -(a.v - 3.0).powi(2);
        let a = Action::new(3.0, 0.1);
        for t in 1..=10 {
            update_patience(&mut l, 0, t, &obs(), a, a, &q);
        }
        assert_eq!(l.get(0), 0.0);
    }

    #[test]
    fn patience_stub_critic_hand_value() {
        // Q(o, a) = -(a.v - a_hat.v)^2 with deviations 0.5 then 0
        let a_hat = Action::new(2.0, 0.0);
        let q = move |_: &Observation, a: Action| -(a.v - a_hat.v).powi(2);
        let mut l = PatienceLedger::new(1);
        assert_eq!(l.get(0), 0.0);
        update_patience(&mut l, 0, 1, &obs(), a_hat, Action::new(2.5, 0.0), &q);
        update_patience(&mut l, 0, 2, &obs(), a_hat, a_hat, &q);
        assert_eq!(l.get(0), 0.25);
    }

    #[test]
    #[should_panic]
    fn double_update_panics() {
        let mut l = PatienceLedger::new(1);
        l.add(0, 3, 1.0);
        l.add(0, 3, 1.0);
    }

    #[test]
    fn relative_patience_cases() {
        let rho = [1.0, 2.0];
        let d = patience_denominator(&rho, 0, &[1], Denominator::WithSelf);
        assert!((relative_patience(&rho, 0, 1, d) - 1.0 / 3.0).abs() < 1e-15);
        let zero = [0.0, 0.0];
        let d = patience_denominator(&zero, 0, &[1], Denominator::WithSelf);
        assert_eq!(relative_patience(&zero, 0, 1, d), 0.0);
        let eq = [1.5, 1.5];
        let d = patience_denominator(&eq, 0, &[1], Denominator::WithSelf);
        assert_eq!(relative_patience(&eq, 0, 1, d), 0.0);
        let d = patience_denominator(&rho, 0, &[1], Denominator::NeighborsOnly);
        assert_eq!(relative_patience(&rho, 0, 1, d), 0.5);
    }

    #[test]
    fn patience_message_repeats_relative_patience() {
        let poses = [Pose::new(3.0, 4.0, 0.0), Pose::new(5.0, 5.0, 0.0)];
        let pred = [poses[0], Pose::new(6.0, 5.0, 0.0)];
        let m = build_patience_messages(&poses, &[1.0, 2.0], &pred, 0, &[1], Denominator::WithSelf);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].delta_now, [2.0, 1.0]);
        assert_eq!(m[0].delta_next, [3.0, 1.0]);
        assert_eq!(m[0].rel_patience, m[0].rel_patience_2);
    }

    #[test]
    fn state_messages_are_gated_per_sender() {
        let poses = [
            Pose::new(3.0, 4.0, 0.0),
            Pose::new(5.0, 5.0, 0.0),
            Pose::new(1.0, 1.0, 0.0),
        ];
        let pred = [poses[0], Pose::new(6.0, 5.0, 0.0), Pose::new(2.0, 1.0, 0.0)];
        let m = build_state_messages(&poses, &pred, &[1, 1, 0], 0, &[1, 2]);
        assert_eq!(m[0].gated_delta_now, [2.0, 1.0]);
        assert_eq!(m[0].gated_delta_next, [3.0, 1.0]);
        assert_eq!(m[1].gated_delta_now, [0.0, 0.0]);
        assert_eq!(m[1].gated_delta_next, [0.0, 0.0]);
    }

    #[test]
    fn stay_is_stop() {
        assert_eq!(filter_action(0, Action::new(3.0, 0.2)), Action::STOP);
        assert_eq!(
            filter_action(1, Action::new(3.0, 0.2)),
            Action::new(3.0, 0.2)
        );
    }

    #[test]
    fn improvement_stub_critic() {
        let q = |_: &Observation, a: Action| -(a.v - 1.0).powi(2);
        let o = obs();
        let a = Action::new(1.0, 0.0);
        let ab = Action::new(0.5, 0.0);
        assert_eq!(improvement(&q, &o, a, a), 0.0);
        assert!((improvement(&q, &o, a, ab) - 0.25).abs() < 1e-15);
        assert_eq!(improvement(&q, &o, ab, a), -improvement(&q, &o, a, ab));
    }

    #[test]
    fn reward_hand_value() {
        let rho = [1.0, 2.0, 3.0];
        let xi = [0.0, 0.5, 1.0];
        let c = FairnessConstants::default();
        let r = fairness_efficiency_reward(0, 0, &rho, &xi, &[1, 2], c, Denominator::WithSelf);
        assert!((r - (0.5 * 2.5 - 0.1 * 1.0) / 6.0).abs() < 1e-12);
        assert_eq!(
            fairness_efficiency_reward(1, 0, &rho, &xi, &[1, 2], c, Denominator::WithSelf),
            0.0
        );
    }

    #[test]
    fn reward_without_neighbors() {
        let c = FairnessConstants::default();
        let r = fairness_efficiency_reward(0, 0, &[2.0], &[1.0], &[], c, Denominator::WithSelf);
        assert!((r + 0.1).abs() < 1e-15);
        assert_eq!(
            fairness_efficiency_reward(0, 0, &[0.0], &[1.0], &[], c, Denominator::WithSelf),
            0.0
        );
    }

    proptest! {
        #[test]
        fn moving_agents_get_no_filter_reward(
            rho in prop::collection::vec(-5.0..5.0f64, 1..8),
            xi in prop::collection::vec(-5.0..5.0f64, 8),
        ) {
            let n = rho.len();
            let nb: Vec<usize> = (1..n).collect();
            let r = fairness_efficiency_reward(1, 0, &rho, &xi[..n], &nb, FairnessConstants::default(), Denominator::WithSelf);
            prop_assert_eq!(r, 0.0);
        }

        #[test]
        fn weighted_variance_identity(
            x in prop::collection::vec(0.0..1.0f64, 3..17),
            w in prop::collection::vec(0.01..2.0f64, 17),
            pick in 0usize..17,
        ) {
            let n = x.len();
            let w = &w[..n];
            let i = pick % n;
            let lhs: f64 = (0..n).map(|j| (x[j] - x[i]) * w[j]).sum();
            let sw: f64 = w.iter().sum();
            let k = sw * sw / (2.0 * w[i]);
            let rhs = -k * weighted_variance_grad(&x, w, i);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_variance_grad_matches_finite_difference() {
        let x = [0.1, 0.4, 0.9, 0.3];
        let w = [0.5, 1.5, 0.2, 1.0];
        for i in 0..4 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (weighted_variance(&xp, &w) - weighted_variance(&xm, &w)) / (2.0 * h);
            assert!((fd - weighted_variance_grad(&x, &w, i)).abs() < 1e-8);
        }
    }
}
