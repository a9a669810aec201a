//! One timestep of the protocol: patience messages, filter decisions, state
//! messages, actions, default actions, improvements, patience update and
//! the filter reward.

use super::models::{head_action, Models};
use super::{
    build_patience_messages, build_state_messages, fairness_efficiency_reward, filter_action,
    Denominator, FairnessConstants, PatienceLedger, PatienceMessage, StateMessage,
};
use crate::env::{neighbors, observe_all, AgentState, EnvParams, Observation};
use crate::geom2d::{step_kinematics, Action, Pose, WorldMap};
use crate::nets::sample_binary;
use crate::rng::{keyed_rng, normal_pair, Purpose};

/// Ablation switches. All off is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablations {
    /// Feed an improvement of 1 for every neighbor into the filter reward.
    pub no_improvement: bool,
    /// Every active agent is every other agent's neighbor.
    pub full_comm: bool,
    /// Patience of agent `i` (0-based) is `i` at every step.
    pub fixed_priority: bool,
    /// The filter always lets agents move; it is not queried.
    pub force_move: bool,
}

/// Which controller produces the joint action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Filter plus residual navigation with message exchange.
    Ncf2,
    /// Residual navigation with state messages, every agent moves.
    NavOnly,
    /// The bare DWA suggestion.
    Dwa,
    /// The solitary policy, blind to other agents' messages.
    Solitary,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Ncf2 => "ncf2",
            PolicyKind::NavOnly => "nav-only",
            PolicyKind::Dwa => "dwa",
            PolicyKind::Solitary => "solitary",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ncf2" => Ok(PolicyKind::Ncf2),
            "nav-only" | "nav_only" => Ok(PolicyKind::NavOnly),
            "dwa" => Ok(PolicyKind::Dwa),
            "solitary" => Ok(PolicyKind::Solitary),
            other => Err(format!(
                "unknown policy {other:?} (expected ncf2, nav-only, dwa or solitary)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub kind: PolicyKind,
    pub ablations: Ablations,
    pub constants: FairnessConstants,
    pub denominator: Denominator,
    /// Sample actions and decisions; otherwise take means and argmaxes.
    pub stochastic: bool,
    pub seed: u64,
    pub episode: u64,
}

impl ProtocolConfig {
    pub fn new(kind: PolicyKind, stochastic: bool, seed: u64, episode: u64) -> Self {
        Self {
            kind,
            ablations: Ablations::default(),
            constants: FairnessConstants::default(),
            denominator: Denominator::default(),
            stochastic,
            seed,
            episode,
        }
    }
}

/// Everything decided during one step. Vectors are indexed by agent;
/// entries of inactive agents hold neutral values.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// The step being taken, starting at 1.
    pub t: u32,
    pub active: Vec<bool>,
    pub obs: Vec<Option<Observation>>,
    pub neighbors: Vec<Vec<usize>>,
    /// Patience used by this step's messages and reward.
    pub rho: Vec<f64>,
    pub solitary_actions: Vec<Action>,
    pub predicted: Vec<Pose>,
    pub patience_msgs: Vec<Vec<PatienceMessage>>,
    pub f: Vec<u8>,
    pub state_msgs: Vec<Vec<StateMessage>>,
    pub nu: Vec<Action>,
    pub actions: Vec<Action>,
    pub default_actions: Vec<Action>,
    pub xi: Vec<f64>,
    pub r_tilde: Vec<f64>,
}

fn agent_neighbors(
    states: &[AgentState],
    i: usize,
    world: &WorldMap,
    full_comm: bool,
) -> Vec<usize> {
    if full_comm {
        (0..states.len())
            .filter(|&j| j != i && states[j].is_active())
            .collect()
    } else {
        neighbors(states, i, world.comm_range())
    }
}

/// Runs the protocol for step `t` and updates `ledger`. The caller applies
/// `record.actions` with `env_step`.
#[allow(clippy::too_many_arguments)]
pub fn step_protocol(
    world: &WorldMap,
    goals: &[[f64; 2]],
    states: &[AgentState],
    ledger: &mut PatienceLedger,
    models: &dyn Models,
    cfg: &ProtocolConfig,
    params: &EnvParams,
    t: u32,
) -> StepRecord {
    let n = states.len();
    let obs = observe_all(world, goals, states, params);
    let act: Vec<usize> = (0..n).filter(|&i| states[i].is_active()).collect();
    let act_obs: Vec<&Observation> = act.iter().map(|&i| obs[i].as_ref().unwrap()).collect();
    let scale = models.residual_scale();
    let noise = |i: usize, p: Purpose| {
        cfg.stochastic
            .then(|| normal_pair(cfg.seed, cfg.episode, i as u64, t as u64, p))
    };

    let mut rec = StepRecord {
        t,
        active: states.iter().map(|s| s.is_active()).collect(),
        obs: obs.clone(),
        neighbors: vec![Vec::new(); n],
        rho: ledger.values().to_vec(),
        solitary_actions: vec![Action::STOP; n],
        predicted: states.iter().map(|s| s.pose).collect(),
        patience_msgs: vec![Vec::new(); n],
        f: vec![1; n],
        state_msgs: vec![Vec::new(); n],
        nu: vec![Action::STOP; n],
        actions: vec![Action::STOP; n],
        default_actions: vec![Action::STOP; n],
        xi: vec![0.0; n],
        r_tilde: vec![0.0; n],
    };
    if act.is_empty() {
        return rec;
    }

    match cfg.kind {
        PolicyKind::Dwa => {
            for (&i, o) in act.iter().zip(&act_obs) {
                rec.nu[i] = o.dwa_suggestion;
                rec.actions[i] = o.dwa_suggestion;
                rec.default_actions[i] = o.dwa_suggestion;
            }
            return rec;
        }
        PolicyKind::Solitary => {
            let heads = models.solitary_heads(&act_obs);
            for ((&i, o), h) in act.iter().zip(&act_obs).zip(heads) {
                let (a, _) = head_action(h, o, scale, noise(i, Purpose::SolitaryNoise));
                rec.nu[i] = a;
                rec.actions[i] = a;
                rec.default_actions[i] = a;
            }
            return rec;
        }
        PolicyKind::Ncf2 | PolicyKind::NavOnly => {}
    }

    // Solitary predictions for every active agent.
    let heads = models.solitary_heads(&act_obs);
    for ((&i, o), h) in act.iter().zip(&act_obs).zip(heads) {
        let (a_hat, _) = head_action(h, o, scale, None);
        rec.solitary_actions[i] = a_hat;
        rec.predicted[i] = step_kinematics(states[i].pose, a_hat);
    }
    for &i in &act {
        rec.neighbors[i] = agent_neighbors(states, i, world, cfg.ablations.full_comm);
    }
    let poses: Vec<Pose> = states.iter().map(|s| s.pose).collect();
    let ncf2 = cfg.kind == PolicyKind::Ncf2;

    // Step 1: patience messages and filter decisions.
    if ncf2 {
        if cfg.ablations.fixed_priority {
            let fixed: Vec<f64> = (0..n).map(|i| i as f64).collect();
            ledger.set_all(&fixed);
            rec.rho = fixed;
        }
        for &i in &act {
            rec.patience_msgs[i] = build_patience_messages(
                &poses,
                &rec.rho,
                &rec.predicted,
                i,
                &rec.neighbors[i],
                cfg.denominator,
            );
        }
        if !cfg.ablations.force_move {
            let msgs: Vec<Vec<PatienceMessage>> =
                act.iter().map(|&i| rec.patience_msgs[i].clone()).collect();
            let logits = models.filter_logits(&act_obs, &msgs);
            for (&i, l) in act.iter().zip(logits) {
                rec.f[i] = if cfg.stochastic {
                    let mut r = keyed_rng(
                        cfg.seed,
                        cfg.episode,
                        i as u64,
                        t as u64,
                        Purpose::FilterDraw,
                    );
                    sample_binary(l, Some(&mut r)).0
                } else {
                    sample_binary::<rand_chacha::ChaCha8Rng>(l, None).0
                };
            }
        }
    }

    // Step 2: state messages gated by the decisions.
    for &i in &act {
        rec.state_msgs[i] =
            build_state_messages(&poses, &rec.predicted, &rec.f, i, &rec.neighbors[i]);
    }

    // Step 3: navigation actions filtered by the decisions.
    let msgs: Vec<Vec<StateMessage>> = act.iter().map(|&i| rec.state_msgs[i].clone()).collect();
    let heads = models.nav_heads(&act_obs, &msgs);
    for ((&i, o), h) in act.iter().zip(&act_obs).zip(heads) {
        let (nu, _) = head_action(h, o, scale, noise(i, Purpose::NavNoise));
        rec.nu[i] = nu;
        rec.actions[i] = filter_action(rec.f[i], nu);
        rec.default_actions[i] = nu;
    }
    if !ncf2 {
        return rec;
    }

    // Default actions: recompute where some neighbor was stopped.
    let ones = vec![1u8; n];
    let redo: Vec<usize> = act
        .iter()
        .copied()
        .filter(|&i| rec.neighbors[i].iter().any(|&j| rec.f[j] == 0))
        .collect();
    if !redo.is_empty() {
        let redo_obs: Vec<&Observation> = redo.iter().map(|&i| obs[i].as_ref().unwrap()).collect();
        let redo_msgs: Vec<Vec<StateMessage>> = redo
            .iter()
            .map(|&i| build_state_messages(&poses, &rec.predicted, &ones, i, &rec.neighbors[i]))
            .collect();
        let heads = models.nav_heads(&redo_obs, &redo_msgs);
        for ((&i, o), h) in redo.iter().zip(&redo_obs).zip(heads) {
            rec.default_actions[i] = head_action(h, o, scale, noise(i, Purpose::NavNoise)).0;
        }
    }

    // Improvements and patience, with equal batch shapes so identical
    // actions give identical values.
    let pick = |v: &[Action]| -> Vec<Action> { act.iter().map(|&i| v[i]).collect() };
    let q_act = models.solitary_q(&act_obs, &pick(&rec.actions));
    if cfg.ablations.no_improvement {
        for &i in &act {
            rec.xi[i] = 1.0;
        }
    } else {
        let q_def = models.solitary_q(&act_obs, &pick(&rec.default_actions));
        for (k, &i) in act.iter().enumerate() {
            rec.xi[i] = q_act[k] - q_def[k];
        }
    }
    for &i in &act {
        rec.r_tilde[i] = fairness_efficiency_reward(
            rec.f[i],
            i,
            &rec.rho,
            &rec.xi,
            &rec.neighbors[i],
            cfg.constants,
            cfg.denominator,
        );
    }
    if !cfg.ablations.fixed_priority {
        let q_hat = models.solitary_q(&act_obs, &pick(&rec.solitary_actions));
        for (k, &i) in act.iter().enumerate() {
            ledger.add(i, t, q_hat[k] - q_act[k]);
        }
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{env_step, generate_scenario, Family, Scenario};
    use crate::ncf2::run_episode;

    /// Zero residual heads everywhere; the filter stops the agents listed in
    /// `stop` (by position in the active batch).
    struct Stub {
        stop: Vec<usize>,
    }

    impl Models for Stub {
        fn residual_scale(&self) -> [f64; 2] {
            [0.5, 0.5]
        }
        fn solitary_heads(&self, obs: &[&Observation]) -> Vec<[f64; 4]> {
            vec![[0.0, 0.0, -1.0, -1.0]; obs.len()]
        }
        fn solitary_q(&self, obs: &[&Observation], actions: &[Action]) -> Vec<f64> {
            obs.iter()
                .zip(actions)
                .map(|(o, a)| o.features()[0] as f64 + 0.3 * a.v - 0.1 * a.w * a.w)
                .collect()
        }
        fn filter_logits(
            &self,
            obs: &[&Observation],
            _msgs: &[Vec<PatienceMessage>],
        ) -> Vec<[f64; 2]> {
            (0..obs.len())
                .map(|k| {
                    if self.stop.contains(&k) {
                        [5.0, -5.0]
                    } else {
                        [-5.0, 5.0]
                    }
                })
                .collect()
        }
        fn nav_heads(&self, obs: &[&Observation], _msgs: &[Vec<StateMessage>]) -> Vec<[f64; 4]> {
            vec![[0.0, 0.0, -1.0, -1.0]; obs.len()]
        }
    }

    fn scenario(n: usize, seed: u64) -> Scenario {
        generate_scenario(Family::Uniform, n, 3, seed).unwrap()
    }

    fn first_step(
        s: &Scenario,
        stub: &Stub,
        cfg: &ProtocolConfig,
    ) -> (StepRecord, PatienceLedger, Vec<AgentState>) {
        let states: Vec<AgentState> = s.starts.iter().map(|p| AgentState::new(*p)).collect();
        let mut ledger = PatienceLedger::new(s.n_agents());
        let rec = step_protocol(
            &s.world,
            &s.goals,
            &states,
            &mut ledger,
            stub,
            cfg,
            &EnvParams::default(),
            1,
        );
        (rec, ledger, states)
    }

    #[test]
    fn fixed_priority_uses_agent_index() {
        let mut cfg = ProtocolConfig::new(PolicyKind::Ncf2, false, 0, 0);
        cfg.ablations.fixed_priority = true;
        let (rec, ledger, _) = first_step(&scenario(3, 1), &Stub { stop: vec![0] }, &cfg);
        assert_eq!(rec.rho, vec![0.0, 1.0, 2.0]);
        assert_eq!(ledger.values(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn no_improvement_sets_unit_improvement() {
        let mut cfg = ProtocolConfig::new(PolicyKind::Ncf2, false, 0, 0);
        cfg.ablations.no_improvement = true;
        let (rec, _, _) = first_step(&scenario(3, 2), &Stub { stop: vec![1] }, &cfg);
        assert_eq!(rec.xi, vec![1.0; 3]);
    }

    #[test]
    fn full_comm_links_every_active_agent() {
        let mut cfg = ProtocolConfig::new(PolicyKind::Ncf2, false, 0, 0);
        cfg.ablations.full_comm = true;
        let (rec, _, _) = first_step(&scenario(4, 3), &Stub { stop: vec![] }, &cfg);
        for (i, nb) in rec.neighbors.iter().enumerate() {
            assert_eq!(nb.len(), 3);
            assert!(!nb.contains(&i));
        }
    }

    #[test]
    fn stopped_agent_keeps_its_pose() {
        let cfg = ProtocolConfig::new(PolicyKind::Ncf2, true, 5, 0);
        let s = scenario(3, 4);
        let (rec, _, states) = first_step(&s, &Stub { stop: vec![0] }, &cfg);
        assert_eq!(rec.f, vec![0, 1, 1]);
        assert_eq!(rec.actions[0], Action::STOP);
        let out = env_step(
            &s.world,
            &s.goals,
            &states,
            &rec.actions,
            1,
            &EnvParams::default(),
        );
        assert_eq!(out.states[0].pose, states[0].pose);
        assert_ne!(out.states[1].pose, states[1].pose);
    }

    #[test]
    fn moving_along_solitary_keeps_zero_patience() {
        // deterministic zero heads make the executed action equal the
        // solitary one, so every patience increment is exactly zero
        let cfg = ProtocolConfig::new(PolicyKind::Ncf2, false, 0, 0);
        let s = scenario(4, 5);
        let out = run_episode(
            &s,
            &Stub { stop: vec![] },
            &cfg,
            &EnvParams::default(),
            false,
        );
        assert!(
            out.final_patience.iter().all(|&r| r == 0.0),
            "{:?}",
            out.final_patience
        );
    }

    #[test]
    fn stopping_raises_patience_of_the_stopped_agent() {
        let cfg = ProtocolConfig::new(PolicyKind::Ncf2, false, 0, 0);
        let (rec, ledger, _) = first_step(&scenario(3, 6), &Stub { stop: vec![0] }, &cfg);
        // Q(a_hat) - Q(stop) = 0.3 v_hat - 0.1 w_hat^2
        let a = rec.solitary_actions[0];
        let expect = 0.3 * a.v - 0.1 * a.w * a.w;
        assert!((ledger.get(0) - expect).abs() < 1e-9);
        assert_eq!(ledger.get(1), 0.0);
    }

    #[test]
    fn force_move_matches_nav_only() {
        let s = scenario(3, 7);
        let params = EnvParams::default();
        let nav = ProtocolConfig::new(PolicyKind::NavOnly, true, 9, 3);
        let mut forced = ProtocolConfig::new(PolicyKind::Ncf2, true, 9, 3);
        forced.ablations.force_move = true;
        let stub = Stub {
            stop: vec![0, 1, 2],
        };
        let a = run_episode(&s, &stub, &nav, &params, true);
        let b = run_episode(&s, &stub, &forced, &params, true);
        let pose = |o: &crate::ncf2::EpisodeOutput| -> Vec<_> {
            o.trace
                .iter()
                .map(|r| (r.x, r.y, r.theta, r.v, r.w))
                .collect()
        };
        assert_eq!(pose(&a), pose(&b));
        assert_eq!(a.result, b.result);
        assert_eq!(b.stops, 0);
    }

    #[test]
    fn dwa_kind_executes_the_suggestion() {
        let cfg = ProtocolConfig::new(PolicyKind::Dwa, true, 0, 0);
        let (rec, _, _) = first_step(&scenario(2, 8), &Stub { stop: vec![0, 1] }, &cfg);
        for i in 0..2 {
            assert_eq!(rec.actions[i], rec.obs[i].as_ref().unwrap().dwa_suggestion);
        }
    }

    #[test]
    fn policy_kind_round_trips() {
        for k in [
            PolicyKind::Ncf2,
            PolicyKind::NavOnly,
            PolicyKind::Dwa,
            PolicyKind::Solitary,
        ] {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
