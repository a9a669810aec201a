//! Whole cooperative episodes: trace rows for logs and plots, and replay
//! transitions for training.

use super::models::{normalized_action, patience_rows, state_rows, Models};
use super::protocol::{step_protocol, PolicyKind, ProtocolConfig, StepRecord};
use super::PatienceLedger;
use crate::env::{
    env_step, AgentState, AgentStatus, EnvParams, EpisodeResult, Observation, Scenario, OBS_DIM,
};
use crate::learn::{MsgSet, StoredAction, Stream, Transition};

/// One line of a trajectory log: the pose after step `t`, the decision and
/// action of that step, and both rewards. Rows with `t = 0` hold the start
/// poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u32,
    pub agent: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub f: u8,
    pub v: f64,
    pub w: f64,
    pub r_hat: f64,
    pub r_tilde: f64,
    pub status: AgentStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutput {
    pub result: EpisodeResult,
    pub trace: Vec<TraceRow>,
    pub transitions: Vec<Transition>,
    pub final_patience: Vec<f64>,
    /// Number of agent-steps on which the filter stopped an agent.
    pub stops: usize,
}

/// Which replay streams an episode feeds.
fn streams_for(cfg: &ProtocolConfig) -> Vec<Stream> {
    match cfg.kind {
        PolicyKind::Solitary => vec![Stream::Solitary],
        PolicyKind::NavOnly => vec![Stream::Nav],
        PolicyKind::Ncf2 if cfg.ablations.force_move => vec![Stream::Nav],
        PolicyKind::Ncf2 => vec![Stream::Nav, Stream::Filter],
        PolicyKind::Dwa => vec![],
    }
}

fn features(o: &Observation) -> Vec<f32> {
    o.features()
}

fn msg_set(rec: &StepRecord, i: usize, stream: Stream, duplicate: bool) -> MsgSet {
    let o = rec.obs[i]
        .as_ref()
        .expect("active agent has an observation");
    let range = 0.15 * o.map_size;
    let mut m = MsgSet::default();
    match stream {
        Stream::Solitary => {}
        Stream::Nav => {
            for s in &rec.state_msgs[i] {
                state_rows(s, range, &mut m.current, &mut m.next);
            }
            m.count = rec.state_msgs[i].len();
        }
        Stream::Filter => {
            for p in &rec.patience_msgs[i] {
                patience_rows(p, range, duplicate, &mut m.current, &mut m.next);
            }
            m.count = rec.patience_msgs[i].len();
        }
    }
    m
}

/// Runs one episode. With `collect`, transitions of the streams the
/// policy feeds are returned; the time limit counts as terminal.
pub fn run_episode(
    scenario: &Scenario,
    models: &dyn Models,
    cfg: &ProtocolConfig,
    params: &EnvParams,
    collect: bool,
) -> EpisodeOutput {
    let n = scenario.n_agents();
    let world = &scenario.world;
    let goals = &scenario.goals;
    let mut states: Vec<AgentState> = scenario
        .starts
        .iter()
        .map(|p| AgentState::new(*p))
        .collect();
    let mut ledger = PatienceLedger::new(n);
    let streams = if collect {
        streams_for(cfg)
    } else {
        Vec::new()
    };
    let duplicate = models.duplicate_patience();

    let mut trace: Vec<TraceRow> = states
        .iter()
        .enumerate()
        .map(|(i, s)| TraceRow {
            t: 0,
            agent: i,
            x: s.pose.x,
            y: s.pose.y,
            theta: s.pose.theta,
            f: 1,
            v: 0.0,
            w: 0.0,
            r_hat: 0.0,
            r_tilde: 0.0,
            status: s.status,
        })
        .collect();
    let mut transitions = Vec::new();
    // transitions waiting for the next observation, per stream and agent
    let mut pending: Vec<Vec<Option<Transition>>> = vec![vec![None; n]; streams.len()];
    let mut stops = 0;
    let mut steps = 0;

    for t in 1..=params.t_max {
        if !states.iter().any(|s| s.is_active()) {
            break;
        }
        let rec = step_protocol(world, goals, &states, &mut ledger, models, cfg, params, t);
        // complete transitions from the previous step
        for (si, &stream) in streams.iter().enumerate() {
            for i in 0..n {
                if let Some(mut tr) = pending[si][i].take() {
                    let o = rec.obs[i].as_ref().expect("pending agent is active");
                    tr.next_obs = features(o);
                    tr.next_msgs = msg_set(&rec, i, stream, duplicate);
                    transitions.push(tr);
                }
            }
        }
        let out = env_step(world, goals, &states, &rec.actions, t, params);
        steps = t;
        for i in 0..n {
            if !rec.active[i] {
                continue;
            }
            if rec.f[i] == 0 {
                stops += 1;
            }
            let p = out.states[i].pose;
            trace.push(TraceRow {
                t,
                agent: i,
                x: p.x,
                y: p.y,
                theta: p.theta,
                f: rec.f[i],
                v: rec.actions[i].v,
                w: rec.actions[i].w,
                r_hat: out.rewards[i],
                r_tilde: rec.r_tilde[i],
                status: out.states[i].status,
            });
            let terminal = out.done[i] || t == params.t_max;
            let o = rec.obs[i].as_ref().unwrap();
            for (si, &stream) in streams.iter().enumerate() {
                let (action, reward) = match stream {
                    Stream::Filter => (StoredAction::Binary(rec.f[i]), rec.r_tilde[i]),
                    _ => (
                        StoredAction::Continuous(normalized_action(rec.actions[i], o.map_size)),
                        out.rewards[i],
                    ),
                };
                let tr = Transition {
                    stream,
                    obs: features(o),
                    msgs: msg_set(&rec, i, stream, duplicate),
                    action,
                    reward: reward as f32,
                    next_obs: Vec::new(),
                    next_msgs: MsgSet::default(),
                    done: terminal,
                };
                if terminal {
                    transitions.push(Transition {
                        next_obs: vec![0.0; OBS_DIM],
                        ..tr
                    });
                } else {
                    pending[si][i] = Some(tr);
                }
            }
        }
        states = out.states;
    }
    EpisodeOutput {
        result: EpisodeResult::from_states(&states, steps, params.t_max),
        trace,
        transitions,
        final_patience: ledger.values().to_vec(),
        stops,
    }
}
