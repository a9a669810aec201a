//! Episode engine: scenario generation, joint stepping, termination and the
//! efficiency-safety reward.

mod observe;
mod scenario;
mod solitary;

pub use observe::{observe, observe_all, Observation, OBS_DIM};
pub use scenario::{generate_scenario, Family, Scenario};
pub use solitary::{solitary_rollout, Controller, DwaController, SolitaryMode};

use crate::dwa::DwaConfig;
use crate::geom2d::{check_crash, step_kinematics, Action, CrashKind, Pose, WorldMap};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("scenario generation failed after {attempts} rejected samples ({family:?}, {agents} agents, {obstacles} obstacles)")]
    GenerationFailed {
        family: Family,
        agents: usize,
        obstacles: usize,
        attempts: usize,
    },
    #[error("invalid scenario request: {0}")]
    InvalidRequest(String),
    #[error(
        "solitary rollout of agent {agent} did not reach its goal within {t_max} steps ({cause})"
    )]
    SolitaryTimeout {
        agent: usize,
        t_max: u32,
        cause: String,
    },
}

/// Episode constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    pub t_max: u32,
    pub r_goal: f64,
    pub r_crash: f64,
    pub r_time: f64,
    pub dwa: DwaConfig,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            t_max: 100,
            r_goal: 3.0,
            r_crash: 10.0,
            r_time: 0.1,
            dwa: DwaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    Active,
    AtGoal,
    Crashed,
}

impl AgentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentStatus::Active => "active",
            AgentStatus::AtGoal => "at_goal",
            AgentStatus::Crashed => "crashed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "active" => Some(AgentStatus::Active),
            "at_goal" => Some(AgentStatus::AtGoal),
            "crashed" => Some(AgentStatus::Crashed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub pose: Pose,
    pub status: AgentStatus,
    /// Number of steps taken when the goal was reached.
    pub goal_time: Option<u32>,
}

impl AgentState {
    pub fn new(pose: Pose) -> Self {
        Self {
            pose,
            status: AgentStatus::Active,
            goal_time: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == AgentStatus::Active
    }
}

/// Result of one joint step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub states: Vec<AgentState>,
    pub rewards: Vec<f64>,
    pub crashes: Vec<CrashKind>,
    /// True for agents that became inactive during this step.
    pub done: Vec<bool>,
}

/// Moves every active agent simultaneously, then tests collisions on the
/// post-move configuration. `t` is the number of steps taken after this
/// step. Crashed agents are frozen at their pre-move pose; agents that are
/// not active never move.
pub fn env_step(
    world: &WorldMap,
    goals: &[[f64; 2]],
    states: &[AgentState],
    actions: &[Action],
    t: u32,
    params: &EnvParams,
) -> StepOutput {
    let n = states.len();
    assert_eq!(actions.len(), n);
    assert_eq!(goals.len(), n);
    let limits = world.limits();
    let moved: Vec<Pose> = states
        .iter()
        .zip(actions)
        .map(|(s, a)| {
            if s.is_active() {
                step_kinematics(s.pose, limits.clamp(*a))
            } else {
                s.pose
            }
        })
        .collect();
    let mut next = states.to_vec();
    let mut rewards = vec![0.0; n];
    let mut crashes = vec![CrashKind::None; n];
    let mut done = vec![false; n];
    let mut others = Vec::with_capacity(n);
    for i in 0..n {
        if !states[i].is_active() {
            continue;
        }
        others.clear();
        others.extend(
            moved
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| *p),
        );
        let crash = check_crash(moved[i], world, &others);
        crashes[i] = crash;
        if crash != CrashKind::None {
            next[i].status = AgentStatus::Crashed;
            rewards[i] = -params.r_crash - params.r_time;
            done[i] = true;
        } else if moved[i].distance_to_point(goals[i]) <= world.goal_radius() {
            next[i].pose = moved[i];
            next[i].status = AgentStatus::AtGoal;
            next[i].goal_time = Some(t);
            rewards[i] = params.r_goal - params.r_time;
            done[i] = true;
        } else {
            next[i].pose = moved[i];
            rewards[i] = -params.r_time;
        }
    }
    StepOutput {
        states: next,
        rewards,
        crashes,
        done,
    }
}

/// Indices of active agents `j != i` within `range` of agent `i`.
pub fn neighbors(states: &[AgentState], i: usize, range: f64) -> Vec<usize> {
    let p = states[i].pose;
    states
        .iter()
        .enumerate()
        .filter(|(j, s)| *j != i && s.is_active() && s.pose.distance_to(&p) <= range)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCause {
    Crash,
    Timeout,
}

/// Summary of a finished cooperative episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub goal_times: Vec<Option<u32>>,
    pub failure: Option<FailureCause>,
    pub steps: u32,
}

impl EpisodeResult {
    pub fn from_states(states: &[AgentState], steps: u32, t_max: u32) -> Self {
        let crashed = states.iter().any(|s| s.status == AgentStatus::Crashed);
        let all_goal = states
            .iter()
            .all(|s| s.status == AgentStatus::AtGoal && s.goal_time.is_some_and(|g| g <= t_max));
        let success = all_goal && !crashed;
        let failure = if success {
            None
        } else if crashed {
            Some(FailureCause::Crash)
        } else {
            Some(FailureCause::Timeout)
        };
        Self {
            success,
            goal_times: states.iter().map(|s| s.goal_time).collect(),
            failure,
            steps,
        }
    }

    /// Latest goal time, defined for successful episodes.
    pub fn makespan(&self) -> Option<u32> {
        if !self.success {
            return None;
        }
        self.goal_times.iter().map(|g| g.unwrap()).max()
    }
}
