use super::{
    env_step, observe, AgentState, AgentStatus, EnvError, EnvParams, Observation, Scenario,
};
use crate::geom2d::{Action, Circle};

/// A deterministic single-agent policy.
pub trait Controller {
    fn act(&self, obs: &Observation) -> Action;
}

/// The bare dynamic-window planner as a policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct DwaController;

impl Controller for DwaController {
    fn act(&self, obs: &Observation) -> Action {
        obs.dwa_suggestion
    }
}

impl<F: Fn(&Observation) -> Action> Controller for F {
    fn act(&self, obs: &Observation) -> Action {
        self(obs)
    }
}

/// How the other agents appear during a solitary rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum SolitaryMode {
    /// Other agents do not exist.
    #[default]
    Removed,
    /// Other agents stay at their start poses as static obstacles.
    Frozen,
}

impl SolitaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SolitaryMode::Removed => "removed",
            SolitaryMode::Frozen => "frozen",
        }
    }
}

impl std::str::FromStr for SolitaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "removed" => Ok(SolitaryMode::Removed),
            "frozen" => Ok(SolitaryMode::Frozen),
            other => Err(format!("unknown solitary mode {other:?}")),
        }
    }
}

/// Runs agent `i` alone under `policy` and returns its goal time.
pub fn solitary_rollout(
    scenario: &Scenario,
    i: usize,
    policy: &dyn Controller,
    mode: SolitaryMode,
    params: &EnvParams,
) -> Result<u32, EnvError> {
    let mut world = scenario.world.clone();
    if mode == SolitaryMode::Frozen {
        let r = world.robot_radius();
        world.obstacles.extend(
            scenario
                .starts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| Circle::new(p.x, p.y, r)),
        );
    }
    let goal = [scenario.goals[i]];
    let mut state = [AgentState::new(scenario.starts[i])];
    for t in 1..=params.t_max {
        let obs = observe(state[0].pose, goal[0], &world, &[], params);
        let a = policy.act(&obs);
        let out = env_step(&world, &goal, &state, &[a], t, params);
        state[0] = out.states[0];
        match state[0].status {
            AgentStatus::AtGoal => return Ok(t),
            AgentStatus::Crashed => {
                return Err(EnvError::SolitaryTimeout {
                    agent: i,
                    t_max: params.t_max,
                    cause: format!("crashed at step {t}"),
                })
            }
            AgentStatus::Active => {}
        }
    }
    Err(EnvError::SolitaryTimeout {
        agent: i,
        t_max: params.t_max,
        cause: "time limit".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Family;
    use crate::geom2d::{Pose, WorldMap};

    fn straight_line(obs: &Observation) -> Action {
        let d = obs.pose.distance_to_point(obs.goal);
        Action::new(d.min(0.05 * obs.map_size), 0.0)
    }

    fn empty_scenario(start: Pose, goal: [f64; 2]) -> Scenario {
        Scenario {
            family: Family::Uniform,
            n_obstacles: 0,
            seed: 0,
            world: WorldMap::empty(128.0),
            starts: vec![start, Pose::new(100.0, 100.0, 0.0)],
            goals: vec![goal, [110.0, 110.0]],
        }
    }

    #[test]
    fn straight_line_oracle_goal_time() {
        let sc = empty_scenario(Pose::new(30.0, 30.0, 0.0), [40.0, 30.0]);
        let t = solitary_rollout(
            &sc,
            0,
            &straight_line,
            SolitaryMode::Removed,
            &EnvParams::default(),
        )
        .unwrap();
        assert_eq!(t, (10.0f64 / 6.4).ceil() as u32);
    }

    #[test]
    fn removed_and_frozen_agree_when_clear() {
        let sc = empty_scenario(Pose::new(30.0, 30.0, 0.0), [60.0, 30.0]);
        let p = EnvParams::default();
        let a = solitary_rollout(&sc, 0, &DwaController, SolitaryMode::Removed, &p).unwrap();
        let b = solitary_rollout(&sc, 0, &DwaController, SolitaryMode::Frozen, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dwa_reaches_goal_on_empty_map() {
        let sc = empty_scenario(Pose::new(20.0, 20.0, 0.7), [90.0, 80.0]);
        let d = sc.starts[0].distance_to_point(sc.goals[0]);
        let t = solitary_rollout(
            &sc,
            0,
            &DwaController,
            SolitaryMode::Removed,
            &EnvParams::default(),
        )
        .unwrap();
        assert!(t <= (d / 6.4).ceil() as u32 + 3, "t = {t}");
    }

    #[test]
    fn standing_still_times_out() {
        let sc = empty_scenario(Pose::new(30.0, 30.0, 0.0), [60.0, 30.0]);
        let stop = |_: &Observation| Action::STOP;
        let err = solitary_rollout(&sc, 0, &stop, SolitaryMode::Removed, &EnvParams::default())
            .unwrap_err();
        assert!(matches!(err, EnvError::SolitaryTimeout { agent: 0, .. }));
    }
}
