use super::{AgentState, EnvParams};
use crate::dwa::{dwa_suggest, DwaInput};
use crate::geom2d::{lidar_scan, Action, Circle, Pose, WorldMap, LIDAR_BEAMS};

/// Width of the flat feature vector: 4 pose features, 64 lidar ranges,
/// 2 goal-displacement entries, 2 DWA-suggestion entries.
pub const OBS_DIM: usize = 4 + LIDAR_BEAMS + 2 + 2;

/// Per-agent observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pose: Pose,
    /// Ranges divided by the maximum lidar range, in `[0, 1]`.
    pub lidar: [f64; LIDAR_BEAMS],
    /// `(goal - position) / map_size`, world frame.
    pub goal_disp: [f64; 2],
    pub goal: [f64; 2],
    pub dwa_suggestion: Action,
    pub map_size: f64,
}

impl Observation {
    /// Flat network input: `x/L, y/L, cos, sin, lidar.., goal_disp.., v/v_max, w/w_max`.
    pub fn features(&self) -> Vec<f32> {
        let mut f = Vec::with_capacity(OBS_DIM);
        self.write_features(&mut f);
        f
    }

    pub fn write_features(&self, f: &mut Vec<f32>) {
        let l = self.map_size;
        let limits = crate::geom2d::ActionLimits::for_map(l);
        f.push((self.pose.x / l) as f32);
        f.push((self.pose.y / l) as f32);
        f.push(self.pose.theta.cos() as f32);
        f.push(self.pose.theta.sin() as f32);
        f.extend(self.lidar.iter().map(|&r| r as f32));
        f.push(self.goal_disp[0] as f32);
        f.push(self.goal_disp[1] as f32);
        f.push((self.dwa_suggestion.v / limits.v_max) as f32);
        f.push((self.dwa_suggestion.w / limits.w_max) as f32);
    }

    /// DWA suggestion in normalized action units.
    pub fn dwa_normalized(&self) -> [f64; 2] {
        let limits = crate::geom2d::ActionLimits::for_map(self.map_size);
        [
            self.dwa_suggestion.v / limits.v_max,
            self.dwa_suggestion.w / limits.w_max,
        ]
    }
}

/// Builds the observation for a robot at `pose` that senses the circles in
/// `others` besides the static obstacles.
pub fn observe(
    pose: Pose,
    goal: [f64; 2],
    world: &WorldMap,
    others: &[Circle],
    params: &EnvParams,
) -> Observation {
    let ranges = lidar_scan(pose, world, others);
    let dwa = dwa_suggest(
        &DwaInput {
            pose,
            ranges: &ranges,
            goal,
            map_size: world.map_size,
        },
        &params.dwa,
    );
    let max_range = world.lidar_range();
    let mut lidar = [0.0; LIDAR_BEAMS];
    for (o, r) in lidar.iter_mut().zip(ranges) {
        *o = r / max_range;
    }
    Observation {
        pose,
        lidar,
        goal_disp: [
            (goal[0] - pose.x) / world.map_size,
            (goal[1] - pose.y) / world.map_size,
        ],
        goal,
        dwa_suggestion: dwa,
        map_size: world.map_size,
    }
}

/// Observations of all agents; every other agent's body is visible to the
/// lidar regardless of its status. Inactive agents get `None`.
pub fn observe_all(
    world: &WorldMap,
    goals: &[[f64; 2]],
    states: &[AgentState],
    params: &EnvParams,
) -> Vec<Option<Observation>> {
    let r = world.robot_radius();
    let bodies: Vec<Circle> = states
        .iter()
        .map(|s| Circle::new(s.pose.x, s.pose.y, r))
        .collect();
    let mut others = Vec::with_capacity(states.len());
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if !s.is_active() {
                return None;
            }
            others.clear();
            others.extend(
                bodies
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, c)| *c),
            );
            Some(observe(s.pose, goals[i], world, &others, params))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_are_normalized() {
        let w = WorldMap::empty(128.0);
        let o = observe(
            Pose::new(64.0, 32.0, 0.0),
            [96.0, 32.0],
            &w,
            &[],
            &EnvParams::default(),
        );
        let f = o.features();
        assert_eq!(f.len(), OBS_DIM);
        assert_eq!(f[0], 0.5);
        assert_eq!(f[1], 0.25);
        assert!(f[4..68].iter().all(|&r| r == 1.0));
        assert_eq!(f[68], 0.25);
        assert_eq!(f[69], 0.0);
        assert_eq!(f[70], 1.0);
        assert_eq!(f[71], 0.0);
    }
}
