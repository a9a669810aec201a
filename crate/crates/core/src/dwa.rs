//! Dynamic Window Approach over the full velocity box.
//!
//! The planner only sees the robot's own pose, its lidar scan and the goal
//! center. Obstacles are reconstructed as points at the beam endpoints.

use crate::geom2d::{
    beam_angle, normalize_angle, step_kinematics, Action, ActionLimits, Pose, LIDAR_BEAMS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaConfig {
    pub v_samples: usize,
    pub w_samples: usize,
    pub horizon: usize,
    pub w_heading: f64,
    pub w_clearance: f64,
    pub w_velocity: f64,
    /// Extra distance added to the body radius when testing simulated poses
    /// against scan points, since the points only sample obstacle surfaces.
    pub safety_margin: f64,
}

impl Default for DwaConfig {
    fn default() -> Self {
        Self {
            v_samples: 11,
            w_samples: 11,
            horizon: 5,
            w_heading: 1.0,
            w_clearance: 1.0,
            w_velocity: 0.2,
            safety_margin: 0.5,
        }
    }
}

impl DwaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.v_samples < 2 || self.w_samples < 2 {
            return Err("dwa sample counts must be at least 2".into());
        }
        if self.horizon < 1 {
            return Err("dwa horizon must be at least 1".into());
        }
        if self.w_heading < 0.0
            || self.w_clearance < 0.0
            || self.w_velocity < 0.0
            || self.safety_margin < 0.0
        {
            return Err("dwa weights must be non-negative".into());
        }
        Ok(())
    }
}

/// Everything the planner knows about the current step.
#[derive(Debug, Clone, Copy)]
pub struct DwaInput<'a> {
    pub pose: Pose,
    pub ranges: &'a [f64; LIDAR_BEAMS],
    pub goal: [f64; 2],
    pub map_size: f64,
}

/// Score of one candidate, or `None` if it crashes within the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub action: Action,
    pub index: usize,
    pub score: Option<f64>,
}

const SCORE_TIE: f64 = 1e-9;

fn scan_points(input: &DwaInput<'_>, max_range: f64) -> Vec<[f64; 2]> {
    input
        .ranges
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < max_range)
        .map(|(k, &r)| {
            let a = input.pose.theta + beam_angle(k);
            [input.pose.x + r * a.cos(), input.pose.y + r * a.sin()]
        })
        .collect()
}

/// The `v_samples x w_samples` grid, `v`-major.
pub fn candidate_grid(limits: ActionLimits, config: &DwaConfig) -> Vec<Action> {
    let mut out = Vec::with_capacity(config.v_samples * config.w_samples);
    for i in 0..config.v_samples {
        let v = limits.v_max * i as f64 / (config.v_samples - 1) as f64;
        for j in 0..config.w_samples {
            let w = -limits.w_max + 2.0 * limits.w_max * j as f64 / (config.w_samples - 1) as f64;
            out.push(Action::new(v, w));
        }
    }
    out
}

/// Scores every candidate of the grid.
pub fn score_candidates(input: &DwaInput<'_>, config: &DwaConfig) -> Vec<CandidateScore> {
    let limits = ActionLimits::for_map(input.map_size);
    let robot_r = 0.02 * input.map_size;
    let goal_r = 0.02 * input.map_size;
    let max_range = 0.1 * input.map_size;
    let points = scan_points(input, max_range);
    let hit_r = robot_r + config.safety_margin;

    candidate_grid(limits, config)
        .into_iter()
        .enumerate()
        .map(|(index, action)| {
            let mut p = input.pose;
            let mut min_clear = max_range;
            let mut crashed = false;
            let mut reached = false;
            for _ in 0..config.horizon {
                p = step_kinematics(p, action);
                if p.x - robot_r < 0.0
                    || p.y - robot_r < 0.0
                    || p.x + robot_r > input.map_size
                    || p.y + robot_r > input.map_size
                {
                    crashed = true;
                    break;
                }
                for q in &points {
                    let d = (p.x - q[0]).hypot(p.y - q[1]);
                    if d < hit_r {
                        crashed = true;
                        break;
                    }
                    min_clear = min_clear.min(d - robot_r);
                }
                if crashed {
                    break;
                }
                if p.distance_to_point(input.goal) <= goal_r {
                    reached = true;
                    break;
                }
            }
            let score = (!crashed).then(|| {
                let heading = if reached {
                    1.0
                } else {
                    let bearing = (input.goal[1] - p.y).atan2(input.goal[0] - p.x);
                    1.0 - normalize_angle(bearing - p.theta).abs() / std::f64::consts::PI
                };
                let clearance = min_clear.clamp(0.0, max_range) / max_range;
                config.w_heading * heading
                    + config.w_clearance * clearance
                    + config.w_velocity * action.v / limits.v_max
            });
            CandidateScore {
                action,
                index,
                score,
            }
        })
        .collect()
}

/// Best candidate by score; near-ties go to the smaller `|w|`, then the
/// smaller index. If every candidate crashes, rotates in place at `w_max`.
pub fn dwa_suggest(input: &DwaInput<'_>, config: &DwaConfig) -> Action {
    let blocked = Action::new(0.0, ActionLimits::for_map(input.map_size).w_max);
    // a zero range means the sensor origin is inside an obstacle
    if input.ranges.iter().any(|&r| r <= 0.0) {
        return blocked;
    }
    let scores = score_candidates(input, config);
    let mut best: Option<(f64, &CandidateScore)> = None;
    for c in &scores {
        let Some(s) = c.score else { continue };
        match best {
            None => best = Some((s, c)),
            Some((bs, bc)) => {
                if s > bs + SCORE_TIE
                    || ((s - bs).abs() <= SCORE_TIE && c.action.w.abs() < bc.action.w.abs() - 1e-12)
                {
                    best = Some((s, c));
                }
            }
        }
    }
    match best {
        Some((_, c)) => c.action,
        None => blocked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom2d::{lidar_scan, rotate_point, rotate_pose, Circle, WorldMap};
    use std::f64::consts::PI;

    fn suggest(world: &WorldMap, pose: Pose, goal: [f64; 2]) -> Action {
        let ranges = lidar_scan(pose, world, &[]);
        dwa_suggest(
            &DwaInput {
                pose,
                ranges: &ranges,
                goal,
                map_size: world.map_size,
            },
            &DwaConfig::default(),
        )
    }

    #[test]
    fn goal_straight_ahead_full_speed() {
        let w = WorldMap::empty(128.0);
        let a = suggest(&w, Pose::new(20.0, 64.0, 0.0), [100.0, 64.0]);
        assert!((a.v - 6.4).abs() < 1e-12);
        assert_eq!(a.w, 0.0);
    }

    #[test]
    fn goal_straight_ahead_matches_exhaustive_oracle() {
        // every candidate scored by hand: straight at v_max dominates
        let w = WorldMap::empty(128.0);
        let pose = Pose::new(20.0, 64.0, 0.0);
        let ranges = lidar_scan(pose, &w, &[]);
        let input = DwaInput {
            pose,
            ranges: &ranges,
            goal: [100.0, 64.0],
            map_size: 128.0,
        };
        let cfg = DwaConfig::default();
        let scores = score_candidates(&input, &cfg);
        let best = scores
            .iter()
            .filter_map(|c| c.score.map(|s| (s, c.action)))
            .fold(
                (f64::MIN, Action::STOP),
                |acc, x| if x.0 > acc.0 { x } else { acc },
            );
        assert_eq!(best.1, dwa_suggest(&input, &cfg));
        assert!((best.0 - (1.0 + 1.0 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn wall_ahead_choice_is_crash_free() {
        let mut w = WorldMap::empty(128.0);
        for k in 0..9 {
            w.obstacles
                .push(Circle::new(30.0, 52.0 + 3.0 * k as f64, 2.0));
        }
        let pose = Pose::new(25.0 - 2.56, 64.0, 0.0);
        let a = suggest(&w, pose, [60.0, 64.0]);
        let mut p = pose;
        for _ in 0..5 {
            p = step_kinematics(p, a);
            assert_eq!(
                crate::geom2d::check_crash(p, &w, &[]),
                crate::geom2d::CrashKind::None
            );
        }
    }

    #[test]
    fn goal_behind_turns_hardest_among_best() {
        let w = WorldMap::empty(128.0);
        let pose = Pose::new(64.0, 64.0, 0.0);
        let goal = [30.0, 64.0];
        let ranges = lidar_scan(pose, &w, &[]);
        let input = DwaInput {
            pose,
            ranges: &ranges,
            goal,
            map_size: 128.0,
        };
        let cfg = DwaConfig::default();
        let scores = score_candidates(&input, &cfg);
        let max = scores
            .iter()
            .filter_map(|c| c.score)
            .fold(f64::MIN, f64::max);
        let top_w = scores
            .iter()
            .filter(|c| c.score.is_some_and(|s| (s - max).abs() <= 1e-9))
            .map(|c| c.action.w.abs())
            .fold(0.0, f64::max);
        let a = dwa_suggest(&input, &cfg);
        assert!(a.w.abs() >= top_w - 1e-12);
        assert!(a.w.abs() > 0.0);
    }

    #[test]
    fn inside_obstacle_is_all_blocked() {
        let mut w = WorldMap::empty(128.0);
        w.obstacles.push(Circle::new(64.0, 64.0, 6.0));
        let a = suggest(&w, Pose::new(64.0, 64.0, 0.0), [100.0, 100.0]);
        assert_eq!(a, Action::new(0.0, PI / 4.0));
    }

    #[test]
    fn deterministic_and_rotation_equivariant() {
        let mut w = WorldMap::empty(128.0);
        w.obstacles.push(Circle::new(70.0, 60.0, 5.0));
        w.obstacles.push(Circle::new(50.0, 75.0, 7.0));
        let pose = Pose::new(60.0, 55.0, 0.4);
        let goal = [90.0, 80.0];
        let a1 = suggest(&w, pose, goal);
        assert_eq!(a1, suggest(&w, pose, goal));
        let c = [64.0, 64.0];
        let rot = PI / 2.0;
        let w2 = WorldMap {
            map_size: 128.0,
            obstacles: w
                .obstacles
                .iter()
                .map(|o| {
                    let [x, y] = rotate_point([o.cx, o.cy], c, rot);
                    Circle::new(x, y, o.radius)
                })
                .collect(),
        };
        let a2 = suggest(&w2, rotate_pose(pose, c, rot), rotate_point(goal, c, rot));
        assert!((a1.v - a2.v).abs() < 1e-12);
        assert!((a1.w - a2.w).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(DwaConfig::default().validate().is_ok());
        let bad = DwaConfig {
            v_samples: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
