//! Planar geometry for circular robots: poses, unicycle kinematics, lidar
//! raycasting and collision tests.
//!
//! Everything here is a pure function over `Copy` values.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Number of lidar beams per scan.
pub const LIDAR_BEAMS: usize = 64;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Robot pose in SE(2). `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_to_point(&self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Circle {
    /// Panics if `radius` is not strictly positive.
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        assert!(radius > 0.0, "circle radius must be positive, got {radius}");
        Self { cx, cy, radius }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.cx).hypot(p[1] - self.cy) < self.radius
    }
}

/// Square world `[0, map_size]^2` with static circular obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub map_size: f64,
    pub obstacles: Vec<Circle>,
}

impl WorldMap {
    pub fn empty(map_size: f64) -> Self {
        Self {
            map_size,
            obstacles: Vec::new(),
        }
    }

    /// Robot body radius, `0.02 * map_size`.
    pub fn robot_radius(&self) -> f64 {
        0.02 * self.map_size
    }

    /// Lidar maximum range, `0.1 * map_size`.
    pub fn lidar_range(&self) -> f64 {
        0.1 * self.map_size
    }

    /// Communication range, `0.15 * map_size`.
    pub fn comm_range(&self) -> f64 {
        0.15 * self.map_size
    }

    /// Goal region radius, `0.02 * map_size`.
    pub fn goal_radius(&self) -> f64 {
        0.02 * self.map_size
    }

    pub fn limits(&self) -> ActionLimits {
        ActionLimits::for_map(self.map_size)
    }
}

/// Velocity command: linear `v` (world units per timestep) and angular `w`
/// (radians per timestep).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub w: f64,
}

impl Action {
    pub const STOP: Action = Action { v: 0.0, w: 0.0 };

    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }
}

/// Velocity caps: `v in [0, v_max]`, `|w| <= w_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionLimits {
    pub v_max: f64,
    pub w_max: f64,
}

impl ActionLimits {
    pub fn for_map(map_size: f64) -> Self {
        Self {
            v_max: 0.05 * map_size,
            w_max: 0.25 * PI,
        }
    }

    pub fn clamp(&self, a: Action) -> Action {
        let v = if a.v.is_nan() {
            0.0
        } else {
            a.v.clamp(0.0, self.v_max)
        };
        let w = if a.w.is_nan() {
            0.0
        } else {
            a.w.clamp(-self.w_max, self.w_max)
        };
        Action { v, w }
    }

    pub fn contains(&self, a: Action) -> bool {
        a.v >= 0.0 && a.v <= self.v_max && a.w.abs() <= self.w_max
    }
}

/// Integrates one unit timestep of unicycle motion exactly along the arc.
pub fn step_kinematics(pose: Pose, action: Action) -> Pose {
    let Action { v, w } = action;
    let th = pose.theta;
    if w.abs() < 1e-9 {
        Pose {
            x: pose.x + v * th.cos(),
            y: pose.y + v * th.sin(),
            theta: normalize_angle(th + w),
        }
    } else {
        let r = v / w;
        Pose {
            x: pose.x + r * ((th + w).sin() - th.sin()),
            y: pose.y - r * ((th + w).cos() - th.cos()),
            theta: normalize_angle(th + w),
        }
    }
}

/// Distance along a unit ray to the first intersection with `c`, or `None`.
/// An origin inside the circle yields `Some(0.0)`. Tangent rays count as hits.
pub fn ray_circle(origin: [f64; 2], dir: [f64; 2], c: &Circle) -> Option<f64> {
    let ox = origin[0] - c.cx;
    let oy = origin[1] - c.cy;
    let cc = ox * ox + oy * oy - c.radius * c.radius;
    if cc <= 0.0 {
        return Some(0.0);
    }
    let b = ox * dir[0] + oy * dir[1];
    let disc = b * b - cc;
    if disc < 0.0 || b > 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Angle of beam `k` relative to the robot heading.
pub fn beam_angle(k: usize) -> f64 {
    2.0 * PI * k as f64 / LIDAR_BEAMS as f64
}

/// 64-beam scan starting at the robot heading, counter-clockwise, each range
/// clipped to `0.1 * map_size`. Map walls are not visible to the sensor.
pub fn lidar_scan(pose: Pose, world: &WorldMap, others: &[Circle]) -> [f64; LIDAR_BEAMS] {
    let max_range = world.lidar_range();
    let origin = pose.position();
    // obstacles that can be hit at all
    let reach = |c: &Circle| (origin[0] - c.cx).hypot(origin[1] - c.cy) - c.radius <= max_range;
    let near: Vec<&Circle> = world
        .obstacles
        .iter()
        .chain(others.iter())
        .filter(|c| reach(c))
        .collect();
    let mut out = [max_range; LIDAR_BEAMS];
    for (k, r) in out.iter_mut().enumerate() {
        let a = pose.theta + beam_angle(k);
        let dir = [a.cos(), a.sin()];
        for c in &near {
            if let Some(t) = ray_circle(origin, dir, c) {
                if t < *r {
                    *r = t;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrashKind {
    None,
    Obstacle,
    Agent,
}

/// Collision test for a robot body at `pose`. Leaving the map counts as an
/// obstacle crash. Obstacle crashes take precedence over agent crashes.
pub fn check_crash(pose: Pose, world: &WorldMap, other_agents: &[Pose]) -> CrashKind {
    let r = world.robot_radius();
    let outside = pose.x - r < 0.0
        || pose.y - r < 0.0
        || pose.x + r > world.map_size
        || pose.y + r > world.map_size;
    if outside
        || world
            .obstacles
            .iter()
            .any(|c| (pose.x - c.cx).hypot(pose.y - c.cy) < c.radius + r)
    {
        return CrashKind::Obstacle;
    }
    if other_agents.iter().any(|o| pose.distance_to(o) < 2.0 * r) {
        return CrashKind::Agent;
    }
    CrashKind::None
}

/// World-frame positional offset of `a` relative to `b`; headings are ignored.
pub fn relative_offset(a: Pose, b: Pose) -> [f64; 2] {
    [a.x - b.x, a.y - b.y]
}

/// Rotates a pose about `center` by `angle`.
pub fn rotate_pose(p: Pose, center: [f64; 2], angle: f64) -> Pose {
    let [x, y] = rotate_point([p.x, p.y], center, angle);
    Pose::new(x, y, p.theta + angle)
}

pub fn rotate_point(p: [f64; 2], center: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    let dx = p[0] - center[0];
    let dy = p[1] - center[1];
    [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn euler(pose: Pose, a: Action, substeps: usize) -> Pose {
        let dt = 1.0 / substeps as f64;
        let (mut x, mut y, mut th) = (pose.x, pose.y, pose.theta);
        for _ in 0..substeps {
            // midpoint heading keeps the oracle second-order accurate
            let mid = th + 0.5 * a.w * dt;
            x += a.v * mid.cos() * dt;
            y += a.v * mid.sin() * dt;
            th += a.w * dt;
        }
        Pose::new(x, y, th)
    }

    #[test]
    fn zero_motion_is_identity() {
        let p = step_kinematics(Pose::new(0.0, 0.0, 0.0), Action::STOP);
        assert_eq!(p, Pose::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn straight_line() {
        let p = step_kinematics(Pose::new(0.0, 0.0, 0.0), Action::new(1.0, 0.0));
        assert_eq!(p, Pose::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_arc_closed_form() {
        let p = step_kinematics(Pose::new(0.0, 0.0, 0.0), Action::new(1.0, PI / 2.0));
        let e = euler(Pose::new(0.0, 0.0, 0.0), Action::new(1.0, PI / 2.0), 1000);
        assert!((p.x - 2.0 / PI).abs() < 1e-9);
        assert!((p.y - 2.0 / PI).abs() < 1e-9);
        assert!((p.theta - PI / 2.0).abs() < 1e-9);
        assert!((p.x - e.x).abs() < 1e-3 && (p.y - e.y).abs() < 1e-3);
    }

    #[test]
    fn normalize_covers_boundaries() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(2.5 * PI) - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn lidar_empty_world_is_max_range() {
        let w = WorldMap::empty(128.0);
        let s = lidar_scan(Pose::new(64.0, 64.0, 0.3), &w, &[]);
        assert!(s.iter().all(|&r| r == 12.8));
    }

    #[test]
    fn lidar_forward_hit() {
        let mut w = WorldMap::empty(128.0);
        w.obstacles.push(Circle::new(10.0, 0.0, 2.0));
        let s = lidar_scan(Pose::new(0.0, 0.0, 0.0), &w, &[]);
        assert!((s[0] - 8.0).abs() < 1e-12);
        assert_eq!(s[32], 12.8);
    }

    #[test]
    fn lidar_inside_obstacle_is_zero() {
        let mut w = WorldMap::empty(128.0);
        w.obstacles.push(Circle::new(50.0, 50.0, 5.0));
        let s = lidar_scan(Pose::new(51.0, 50.0, 1.0), &w, &[]);
        assert!(s.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn lidar_sees_other_agents() {
        let w = WorldMap::empty(128.0);
        let other = Circle::new(60.0, 50.0, w.robot_radius());
        let s = lidar_scan(Pose::new(50.0, 50.0, 0.0), &w, &[other]);
        assert!((s[0] - (10.0 - 2.56)).abs() < 1e-12);
    }

    #[test]
    fn tangent_ray_counts_as_hit() {
        let c = Circle::new(5.0, 1.0, 1.0);
        assert_eq!(ray_circle([0.0, 0.0], [1.0, 0.0], &c), Some(5.0));
    }

    #[test]
    fn crash_thresholds() {
        let w = WorldMap::empty(128.0);
        let a = Pose::new(50.0, 50.0, 0.0);
        assert_eq!(
            check_crash(a, &w, &[Pose::new(55.13, 50.0, 0.0)]),
            CrashKind::None
        );
        assert_eq!(
            check_crash(a, &w, &[Pose::new(55.11, 50.0, 0.0)]),
            CrashKind::Agent
        );
        let mut w2 = w.clone();
        w2.obstacles.push(Circle::new(50.0, 50.0, 3.0));
        assert_eq!(check_crash(a, &w2, &[]), CrashKind::Obstacle);
    }

    #[test]
    fn leaving_map_is_obstacle_crash() {
        let w = WorldMap::empty(128.0);
        assert_eq!(
            check_crash(Pose::new(1.0, 64.0, 0.0), &w, &[]),
            CrashKind::Obstacle
        );
        assert_eq!(
            check_crash(Pose::new(127.0, 64.0, 0.0), &w, &[]),
            CrashKind::Obstacle
        );
        assert_eq!(
            check_crash(Pose::new(2.6, 2.6, 0.0), &w, &[]),
            CrashKind::None
        );
    }

    #[test]
    fn relative_offset_examples() {
        assert_eq!(
            relative_offset(Pose::new(5.0, 5.0, 0.0), Pose::new(3.0, 4.0, 0.0)),
            [2.0, 1.0]
        );
        let p = Pose::new(7.0, -2.0, 1.0);
        assert_eq!(relative_offset(p, p), [0.0, 0.0]);
        assert_eq!(
            relative_offset(Pose::new(6.0, 5.0, 0.0), Pose::new(3.0, 4.0, PI)),
            [3.0, 1.0]
        );
    }

    proptest! {
        #[test]
        fn theta_stays_normalized(x in -50.0..50.0f64, y in -50.0..50.0f64, th in -10.0..10.0f64,
                                  v in 0.0..6.4f64, w in -0.8..0.8f64) {
            let p = step_kinematics(Pose::new(x, y, th), Action::new(v, w));
            prop_assert!(p.theta > -PI && p.theta <= PI);
        }

        #[test]
        fn kinematics_matches_fine_euler(th in -3.1..3.1f64, v in 0.0..6.4f64, w in -0.785..0.785f64) {
            let p0 = Pose::new(10.0, 20.0, th);
            let a = step_kinematics(p0, Action::new(v, w));
            let e = euler(p0, Action::new(v, w), 1000);
            prop_assert!((a.x - e.x).hypot(a.y - e.y) < 1e-3);
        }

        #[test]
        fn agent_crash_is_symmetric(ax in 10.0..118.0f64, ay in 10.0..118.0f64,
                                    dx in -8.0..8.0f64, dy in -8.0..8.0f64) {
            let w = WorldMap::empty(128.0);
            let a = Pose::new(ax, ay, 0.0);
            let b = Pose::new(ax + dx, ay + dy, 1.0);
            let ab = check_crash(a, &w, &[b]) == CrashKind::Agent;
            let ba = check_crash(b, &w, &[a]) == CrashKind::Agent;
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn offset_is_antisymmetric(ax in -100.0..100.0f64, ay in -100.0..100.0f64,
                                   bx in -100.0..100.0f64, by in -100.0..100.0f64) {
            let a = Pose::new(ax, ay, 0.0);
            let b = Pose::new(bx, by, 2.0);
            let ab = relative_offset(a, b);
            let ba = relative_offset(b, a);
            prop_assert_eq!(ab[0], -ba[0]);
            prop_assert_eq!(ab[1], -ba[1]);
        }

        #[test]
        fn lidar_rotation_invariant(px in 40.0..88.0f64, py in 40.0..88.0f64, th in -3.0..3.0f64,
                                    ox in 30.0..98.0f64, oy in 30.0..98.0f64, r in 2.0..8.0f64,
                                    angle in -3.0..3.0f64) {
            let c = [64.0, 64.0];
            let mut w = WorldMap::empty(128.0);
            w.obstacles.push(Circle::new(ox, oy, r));
            let pose = Pose::new(px, py, th);
            let s1 = lidar_scan(pose, &w, &[]);
            let [rx, ry] = rotate_point([ox, oy], c, angle);
            let mut w2 = WorldMap::empty(128.0);
            w2.obstacles.push(Circle::new(rx, ry, r));
            let s2 = lidar_scan(rotate_pose(pose, c, angle), &w2, &[]);
            for k in 0..LIDAR_BEAMS {
                prop_assert!(s1[k] >= 0.0 && s1[k] <= 12.8);
                prop_assert!((s1[k] - s2[k]).abs() < 1e-6);
            }
        }
    }
}
