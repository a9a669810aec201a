use super::EnvError;
use crate::geom2d::{check_crash, Circle, CrashKind, Pose, WorldMap};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Starts and goals anywhere on the map.
    Uniform,
    /// Starts in one of the four corner squares, goals in the diagonally
    /// opposite square.
    Corner,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Uniform => "Uniform",
            Family::Corner => "Corner",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Uniform" | "uniform" => Ok(Family::Uniform),
            "Corner" | "corner" => Ok(Family::Corner),
            other => Err(format!(
                "unknown scenario family {other:?} (expected Uniform or Corner)"
            )),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: Family,
    pub n_obstacles: usize,
    pub seed: u64,
    pub world: WorldMap,
    pub starts: Vec<Pose>,
    pub goals: Vec<[f64; 2]>,
}

impl Scenario {
    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    /// Checks the placement invariants: valid starts, separated goals and
    /// obstacle-free goal regions.
    pub fn validate(&self) -> Result<(), String> {
        let w = &self.world;
        let r = w.robot_radius();
        let gr = w.goal_radius();
        if self.starts.len() != self.goals.len() {
            return Err("starts and goals differ in length".into());
        }
        for (i, s) in self.starts.iter().enumerate() {
            if check_crash(*s, w, &self.starts[..i]) != CrashKind::None {
                return Err(format!("start {i} is in collision"));
            }
        }
        for (i, g) in self.goals.iter().enumerate() {
            if !goal_ok(*g, w) {
                return Err(format!("goal {i} region is not free"));
            }
            for h in &self.goals[..i] {
                if (g[0] - h[0]).hypot(g[1] - h[1]) < 2.0 * (gr + r) {
                    return Err(format!("goal {i} is too close to another goal"));
                }
            }
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 10_000;
const DRAWS_PER_ENTITY: usize = 1_000;

fn goal_ok(g: [f64; 2], w: &WorldMap) -> bool {
    let m = w.goal_radius() + w.robot_radius();
    g[0] >= m
        && g[1] >= m
        && g[0] <= w.map_size - m
        && g[1] <= w.map_size - m
        && w.obstacles
            .iter()
            .all(|c| (g[0] - c.cx).hypot(g[1] - c.cy) >= c.radius + m)
}

fn corner_origin(k: usize, l: f64, side: f64) -> [f64; 2] {
    match k {
        0 => [0.0, 0.0],
        1 => [l - side, 0.0],
        2 => [l - side, l - side],
        _ => [0.0, l - side],
    }
}

/// Samples a scenario by rejection. Identical arguments give identical
/// scenarios. Start headings point at the agent's goal.
pub fn generate_scenario(
    family: Family,
    n_agents: usize,
    n_obstacles: usize,
    seed: u64,
) -> Result<Scenario, EnvError> {
    generate_scenario_on(family, n_agents, n_obstacles, seed, 128.0)
}

pub fn generate_scenario_on(
    family: Family,
    n_agents: usize,
    n_obstacles: usize,
    seed: u64,
    map_size: f64,
) -> Result<Scenario, EnvError> {
    if !(1..=32).contains(&n_agents) {
        return Err(EnvError::InvalidRequest(format!(
            "n_agents must be in 1..=32, got {n_agents}"
        )));
    }
    if n_obstacles > 100 {
        return Err(EnvError::InvalidRequest(format!(
            "n_obstacles must be at most 100, got {n_obstacles}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = map_size;
    let side = 0.2 * l;
    // an attempt is one full sample of agents and obstacles; agents are
    // placed first so dense maps keep their start and goal areas usable
    'restart: for _ in 0..MAX_ATTEMPTS {
        let mut world = WorldMap::empty(l);
        let r = world.robot_radius();
        let gr = world.goal_radius();
        let mut starts: Vec<Pose> = Vec::with_capacity(n_agents);
        let mut goals: Vec<[f64; 2]> = Vec::with_capacity(n_agents);
        for _ in 0..n_agents {
            let mut draws = 0;
            loop {
                draws += 1;
                if draws > DRAWS_PER_ENTITY {
                    continue 'restart;
                }
                let (s, g) = match family {
                    Family::Uniform => (
                        [rng.gen_range(r..l - r), rng.gen_range(r..l - r)],
                        [rng.gen_range(0.0..l), rng.gen_range(0.0..l)],
                    ),
                    Family::Corner => {
                        let k = rng.gen_range(0..4);
                        let so = corner_origin(k, l, side);
                        let go = corner_origin((k + 2) % 4, l, side);
                        (
                            [
                                so[0] + rng.gen_range(0.0..side),
                                so[1] + rng.gen_range(0.0..side),
                            ],
                            [
                                go[0] + rng.gen_range(0.0..side),
                                go[1] + rng.gen_range(0.0..side),
                            ],
                        )
                    }
                };
                let heading = (g[1] - s[1]).atan2(g[0] - s[0]);
                let start = Pose::new(s[0], s[1], heading);
                if check_crash(start, &world, &starts) != CrashKind::None
                    || !goal_ok(g, &world)
                    || goals
                        .iter()
                        .any(|h| (g[0] - h[0]).hypot(g[1] - h[1]) < 2.0 * (gr + r))
                    || (g[0] - s[0]).hypot(g[1] - s[1]) < 0.1 * l
                {
                    continue;
                }
                starts.push(start);
                goals.push(g);
                break;
            }
        }
        for _ in 0..n_obstacles {
            let mut draws = 0;
            loop {
                draws += 1;
                if draws > DRAWS_PER_ENTITY {
                    continue 'restart;
                }
                let c = Circle::new(
                    rng.gen_range(0.0..l),
                    rng.gen_range(0.0..l),
                    rng.gen_range(0.05 * l..=0.08 * l),
                );
                let m = gr + r;
                let blocks_start = starts
                    .iter()
                    .any(|p| (p.x - c.cx).hypot(p.y - c.cy) < c.radius + r);
                let blocks_goal = goals
                    .iter()
                    .any(|g| (g[0] - c.cx).hypot(g[1] - c.cy) < c.radius + m);
                if blocks_start || blocks_goal {
                    continue;
                }
                world.obstacles.push(c);
                break;
            }
        }
        return Ok(Scenario {
            family,
            n_obstacles,
            seed,
            world,
            starts,
            goals,
        });
    }
    Err(EnvError::GenerationFailed {
        family,
        agents: n_agents,
        obstacles: n_obstacles,
        attempts: MAX_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scenario() {
        let a = generate_scenario(Family::Uniform, 8, 25, 17).unwrap();
        let b = generate_scenario(Family::Uniform, 8, 25, 17).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(Family::Uniform, 8, 25, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn obstacle_radii_in_range() {
        let s = generate_scenario(Family::Uniform, 8, 25, 3).unwrap();
        assert_eq!(s.world.obstacles.len(), 25);
        for o in &s.world.obstacles {
            assert!(o.radius >= 6.4 && o.radius <= 10.24);
            assert!(o.cx >= 0.0 && o.cx <= 128.0 && o.cy >= 0.0 && o.cy <= 128.0);
        }
        s.validate().unwrap();
    }

    #[test]
    fn corner_starts_and_goals_are_opposite() {
        for seed in 0..20 {
            let s = generate_scenario(Family::Corner, 4, 25, seed).unwrap();
            s.validate().unwrap();
            let side = 25.6;
            let corner = |p: [f64; 2]| -> Option<usize> {
                (0..4).find(|&k| {
                    let o = corner_origin(k, 128.0, side);
                    p[0] >= o[0] && p[0] <= o[0] + side && p[1] >= o[1] && p[1] <= o[1] + side
                })
            };
            for (st, g) in s.starts.iter().zip(&s.goals) {
                let ks = corner(st.position()).expect("start in a corner square");
                let kg = corner(*g).expect("goal in a corner square");
                assert_eq!(kg, (ks + 2) % 4);
            }
        }
    }

    #[test]
    fn heavy_scenarios_generate() {
        for seed in 0..5 {
            let s = generate_scenario(Family::Corner, 16, 50, seed).unwrap();
            s.validate().unwrap();
            let s = generate_scenario(Family::Uniform, 16, 50, seed).unwrap();
            s.validate().unwrap();
        }
    }

    #[test]
    fn infeasible_density_fails() {
        let err = generate_scenario_on(Family::Corner, 32, 100, 1, 40.0).unwrap_err();
        assert!(matches!(err, EnvError::GenerationFailed { .. }));
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(generate_scenario(Family::Uniform, 0, 25, 1).is_err());
        assert!(generate_scenario(Family::Uniform, 33, 25, 1).is_err());
    }
}
