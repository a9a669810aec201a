//! Built-in oracle and property checks, run by `fairnav selftest`.
//!
//! Each check compares library results against an independent computation
//! on random instances drawn from a fixed seed, so runs are reproducible.

use crate::env::{
    env_step, generate_scenario, AgentState, EnvParams, Family, Observation, Scenario,
};
use crate::eval::delay_stats;
use crate::geom2d::{
    beam_angle, lidar_scan, step_kinematics, Action, Circle, Pose, WorldMap, LIDAR_BEAMS,
};
use crate::ncf2::{
    fairness_efficiency_reward, run_episode, step_protocol, weighted_variance_grad, Denominator,
    FairnessConstants, Models, PatienceLedger, PatienceMessage, PolicyKind, ProtocolConfig,
    StateMessage,
};
use crate::nets::gradcheck::{Fixture, OPS};
use crate::nets::{attention_encode, BundleConfig, MessageEncoder, ParamSet, PolicyBundle};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn small_bundle(seed: u64) -> PolicyBundle {
    PolicyBundle::new(
        BundleConfig {
            hidden: 32,
            key_dim: 8,
            ..BundleConfig::default()
        },
        seed,
    )
}

/// `sum_j (rho_j - rho_i) xi_j = -K dV/drho_i` with `K = (sum xi)^2 / (2 xi_i)`.
pub fn fairness_identity(instances: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = 1 + rng.gen_range(2..=16);
        let rho: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..10.0)).collect();
        let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..2.0)).collect();
        let i = rng.gen_range(0..n);
        let lhs: f64 = (0..n).map(|j| (rho[j] - rho[i]) * xi[j]).sum();
        let s: f64 = xi.iter().sum();
        let k = s * s / (2.0 * xi[i]);
        worst = worst.max((lhs + k * weighted_variance_grad(&rho, &xi, i)).abs());
    }
    result(
        "fairness identity",
        worst < 1e-9,
        format!("max |error| {worst:.2e} over {instances}"),
    )
}

pub fn reward_gate() -> CheckResult {
    let c = FairnessConstants {
        alpha: 0.5,
        beta: 0.1,
    };
    let rho = [1.0, 2.0, 3.0];
    let xi = [0.0, 0.5, 1.0];
    let r = fairness_efficiency_reward(0, 0, &rho, &xi, &[1, 2], c, Denominator::WithSelf);
    // (0.5 * (1 * 0.5 + 2 * 1.0) - 0.1 * 1) / (1 + 2 + 3)
    let expect = 1.15 / 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gate = (0..1000).all(|_| {
        let rho: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let xi: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        fairness_efficiency_reward(1, 0, &rho, &xi, &[1, 2, 3], c, Denominator::WithSelf) == 0.0
    });
    result(
        "reward gate and fixture",
        gate && (r - expect).abs() < 1e-12,
        format!("r = {r:.15}, moving agents get 0: {gate}"),
    )
}

/// Arc integration against a 1000-substep integrator with the heading
/// taken at each substep midpoint.
pub fn kinematics(samples: usize) -> CheckResult {
    let fine = |p: Pose, a: Action| {
        let dt = 1e-3;
        let (mut x, mut y, mut th) = (p.x, p.y, p.theta);
        for _ in 0..1000 {
            let mid = th + 0.5 * a.w * dt;
            x += a.v * mid.cos() * dt;
            y += a.v * mid.sin() * dt;
            th += a.w * dt;
        }
        [x, y]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let p = Pose::new(
            rng.gen_range(0.0..128.0),
            rng.gen_range(0.0..128.0),
            rng.gen_range(-PI..PI),
        );
        let a = Action::new(rng.gen_range(0.0..6.4), rng.gen_range(-PI / 4.0..PI / 4.0));
        let q = step_kinematics(p, a);
        let e = fine(p, a);
        worst = worst.max((q.x - e[0]).hypot(q.y - e[1]));
    }
    let q = step_kinematics(Pose::new(0.0, 0.0, 0.0), Action::new(1.0, PI / 2.0));
    let quarter = (q.x - 2.0 / PI)
        .abs()
        .max((q.y - 2.0 / PI).abs())
        .max((q.theta - PI / 2.0).abs());
    result(
        "kinematics",
        worst < 1e-3 && quarter < 1e-9,
        format!("max position error {worst:.2e}, quarter arc error {quarter:.1e}"),
    )
}

/// First crossing along a ray, found by marching in steps of 0.01 and
/// bisecting the bracketing interval.
pub fn march(origin: [f64; 2], angle: f64, circles: &[Circle], max_range: f64) -> f64 {
    let inside = |s: f64| {
        let p = [origin[0] + s * angle.cos(), origin[1] + s * angle.sin()];
        circles
            .iter()
            .any(|c| (p[0] - c.cx).hypot(p[1] - c.cy) <= c.radius)
    };
    if inside(0.0) {
        return 0.0;
    }
    let step = 0.01;
    let mut s = 0.0;
    while s < max_range {
        let next = (s + step).min(max_range);
        if inside(next) {
            let (mut lo, mut hi) = (s, next);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi;
        }
        s = next;
    }
    max_range
}

/// A random world for lidar checks, plus some other robots' bodies.
pub fn random_lidar_world<R: Rng>(rng: &mut R) -> (WorldMap, Vec<Circle>, Pose) {
    let mut w = WorldMap::empty(128.0);
    let p = Pose::new(
        rng.gen_range(20.0..108.0),
        rng.gen_range(20.0..108.0),
        rng.gen_range(-PI..PI),
    );
    for _ in 0..rng.gen_range(0..12) {
        let (d, a) = (rng.gen_range(0.0..16.0), rng.gen_range(-PI..PI));
        w.obstacles.push(Circle::new(
            p.x + d * a.cos(),
            p.y + d * a.sin(),
            rng.gen_range(0.5..4.0),
        ));
    }
    let others = (0..rng.gen_range(0..4))
        .map(|_| {
            let (d, a) = (rng.gen_range(5.0..14.0), rng.gen_range(-PI..PI));
            Circle::new(p.x + d * a.cos(), p.y + d * a.sin(), w.robot_radius())
        })
        .collect();
    (w, others, p)
}

pub fn lidar(worlds: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..worlds {
        let (w, others, p) = random_lidar_world(&mut rng);
        let scan = lidar_scan(p, &w, &others);
        let all: Vec<Circle> = w.obstacles.iter().chain(&others).copied().collect();
        for (k, &r) in scan.iter().enumerate().take(LIDAR_BEAMS) {
            let m = march(p.position(), p.theta + beam_angle(k), &all, w.lidar_range());
            worst = worst.max((r - m).abs());
        }
    }
    result(
        "lidar",
        worst < 1e-3,
        format!("max beam error {worst:.2e} over {worlds} worlds"),
    )
}

pub fn gradients(per_op: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = (0.0f64, "");
    for op in OPS {
        for _ in 0..per_op {
            let e = Fixture::random(op, &mut rng).max_relative_error(&mut rng);
            if e > worst.0 {
                worst = (e, op);
            }
        }
    }
    result(
        "gradient check",
        worst.0 < 1e-4,
        format!(
            "{} ops x {per_op} fixtures, max relative error {:.2e} ({})",
            OPS.len(),
            worst.0,
            worst.1
        ),
    )
}

pub fn permutation_invariance(trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ps = ParamSet::new();
    let enc = MessageEncoder::init(&mut ps, "m", (3, 3), 32, 8, &mut rng);
    let mut worst = 0.0f64;
    for k in 0..=8 {
        for _ in 0..trials {
            let c: Vec<f32> = (0..3 * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n: Vec<f32> = (0..3 * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut rng);
            let pick = |x: &[f32]| -> Vec<f32> {
                perm.iter()
                    .flat_map(|&r| x[3 * r..3 * r + 3].to_vec())
                    .collect()
            };
            let a = attention_encode(&enc, &ps, &c, &n, k);
            let b = attention_encode(&enc, &ps, &pick(&c), &pick(&n), k);
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs() as f64);
            }
        }
    }
    result(
        "attention permutation",
        worst <= 1e-6,
        format!("max output change {worst:.1e} for K = 0..8"),
    )
}

/// Every agent stopped by the filter keeps its exact pose through the
/// environment step.
pub fn stopped_agents_keep_pose(steps: usize) -> CheckResult {
    let bundle = small_bundle(7);
    let params = EnvParams::default();
    let (mut done, mut stops, mut bad, mut ep) = (0, 0, 0, 0u64);
    while done < steps {
        let s = generate_scenario(Family::Uniform, 4, 10, ep).unwrap();
        let cfg = ProtocolConfig::new(PolicyKind::Ncf2, true, 7, ep);
        let mut states: Vec<AgentState> = s.starts.iter().map(|p| AgentState::new(*p)).collect();
        let mut ledger = PatienceLedger::new(s.n_agents());
        for t in 1..=params.t_max {
            if done >= steps || states.iter().all(|a| !a.is_active()) {
                break;
            }
            let rec = step_protocol(
                &s.world,
                &s.goals,
                &states,
                &mut ledger,
                &bundle,
                &cfg,
                &params,
                t,
            );
            let out = env_step(&s.world, &s.goals, &states, &rec.actions, t, &params);
            for i in 0..s.n_agents() {
                if rec.active[i] && rec.f[i] == 0 {
                    stops += 1;
                    let (a, b) = (states[i].pose, out.states[i].pose);
                    if a.x.to_bits() != b.x.to_bits()
                        || a.y.to_bits() != b.y.to_bits()
                        || a.theta.to_bits() != b.theta.to_bits()
                    {
                        bad += 1;
                    }
                }
            }
            states = out.states;
            done += 1;
        }
        ep += 1;
    }
    result(
        "stopped agents stay put",
        bad == 0 && stops > 0,
        format!("{stops} stop decisions in {done} steps, {bad} moved"),
    )
}

/// Navigation copies the solitary head and the filter always moves, so
/// every executed action is the solitary action.
struct ActsAsSolitary<'a>(&'a PolicyBundle);

impl Models for ActsAsSolitary<'_> {
    fn residual_scale(&self) -> [f64; 2] {
        self.0.residual_scale()
    }
    fn solitary_heads(&self, obs: &[&Observation]) -> Vec<[f64; 4]> {
        self.0.solitary_heads(obs)
    }
    fn solitary_q(&self, obs: &[&Observation], actions: &[Action]) -> Vec<f64> {
        Models::solitary_q(self.0, obs, actions)
    }
    fn filter_logits(&self, obs: &[&Observation], _msgs: &[Vec<PatienceMessage>]) -> Vec<[f64; 2]> {
        vec![[-10.0, 10.0]; obs.len()]
    }
    fn nav_heads(&self, obs: &[&Observation], _msgs: &[Vec<StateMessage>]) -> Vec<[f64; 4]> {
        self.0.solitary_heads(obs)
    }
}

pub fn patience_telescoping(episodes: u64) -> CheckResult {
    let bundle = small_bundle(8);
    let m = ActsAsSolitary(&bundle);
    let params = EnvParams::default();
    let mut nonzero = 0;
    for ep in 0..episodes {
        let s = generate_scenario(Family::Uniform, 4, 10, 100 + ep).unwrap();
        let out = run_episode(
            &s,
            &m,
            &ProtocolConfig::new(PolicyKind::Ncf2, false, 8, ep),
            &params,
            false,
        );
        nonzero += out.final_patience.iter().filter(|&&r| r != 0.0).count();
    }
    result(
        "patience telescoping",
        nonzero == 0,
        format!("{nonzero} nonzero patience values after {episodes} episodes"),
    )
}

fn trace_key(
    s: &Scenario,
    m: &dyn Models,
    cfg: &ProtocolConfig,
) -> Vec<(u32, usize, u64, u64, u64, u64, u64)> {
    run_episode(s, m, cfg, &EnvParams::default(), false)
        .trace
        .iter()
        .map(|r| {
            (
                r.t,
                r.agent,
                r.x.to_bits(),
                r.y.to_bits(),
                r.theta.to_bits(),
                r.v.to_bits(),
                r.w.to_bits(),
            )
        })
        .collect()
}

pub fn nav_only_equivalence(episodes: u64) -> CheckResult {
    let bundle = small_bundle(9);
    let mut differing = 0;
    for ep in 0..episodes {
        let s = generate_scenario(Family::Uniform, 3, 8, 200 + ep).unwrap();
        let nav = ProtocolConfig::new(PolicyKind::NavOnly, true, 9, ep);
        let mut forced = ProtocolConfig::new(PolicyKind::Ncf2, true, 9, ep);
        forced.ablations.force_move = true;
        if trace_key(&s, &bundle, &nav) != trace_key(&s, &bundle, &forced) {
            differing += 1;
        }
    }
    result(
        "nav-only equivalence",
        differing == 0,
        format!("{differing} of {episodes} traces differ"),
    )
}

pub fn dwa_empty_maps(episodes: u64) -> CheckResult {
    let bundle = small_bundle(0);
    let params = EnvParams::default();
    let (mut ok, mut worst_slack) = (0, i64::MAX);
    for ep in 0..episodes {
        let s = generate_scenario(Family::Uniform, 1, 0, 300 + ep).unwrap();
        let out = run_episode(
            &s,
            &bundle,
            &ProtocolConfig::new(PolicyKind::Dwa, false, 0, ep),
            &params,
            false,
        );
        let bound = (s.starts[0].distance_to_point(s.goals[0]) / 6.4).ceil() as i64 + 3;
        if let Some(ms) = out.result.makespan() {
            worst_slack = worst_slack.min(bound - ms as i64);
            if ms as i64 <= bound {
                ok += 1;
            }
        }
    }
    result(
        "dwa on empty maps",
        ok == episodes,
        format!("{ok}/{episodes} within the makespan bound, smallest slack {worst_slack}"),
    )
}

pub fn ablations(episodes: u64) -> CheckResult {
    let bundle = small_bundle(10);
    let params = EnvParams::default();
    let mut failures = Vec::new();
    for ep in 0..episodes {
        let s = generate_scenario(Family::Uniform, 5, 10, 400 + ep).unwrap();
        let n = s.n_agents();
        for which in 0..3 {
            let mut cfg = ProtocolConfig::new(PolicyKind::Ncf2, true, 10, ep);
            match which {
                0 => cfg.ablations.fixed_priority = true,
                1 => cfg.ablations.no_improvement = true,
                _ => cfg.ablations.full_comm = true,
            }
            let mut states: Vec<AgentState> =
                s.starts.iter().map(|p| AgentState::new(*p)).collect();
            let mut ledger = PatienceLedger::new(n);
            for t in 1..=params.t_max {
                if states.iter().all(|a| !a.is_active()) {
                    break;
                }
                let rec = step_protocol(
                    &s.world,
                    &s.goals,
                    &states,
                    &mut ledger,
                    &bundle,
                    &cfg,
                    &params,
                    t,
                );
                let active: Vec<usize> = (0..n).filter(|&i| rec.active[i]).collect();
                let ok = match which {
                    0 => rec.rho.iter().enumerate().all(|(i, &r)| r == i as f64),
                    1 => active.iter().all(|&i| rec.xi[i] == 1.0),
                    _ => active
                        .iter()
                        .all(|&i| rec.neighbors[i].len() == active.len() - 1),
                };
                if !ok {
                    failures.push((ep, which, t));
                }
                states = env_step(&s.world, &s.goals, &states, &rec.actions, t, &params).states;
            }
        }
    }
    result(
        "ablation switches",
        failures.is_empty(),
        format!(
            "{} violating steps over {episodes} episodes per switch",
            failures.len()
        ),
    )
}

pub fn delay_arithmetic() -> CheckResult {
    let d = delay_stats(&[2.0, 4.0, 6.0]);
    let ok = (d.variance - 8.0 / 3.0).abs() < 1e-12 && d.max == 6.0 && d.mean == 4.0;
    result(
        "delay statistics",
        ok,
        format!("VD {:.6}, MAXD {}, MEAND {}", d.variance, d.max, d.mean),
    )
}

/// All checks at their default sizes.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        fairness_identity(10_000),
        reward_gate(),
        stopped_agents_keep_pose(1000),
        patience_telescoping(10),
        kinematics(10_000),
        lidar(100),
        gradients(20),
        permutation_invariance(20),
        nav_only_equivalence(10),
        dwa_empty_maps(100),
        ablations(3),
        delay_arithmetic(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        for r in [
            fairness_identity(500),
            reward_gate(),
            kinematics(500),
            lidar(5),
            gradients(2),
            permutation_invariance(2),
            stopped_agents_keep_pose(100),
            patience_telescoping(2),
            nav_only_equivalence(2),
            dwa_empty_maps(10),
            ablations(1),
            delay_arithmetic(),
        ] {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn march_finds_a_known_hit() {
        let c = [Circle::new(10.0, 0.0, 2.0)];
        assert!((march([0.0, 0.0], 0.0, &c, 12.8) - 8.0).abs() < 1e-9);
        assert_eq!(march([0.0, 0.0], PI, &c, 12.8), 12.8);
    }
}
