//! Desk-scale training run: all three phases on two agents and five
//! obstacles, then a comparison against the bare DWA controller.
//!
//! `cargo run --release --example train_desk -- [iterations_per_phase]`

use fairnav::eval::{evaluate, EvalConfig};
use fairnav::learn::{run_pipeline_with_log, TrainConfig};
use fairnav::ncf2::PolicyKind;
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iters: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(20_000);
    let mut cfg = TrainConfig::desk();
    cfg.phase_iterations = [iters; 3];
    cfg.sac.iterations = iters;
    cfg.verbose = true;
    let start = Instant::now();
    let mut log = std::io::BufWriter::new(std::fs::File::create("train_desk.log")?);
    let out = run_pipeline_with_log(&cfg, None, &mut log)?;
    println!(
        "trained {} iterations over {} episodes in {:.1} s",
        out.iterations,
        out.episodes,
        start.elapsed().as_secs_f64()
    );
    for policy in [PolicyKind::Dwa, PolicyKind::NavOnly, PolicyKind::Ncf2] {
        let ec = EvalConfig {
            policy,
            family: cfg.family,
            agents: cfg.n_agents,
            obstacles: cfg.n_obstacles,
            episodes: 50,
            seed: 1,
            ..EvalConfig::default()
        };
        let r = evaluate(&out.bundle, &ec)?;
        println!(
            "{:<9} SR {:5.1}  MS {:?}  VD {:?}",
            policy.as_str(),
            r.sr,
            r.ms,
            r.vd
        );
    }
    Ok(())
}
