//! Success rate and failure causes of the bare dynamic-window controller.
//!
//! `cargo run --release --example dwa_baseline -- [agents] [obstacles] [episodes]`

use fairnav::env::{generate_scenario, EnvParams, Family};
use fairnav::ncf2::{run_episode, PolicyKind, ProtocolConfig};
use fairnav::nets::{BundleConfig, PolicyBundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arg = |i: usize, d: usize| {
        std::env::args()
            .nth(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or(d)
    };
    let (agents, obstacles, episodes) = (arg(1, 2), arg(2, 5), arg(3, 200));
    // the bundle is not queried by the DWA policy
    let models = PolicyBundle::new(
        BundleConfig {
            hidden: 4,
            key_dim: 2,
            ..BundleConfig::default()
        },
        0,
    );
    let params = EnvParams::default();
    let (mut ok, mut crash, mut timeout) = (0, 0, 0);
    for k in 0..episodes as u64 {
        let s = generate_scenario(Family::Uniform, agents, obstacles, k)?;
        let out = run_episode(
            &s,
            &models,
            &ProtocolConfig::new(PolicyKind::Dwa, false, 0, k),
            &params,
            false,
        );
        match out.result.failure {
            None => ok += 1,
            Some(fairnav::env::FailureCause::Crash) => crash += 1,
            Some(_) => timeout += 1,
        }
    }
    println!("Uniform-{agents}-{obstacles}: {ok} successes, {crash} crashes, {timeout} timeouts of {episodes}");
    Ok(())
}
