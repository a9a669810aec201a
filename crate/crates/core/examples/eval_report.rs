//! Evaluation report of the bare DWA controller: success rate, makespan and
//! delay statistics against the solitary baseline.
//!
//! `cargo run --release --example eval_report -- [agents] [obstacles] [episodes]`

use fairnav::eval::{evaluate, EvalConfig};
use fairnav::ncf2::PolicyKind;
use fairnav::nets::{BundleConfig, PolicyBundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arg = |i: usize, d: usize| {
        std::env::args()
            .nth(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or(d)
    };
    let cfg = EvalConfig {
        policy: PolicyKind::Dwa,
        agents: arg(1, 3),
        obstacles: arg(2, 5),
        episodes: arg(3, 20),
        workers: 4,
        ..EvalConfig::default()
    };
    let models = PolicyBundle::new(
        BundleConfig {
            hidden: 4,
            key_dim: 2,
            ..BundleConfig::default()
        },
        0,
    );
    print!("{}", evaluate(&models, &cfg)?.to_json());
    Ok(())
}
