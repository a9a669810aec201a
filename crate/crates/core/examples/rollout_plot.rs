//! One DWA episode written as a trace file and rendered to SVG.
//!
//! `cargo run --example rollout_plot -- [out_dir]`

use fairnav::env::{generate_scenario, EnvParams, Family};
use fairnav::io::{trace_to_text, write_file, Trace};
use fairnav::ncf2::{run_episode, PolicyKind, ProtocolConfig};
use fairnav::nets::{BundleConfig, PolicyBundle};
use fairnav::plot::render_svg;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    // the DWA policy never queries the networks
    let models = PolicyBundle::new(
        BundleConfig {
            hidden: 4,
            key_dim: 2,
            ..BundleConfig::default()
        },
        0,
    );
    let run = |seed| -> Result<_, Box<dyn std::error::Error>> {
        let s = generate_scenario(Family::Uniform, 3, 5, seed)?;
        let out = run_episode(
            &s,
            &models,
            &ProtocolConfig::new(PolicyKind::Dwa, false, 0, 0),
            &EnvParams::default(),
            false,
        );
        Ok((s, out))
    };
    // first scenario the controller solves
    let mut seed = 0;
    let (s, out) = loop {
        let (s, out) = run(seed)?;
        if out.result.success || seed == 50 {
            break (s, out);
        }
        seed += 1;
    };
    println!("scenario seed {seed}");
    println!(
        "success {}, {} steps, goal times {:?}",
        out.result.success, out.result.steps, out.result.goal_times
    );
    let trace = Trace {
        scenario: s,
        rows: out.trace,
    };
    write_file(&dir.join("rollout.log"), &trace_to_text(&trace))?;
    write_file(&dir.join("rollout.svg"), &render_svg(&trace))?;
    println!(
        "wrote {} and {}",
        dir.join("rollout.log").display(),
        dir.join("rollout.svg").display()
    );
    Ok(())
}
