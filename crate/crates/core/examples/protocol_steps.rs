//! Step-by-step view of the message protocol with an untrained bundle:
//! patience, decisions, improvements and filter rewards.

use fairnav::env::{env_step, generate_scenario, AgentState, EnvParams, Family};
use fairnav::ncf2::{step_protocol, PatienceLedger, PolicyKind, ProtocolConfig};
use fairnav::nets::{BundleConfig, PolicyBundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = generate_scenario(Family::Uniform, 6, 0, 11)?;
    let bundle = PolicyBundle::new(
        BundleConfig {
            hidden: 32,
            key_dim: 8,
            ..BundleConfig::default()
        },
        1,
    );
    let cfg = ProtocolConfig::new(PolicyKind::Ncf2, true, 1, 0);
    let params = EnvParams::default();
    let mut states: Vec<AgentState> = s.starts.iter().map(|p| AgentState::new(*p)).collect();
    let mut ledger = PatienceLedger::new(s.n_agents());
    for t in 1..=12 {
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
        states = env_step(&s.world, &s.goals, &states, &rec.actions, t, &params).states;
        if t % 4 != 0 {
            continue;
        }
        println!("t={t}");
        for i in 0..s.n_agents() {
            println!(
                "  agent {i}: neighbors {:?} rho {:+.3} f {} xi {:+.3} r {:+.4}",
                rec.neighbors[i], rec.rho[i], rec.f[i], rec.xi[i], rec.r_tilde[i]
            );
        }
    }
    println!("patience after 12 steps: {:?}", ledger.values());
    Ok(())
}
