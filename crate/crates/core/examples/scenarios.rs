//! Scenario generation for both families, written in the text format.
//!
//! `cargo run --example scenarios -- [agents] [obstacles] [seed]`

use fairnav::env::{generate_scenario, Family};
use fairnav::io::scenario_to_text;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arg = |i: usize, d: u64| {
        std::env::args()
            .nth(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or(d)
    };
    let (agents, obstacles, seed) = (arg(1, 4) as usize, arg(2, 25) as usize, arg(3, 0));
    for family in [Family::Uniform, Family::Corner] {
        let s = generate_scenario(family, agents, obstacles, seed)?;
        s.validate()?;
        let shortest = s
            .starts
            .iter()
            .zip(&s.goals)
            .map(|(p, g)| p.distance_to_point(*g))
            .fold(f64::INFINITY, f64::min);
        println!("{family}: shortest start-goal distance {shortest:.1}");
        print!("{}", scenario_to_text(&s));
    }
    Ok(())
}
