//! Cross-module properties checked on random inputs.

use fairnav::env::{generate_scenario, EnvParams, Family};
use fairnav::eval::delay_stats;
use fairnav::io::{parse_scenario, parse_trace, scenario_to_text, trace_to_text, Trace};
use fairnav::ncf2::{run_episode, PolicyKind, ProtocolConfig};
use fairnav::nets::{BundleConfig, PolicyBundle};
use fairnav::plot::render_svg;
use proptest::prelude::*;

fn tiny_bundle() -> PolicyBundle {
    PolicyBundle::new(
        BundleConfig {
            hidden: 8,
            key_dim: 4,
            ..BundleConfig::default()
        },
        3,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Population variance against the pairwise form
    /// `sum_ij (d_i - d_j)^2 / (2 n^2)`.
    #[test]
    fn delay_variance_matches_pairwise_form(delays in prop::collection::vec(-100i32..100, 1..16)) {
        let d: Vec<f64> = delays.iter().map(|&x| f64::from(x)).collect();
        let n = d.len() as f64;
        let pairwise: f64 = d.iter().flat_map(|a| d.iter().map(move |b| (a - b) * (a - b))).sum::<f64>() / (2.0 * n * n);
        let s = delay_stats(&d);
        prop_assert!((s.variance - pairwise).abs() < 1e-12, "{} vs {}", s.variance, pairwise);
        prop_assert_eq!(s.max, d.iter().copied().fold(f64::MIN, f64::max));
        prop_assert!(s.variance >= 0.0);
    }

    #[test]
    fn scenarios_round_trip_through_text(seed in 0u64..10_000, agents in 1usize..9, corner in any::<bool>()) {
        let fam = if corner { Family::Corner } else { Family::Uniform };
        let s = generate_scenario(fam, agents, 10, seed).unwrap();
        prop_assert_eq!(parse_scenario(&scenario_to_text(&s)).unwrap(), s);
    }

    #[test]
    fn plots_depend_only_on_the_trace_file(seed in 0u64..1000) {
        let s = generate_scenario(Family::Uniform, 3, 5, seed).unwrap();
        let out = run_episode(&s, &tiny_bundle(), &ProtocolConfig::new(PolicyKind::Ncf2, true, seed, 0), &EnvParams::default(), false);
        let text = trace_to_text(&Trace { scenario: s, rows: out.trace });
        let a = render_svg(&parse_trace(&text).unwrap());
        let b = render_svg(&parse_trace(&text).unwrap());
        prop_assert_eq!(a, b);
    }
}
