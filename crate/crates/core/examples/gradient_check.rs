//! Finite-difference check of every differentiable operator.
//!
//! `cargo run --release --example gradient_check -- [fixtures_per_op]`

use fairnav::nets::gradcheck::{Fixture, OPS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for op in OPS {
        let worst = (0..n)
            .map(|_| Fixture::random(op, &mut rng).max_relative_error(&mut rng))
            .fold(0.0, f64::max);
        println!("{op:<18} {worst:.2e}");
    }
}
