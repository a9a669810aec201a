//! The message encoder treats its input as a set: reordering the neighbor
//! rows leaves the encoding unchanged, and no neighbors give zeros.

use fairnav::nets::{attention_encode, MessageEncoder, ParamSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ps = ParamSet::new();
    let enc = MessageEncoder::init(&mut ps, "msg", (3, 3), 32, 8, &mut rng);
    for k in [0usize, 1, 3, 6] {
        let rows: Vec<f32> = (0..3 * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<f32> = order
            .iter()
            .flat_map(|&r| rows[3 * r..3 * r + 3].to_vec())
            .collect();
        let a = attention_encode(&enc, &ps, &rows, &rows, k);
        let b = attention_encode(&enc, &ps, &shuffled, &shuffled, k);
        let diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        println!(
            "K={k}: |encoding| {:.4}, change under reordering {diff:.1e}",
            a.iter().map(|x| x * x).sum::<f32>().sqrt()
        );
    }
}
