//! The filter reward for a stopped agent and the variance identity behind it.

use fairnav::ncf2::{
    fairness_efficiency_reward, weighted_variance, weighted_variance_grad, Denominator,
    FairnessConstants,
};

fn main() {
    let rho = [1.0, 2.0, 3.0];
    let xi = [0.0, 0.5, 1.0];
    let c = FairnessConstants::default();
    for f in [0, 1] {
        let r = fairness_efficiency_reward(f, 0, &rho, &xi, &[1, 2], c, Denominator::WithSelf);
        println!("agent 0 with f={f}: reward {r:.6}");
    }

    // a stop that helps more patient neighbors lowers the weighted variance
    let (rho, xi) = ([4.0, 1.0, 2.5, 7.0], [0.3, 1.2, 0.8, 0.5]);
    let lhs: f64 = (1..4).map(|j| (rho[j] - rho[0]) * xi[j]).sum();
    let s: f64 = xi.iter().sum();
    let k = s * s / (2.0 * xi[0]);
    println!("weighted variance {:.4}", weighted_variance(&rho, &xi));
    println!("sum_j (rho_j - rho_0) xi_j = {lhs:.12}");
    println!(
        "-K dV/drho_0             = {:.12}",
        -k * weighted_variance_grad(&rho, &xi, 0)
    );
}
