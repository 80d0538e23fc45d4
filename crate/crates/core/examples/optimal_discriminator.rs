//! Closed-form optimal discriminator against a brute-force scan of the
//! pointwise objective.
//!
//! cargo run --release --example optimal_discriminator

use purigan::objectives::{
    optimal_discriminator_three_level, optimal_discriminator_two_level, three_level_integrand, two_level_integrand,
};

fn argmin(f: impl Fn(f64) -> f64) -> f64 {
    (0..=30_000).map(|i| -1.0 + i as f64 * 1e-4).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
}

fn main() -> purigan::Result<()> {
    let (p_d, p_g, p_neg) = (0.3, 0.2, 0.1);
    for lambda in [0.5, 1.0, 5.0] {
        let closed = optimal_discriminator_two_level(p_d, p_g, p_neg, lambda)?;
        let scan = argmin(|d| two_level_integrand(d, p_d, p_g, p_neg, lambda));
        println!("two-level   lambda {lambda:<4} D* {closed:.6}  scan {scan:.4}");
    }
    for d in [-0.6, 0.0, 0.6] {
        let closed = optimal_discriminator_three_level(p_d, p_g, p_neg, d)?;
        let scan = argmin(|v| three_level_integrand(v, p_d, p_g, p_neg, d));
        println!("three-level d {d:<5} D* {closed:.6}  scan {scan:.4}");
    }
    Ok(())
}
