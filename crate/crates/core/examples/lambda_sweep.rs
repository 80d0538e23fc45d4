//! Two-level objective on disjoint supports: the exact minimizer approaches
//! the target as the weight on the contamination term grows.
//!
//! cargo run --release --example lambda_sweep

use purigan::oracle::{verify_theorem, SuiteConfig};

fn main() -> purigan::Result<()> {
    let suite = SuiteConfig { support_sizes: vec![2, 4], ..SuiteConfig::theorem1() };
    println!("{:>4} {:>2} {:>7} {:>8} {:>9} {:>9}  passed", "pi", "K", "lambda", "TV", "V", "bound");
    for r in verify_theorem(1, &suite)? {
        println!(
            "{:>4} {:>2} {:>7} {:>8.4} {:>9.5} {:>9.5}  {}",
            r.pi, r.support_size, r.lambda_or_d, r.tv_to_target, r.v_at_solution, r.analytic_bound, r.passed
        );
    }
    Ok(())
}
