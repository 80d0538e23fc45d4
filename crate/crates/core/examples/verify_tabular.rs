//! Exact minimizer of the three-level generator objective on a small finite
//! support, with and without the consistent choice of `d`.
//!
//! cargo run --release --example verify_tabular

use purigan::objectives::{theorem2_d, ObjectiveConfig};
use purigan::oracle::{minimize_v_g, tabular_instance, MethodChoice, TV_TOLERANCE};

fn main() -> purigan::Result<()> {
    let (p_plus, p_minus) = tabular_instance(3, true, 7)?;
    println!("p+ = {:?}\np- = {:?}", p_plus.mass(), p_minus.mass());
    for pi in [0.3, 0.6] {
        let d = theorem2_d(pi)?;
        for (label, d) in [("consistent d", d), ("d = 0", 0.0)] {
            let cfg = ObjectiveConfig::three_level(pi)?.with_d(d);
            let (p_g, r) = minimize_v_g(&p_plus, &p_minus, &cfg, MethodChoice::Both, TV_TOLERANCE, 0)?;
            println!(
                "pi {pi}  {label:<13} (d = {d:+.4}): p_g* = {:.3?}  TV {:.4}  V {:.5} >= bound {:.5}",
                p_g.mass(),
                r.tv_to_target,
                r.v_at_solution,
                r.analytic_bound
            );
        }
    }
    Ok(())
}
