//! Builds a contaminated dataset plus negatives and writes it as CSV.
//!
//! cargo run --release --example contaminate -- [out_dir]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use purigan::contamination::{contamination_count, ContaminatedDataset};
use purigan::scenarios::{Scenario, ScenarioKind};

fn main() -> purigan::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "dataset_out".into());
    let scenario = Scenario::new(ScenarioKind::DisjointPair);
    let ds = scenario.build(1000, 0.3, 0.2, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!(
        "mixed {} rows ({} contamination, expected {}), negatives {}, pi {:.3}",
        ds.mixed().nrows(),
        ds.contamination_in_mixed(),
        contamination_count(1000, 0.3),
        ds.negatives().nrows(),
        ds.pi()
    );
    ds.save(dir.as_ref())?;
    let back = ContaminatedDataset::load(dir.as_ref())?;
    assert_eq!(back.mixed(), ds.mixed());
    println!("saved to {dir}/ and reloaded");
    Ok(())
}
