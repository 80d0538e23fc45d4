//! Trains three objectives on the two-moons task and compares them to the target.
//!
//! cargo run --release --example train_toy -- [seed]

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use purigan::objectives::ObjectiveConfig;
use purigan::scenarios::{fraction_near_modes, Scenario, ScenarioKind};
use purigan::trainer::{generate, train, TrainConfig};

fn main() -> purigan::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let scenario = Scenario::new(ScenarioKind::TwoMoons);
    let ds = scenario.build(1000, 0.4, 0.2, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let pi = ds.pi();
    for objective in [
        ObjectiveConfig::lsgan(),
        ObjectiveConfig::two_level(1.0),
        ObjectiveConfig::three_level(pi)?,
    ] {
        let start = Instant::now();
        let cfg = TrainConfig { objective, seed, ..TrainConfig::default() };
        let state = train(cfg, ds.training_data(), &scenario.target)?;
        let last = state.history.last().expect("history");
        let samples = generate(&state, 10_000, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let bad = fraction_near_modes(samples.view(), &scenario.contamination, 3.0)?;
        println!(
            "{:<12} frechet {:>8.4}  mmd {:>8.5}  near contamination {:>5.1}%  ({:.1}s)",
            objective.variant.to_string(),
            last.frechet,
            last.mmd,
            100.0 * bad,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
