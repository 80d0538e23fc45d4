//! PU classification: the unlabeled mixture is split by the discriminator,
//! labeling the top pi fraction as positive.
//!
//! cargo run --release --example pu_learning

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use purigan::metrics::f1_accuracy;
use purigan::objectives::ObjectiveConfig;
use purigan::scenarios::{Scenario, ScenarioKind};
use purigan::tasks::{pu_classify, ThresholdPolicy};
use purigan::trainer::{train, TrainConfig};

fn main() -> purigan::Result<()> {
    let scenario = Scenario::new(ScenarioKind::PuSeparable);
    for seed in 0..3 {
        let ds = scenario.build(1000, 0.5, 0.2, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let cfg = TrainConfig { objective: ObjectiveConfig::two_level(5.0), seed, ..TrainConfig::default() };
        let state = train(cfg, ds.training_data(), &scenario.target)?;
        let pred = pu_classify(&state.discriminator, ds.mixed(), ThresholdPolicy::Quantile(ds.pi()))?;
        let (f1, acc) = f1_accuracy(&pred, ds.hidden_labels())?;
        println!("seed {seed}: F1 {f1:.3}  accuracy {acc:.3}");
    }
    Ok(())
}
