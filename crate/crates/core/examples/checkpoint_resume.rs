//! Interrupting training, saving a checkpoint and resuming gives the same
//! history as an uninterrupted run.
//!
//! cargo run --release --example checkpoint_resume

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use purigan::objectives::ObjectiveConfig;
use purigan::scenarios::{Scenario, ScenarioKind};
use purigan::trainer::{load_checkpoint, run_until, save_checkpoint, train, Evaluator, TrainConfig, TrainState};

fn main() -> purigan::Result<()> {
    let scenario = Scenario::new(ScenarioKind::TwoMoons);
    let ds = scenario.build(1000, 0.4, 0.2, &mut ChaCha8Rng::seed_from_u64(0))?;
    let cfg = TrainConfig {
        objective: ObjectiveConfig::two_level(1.0),
        total_g_steps: 1000,
        eval_every: 250,
        ..TrainConfig::default()
    };
    let full = train(cfg.clone(), ds.training_data(), &scenario.target)?;

    let data = ds.training_data();
    let evaluator = Evaluator::new(&scenario.target, cfg.seed)?;
    let mut state = TrainState::init(cfg, data.dimension())?;
    run_until(&mut state, &data, &evaluator, 500, |_| Ok(()))?;
    let path = std::env::temp_dir().join("purigan_example.ckpt");
    save_checkpoint(&state, &path)?;
    let mut resumed = load_checkpoint(&path)?;
    run_until(&mut resumed, &data, &evaluator, 1000, |_| Ok(()))?;

    for (a, b) in full.history.iter().zip(&resumed.history) {
        println!("step {:>4}: frechet {:.6} vs {:.6}", a.step, a.frechet, b.frechet);
    }
    println!("identical histories: {}", full.history == resumed.history);
    std::fs::remove_file(path)?;
    Ok(())
}
