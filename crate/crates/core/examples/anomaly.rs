//! Anomaly detection with the discriminator of a two-level model: scores on
//! a labeled evaluation set, AUROC, and a quantile threshold.
//!
//! cargo run --release --example anomaly -- [gamma_p]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use purigan::metrics::{auroc, f1_accuracy};
use purigan::objectives::ObjectiveConfig;
use purigan::scenarios::{Scenario, ScenarioKind};
use purigan::tasks::{anomaly_scores, label_points, ThresholdPolicy};
use purigan::trainer::{train, TrainConfig};

fn main() -> purigan::Result<()> {
    let gamma_p: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let scenario = Scenario::new(ScenarioKind::DisjointPair);
    let ds = scenario.build(1000, gamma_p, 0.2, &mut ChaCha8Rng::seed_from_u64(0))?;
    let cfg = TrainConfig { objective: ObjectiveConfig::two_level(1.0), ..TrainConfig::default() };
    let state = train(cfg, ds.training_data(), &scenario.target)?;

    let (x, normal) = scenario.labeled_sample(1000, 1000, &mut ChaCha8Rng::seed_from_u64(1))?;
    let mut points = anomaly_scores(&state.discriminator, x.view())?;
    let scores: Vec<f64> = points.iter().map(|p| p.score).collect();
    // The score is the discriminator output, so high means normal.
    label_points(&mut points, ThresholdPolicy::Quantile(0.5))?;
    let predicted: Vec<bool> = points.iter().map(|p| p.predicted_label.unwrap_or(false)).collect();
    let (f1, acc) = f1_accuracy(&predicted, &normal)?;
    println!("gamma_p {gamma_p}: AUROC {:.4}  F1 {f1:.3}  accuracy {acc:.3}", auroc(&scores, &normal)?);
    Ok(())
}
