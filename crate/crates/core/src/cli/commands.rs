use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::svg::{scatter, Layer};
use super::{CliError, Command, Log, EXIT_OK, EXIT_RUNTIME};
use crate::contamination::{read_label_file, read_points_csv, ContaminatedDataset};
use crate::error::{Error, Result};
use crate::metrics::{auroc, f1_accuracy};
use crate::oracle::{verify_theorem, VerificationReport};
use crate::scenarios::{fraction_near_modes, Scenario};
use crate::tasks::{anomaly_scores, label_points, raw_scores, write_scores_csv};
use crate::trainer::{
    generate, load_checkpoint, run_until, save_checkpoint, write_history_csv, Evaluator, TrainState,
};

pub const VERIFY_FILE: &str = "verify.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const FINAL_METRICS_FILE: &str = "final_metrics.csv";
pub const SCATTER_FILE: &str = "samples.svg";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_RUNS_FILE: &str = "sweep_runs.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const TASK_METRICS_FILE: &str = "task_metrics.csv";
pub const DATASET_DIR: &str = "dataset";

pub const VERIFY_HEADER: [&str; 16] = [
    "theorem",
    "pi",
    "lambda_or_d",
    "K",
    "tv",
    "v_at_solution",
    "bound",
    "gap",
    "passed",
    "runtime_ms",
    "seed",
    "method_agreement",
    "pg_converged",
    "trend_ok",
    "tv_required",
    "expected_fail",
];

/// Auxiliary random streams derived from a run seed.
const EVAL_STREAM: u64 = 1;
const PLOT_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Checks that need no output directory, so usage errors leave no artifacts.
pub fn precheck(command: &Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    match command {
        Command::Verify { .. } => {
            cfg.verify.suite(cfg.seed)?;
        }
        Command::Train | Command::Contaminate => {
            cfg.distributions.scenario()?;
            let c = &cfg.contamination;
            if !(0.0..1.0).contains(&c.gamma_p) || !(0.0..=1.0).contains(&c.gamma_c) || c.n_target == 0 {
                return Err(CliError::usage("contamination: need n_target > 0, 0 <= gamma_p < 1, 0 <= gamma_c <= 1"));
            }
            if matches!(command, Command::Train) {
                let (obj, _) = cfg.objective.resolve(1.0 - c.gamma_p)?;
                cfg.train.to_train_config(obj, cfg.seed)?;
            }
        }
        Command::Sweep => {
            let s = &cfg.sweep;
            if s.gamma_p.is_empty() || s.gamma_c.is_empty() || s.n_seeds == 0 {
                return Err(CliError::usage("sweep: gamma_p, gamma_c and n_seeds must be non-empty"));
            }
            if s.assumed_pi.as_ref().is_some_and(|p| p.is_empty()) {
                return Err(CliError::usage("sweep.assumed_pi is empty (omit it to use 1 - gamma_p)"));
            }
            if s.gamma_p.iter().any(|g| !(0.0..1.0).contains(g)) || s.gamma_c.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(CliError::usage("sweep: gamma_p must lie in [0, 1) and gamma_c in [0, 1]"));
            }
            cfg.distributions.scenario()?;
            let (obj, _) = cfg.objective.resolve(1.0 - s.gamma_p[0])?;
            cfg.train.to_train_config(obj, cfg.seed)?;
        }
        Command::Tasks { .. } => {
            let ckpt = cfg
                .tasks
                .checkpoint
                .as_ref()
                .ok_or_else(|| CliError::usage("tasks: no checkpoint given (--checkpoint or tasks.checkpoint)"))?;
            if !ckpt.is_file() {
                return Err(CliError::usage(format!("tasks: checkpoint {} not found", ckpt.display())));
            }
            cfg.tasks.policy()?;
            if cfg.tasks.points.is_none() {
                cfg.distributions.scenario()?;
            }
        }
    }
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_verify_csv(path: &Path, reports: &[VerificationReport], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(VERIFY_HEADER)?;
    for r in reports {
        w.write_record([
            r.theorem.to_string(),
            r.pi.to_string(),
            r.lambda_or_d.to_string(),
            r.support_size.to_string(),
            r.tv_to_target.to_string(),
            r.v_at_solution.to_string(),
            r.analytic_bound.to_string(),
            r.bound_gap.to_string(),
            r.passed.to_string(),
            if timing { r.runtime_ms.to_string() } else { String::new() },
            r.seed.to_string(),
            opt(r.method_agreement),
            opt(r.pg_converged),
            r.trend_ok.to_string(),
            r.tv_required.to_string(),
            r.premise_violated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_verify(cfg: &ExperimentConfig, dir: &Path, timing: bool, log: &mut Log) -> Result<i32, CliError> {
    let suite = cfg.verify.suite(cfg.seed)?;
    let reports = verify_theorem(cfg.verify.theorem, &suite)?;
    write_verify_csv(&dir.join(VERIFY_FILE), &reports, timing)?;
    let passed = reports.iter().filter(|r| r.passed).count();
    let expected = reports.iter().filter(|r| !r.passed && r.premise_violated).count();
    let failed = reports.iter().filter(|r| !r.acceptable()).count();
    log.info(format!(
        "theorem {}: {} configurations, {passed} passed, {expected} expected failures (premise violated), {failed} failed",
        cfg.verify.theorem,
        reports.len()
    ));
    Ok(if failed == 0 { EXIT_OK } else { EXIT_RUNTIME })
}

fn build_dataset(cfg: &ExperimentConfig, scenario: &Scenario, gamma_p: f64, gamma_c: f64, seed: u64) -> Result<ContaminatedDataset> {
    scenario.build(
        cfg.contamination.n_target,
        gamma_p,
        gamma_c,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

pub fn cmd_contaminate(cfg: &ExperimentConfig, dir: &Path, log: &mut Log) -> Result<i32, CliError> {
    let scenario = cfg.distributions.scenario()?;
    let c = &cfg.contamination;
    let ds = build_dataset(cfg, &scenario, c.gamma_p, c.gamma_c, cfg.seed)?;
    ds.save(dir)?;
    log.info(format!(
        "mixed {} points ({} contamination), negatives {}, pi {}",
        ds.mixed().nrows(),
        ds.contamination_in_mixed(),
        ds.negatives().nrows(),
        ds.pi()
    ));
    Ok(EXIT_OK)
}

/// Ground-truth summary of a trained state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub step: u64,
    pub frechet: f64,
    pub mmd: f64,
    pub auroc: f64,
    pub near_target: f64,
    pub near_contamination: f64,
}

fn run_metrics(state: &TrainState, scenario: &Scenario, per_class: usize, seed: u64) -> Result<RunMetrics> {
    let last = state
        .history
        .last()
        .ok_or_else(|| Error::Argument("no evaluation was logged".into()))?;
    let (x, labels) = scenario.labeled_sample(per_class, per_class, &mut stream(seed, EVAL_STREAM))?;
    let scores = raw_scores(&state.discriminator, x.view())?;
    let samples = generate(state, 10_000, &mut stream(seed, SAMPLE_STREAM))?;
    Ok(RunMetrics {
        step: last.step,
        frechet: last.frechet,
        mmd: last.mmd,
        auroc: auroc(&scores, &labels)?,
        near_target: fraction_near_modes(samples.view(), &scenario.target, 3.0)?,
        near_contamination: fraction_near_modes(samples.view(), &scenario.contamination, 3.0)?,
    })
}

fn write_final_metrics(path: &Path, variant: &str, m: &RunMetrics) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in [
        ("variant", variant.to_string()),
        ("step", m.step.to_string()),
        ("frechet", m.frechet.to_string()),
        ("mmd", m.mmd.to_string()),
        ("auroc", m.auroc.to_string()),
        ("near_target_3sigma", m.near_target.to_string()),
        ("near_contamination_3sigma", m.near_contamination.to_string()),
    ] {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_scatter(path: &Path, state: &TrainState, scenario: &Scenario, seed: u64) -> Result<()> {
    let mut rng = stream(seed, PLOT_STREAM);
    let t = scenario.target.sample_array(&mut rng, 500)?;
    let c = scenario.contamination.sample_array(&mut rng, 500)?;
    let g = generate(state, 1000, &mut rng)?;
    let svg = scatter(
        &format!("{} after {} generator steps", state.config.objective.variant, state.step),
        &[
            Layer { label: "target", color: "#1f77b4", points: t.view() },
            Layer { label: "contamination", color: "#d62728", points: c.view() },
            Layer { label: "generated", color: "#222222", points: g.view() },
        ],
    );
    std::fs::write(path, svg)?;
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, dir: &Path, log: &mut Log) -> Result<i32, CliError> {
    let scenario = cfg.distributions.scenario()?;
    let c = &cfg.contamination;
    let ds = build_dataset(cfg, &scenario, c.gamma_p, c.gamma_c, cfg.seed)?;
    let (objective, warnings) = cfg.objective.resolve(ds.pi())?;
    warnings.into_iter().for_each(|w| log.warn(w));
    let tcfg = cfg.train.to_train_config(objective, cfg.seed)?;
    ds.save(&dir.join(DATASET_DIR))?;

    let mut state = TrainState::init(tcfg, ds.dimension())?;
    let evaluator = Evaluator::new(&scenario.target, cfg.seed)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let history = dir.join(HISTORY_FILE);
    let total = state.config.total_g_steps as u64;
    let result = run_until(&mut state, &ds.training_data(), &evaluator, total, |s| {
        save_checkpoint(s, &ckpt)?;
        write_history_csv(&history, &s.history)
    });
    if let Err(e) = result {
        return match e {
            Error::TrainingAborted { .. } => Err(CliError::runtime(format!(
                "{e}; partial artifacts kept in {} (checkpoint {})",
                dir.display(),
                if ckpt.exists() { ckpt.display().to_string() } else { "none".into() }
            ))),
            other => Err(other.into()),
        };
    }
    let m = run_metrics(&state, &scenario, 1000, cfg.seed)?;
    write_final_metrics(&dir.join(FINAL_METRICS_FILE), &objective.variant.to_string(), &m)?;
    write_scatter(&dir.join(SCATTER_FILE), &state, &scenario, cfg.seed)?;
    log.info(format!(
        "{} steps: frechet {:.4}, mmd {:.5}, auroc {:.4}, near contamination {:.3}",
        m.step, m.frechet, m.mmd, m.auroc, m.near_contamination
    ));
    Ok(EXIT_OK)
}

#[derive(Debug, Clone)]
struct SweepRun {
    cell: usize,
    gamma_p: f64,
    gamma_c: f64,
    assumed_pi: Option<f64>,
    seed: u64,
}

fn sweep_run(cfg: &ExperimentConfig, scenario: &Scenario, run: &SweepRun, dir: &Path) -> Result<RunMetrics> {
    let ds = build_dataset(cfg, scenario, run.gamma_p, run.gamma_c, run.seed)?;
    let mut objective = cfg.objective.clone();
    if let Some(p) = run.assumed_pi {
        objective.pi = Some(p);
    }
    let (objective, _) = objective.resolve(ds.pi())?;
    let tcfg = cfg.train.to_train_config(objective, run.seed)?;
    let mut state = TrainState::init(tcfg, ds.dimension())?;
    let evaluator = Evaluator::new(&scenario.target, run.seed)?;
    let total = state.config.total_g_steps as u64;
    run_until(&mut state, &ds.training_data(), &evaluator, total, |_| Ok(()))?;
    std::fs::create_dir_all(dir)?;
    write_history_csv(&dir.join(HISTORY_FILE), &state.history)?;
    run_metrics(&state, scenario, cfg.sweep.eval_points_per_class, run.seed)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn cmd_sweep(cfg: &ExperimentConfig, dir: &Path, log: &mut Log) -> Result<i32, CliError> {
    let scenario = cfg.distributions.scenario()?;
    let s = &cfg.sweep;
    let pis: Vec<Option<f64>> = match &s.assumed_pi {
        Some(p) => p.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut cells = Vec::new();
    for &gp in &s.gamma_p {
        for &gc in &s.gamma_c {
            for &pi in &pis {
                cells.push((gp, gc, pi));
            }
        }
    }
    let runs: Vec<SweepRun> = cells
        .iter()
        .enumerate()
        .flat_map(|(cell, &(gamma_p, gamma_c, assumed_pi))| {
            (0..s.n_seeds as u64).map(move |i| SweepRun { cell, gamma_p, gamma_c, assumed_pi, seed: cfg.seed + i })
        })
        .collect();
    let results: Vec<Result<RunMetrics>> = runs
        .par_iter()
        .map(|r| {
            let sub: PathBuf = dir.join("cells").join(format!("cell{:03}", r.cell)).join(format!("seed{}", r.seed));
            sweep_run(cfg, &scenario, r, &sub)
        })
        .collect();

    let mut w = csv::Writer::from_path(dir.join(SWEEP_RUNS_FILE)).map_err(Error::from)?;
    w.write_record(["gamma_p", "gamma_c", "assumed_pi", "seed", "status", "frechet", "mmd", "auroc"])
        .map_err(Error::from)?;
    for (r, res) in runs.iter().zip(&results) {
        let (status, vals) = match res {
            Ok(m) => ("ok".to_string(), [m.frechet.to_string(), m.mmd.to_string(), m.auroc.to_string()]),
            Err(e) => (format!("failed: {e}"), Default::default()),
        };
        let mut rec = vec![r.gamma_p.to_string(), r.gamma_c.to_string(), opt(r.assumed_pi), r.seed.to_string(), status];
        rec.extend(vals);
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;

    let mut w = csv::Writer::from_path(dir.join(SWEEP_FILE)).map_err(Error::from)?;
    w.write_record([
        "gamma_p",
        "gamma_c",
        "assumed_pi",
        "n_runs",
        "n_failed",
        "frechet_mean",
        "frechet_std",
        "mmd_mean",
        "mmd_std",
        "auroc_mean",
        "auroc_std",
    ])
    .map_err(Error::from)?;
    let mut failed_total = 0;
    for (ci, &(gp, gc, pi)) in cells.iter().enumerate() {
        let ok: Vec<&RunMetrics> = runs
            .iter()
            .zip(&results)
            .filter(|(r, _)| r.cell == ci)
            .filter_map(|(_, res)| res.as_ref().ok())
            .collect();
        let failed = s.n_seeds - ok.len();
        failed_total += failed;
        let col = |f: fn(&RunMetrics) -> f64| mean_std(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
        let (fm, fs) = col(|m| m.frechet);
        let (mm, ms) = col(|m| m.mmd);
        let (am, as_) = col(|m| m.auroc);
        w.write_record([
            gp.to_string(),
            gc.to_string(),
            opt(pi),
            s.n_seeds.to_string(),
            failed.to_string(),
            fm.to_string(),
            fs.to_string(),
            mm.to_string(),
            ms.to_string(),
            am.to_string(),
            as_.to_string(),
        ])
        .map_err(Error::from)?;
        log.info(format!(
            "gamma_p {gp} gamma_c {gc} pi {}: frechet {fm:.4} +- {fs:.4}, auroc {am:.4} ({failed} failed)",
            pi.map_or("auto".to_string(), |p| p.to_string())
        ));
    }
    w.flush().map_err(Error::from)?;
    for (r, res) in runs.iter().zip(&results) {
        if let Err(e) = res {
            log.warn(format!("run gamma_p={} gamma_c={} seed={} failed: {e}", r.gamma_p, r.gamma_c, r.seed));
        }
    }
    Ok(if failed_total == 0 { EXIT_OK } else { EXIT_RUNTIME })
}

fn tasks_points(cfg: &ExperimentConfig, dim: usize, log: &mut Log) -> Result<(Array2<f64>, Option<Vec<bool>>), CliError> {
    let t = &cfg.tasks;
    match &t.points {
        Some(p) => {
            let points = read_points_csv(p, Some(dim))?;
            let labels = match &t.labels {
                Some(l) if l.is_file() => Some(read_label_file(l)?),
                Some(l) => {
                    log.warn(format!("label file {} not found; metrics skipped", l.display()));
                    None
                }
                None => {
                    log.warn("no label file configured; metrics skipped");
                    None
                }
            };
            if let Some(l) = &labels {
                if l.len() != points.nrows() {
                    return Err(CliError::usage(format!("{} labels for {} points", l.len(), points.nrows())));
                }
            }
            Ok((points, labels))
        }
        None => {
            let scenario = cfg.distributions.scenario()?;
            let n = t.eval_points_per_class;
            let (x, l) = scenario.labeled_sample(n, n, &mut stream(cfg.seed, EVAL_STREAM))?;
            Ok((x, Some(l)))
        }
    }
}

pub fn cmd_tasks(cfg: &ExperimentConfig, dir: &Path, log: &mut Log) -> Result<i32, CliError> {
    let ckpt = cfg.tasks.checkpoint.as_ref().expect("prechecked");
    let state = load_checkpoint(ckpt)?;
    let policy = cfg.tasks.policy()?;
    let (points, labels) = tasks_points(cfg, state.data_dim(), log)?;
    let mut scored = anomaly_scores(&state.discriminator, points.view())?;
    label_points(&mut scored, policy)?;
    write_scores_csv(&dir.join(SCORES_FILE), &scored, labels.as_deref())?;
    log.info(format!("scored {} points", scored.len()));
    if let Some(labels) = labels {
        let scores: Vec<f64> = scored.iter().map(|p| p.score).collect();
        let preds: Vec<bool> = scored.iter().map(|p| p.predicted_label.unwrap_or(false)).collect();
        let mut rows = Vec::new();
        match auroc(&scores, &labels) {
            Ok(a) => rows.push(("auroc", a)),
            Err(e) => log.warn(format!("auroc skipped: {e}")),
        }
        let (f1, acc) = f1_accuracy(&preds, &labels)?;
        rows.push(("f1", f1));
        rows.push(("accuracy", acc));
        let mut w = csv::Writer::from_path(dir.join(TASK_METRICS_FILE)).map_err(Error::from)?;
        w.write_record(["metric", "value"]).map_err(Error::from)?;
        for (k, v) in &rows {
            w.write_record([k.to_string(), v.to_string()]).map_err(Error::from)?;
            log.info(format!("{k} {v:.4}"));
        }
        w.flush().map_err(Error::from)?;
    }
    Ok(EXIT_OK)
}
