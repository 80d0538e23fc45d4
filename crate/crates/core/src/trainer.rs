//! Alternating minibatch training of a generator and a least-squares
//! discriminator on continuous data.
//!
//! The trainer only ever sees a [`TrainingData`] view (mixed and negatives),
//! so hidden target/contamination labels cannot reach it. The evaluation
//! density is used for logging metrics, never for gradients.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::contamination::{Part, TrainingData};
use crate::distributions::AnalyticDensity;
use crate::error::{Error, Result};
use crate::metrics::{frechet_from_summaries, median_heuristic, mmd_rbf, GaussianSummary};
use crate::net::{Activation, Mlp, OptimizerState};
use crate::objectives::{discriminator_loss, generator_loss, ObjectiveConfig, Term};

/// Header tag of checkpoint files.
pub const CHECKPOINT_MAGIC: &str = "purigan-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Samples drawn from the generator and from the target for each evaluation.
pub const EVAL_SAMPLES: usize = 2000;
/// MMD is computed on a prefix of the evaluation samples to keep it cheap.
pub const MMD_SAMPLES: usize = 500;

/// Stream reserved for the held-out target samples.
const HELD_OUT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub total_g_steps: usize,
    pub g_learning_rate: f64,
    pub d_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Evaluate and log every this many generator steps (and at the last step).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveConfig::two_level(1.0),
            latent_dim: 2,
            generator_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
            batch_size: 128,
            d_steps_per_g_step: 1,
            total_g_steps: 5000,
            g_learning_rate: 1e-3,
            d_learning_rate: 1e-3,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            eval_every: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        let counts = [
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("d_steps_per_g_step", self.d_steps_per_g_step),
            ("total_g_steps", self.total_g_steps),
            ("eval_every", self.eval_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return Err(Error::Argument("hidden layer sizes must be positive".into()));
        }
        for (name, lr) in [("g_learning_rate", self.g_learning_rate), ("d_learning_rate", self.d_learning_rate)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Argument(format!("{name} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub frechet: f64,
    pub mmd: f64,
}

/// Everything needed to continue training bitwise-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub g_optimizer: OptimizerState,
    pub d_optimizer: OptimizerState,
    /// Completed generator steps.
    pub step: u64,
    rng: ChaCha8Rng,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    /// Fresh networks for data of dimension `data_dim`.
    pub fn init(config: TrainConfig, data_dim: usize) -> Result<Self> {
        config.validate()?;
        if data_dim == 0 {
            return Err(Error::Argument("data dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let g_sizes: Vec<usize> = std::iter::once(config.latent_dim)
            .chain(config.generator_hidden.iter().copied())
            .chain([data_dim])
            .collect();
        let d_sizes: Vec<usize> = std::iter::once(data_dim)
            .chain(config.discriminator_hidden.iter().copied())
            .chain([1])
            .collect();
        let generator = Mlp::new(&g_sizes, Activation::Tanh, &mut rng)?;
        let discriminator = Mlp::new(&d_sizes, Activation::LeakyRelu, &mut rng)?;
        let g_optimizer =
            OptimizerState::with_betas(&generator, config.g_learning_rate, config.adam_beta1, config.adam_beta2);
        let d_optimizer =
            OptimizerState::with_betas(&discriminator, config.d_learning_rate, config.adam_beta1, config.adam_beta2);
        Ok(Self {
            config,
            generator,
            discriminator,
            g_optimizer,
            d_optimizer,
            step: 0,
            rng,
            history: Vec::new(),
        })
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_dim()
    }
}

fn latent_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, dim), || rng.sample(StandardNormal))
}

/// `n` generator samples from standard-normal latents drawn from `rng`.
pub fn generate<R: Rng + ?Sized>(state: &TrainState, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    let z = latent_batch(rng, n, state.generator.input_dim());
    state.generator.forward(z.view())
}

/// Ground-truth metrics against a known target density.
#[derive(Debug, Clone)]
pub struct Evaluator {
    seed: u64,
    held_out: Array2<f64>,
    summary: GaussianSummary,
    bandwidth: f64,
}

impl Evaluator {
    /// Draws [`EVAL_SAMPLES`] held-out target points; the MMD bandwidth is the
    /// median pairwise distance within them, fixed for the whole run.
    pub fn new(target: &AnalyticDensity, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(HELD_OUT_STREAM);
        let held_out = target.sample_array(&mut rng, EVAL_SAMPLES)?;
        let summary = GaussianSummary::fit(held_out.view())?;
        let half = EVAL_SAMPLES / 2;
        let bandwidth = median_heuristic(
            held_out.slice(s![..half, ..]),
            held_out.slice(s![half.., ..]),
            MMD_SAMPLES,
        )?;
        Ok(Self { seed, held_out, summary, bandwidth })
    }

    pub fn held_out(&self) -> ArrayView2<'_, f64> {
        self.held_out.view()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `(frechet, mmd)` of fresh generator samples; the samples come from a
    /// stream keyed by the step, independent of the training stream.
    pub fn evaluate(&self, state: &TrainState) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(state.step);
        let samples = generate(state, EVAL_SAMPLES, &mut rng)?;
        let frechet = frechet_from_summaries(&GaussianSummary::fit(samples.view())?, &self.summary)?;
        let mmd = mmd_rbf(
            samples.slice(s![..MMD_SAMPLES, ..]),
            self.held_out.slice(s![..MMD_SAMPLES, ..]),
            self.bandwidth,
        )?;
        Ok((frechet, mmd))
    }
}

fn split3(v: &[f64], a: usize, b: usize) -> [&[f64]; 3] {
    [&v[..a], &v[a..a + b], &v[a + b..]]
}

fn term_gradients(terms: &[Option<Term>; 3], parts: [&[f64]; 3]) -> Vec<f64> {
    let mut grad = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for (term, part) in terms.iter().zip(parts) {
        match term {
            Some(t) if !part.is_empty() => grad.extend(t.output_gradient(part)),
            _ => grad.extend(std::iter::repeat_n(0.0, part.len())),
        }
    }
    grad
}

fn column(out: &Array2<f64>) -> Vec<f64> {
    out.column(0).to_vec()
}

struct StepBatches {
    data: Array2<f64>,
    negatives: Array2<f64>,
    d_loss: f64,
}

fn discriminator_step(state: &mut TrainState, data: &TrainingData<'_>) -> Result<StepBatches> {
    let cfg = state.config.objective;
    let b = state.config.batch_size;
    let x_data = data.minibatch(Part::Mixed, b, &mut state.rng)?;
    let z = latent_batch(&mut state.rng, b, state.generator.input_dim());
    let x_gen = state.generator.forward(z.view())?;
    let x_neg = if cfg.needs_negatives() {
        data.minibatch(Part::Negatives, b, &mut state.rng)?
    } else {
        Array2::zeros((0, data.dimension()))
    };
    let batch = concatenate(Axis(0), &[x_data.view(), x_gen.view(), x_neg.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    let terms = cfg.discriminator_terms();
    let mut loss = Ok(0.0);
    let (_, grads) = state.discriminator.gradients(batch.view(), |out| {
        let outs = column(out);
        let parts = split3(&outs, b, b);
        loss = discriminator_loss(&cfg, parts[0], parts[1], parts[2]);
        let value = *loss.as_ref().unwrap_or(&f64::NAN);
        let g = term_gradients(&terms, parts);
        (value, Array2::from_shape_vec((g.len(), 1), g).expect("one output per row"))
    })?;
    let d_loss = loss?;
    state.d_optimizer.step(&mut state.discriminator, &grads)?;
    Ok(StepBatches { data: x_data, negatives: x_neg, d_loss })
}

/// Generator update: only the generated-sample term depends on G, so only it
/// is backpropagated through D into G. Returns the full logged loss.
fn generator_step(state: &mut TrainState, last: &StepBatches) -> Result<f64> {
    let cfg = state.config.objective;
    let b = state.config.batch_size;
    let z = latent_batch(&mut state.rng, b, state.generator.input_dim());
    let (x_gen, g_cache) = state.generator.forward_cached(z.view())?;
    let (d_gen, d_cache) = state.discriminator.forward_cached(x_gen.view())?;
    let d_gen = column(&d_gen);
    let d_data = column(&state.discriminator.forward(last.data.view())?);
    let d_neg = if last.negatives.nrows() > 0 {
        column(&state.discriminator.forward(last.negatives.view())?)
    } else {
        Vec::new()
    };
    let g_loss = generator_loss(&cfg, &d_data, &d_gen, &d_neg)?;
    if !g_loss.is_finite() {
        return Err(Error::numeric(None, "non-finite generator loss"));
    }
    let gen_term = cfg.generator_terms()[1].expect("generated term always present");
    let grad_out = Array2::from_shape_vec((b, 1), gen_term.output_gradient(&d_gen)).expect("one output per row");
    let (_, grad_x) = state.discriminator.backward(&d_cache, grad_out.view())?;
    let (g_grads, _) = state.generator.backward(&g_cache, grad_x.view())?;
    state.g_optimizer.step(&mut state.generator, &g_grads)?;
    Ok(g_loss)
}

/// One generator step preceded by `d_steps_per_g_step` discriminator steps.
/// Returns `(d_loss, g_loss)` of the last updates.
pub fn train_step(state: &mut TrainState, data: &TrainingData<'_>) -> Result<(f64, f64)> {
    let mut last = None;
    for _ in 0..state.config.d_steps_per_g_step {
        let batches = discriminator_step(state, data)?;
        if !batches.d_loss.is_finite() {
            return Err(Error::numeric(None, "non-finite discriminator loss"));
        }
        last = Some(batches);
    }
    let last = last.expect("at least one discriminator step");
    let g_loss = generator_step(state, &last)?;
    state.step += 1;
    Ok((last.d_loss, g_loss))
}

fn check_data(cfg: &TrainConfig, data: &TrainingData<'_>, dim: usize) -> Result<()> {
    if data.dimension() != dim {
        return Err(Error::Shape(format!(
            "data has dimension {}, networks expect {dim}",
            data.dimension()
        )));
    }
    if data.mixed.nrows() == 0 {
        return Err(Error::Capacity("mixed dataset is empty".into()));
    }
    if cfg.objective.needs_negatives() && data.negatives.nrows() == 0 {
        return Err(Error::Capacity(format!(
            "{} objective needs negatives but the negatives set is empty",
            cfg.objective.variant
        )));
    }
    Ok(())
}

/// Continues training until `until_step` generator steps are done, logging
/// at every multiple of `eval_every` and at `total_g_steps`. `on_eval` sees
/// the state after each logged step (e.g. to write a checkpoint).
///
/// On a non-finite loss the state is rolled back to the last logged step
/// (or the starting state) and [`Error::TrainingAborted`] is returned.
pub fn run_until(
    state: &mut TrainState,
    data: &TrainingData<'_>,
    evaluator: &Evaluator,
    until_step: u64,
    mut on_eval: impl FnMut(&TrainState) -> Result<()>,
) -> Result<()> {
    check_data(&state.config, data, state.data_dim())?;
    let mut last_good = state.clone();
    let every = state.config.eval_every as u64;
    let total = state.config.total_g_steps as u64;
    while state.step < until_step {
        let losses = match train_step(state, data) {
            Ok(l) => l,
            Err(Error::Numeric { .. }) => {
                let step = state.step + 1;
                *state = last_good;
                return Err(Error::TrainingAborted { step, last_good_step: state.step });
            }
            Err(e) => return Err(e),
        };
        if state.step.is_multiple_of(every) || state.step == total {
            let (frechet, mmd) = match evaluator.evaluate(state) {
                Ok(m) => m,
                Err(Error::Numeric { .. }) => {
                    let step = state.step;
                    *state = last_good;
                    return Err(Error::TrainingAborted { step, last_good_step: state.step });
                }
                Err(e) => return Err(e),
            };
            state.history.push(HistoryRow {
                step: state.step,
                d_loss: losses.0,
                g_loss: losses.1,
                frechet,
                mmd,
            });
            on_eval(state)?;
            last_good = state.clone();
        }
    }
    Ok(())
}

/// Trains from scratch for `cfg.total_g_steps` generator steps.
pub fn train(cfg: TrainConfig, data: TrainingData<'_>, eval_target: &AnalyticDensity) -> Result<TrainState> {
    let mut state = TrainState::init(cfg, data.dimension())?;
    let evaluator = Evaluator::new(eval_target, state.config.seed)?;
    let total = state.config.total_g_steps as u64;
    run_until(&mut state, &data, &evaluator, total, |_| Ok(()))?;
    Ok(state)
}

/// Checkpoint text: a header line `purigan-checkpoint v1 crc32=XXXXXXXX len=N`
/// followed by an N-byte JSON body.
pub fn checkpoint_bytes(state: &TrainState) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(state).map_err(|e| Error::Checkpoint {
        path: Default::default(),
        message: e.to_string(),
    })?;
    let mut out = format!(
        "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} crc32={:08x} len={}\n",
        crc32fast::hash(&body),
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(state)?;
    // Write-then-rename so a crash never leaves a half-written checkpoint under `path`.
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn parse_checkpoint(bytes: &[u8], origin: &str) -> Result<TrainState> {
    let err = |message: String| Error::Checkpoint { path: origin.into(), message };
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| err("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| err("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [magic, version, crc, len] = fields[..] else {
        return Err(err(format!("malformed header {header:?}")));
    };
    if magic != CHECKPOINT_MAGIC {
        return Err(err(format!("not a checkpoint (header starts with {magic:?})")));
    }
    if version != format!("v{CHECKPOINT_VERSION}") {
        return Err(err(format!("unsupported version {version}, expected v{CHECKPOINT_VERSION}")));
    }
    let crc = crc
        .strip_prefix("crc32=")
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or_else(|| err(format!("bad checksum field {crc:?}")))?;
    let len: usize = len
        .strip_prefix("len=")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| err(format!("bad length field {len:?}")))?;
    let body = &bytes[newline + 1..];
    if body.len() != len {
        return Err(err(format!("body is {} bytes, header says {len} (truncated?)", body.len())));
    }
    if crc32fast::hash(body) != crc {
        return Err(err("checksum mismatch".into()));
    }
    serde_json::from_slice(body).map_err(|e| err(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_checkpoint(&bytes, &path.display().to_string())
}

pub const HISTORY_HEADER: [&str; 5] = ["step", "d_loss", "g_loss", "frechet", "mmd"];

pub fn write_history_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        w.write_record([
            r.step.to_string(),
            r.d_loss.to_string(),
            r.g_loss.to_string(),
            r.frechet.to_string(),
            r.mmd.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
