//! Experiment configuration file (TOML). Every section is optional and every
//! key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::objectives::{theorem2_d, ObjectiveConfig, Variant, DEFAULT_C, DEFAULT_LAMBDA};
use crate::oracle::{MethodChoice, SuiteConfig, TV_TOLERANCE};
use crate::scenarios::{Scenario, ScenarioKind};
use crate::tasks::ThresholdPolicy;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ExperimentConfig {
    /// Base seed for dataset construction, training and verification.
    pub seed: u64,
    pub distributions: DistributionsSection,
    pub contamination: ContaminationSection,
    pub objective: ObjectiveSection,
    pub train: TrainSection,
    pub verify: VerifySection,
    pub sweep: SweepSection,
    pub tasks: TasksSection,
    pub output: OutputSection,
}


/// Either a named preset or explicit target/contamination densities;
/// `two_moons` when nothing is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionsSection {
    pub preset: Option<ScenarioKind>,
    pub target: Option<DistributionSpec>,
    pub contamination: Option<DistributionSpec>,
}

impl DistributionsSection {
    pub fn scenario(&self) -> Result<Scenario> {
        match (&self.preset, &self.target, &self.contamination) {
            (None, None, None) => Ok(Scenario::new(ScenarioKind::TwoMoons)),
            (Some(kind), None, None) => Ok(Scenario::new(*kind)),
            (None, Some(t), Some(c)) => Scenario::custom(t.to_analytic()?, c.to_analytic()?),
            _ => Err(Error::Config(
                "distributions: set either `preset` or both `target` and `contamination`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContaminationSection {
    /// Number of target points in the mixed set.
    pub n_target: usize,
    pub gamma_p: f64,
    pub gamma_c: f64,
}

impl Default for ContaminationSection {
    fn default() -> Self {
        Self { n_target: 1000, gamma_p: 0.4, gamma_c: 0.2 }
    }
}

/// Objective settings. `pi` defaults to `1 - gamma_p`; `d` defaults to the
/// value derived from `pi`. `lambda` only applies to `two_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveSection {
    pub variant: Variant,
    pub lambda: Option<f64>,
    pub c: f64,
    pub d: Option<f64>,
    pub pi: Option<f64>,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self {
            variant: Variant::TwoLevel,
            lambda: None,
            c: DEFAULT_C,
            d: None,
            pi: None,
        }
    }
}

impl ObjectiveSection {
    /// Resolves the objective for a dataset with proportion `data_pi`.
    /// Returns the config and any warnings about ignored keys.
    pub fn resolve(&self, data_pi: f64) -> Result<(ObjectiveConfig, Vec<String>)> {
        let mut warnings = Vec::new();
        let pi = self.pi.unwrap_or(data_pi);
        let cfg = match self.variant {
            Variant::Lsgan => ObjectiveConfig::lsgan(),
            Variant::TwoLevel => ObjectiveConfig::two_level(self.lambda.unwrap_or(DEFAULT_LAMBDA)).with_pi(pi),
            Variant::ThreeLevel => {
                let d = match self.d {
                    Some(d) => d,
                    None => theorem2_d(pi)?,
                };
                ObjectiveConfig::three_level(pi)?.with_d(d)
            }
        }
        .with_c(self.c);
        if self.lambda.is_some() && self.variant != Variant::TwoLevel {
            warnings.push(format!("objective.lambda is ignored for variant {}", self.variant));
        }
        if self.d.is_some() && self.variant != Variant::ThreeLevel {
            warnings.push(format!("objective.d is ignored for variant {}", self.variant));
        }
        cfg.validate()?;
        Ok((cfg, warnings))
    }

    /// Same section with the defaults that do not depend on data written out.
    fn effective(&self) -> Self {
        let mut s = self.clone();
        if s.variant == Variant::TwoLevel && s.lambda.is_none() {
            s.lambda = Some(DEFAULT_LAMBDA);
        }
        s
    }
}

/// Network and optimizer settings (see [`TrainConfig`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
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
    pub eval_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            latent_dim: t.latent_dim,
            generator_hidden: t.generator_hidden,
            discriminator_hidden: t.discriminator_hidden,
            batch_size: t.batch_size,
            d_steps_per_g_step: t.d_steps_per_g_step,
            total_g_steps: t.total_g_steps,
            g_learning_rate: t.g_learning_rate,
            d_learning_rate: t.d_learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            eval_every: t.eval_every,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, objective: ObjectiveConfig, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            objective,
            latent_dim: self.latent_dim,
            generator_hidden: self.generator_hidden.clone(),
            discriminator_hidden: self.discriminator_hidden.clone(),
            batch_size: self.batch_size,
            d_steps_per_g_step: self.d_steps_per_g_step,
            total_g_steps: self.total_g_steps,
            g_learning_rate: self.g_learning_rate,
            d_learning_rate: self.d_learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            eval_every: self.eval_every,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub theorem: u8,
    pub pis: Vec<f64>,
    pub support_sizes: Vec<usize>,
    /// Instances per configuration, seeded `seed, seed + 1, ...`.
    pub n_seeds: usize,
    /// Theorem 1 only.
    pub lambdas: Vec<f64>,
    /// Theorem 2 only: fixed `d` instead of the derived one.
    pub d: Option<f64>,
    pub overlapping: Option<bool>,
    pub c: f64,
    pub tolerance: f64,
    pub method: MethodChoice,
}

impl Default for VerifySection {
    fn default() -> Self {
        let s = SuiteConfig::theorem2();
        Self {
            theorem: 2,
            pis: s.pis,
            support_sizes: s.support_sizes,
            n_seeds: 1,
            lambdas: SuiteConfig::theorem1().lambdas,
            d: None,
            overlapping: None,
            c: s.c,
            tolerance: TV_TOLERANCE,
            method: s.method,
        }
    }
}

impl VerifySection {
    pub fn suite(&self, seed: u64) -> Result<SuiteConfig> {
        if self.theorem != 1 && self.theorem != 2 {
            return Err(Error::Config(format!("verify.theorem must be 1 or 2, got {}", self.theorem)));
        }
        if self.pis.is_empty() || self.support_sizes.is_empty() || self.n_seeds == 0 {
            return Err(Error::Config("verify: pis, support_sizes and n_seeds must be non-empty".into()));
        }
        if self.theorem == 1 && self.lambdas.is_empty() {
            return Err(Error::Config("verify.lambdas must be non-empty for theorem 1".into()));
        }
        Ok(SuiteConfig {
            pis: self.pis.clone(),
            support_sizes: self.support_sizes.clone(),
            seeds: (seed..seed + self.n_seeds as u64).collect(),
            lambdas: self.lambdas.clone(),
            d_override: self.d,
            overlapping: self.overlapping.unwrap_or(self.theorem == 2),
            c: self.c,
            tolerance: self.tolerance,
            method: self.method,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub gamma_p: Vec<f64>,
    pub gamma_c: Vec<f64>,
    /// Assumed target proportions; absent means `1 - gamma_p` for each cell.
    pub assumed_pi: Option<Vec<f64>>,
    /// Seeds per cell: `seed, seed + 1, ...`.
    pub n_seeds: usize,
    /// Labeled held-out points per class for AUROC.
    pub eval_points_per_class: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gamma_p: vec![0.1, 0.3, 0.5],
            gamma_c: vec![0.2],
            assumed_pi: None,
            n_seeds: 3,
            eval_points_per_class: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fixed,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TasksSection {
    pub checkpoint: Option<PathBuf>,
    pub policy: PolicyKind,
    /// Threshold for the fixed policy.
    pub threshold: f64,
    /// Class prior for the quantile policy.
    pub pi: Option<f64>,
    /// Points to score (CSV with x1..xd header). Absent: a fresh labeled
    /// sample from the configured distributions.
    pub points: Option<PathBuf>,
    /// Label file for `points` (one `target`/`contamination` per row).
    pub labels: Option<PathBuf>,
    pub eval_points_per_class: usize,
}

impl Default for TasksSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            policy: PolicyKind::Quantile,
            threshold: 0.5,
            pi: None,
            points: None,
            labels: None,
            eval_points_per_class: 1000,
        }
    }
}

impl TasksSection {
    pub fn policy(&self) -> Result<ThresholdPolicy> {
        match self.policy {
            PolicyKind::Fixed => Ok(ThresholdPolicy::Fixed(self.threshold)),
            PolicyKind::Quantile => self
                .pi
                .map(ThresholdPolicy::Quantile)
                .ok_or_else(|| Error::Config("quantile policy needs tasks.pi".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Config with data-independent defaults filled in, for writing next to outputs.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        c.objective = self.objective.effective();
        let d = &mut c.distributions;
        if d.preset.is_none() && d.target.is_none() && d.contamination.is_none() {
            d.preset = Some(ScenarioKind::TwoMoons);
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default().effective();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("sede = 3").is_err());
        assert!(ExperimentConfig::from_toml("[objective]\nvariant = \"two_level\"\nlamda = 2").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nbatch = 3").is_err());
    }

    #[test]
    fn explicit_distributions() {
        let text = r#"
[distributions]
target = { kind = "gaussian_mixture", weights = [1.0], means = [[0.0, 0.0]], covariances = [[[1.0, 0.0], [0.0, 1.0]]] }
contamination = { kind = "gaussian_mixture", weights = [1.0], means = [[5.0, 0.0]], covariances = [[[1.0, 0.0], [0.0, 1.0]]] }
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.distributions.scenario().unwrap().target.means(), vec![vec![0.0, 0.0]]);
        let text = text.replace("[distributions]", "[distributions]\npreset = \"two_moons\"");
        assert!(ExperimentConfig::from_toml(&text).unwrap().distributions.scenario().is_err());
    }

    #[test]
    fn objective_resolution() {
        let s = ObjectiveSection { variant: Variant::ThreeLevel, lambda: Some(3.0), ..Default::default() };
        let (cfg, warnings) = s.resolve(0.6).unwrap();
        assert!((cfg.d - 0.125).abs() < 1e-15);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("lambda"));
        let s = ObjectiveSection { variant: Variant::TwoLevel, ..Default::default() };
        let (cfg, warnings) = s.resolve(0.6).unwrap();
        assert_eq!(cfg.lambda, 1.0);
        assert!(warnings.is_empty());
    }

    #[test]
    fn quantile_needs_pi() {
        assert!(TasksSection::default().policy().is_err());
        let t = TasksSection { pi: Some(0.5), ..Default::default() };
        assert_eq!(t.policy().unwrap(), ThresholdPolicy::Quantile(0.5));
    }
}
