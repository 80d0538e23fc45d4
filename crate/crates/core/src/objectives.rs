//! Least-squares adversarial objectives and their pointwise optimal discriminators.
//!
//! Three variants share one shape: the discriminator regresses its output on
//! real data toward 1, on generated data toward 0 and (for the purified
//! variants) on negatives toward a third target; the generator drives every
//! output toward a common value `c`.
//!
//! | variant       | target on `X^-` | weight on `X^-` term | optimal discriminator              |
//! |---------------|-----------------|----------------------|------------------------------------|
//! | `lsgan`       | n/a             | 0                    | `p_d / (p_d + p_g)`                |
//! | `two_level`   | 0               | `lambda`             | `p_d / (p_d + p_g + lambda p^-)`   |
//! | `three_level` | `d`             | 1                    | `(p_d + d p^-) / (p_d + p_g + p^-)`|
//!
//! With `d = (2 pi - 1) / (pi + 1)` the three-level generator objective is
//! minimized exactly at the target distribution. At `pi = 0.5`, `d = 0` and the
//! three-level update rules coincide with the two-level ones at `lambda = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Lsgan,
    TwoLevel,
    ThreeLevel,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Lsgan => "lsgan",
            Variant::TwoLevel => "two_level",
            Variant::ThreeLevel => "three_level",
        })
    }
}

pub const DEFAULT_C: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Variant selector plus its scalars. `lambda` only matters for `two_level`,
/// `d` and `pi` only for `three_level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub variant: Variant,
    pub lambda: f64,
    pub c: f64,
    pub d: f64,
    pub pi: f64,
}

/// Negative-class target that makes the three-level objective consistent:
/// `d = (2 pi - 1) / (pi + 1)`. Negative for `pi < 0.5`.
pub fn theorem2_d(pi: f64) -> Result<f64> {
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(Error::Argument(format!("pi must lie in (0, 1], got {pi}")));
    }
    Ok((2.0 * pi - 1.0) / (pi + 1.0))
}

impl ObjectiveConfig {
    pub fn lsgan() -> Self {
        Self {
            variant: Variant::Lsgan,
            lambda: 0.0,
            c: DEFAULT_C,
            d: 0.0,
            pi: 0.5,
        }
    }

    pub fn two_level(lambda: f64) -> Self {
        Self {
            variant: Variant::TwoLevel,
            lambda,
            c: DEFAULT_C,
            d: 0.0,
            pi: 0.5,
        }
    }

    /// Three-level objective with `d` derived from `pi`.
    pub fn three_level(pi: f64) -> Result<Self> {
        Ok(Self {
            variant: Variant::ThreeLevel,
            lambda: DEFAULT_LAMBDA,
            c: DEFAULT_C,
            d: theorem2_d(pi)?,
            pi,
        })
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_pi(mut self, pi: f64) -> Self {
        self.pi = pi;
        self
    }

    /// Overrides the negative-class target (e.g. to build counterexamples).
    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Argument(format!("c must lie in (0, 1), got {}", self.c)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!("lambda must be a finite value >= 0, got {}", self.lambda)));
        }
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(Error::Argument(format!("pi must lie in (0, 1], got {}", self.pi)));
        }
        if !self.d.is_finite() {
            return Err(Error::Argument("d must be finite".into()));
        }
        Ok(())
    }

    /// Whether a batch of negative outputs is required by this configuration.
    pub fn needs_negatives(&self) -> bool {
        match self.variant {
            Variant::Lsgan => false,
            Variant::TwoLevel => self.lambda != 0.0,
            Variant::ThreeLevel => true,
        }
    }

    /// Squared-error terms of the discriminator objective, in the order
    /// data, generated, negatives.
    pub fn discriminator_terms(&self) -> [Option<Term>; 3] {
        let neg = match self.variant {
            Variant::Lsgan => None,
            Variant::TwoLevel => Some(Term::new(0.0, self.lambda)),
            Variant::ThreeLevel => Some(Term::new(self.d, 1.0)),
        };
        [Some(Term::new(1.0, 1.0)), Some(Term::new(0.0, 1.0)), neg]
    }

    /// Squared-error terms of the generator objective, same order.
    pub fn generator_terms(&self) -> [Option<Term>; 3] {
        let neg = match self.variant {
            Variant::Lsgan => None,
            _ => Some(Term::new(self.c, 1.0)),
        };
        [Some(Term::new(self.c, 1.0)), Some(Term::new(self.c, 1.0)), neg]
    }
}

/// `weight * mean((output - target)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub target: f64,
    pub weight: f64,
}

impl Term {
    pub fn new(target: f64, weight: f64) -> Self {
        Self { target, weight }
    }

    pub fn value(&self, outputs: &[f64]) -> f64 {
        let n = outputs.len() as f64;
        self.weight * (outputs.iter().map(|o| (o - self.target).powi(2)).sum::<f64>() / n)
    }

    /// Derivative of [`value`](Self::value) with respect to each output.
    pub fn output_gradient(&self, outputs: &[f64]) -> Vec<f64> {
        let n = outputs.len() as f64;
        outputs.iter().map(|o| self.weight * 2.0 * (o - self.target) / n).collect()
    }
}

fn evaluate(terms: [Option<Term>; 3], cfg: &ObjectiveConfig, batches: [&[f64]; 3]) -> Result<f64> {
    let names = ["data", "generated", "negatives"];
    let mut total = 0.0;
    for ((term, batch), name) in terms.iter().zip(batches).zip(names) {
        let Some(term) = term else { continue };
        if batch.is_empty() {
            if name == "negatives" && !cfg.needs_negatives() {
                continue;
            }
            return Err(Error::Argument(format!("{name} batch is empty")));
        }
        total += term.value(batch);
    }
    Ok(total)
}

/// `mean(d_data - 1)^2 + mean(d_gen)^2 + negative term`.
///
/// `d_neg` may be empty for `lsgan` and for `two_level` with `lambda = 0`.
pub fn discriminator_loss(cfg: &ObjectiveConfig, d_data: &[f64], d_gen: &[f64], d_neg: &[f64]) -> Result<f64> {
    evaluate(cfg.discriminator_terms(), cfg, [d_data, d_gen, d_neg])
}

/// `mean(d_data - c)^2 + mean(d_gen - c)^2 (+ mean(d_neg - c)^2)`.
///
/// Only the generated-sample term depends on the generator; the other two are
/// kept so the logged value matches the full objective.
pub fn generator_loss(cfg: &ObjectiveConfig, d_data: &[f64], d_gen: &[f64], d_neg: &[f64]) -> Result<f64> {
    evaluate(cfg.generator_terms(), cfg, [d_data, d_gen, d_neg])
}

fn check_densities(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Argument("densities must be finite and non-negative".into()));
    }
    Ok(())
}

/// `p_d / (p_d + p_g + lambda p^-)`.
pub fn optimal_discriminator_two_level(p_d: f64, p_g: f64, p_neg: f64, lambda: f64) -> Result<f64> {
    check_densities(&[p_d, p_g, p_neg, lambda])?;
    let den = p_d + p_g + lambda * p_neg;
    if den <= 0.0 {
        return Err(Error::UndefinedPoint);
    }
    Ok(p_d / den)
}

/// `(p_d + d p^-) / (p_d + p_g + p^-)`.
pub fn optimal_discriminator_three_level(p_d: f64, p_g: f64, p_neg: f64, d: f64) -> Result<f64> {
    check_densities(&[p_d, p_g, p_neg])?;
    let den = p_d + p_g + p_neg;
    if den <= 0.0 {
        return Err(Error::UndefinedPoint);
    }
    Ok((p_d + d * p_neg) / den)
}

/// Pointwise integrand of the two-level discriminator objective at output `dv`.
pub fn two_level_integrand(dv: f64, p_d: f64, p_g: f64, p_neg: f64, lambda: f64) -> f64 {
    (dv - 1.0).powi(2) * p_d + dv * dv * p_g + lambda * dv * dv * p_neg
}

/// Pointwise integrand of the three-level discriminator objective at output `dv`.
pub fn three_level_integrand(dv: f64, p_d: f64, p_g: f64, p_neg: f64, d: f64) -> f64 {
    (dv - 1.0).powi(2) * p_d + dv * dv * p_g + (dv - d).powi(2) * p_neg
}
