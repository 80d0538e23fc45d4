//! Preset 2-D synthetic tasks.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contamination::{build_contaminated, contamination_count, ContaminatedDataset};
use crate::distributions::AnalyticDensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// N((-4, 0), 0.25 I) target vs N((4, 0), 0.25 I) contamination.
    DisjointPair,
    /// Target modes (-4, 4), (4, 4); contamination modes (-4, -4), (4, -4); sigma 0.5.
    TwoMoons,
    /// N((-2, 0), I) positives vs N((2, 0), I) negatives.
    PuSeparable,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disjoint_pair" => Ok(Self::DisjointPair),
            "two_moons" => Ok(Self::TwoMoons),
            "pu_separable" => Ok(Self::PuSeparable),
            _ => Err(Error::Argument(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    /// `None` for user-supplied densities.
    pub kind: Option<ScenarioKind>,
    pub target: AnalyticDensity,
    pub contamination: AnalyticDensity,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        let (target, contamination) = match kind {
            ScenarioKind::DisjointPair => (
                AnalyticDensity::isotropic(vec![-4.0, 0.0], 0.5),
                AnalyticDensity::isotropic(vec![4.0, 0.0], 0.5),
            ),
            ScenarioKind::TwoMoons => (
                AnalyticDensity::isotropic_mixture(vec![(0.5, vec![-4.0, 4.0]), (0.5, vec![4.0, 4.0])], 0.5),
                AnalyticDensity::isotropic_mixture(vec![(0.5, vec![-4.0, -4.0]), (0.5, vec![4.0, -4.0])], 0.5),
            ),
            ScenarioKind::PuSeparable => (
                AnalyticDensity::isotropic(vec![-2.0, 0.0], 1.0),
                AnalyticDensity::isotropic(vec![2.0, 0.0], 1.0),
            ),
        };
        Self {
            kind: Some(kind),
            target: target.expect("preset is valid"),
            contamination: contamination.expect("preset is valid"),
        }
    }

    pub fn custom(target: AnalyticDensity, contamination: AnalyticDensity) -> Result<Self> {
        if target.dimension() != contamination.dimension() {
            return Err(Error::Shape(format!(
                "target has dimension {}, contamination {}",
                target.dimension(),
                contamination.dimension()
            )));
        }
        Ok(Self { kind: None, target, contamination })
    }

    /// Samples exactly-sized pools and builds the contaminated dataset.
    pub fn build<R: Rng + ?Sized>(
        &self,
        n_target: usize,
        gamma_p: f64,
        gamma_c: f64,
        rng: &mut R,
    ) -> Result<ContaminatedDataset> {
        if !(0.0..1.0).contains(&gamma_p) || !(0.0..=1.0).contains(&gamma_c) {
            return Err(Error::Argument(format!("invalid ratios gamma_p={gamma_p}, gamma_c={gamma_c}")));
        }
        let n_cont = contamination_count(n_target, gamma_p);
        let n_neg = (gamma_c * (n_target + n_cont) as f64).round() as usize;
        let target_pool = self.target.sample_array(rng, n_target)?;
        let cont_pool = self.contamination.sample_array(rng, n_cont + n_neg)?;
        build_contaminated(target_pool.view(), cont_pool.view(), gamma_p, gamma_c, rng)
    }

    /// Fresh labeled points (`true` = target), `n_target` + `n_contamination`, shuffled.
    pub fn labeled_sample<R: Rng + ?Sized>(
        &self,
        n_target: usize,
        n_contamination: usize,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Vec<bool>)> {
        let a = self.target.sample_array(rng, n_target)?;
        let b = self.contamination.sample_array(rng, n_contamination)?;
        let all = concatenate(Axis(0), &[a.view(), b.view()]).map_err(|e| Error::Shape(e.to_string()))?;
        let mut order: Vec<usize> = (0..all.nrows()).collect();
        order.shuffle(rng);
        let points = all.select(Axis(0), &order);
        let labels = order.iter().map(|&i| i < n_target).collect();
        Ok((points, labels))
    }
}

/// Fraction of rows within `k` standard deviations (Mahalanobis) of any
/// component mean of `density`.
pub fn fraction_near_modes(samples: ArrayView2<f64>, density: &AnalyticDensity, k: f64) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(Error::Argument("no samples".into()));
    }
    let mut near = 0usize;
    for row in samples.rows() {
        let x = row.to_vec();
        for i in 0..density.num_components() {
            if density.mahalanobis(i, &x)? <= k {
                near += 1;
                break;
            }
        }
    }
    Ok(near as f64 / samples.nrows() as f64)
}
