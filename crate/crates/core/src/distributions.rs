//! Closed-form densities and samplers.
//!
//! [`TabularDistribution`] is a probability vector over a finite support and is
//! the exact setting used by the [`oracle`](crate::oracle) module.
//! [`AnalyticDensity`] is a Gaussian mixture in `R^d` used for toy training runs.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Common interface of the two density families.
pub trait Density {
    type Point: ?Sized;
    type Samples;

    fn eval_pdf(&self, x: &Self::Point) -> Result<f64>;

    /// Draws `n` i.i.d. points. Identical generator state gives identical output.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Self::Samples>;
}

/// Probability vector over `{0, .., K-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDistribution {
    mass: Vec<f64>,
}

impl TabularDistribution {
    /// Normalizes any non-negative, not-all-zero vector onto the simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("tabular distribution needs a non-empty support".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Argument(format!("tabular weights must be finite and non-negative, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Argument("tabular weights are all zero".into()));
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { mass })
    }

    /// Point mass on `index`.
    pub fn point_mass(support_size: usize, index: usize) -> Result<Self> {
        if index >= support_size {
            return Err(Error::Domain(format!("index {index} outside support of size {support_size}")));
        }
        let mut w = vec![0.0; support_size];
        w[index] = 1.0;
        Self::new(w)
    }

    pub fn uniform(support_size: usize) -> Result<Self> {
        Self::new(vec![1.0; support_size])
    }

    pub fn support_size(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    pub(crate) fn check_same_support(&self, other: &Self) -> Result<()> {
        if self.support_size() != other.support_size() {
            return Err(Error::Shape(format!(
                "support sizes differ: {} vs {}",
                self.support_size(),
                other.support_size()
            )));
        }
        Ok(())
    }
}

impl Density for TabularDistribution {
    type Point = usize;
    type Samples = Vec<usize>;

    fn eval_pdf(&self, x: &usize) -> Result<f64> {
        self.mass
            .get(*x)
            .copied()
            .ok_or_else(|| Error::Domain(format!("index {x} outside support of size {}", self.mass.len())))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::Argument("sample count must be at least 1".into()));
        }
        let last_positive = self.mass.iter().rposition(|&m| m > 0.0).unwrap_or(0);
        Ok((0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, &m) in self.mass.iter().enumerate() {
                    acc += m;
                    if u < acc && m > 0.0 {
                        return k;
                    }
                }
                last_positive
            })
            .collect())
    }
}

/// `pi * p_plus + (1 - pi) * p_minus`, the law of a contaminated dataset.
pub fn make_mixture(pi: f64, p_plus: &TabularDistribution, p_minus: &TabularDistribution) -> Result<TabularDistribution> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::Argument(format!("mixture proportion must lie in (0, 1), got {pi}")));
    }
    p_plus.check_same_support(p_minus)?;
    let mass = p_plus
        .mass
        .iter()
        .zip(&p_minus.mass)
        .map(|(a, b)| pi * a + (1.0 - pi) * b)
        .collect();
    TabularDistribution::new(mass)
}

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

/// Finite Gaussian mixture in `R^d`.
#[derive(Debug, Clone)]
pub struct AnalyticDensity {
    dimension: usize,
    components: Vec<Component>,
}

impl AnalyticDensity {
    /// Builds a mixture from `(weight, mean, covariance)` triples. Weights are
    /// normalized; covariances must be symmetric positive-definite.
    pub fn new(components: Vec<(f64, Vec<f64>, Vec<Vec<f64>>)>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::Argument("mixture needs at least one component".into()));
        };
        let dimension = first.1.len();
        if dimension == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if components.iter().any(|c| !c.0.is_finite() || c.0 < 0.0) || total <= 0.0 {
            return Err(Error::Argument("mixture weights must be non-negative and not all zero".into()));
        }
        let mut out = Vec::with_capacity(components.len());
        for (i, (weight, mean, cov)) in components.into_iter().enumerate() {
            if mean.len() != dimension || cov.len() != dimension || cov.iter().any(|r| r.len() != dimension) {
                return Err(Error::Shape(format!("component {i} does not have dimension {dimension}")));
            }
            let covariance = DMatrix::from_fn(dimension, dimension, |r, c| cov[r][c]);
            let asym = (&covariance - covariance.transpose()).abs().max();
            if asym > 1e-12 * (1.0 + covariance.abs().max()) {
                return Err(Error::Argument(format!("covariance of component {i} is not symmetric")));
            }
            let min_eig = covariance.clone().symmetric_eigen().eigenvalues.min();
            if !(min_eig > 0.0) {
                return Err(Error::Argument(format!("covariance of component {i} is not positive-definite")));
            }
            let chol = covariance
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Argument(format!("covariance of component {i} is not positive-definite")))?
                .unpack();
            let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let log_norm = -0.5 * (dimension as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
            out.push(Component {
                weight: weight / total,
                mean: DVector::from_vec(mean),
                covariance,
                chol,
                log_norm,
            });
        }
        Ok(Self {
            dimension,
            components: out,
        })
    }

    /// Single Gaussian with covariance `sigma^2 I`.
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::isotropic_mixture(vec![(1.0, mean)], sigma)
    }

    /// Mixture of isotropic Gaussians sharing one standard deviation.
    pub fn isotropic_mixture(components: Vec<(f64, Vec<f64>)>, sigma: f64) -> Result<Self> {
        let comps = components
            .into_iter()
            .map(|(w, mean)| {
                let d = mean.len();
                let cov = (0..d)
                    .map(|r| (0..d).map(|c| if r == c { sigma * sigma } else { 0.0 }).collect())
                    .collect();
                (w, mean, cov)
            })
            .collect();
        Self::new(comps)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.mean.iter().copied().collect()).collect()
    }

    pub fn covariances(&self) -> Vec<Vec<Vec<f64>>> {
        self.components
            .iter()
            .map(|c| {
                (0..self.dimension)
                    .map(|r| (0..self.dimension).map(|k| c.covariance[(r, k)]).collect())
                    .collect()
            })
            .collect()
    }

    /// Largest per-axis standard deviation of component `i`.
    pub fn component_max_std(&self, i: usize) -> f64 {
        self.components[i].covariance.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.sqrt()))
    }

    /// Mahalanobis distance of `x` to the mean of component `i`.
    pub fn mahalanobis(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let comp = &self.components[i];
        let diff = DVector::from_column_slice(x) - &comp.mean;
        let y = comp
            .chol
            .solve_lower_triangular(&diff)
            .ok_or_else(|| Error::numeric(None, "singular Cholesky factor"))?;
        Ok(y.norm())
    }

    /// True when every pair of components across `self` and `other` has means
    /// at least `k` combined standard deviations apart (`k * (s_a + s_b)`).
    pub fn well_separated_from(&self, other: &AnalyticDensity, k: f64) -> bool {
        self.components.iter().enumerate().all(|(i, a)| {
            other.components.iter().enumerate().all(|(j, b)| {
                let dist = (&a.mean - &b.mean).norm();
                dist >= k * (self.component_max_std(i) + other.component_max_std(j))
            })
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Shape(format!(
                "point has dimension {}, density has dimension {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// Samples as an `n x d` array, one point per row.
    pub fn sample_array<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::Argument("sample count must be at least 1".into()));
        }
        let d = self.dimension;
        let mut out = Array2::zeros((n, d));
        let mut z = DVector::zeros(d);
        for mut row in out.rows_mut() {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = self.components.len() - 1;
            for (i, c) in self.components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            let comp = &self.components[chosen];
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = &comp.mean + &comp.chol * &z;
            for (dst, src) in row.iter_mut().zip(x.iter()) {
                *dst = *src;
            }
        }
        Ok(out)
    }
}

impl Density for AnalyticDensity {
    type Point = [f64];
    type Samples = Array2<f64>;

    fn eval_pdf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let x = DVector::from_column_slice(x);
        let mut total = 0.0;
        for comp in &self.components {
            let diff = &x - &comp.mean;
            let y = comp
                .chol
                .solve_lower_triangular(&diff)
                .ok_or_else(|| Error::numeric(None, "singular Cholesky factor"))?;
            total += comp.weight * (comp.log_norm - 0.5 * y.norm_squared()).exp();
        }
        Ok(total)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Array2<f64>> {
        self.sample_array(rng, n)
    }
}

/// Self-describing text form of a distribution, used by config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Tabular {
        support: usize,
        mass: Vec<f64>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    },
}

impl From<&TabularDistribution> for DistributionSpec {
    fn from(t: &TabularDistribution) -> Self {
        DistributionSpec::Tabular {
            support: t.support_size(),
            mass: t.mass.clone(),
        }
    }
}

impl From<&AnalyticDensity> for DistributionSpec {
    fn from(a: &AnalyticDensity) -> Self {
        DistributionSpec::GaussianMixture {
            weights: a.weights(),
            means: a.means(),
            covariances: a.covariances(),
        }
    }
}

impl DistributionSpec {
    pub fn to_tabular(&self) -> Result<TabularDistribution> {
        match self {
            DistributionSpec::Tabular { support, mass } => {
                if *support != mass.len() {
                    return Err(Error::Shape(format!("support {support} but {} mass entries", mass.len())));
                }
                TabularDistribution::new(mass.clone())
            }
            _ => Err(Error::Argument("expected a tabular distribution".into())),
        }
    }

    pub fn to_analytic(&self) -> Result<AnalyticDensity> {
        match self {
            DistributionSpec::GaussianMixture {
                weights,
                means,
                covariances,
            } => {
                if weights.len() != means.len() || weights.len() != covariances.len() {
                    return Err(Error::Shape("weights, means and covariances differ in length".into()));
                }
                AnalyticDensity::new(
                    weights
                        .iter()
                        .zip(means)
                        .zip(covariances)
                        .map(|((w, m), c)| (*w, m.clone(), c.clone()))
                        .collect(),
                )
            }
            _ => Err(Error::Argument("expected a gaussian_mixture distribution".into())),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("distribution spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
