//! Distribution distances and classification metrics.

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};

use crate::distributions::TabularDistribution;
use crate::error::{Error, Result};

/// Eigenvalues of the product above this (negative) threshold are clamped to zero.
pub const EIGEN_CLAMP: f64 = -1e-8;

/// Sample mean and unbiased covariance of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub n: usize,
}

impl GaussianSummary {
    pub fn fit(samples: ArrayView2<f64>) -> Result<Self> {
        let (n, d) = samples.dim();
        if d == 0 {
            return Err(Error::Shape("samples have zero dimension".into()));
        }
        if n < d + 1 {
            return Err(Error::Argument(format!("need at least {} points in dimension {d}, got {n}", d + 1)));
        }
        let mut mean = DVector::zeros(d);
        for row in samples.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for row in samples.rows() {
            let c = DVector::from_iterator(d, row.iter().copied()) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, covariance: cov, n })
    }
}

fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < EIGEN_CLAMP {
            return Err(Error::numeric(None, format!("matrix is indefinite (eigenvalue {v})")));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Squared Fréchet (2-Wasserstein) distance between two fitted Gaussians:
/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
pub fn frechet_from_summaries(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::Shape(format!("dimensions differ: {} vs {}", a.mean.len(), b.mean.len())));
    }
    // (S_a S_b)^{1/2} has the trace of the square root of the symmetric
    // product S_a^{1/2} S_b S_a^{1/2}.
    let root_a = sqrt_psd(&a.covariance)?;
    let inner = &root_a * &b.covariance * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = inner.symmetric_eigenvalues();
    let mut tr_cross = 0.0;
    for &v in eig.iter() {
        if v < EIGEN_CLAMP {
            return Err(Error::numeric(None, format!("covariance product is indefinite (eigenvalue {v})")));
        }
        tr_cross += v.max(0.0).sqrt();
    }
    let diff = (&a.mean - &b.mean).norm_squared();
    let value = diff + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_cross;
    Ok(value.max(0.0))
}

pub fn frechet_gaussian(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("dimensions differ: {} vs {}", a.ncols(), b.ncols())));
    }
    frechet_from_summaries(&GaussianSummary::fit(a)?, &GaussianSummary::fit(b)?)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Unbiased squared MMD with the kernel `exp(-|x - y|^2 / (2 h^2))`.
pub fn mmd_rbf(a: ArrayView2<f64>, b: ArrayView2<f64>, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::Argument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if a.nrows() < 2 || b.nrows() < 2 {
        return Err(Error::Argument("each sample set needs at least 2 points".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("dimensions differ: {} vs {}", a.ncols(), b.ncols())));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let k = |x: ArrayView1<f64>, y: ArrayView1<f64>| (-gamma * sq_dist(x, y)).exp();
    let within = |s: ArrayView2<f64>| {
        let n = s.nrows();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                total += k(s.row(i), s.row(j));
            }
        }
        2.0 * total / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for x in a.rows() {
        for y in b.rows() {
            cross += k(x, y);
        }
    }
    cross /= (a.nrows() * b.nrows()) as f64;
    Ok(within(a) + within(b) - 2.0 * cross)
}

/// Median pairwise Euclidean distance over the pooled samples, using at most
/// the first `cap` rows of each set.
pub fn median_heuristic(a: ArrayView2<f64>, b: ArrayView2<f64>, cap: usize) -> Result<f64> {
    let rows: Vec<_> = a.rows().into_iter().take(cap).chain(b.rows().into_iter().take(cap)).collect();
    if rows.len() < 2 {
        return Err(Error::Argument("need at least two points for the median heuristic".into()));
    }
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            d.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if m > 0.0 {
        Ok(m)
    } else {
        Ok(1.0)
    }
}

/// Half the L1 distance between two probability vectors.
pub fn tv_tabular(p: &TabularDistribution, q: &TabularDistribution) -> Result<f64> {
    p.check_same_support(q)?;
    Ok(tv_slices(p.mass(), q.mass()))
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney U / (n_pos n_neg)).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Argument("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Argument("AUROC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // average ranks (1-based) over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// `(f1, accuracy)`; F1 is 0 when precision + recall is 0.
pub fn f1_accuracy(predictions: &[bool], labels: &[bool]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if predictions.is_empty() {
        return Err(Error::Argument("no predictions".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = (tp + tn) as f64 / predictions.len() as f64;
    Ok((f1, accuracy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::AnalyticDensity;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frechet_identical_samples() {
        let n = AnalyticDensity::isotropic(vec![0.0, 1.0], 1.3).unwrap();
        let s = n.sample_array(&mut ChaCha8Rng::seed_from_u64(1), 500).unwrap();
        assert!(frechet_gaussian(s.view(), s.view()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn frechet_mean_shift_1d() {
        let a = AnalyticDensity::isotropic(vec![0.0], 1.0).unwrap();
        let b = AnalyticDensity::isotropic(vec![1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sa = a.sample_array(&mut rng, 20_000).unwrap();
        let sb = b.sample_array(&mut rng, 20_000).unwrap();
        assert!((frechet_gaussian(sa.view(), sb.view()).unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn frechet_closed_form_scaling() {
        // population: N(0, I) vs N(0, 4I) in 2-D gives Tr(I + 4I - 2*2I) = 2
        let a = GaussianSummary {
            mean: DVector::zeros(2),
            covariance: DMatrix::identity(2, 2),
            n: 10,
        };
        let b = GaussianSummary {
            mean: DVector::zeros(2),
            covariance: DMatrix::identity(2, 2) * 4.0,
            n: 10,
        };
        assert!((frechet_from_summaries(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn frechet_rejects_bad_input() {
        let a = Array2::<f64>::zeros((5, 2));
        let b = Array2::<f64>::zeros((5, 3));
        assert!(matches!(frechet_gaussian(a.view(), b.view()), Err(Error::Shape(_))));
        let tiny = Array2::<f64>::zeros((2, 2));
        assert!(frechet_gaussian(tiny.view(), tiny.view()).is_err());
    }

    #[test]
    fn mmd_two_point_masses() {
        let a = array![[0.0], [0.0]];
        let b = array![[10.0], [10.0]];
        let oracle = 1.0 + 1.0 - 2.0 * (-50.0_f64).exp();
        let v = mmd_rbf(a.view(), b.view(), 1.0).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 2.0).abs() < 1e-3);
    }

    #[test]
    fn mmd_same_distribution_and_wide_kernel() {
        let n = AnalyticDensity::isotropic(vec![0.0, 0.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = n.sample_array(&mut rng, 1000).unwrap();
        let b = n.sample_array(&mut rng, 1000).unwrap();
        assert!(mmd_rbf(a.view(), b.view(), 1.0).unwrap().abs() <= 1e-3);
        let far = AnalyticDensity::isotropic(vec![3.0, 0.0], 1.0).unwrap().sample_array(&mut rng, 200).unwrap();
        let wide = mmd_rbf(a.slice(ndarray::s![..200, ..]), far.view(), 1e6).unwrap();
        assert!(wide.abs() < 1e-6);
        assert!(mmd_rbf(a.view(), b.view(), 0.0).is_err());
        assert!(mmd_rbf(a.slice(ndarray::s![..1, ..]), b.view(), 1.0).is_err());
    }

    #[test]
    fn tv_examples() {
        let p = TabularDistribution::new(vec![0.7, 0.3]).unwrap();
        let q = TabularDistribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(tv_tabular(&p, &p).unwrap(), 0.0);
        assert!((tv_tabular(&p, &q).unwrap() - 0.2).abs() < 1e-15);
        let a = TabularDistribution::new(vec![1.0, 0.0]).unwrap();
        let b = TabularDistribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(tv_tabular(&a, &b).unwrap(), 1.0);
        assert!(tv_tabular(&a, &TabularDistribution::uniform(3).unwrap()).is_err());
    }

    /// Pairwise-counting oracle for AUROC.
    fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auroc_examples() {
        let l = [true, true, false, false];
        assert_eq!(auroc(&[0.9, 0.8, 0.3, 0.1], &l).unwrap(), 1.0);
        assert_eq!(auroc_pairs(&[0.9, 0.6, 0.6, 0.1], &l), 0.875);
        assert_eq!(auroc(&[0.9, 0.6, 0.6, 0.1], &l).unwrap(), 0.875);
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn auroc_matches_pair_counting_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..6) as f64) / 2.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            labels[0] = true;
            labels[1] = false;
            assert!((auroc(&scores, &labels).unwrap() - auroc_pairs(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn auroc_random_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let labels: Vec<bool> = (0..10_000).map(|_| rng.gen()).collect();
        assert!((auroc(&scores, &labels).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_accuracy(&[true, false], &[true, false]).unwrap(), (1.0, 1.0));
        // TP=2, FP=1, FN=1, TN=0
        let (f1, acc) = f1_accuracy(&[true, true, true, false], &[true, true, false, true]).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(acc, 0.5);
        assert_eq!(f1_accuracy(&[false, false], &[true, false]).unwrap().0, 0.0);
        assert!(f1_accuracy(&[true], &[true, false]).is_err());
    }
}
