//! Downstream uses of a trained discriminator: anomaly scoring and PU classification.
//!
//! Scores are raw discriminator outputs. Higher means more target-like.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Mlp;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPoint {
    pub point: Vec<f64>,
    pub score: f64,
    /// Set once a threshold policy has been applied.
    pub predicted_label: Option<bool>,
}

/// Raw discriminator output for every row of `points`.
pub fn raw_scores(discriminator: &Mlp, points: ArrayView2<f64>) -> Result<Vec<f64>> {
    if discriminator.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "discriminator has {} outputs, expected 1",
            discriminator.output_dim()
        )));
    }
    Ok(discriminator.forward(points)?.column(0).to_vec())
}

pub fn anomaly_scores(discriminator: &Mlp, points: ArrayView2<f64>) -> Result<Vec<ScoredPoint>> {
    let scores = raw_scores(discriminator, points)?;
    Ok(points
        .rows()
        .into_iter()
        .zip(scores)
        .map(|(p, score)| ScoredPoint {
            point: p.to_vec(),
            score,
            predicted_label: None,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Positive iff score > t.
    Fixed(f64),
    /// The top `round(pi * n)` scores are positive; ties go to the earlier point.
    Quantile(f64),
}

/// Labels scores according to `policy` (`true` = positive / target).
pub fn apply_threshold(scores: &[f64], policy: ThresholdPolicy) -> Result<Vec<bool>> {
    if scores.is_empty() {
        return Err(Error::Argument("no points to classify".into()));
    }
    match policy {
        ThresholdPolicy::Fixed(t) => Ok(scores.iter().map(|&s| s > t).collect()),
        ThresholdPolicy::Quantile(pi) => {
            if !(0.0..=1.0).contains(&pi) {
                return Err(Error::Argument(format!("quantile pi must lie in [0, 1], got {pi}")));
            }
            let k = (pi * scores.len() as f64).round() as usize;
            let mut order: Vec<usize> = (0..scores.len()).collect();
            // stable sort keeps index order among equal scores
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
            let mut labels = vec![false; scores.len()];
            for &i in &order[..k] {
                labels[i] = true;
            }
            Ok(labels)
        }
    }
}

pub fn pu_classify(discriminator: &Mlp, points: ArrayView2<f64>, policy: ThresholdPolicy) -> Result<Vec<bool>> {
    if points.nrows() == 0 {
        return Err(Error::Argument("no points to classify".into()));
    }
    apply_threshold(&raw_scores(discriminator, points)?, policy)
}

/// Sets `predicted_label` on every point.
pub fn label_points(points: &mut [ScoredPoint], policy: ThresholdPolicy) -> Result<()> {
    let scores: Vec<f64> = points.iter().map(|p| p.score).collect();
    for (p, l) in points.iter_mut().zip(apply_threshold(&scores, policy)?) {
        p.predicted_label = Some(l);
    }
    Ok(())
}

/// Columns `x1..xd, score, label_pred, label_true`; labels are 1/0, blank when absent.
pub fn write_scores_csv(path: &Path, points: &[ScoredPoint], labels_true: Option<&[bool]>) -> Result<()> {
    if let Some(l) = labels_true {
        if l.len() != points.len() {
            return Err(Error::Shape(format!("{} labels for {} points", l.len(), points.len())));
        }
    }
    let dim = points.first().map_or(0, |p| p.point.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.extend(["score", "label_pred", "label_true"].map(String::from));
    w.write_record(&header)?;
    let flag = |b: Option<bool>| b.map_or(String::new(), |b| u8::from(b).to_string());
    for (i, p) in points.iter().enumerate() {
        let mut rec: Vec<String> = p.point.iter().map(|v| v.to_string()).collect();
        rec.push(p.score.to_string());
        rec.push(flag(p.predicted_label));
        rec.push(flag(labels_true.map(|l| l[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
