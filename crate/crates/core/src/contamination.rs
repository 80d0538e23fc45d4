//! Contaminated training sets `(X, X^-)`.
//!
//! `X` holds every target point plus `round(gamma_p * |X|)` contamination
//! points; `X^-` holds `round(gamma_c * |X|)` further contamination points
//! drawn disjointly from the same pool. Ground-truth flags for `X` are kept
//! beside the data but are only reachable through [`ContaminatedDataset::hidden_labels`];
//! the trainer consumes a [`TrainingData`] view that carries no labels at all.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of the dataset to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Mixed,
    Negatives,
}

#[derive(Debug, Clone)]
pub struct ContaminatedDataset {
    mixed: Array2<f64>,
    negatives: Array2<f64>,
    gamma_p: f64,
    gamma_c: f64,
    pi: f64,
    labels_hidden: Vec<bool>,
}

/// The label-free view handed to training code.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub mixed: ArrayView2<'a, f64>,
    pub negatives: ArrayView2<'a, f64>,
}

impl<'a> TrainingData<'a> {
    pub fn new(mixed: ArrayView2<'a, f64>, negatives: ArrayView2<'a, f64>) -> Self {
        Self { mixed, negatives }
    }

    pub fn dimension(&self) -> usize {
        self.mixed.ncols()
    }

    pub fn part(&self, part: Part) -> ArrayView2<'a, f64> {
        match part {
            Part::Mixed => self.mixed,
            Part::Negatives => self.negatives,
        }
    }

    /// `batch_size` uniform with-replacement draws from `part`.
    pub fn minibatch<R: Rng + ?Sized>(&self, part: Part, batch_size: usize, rng: &mut R) -> Result<Array2<f64>> {
        draw_batch(self.part(part), part, batch_size, rng)
    }
}

fn draw_batch<R: Rng + ?Sized>(data: ArrayView2<f64>, part: Part, batch_size: usize, rng: &mut R) -> Result<Array2<f64>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    let n = data.nrows();
    if n == 0 {
        let name = match part {
            Part::Mixed => "mixed dataset",
            Part::Negatives => "negatives dataset (gamma_c = 0?)",
        };
        return Err(Error::Capacity(format!("cannot draw a minibatch from an empty {name}")));
    }
    let idx: Vec<usize> = (0..batch_size).map(|_| rng.gen_range(0..n)).collect();
    Ok(data.select(Axis(0), &idx))
}

fn ratio_count(ratio: f64, total: usize) -> usize {
    (ratio * total as f64).round() as usize
}

/// Smallest `n_c` with `n_c == round(gamma_p * (n_target + n_c))`.
///
/// `round(gamma_p * (n_target + x)) - x` starts non-negative and steps down by
/// 0 or 1 as `x` grows (since `gamma_p < 1`), so a fixed point always exists.
pub fn contamination_count(n_target: usize, gamma_p: f64) -> usize {
    if gamma_p <= 0.0 {
        return 0;
    }
    let guess = (gamma_p * n_target as f64 / (1.0 - gamma_p)).floor() as usize;
    let gap = |x: usize| ratio_count(gamma_p, n_target + x) as i64 - x as i64;
    let start = match guess.saturating_sub(2) {
        x if gap(x) >= 0 => x,
        _ => 0,
    };
    (start..).find(|&x| gap(x) == 0).expect("fixed point exists")
}

fn validate_ratios(gamma_p: f64, gamma_c: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma_p) {
        return Err(Error::Argument(format!("gamma_p must lie in [0, 1), got {gamma_p}")));
    }
    if !(0.0..=1.0).contains(&gamma_c) {
        return Err(Error::Argument(format!("gamma_c must lie in [0, 1], got {gamma_c}")));
    }
    Ok(())
}

/// Builds `(X, X^-)` from the two pools. Every target point is used; the
/// contamination pool is shuffled once and split into the slice placed in `X`
/// and the negatives set, so the two never share a point.
pub fn build_contaminated<R: Rng + ?Sized>(
    target_pool: ArrayView2<f64>,
    contamination_pool: ArrayView2<f64>,
    gamma_p: f64,
    gamma_c: f64,
    rng: &mut R,
) -> Result<ContaminatedDataset> {
    validate_ratios(gamma_p, gamma_c)?;
    let n_target = target_pool.nrows();
    if n_target == 0 {
        return Err(Error::Capacity("target pool is empty".into()));
    }
    if contamination_pool.nrows() > 0 && contamination_pool.ncols() != target_pool.ncols() {
        return Err(Error::Shape(format!(
            "target points have dimension {}, contamination points {}",
            target_pool.ncols(),
            contamination_pool.ncols()
        )));
    }
    let n_contam = contamination_count(n_target, gamma_p);
    let n_mixed = n_target + n_contam;
    let n_neg = ratio_count(gamma_c, n_mixed);
    if n_contam + n_neg > contamination_pool.nrows() {
        return Err(Error::Capacity(format!(
            "need {} contamination points ({} in X, {} in X^-), pool has {}",
            n_contam + n_neg,
            n_contam,
            n_neg,
            contamination_pool.nrows()
        )));
    }

    let mut pool_idx: Vec<usize> = (0..contamination_pool.nrows()).collect();
    pool_idx.shuffle(rng);
    let (in_mixed, rest) = pool_idx.split_at(n_contam);
    let neg_idx = &rest[..n_neg];

    // (is_target, row index into its pool)
    let mut order: Vec<(bool, usize)> = (0..n_target)
        .map(|i| (true, i))
        .chain(in_mixed.iter().map(|&i| (false, i)))
        .collect();
    order.shuffle(rng);

    let d = target_pool.ncols();
    let mut mixed = Array2::zeros((n_mixed, d));
    let mut labels_hidden = Vec::with_capacity(n_mixed);
    for (mut row, &(is_target, i)) in mixed.rows_mut().into_iter().zip(&order) {
        let src = if is_target {
            target_pool.row(i)
        } else {
            contamination_pool.row(i)
        };
        row.assign(&src);
        labels_hidden.push(is_target);
    }
    let negatives = if n_neg == 0 {
        Array2::zeros((0, d))
    } else {
        contamination_pool.select(Axis(0), neg_idx)
    };

    Ok(ContaminatedDataset {
        mixed,
        negatives,
        gamma_p,
        gamma_c,
        pi: 1.0 - gamma_p,
        labels_hidden,
    })
}

impl ContaminatedDataset {
    /// Reassembles a dataset from stored parts. `pi` is recomputed as `1 - gamma_p`.
    pub fn from_parts(
        mixed: Array2<f64>,
        negatives: Array2<f64>,
        gamma_p: f64,
        gamma_c: f64,
        labels_hidden: Vec<bool>,
    ) -> Result<Self> {
        validate_ratios(gamma_p, gamma_c)?;
        if labels_hidden.len() != mixed.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} mixed points",
                labels_hidden.len(),
                mixed.nrows()
            )));
        }
        if negatives.nrows() > 0 && negatives.ncols() != mixed.ncols() {
            return Err(Error::Shape("mixed and negatives differ in dimension".into()));
        }
        Ok(Self {
            mixed,
            negatives,
            gamma_p,
            gamma_c,
            pi: 1.0 - gamma_p,
            labels_hidden,
        })
    }

    pub fn training_data(&self) -> TrainingData<'_> {
        TrainingData::new(self.mixed.view(), self.negatives.view())
    }

    pub fn mixed(&self) -> ArrayView2<'_, f64> {
        self.mixed.view()
    }

    pub fn negatives(&self) -> ArrayView2<'_, f64> {
        self.negatives.view()
    }

    pub fn gamma_p(&self) -> f64 {
        self.gamma_p
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    /// Proportion of target points in `X`.
    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn dimension(&self) -> usize {
        self.mixed.ncols()
    }

    /// Ground truth for `X` (`true` = target). For evaluation only.
    pub fn hidden_labels(&self) -> &[bool] {
        &self.labels_hidden
    }

    pub fn contamination_in_mixed(&self) -> usize {
        self.labels_hidden.iter().filter(|t| !**t).count()
    }

    pub fn minibatch<R: Rng + ?Sized>(&self, part: Part, batch_size: usize, rng: &mut R) -> Result<Array2<f64>> {
        self.training_data().minibatch(part, batch_size, rng)
    }

    /// Writes `mixed.csv`, `negatives.csv`, the label sidecar `mixed_labels.csv`
    /// and `dataset.toml` (ratios) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_points_csv(&dir.join(MIXED_FILE), self.mixed.view())?;
        write_points_csv(&dir.join(NEGATIVES_FILE), self.negatives.view())?;
        let mut w = csv::Writer::from_path(dir.join(LABELS_FILE))?;
        w.write_record(["label"])?;
        for &t in &self.labels_hidden {
            w.write_record([if t { "target" } else { "contamination" }])?;
        }
        w.flush()?;
        let meta = DatasetMeta {
            gamma_p: self.gamma_p,
            gamma_c: self.gamma_c,
            pi: self.pi,
            dimension: self.dimension(),
            n_mixed: self.mixed.nrows(),
            n_negatives: self.negatives.nrows(),
        };
        fs::write(dir.join(META_FILE), toml::to_string(&meta).expect("meta serializes"))?;
        Ok(())
    }

    /// Loads a dataset written by [`save`](Self::save), including hidden labels.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta = read_meta(dir)?;
        let (mixed, negatives) = load_training_arrays(dir, meta.dimension)?;
        let labels = read_label_file(&dir.join(LABELS_FILE))?;
        Self::from_parts(mixed, negatives, meta.gamma_p, meta.gamma_c, labels)
    }
}

pub const MIXED_FILE: &str = "mixed.csv";
pub const NEGATIVES_FILE: &str = "negatives.csv";
pub const LABELS_FILE: &str = "mixed_labels.csv";
pub const META_FILE: &str = "dataset.toml";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub gamma_p: f64,
    pub gamma_c: f64,
    pub pi: f64,
    pub dimension: usize,
    pub n_mixed: usize,
    pub n_negatives: usize,
}

fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let text = fs::read_to_string(dir.join(META_FILE))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", META_FILE)))
}

/// Loads only `mixed.csv` and `negatives.csv`; the label sidecar is never opened.
pub fn load_training_arrays(dir: &Path, dimension: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let mixed = read_points_csv(&dir.join(MIXED_FILE), Some(dimension))?;
    let negatives = read_points_csv(&dir.join(NEGATIVES_FILE), Some(dimension))?;
    Ok((mixed, negatives))
}

/// Writes points with header `x1,..,xd`.
pub fn write_points_csv(path: &Path, points: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (1..=points.ncols()).map(|i| format!("x{i}")).collect();
    w.write_record(&header)?;
    for row in points.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headed CSV of coordinates. Columns named `x1..xd` are used when
/// present; otherwise every column is taken as a coordinate.
pub fn read_points_csv(path: &Path, dimension: Option<usize>) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let coord_cols: Vec<usize> = {
        let named: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with('x') && h[1..].parse::<usize>().is_ok())
            .map(|(i, _)| i)
            .collect();
        if named.is_empty() {
            (0..headers.len()).collect()
        } else {
            named
        }
    };
    let d = dimension.unwrap_or(coord_cols.len());
    if coord_cols.len() != d {
        return Err(Error::Shape(format!(
            "{}: expected {d} coordinate columns, found {}",
            path.display(),
            coord_cols.len()
        )));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec?;
        for &c in &coord_cols {
            let field = rec.get(c).unwrap_or("");
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Argument(format!("{}: cannot parse '{field}' as a number", path.display())))?;
            values.push(v);
        }
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, d), values).expect("row-major fill"))
}

/// Reads a label column: accepts `target`/`contamination`, `1`/`0` or `true`/`false`.
pub fn read_label_file(path: &Path) -> Result<Vec<bool>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("").trim();
        out.push(match field {
            "target" | "1" | "true" | "positive" => true,
            "contamination" | "0" | "false" | "negative" => false,
            other => return Err(Error::Argument(format!("{}: unknown label '{other}'", path.display()))),
        });
    }
    Ok(out)
}
