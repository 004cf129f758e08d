//! Feature extraction, quality metrics and a small cross-validation harness.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix3;
use crate::types::CovarianceField;

/// The five polarimetric features kept per pixel: the three channel powers and
/// the modulus and phase of the HH/VV correlation. `c12` and `c23` are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub c11: f64,
    pub c22: f64,
    pub c33: f64,
    pub abs_c13: f64,
    /// In `(-pi, pi]`; zero when `c13` is zero.
    pub arg_c13: f64,
}

pub const FEATURE_NAMES: [&str; 5] = ["c11", "c22", "c33", "abs_c13", "arg_c13"];

impl FeatureVector {
    pub fn from_matrix(m: &HermitianMatrix3) -> Self {
        let abs = m.c13.norm();
        Self {
            c11: m.c11,
            c22: m.c22,
            c33: m.c33,
            abs_c13: abs,
            arg_c13: if abs == 0.0 { 0.0 } else { m.c13.arg() },
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.c11, self.c22, self.c33, self.abs_c13, self.arg_c13]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            c11: a[0],
            c22: a[1],
            c33: a[2],
            abs_c13: a[3],
            arg_c13: a[4],
        }
    }
}

pub fn extract_features(field: &CovarianceField) -> Vec<FeatureVector> {
    field.data().iter().map(FeatureVector::from_matrix).collect()
}

/// `mean^2 / variance` (population variance). A constant region gives `+inf`.
pub fn enl(intensities: &[f64]) -> Result<f64> {
    if intensities.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "ENL needs at least 2 samples, got {}",
            intensities.len()
        )));
    }
    let n = intensities.len() as f64;
    let mean = intensities.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ENL needs a positive mean, got {mean}"
        )));
    }
    let var = intensities.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(mean * mean / var)
}

/// Rectangular region `(x, y, w, h)` of a row-major raster, as a flat list.
pub fn region(values: &[f64], width: usize, x: usize, y: usize, w: usize, h: usize) -> Result<Vec<f64>> {
    let height = values.len() / width.max(1);
    if w == 0 || h == 0 || x + w > width || y + h > height {
        return Err(Error::InvalidConfig(format!(
            "region x={x} y={y} w={w} h={h} does not fit in {height}x{width}"
        )));
    }
    Ok((y..y + h)
        .flat_map(|r| values[r * width + x..r * width + x + w].iter().copied())
        .collect())
}

/// Mean relative Frobenius error of an estimate against per-class truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixErrorSummary {
    /// Class id -> (mean relative error, pixel count).
    pub per_class: BTreeMap<u16, ClassError>,
    pub overall: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassError {
    pub mean: f64,
    pub pixels: usize,
}

/// `|C(t) - Sigma_class(t)|_F / |Sigma_class(t)|_F`, averaged per class and
/// overall. `mask`, when given, restricts the average to selected pixels.
pub fn matrix_error(
    estimate: &CovarianceField,
    truth: &[HermitianMatrix3],
    class_map: &[u16],
    mask: Option<&[bool]>,
) -> Result<MatrixErrorSummary> {
    let n = estimate.data().len();
    if class_map.len() != n || mask.is_some_and(|m| m.len() != n) {
        return Err(Error::InvalidConfig(format!(
            "class map / mask sizes do not match the {n}-pixel estimate"
        )));
    }
    let mut sums: BTreeMap<u16, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (c, &k)) in estimate.data().iter().zip(class_map).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let sigma = truth
            .get(k as usize)
            .ok_or(Error::UnknownClass { class: k, index: i })?;
        let e = c.sub(sigma).frobenius_norm() / sigma.frobenius_norm();
        let entry = sums.entry(k).or_default();
        entry.0 += e;
        entry.1 += 1;
        total += e;
        count += 1;
    }
    Ok(MatrixErrorSummary {
        per_class: sums
            .into_iter()
            .map(|(k, (s, n))| {
                (
                    k,
                    ClassError {
                        mean: s / n as f64,
                        pixels: n,
                    },
                )
            })
            .collect(),
        overall: if count == 0 {
            f64::NAN
        } else {
            total / count as f64
        },
        pixels: count,
    })
}

/// Features with labels and optional group ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub features: Vec<[f64; 5]>,
    pub labels: Vec<u16>,
    pub groups: Option<Vec<u32>>,
}

impl LabeledSet {
    pub fn new(features: Vec<[f64; 5]>, labels: Vec<u16>, groups: Option<Vec<u32>>) -> Result<Self> {
        if features.len() != labels.len() || groups.as_ref().is_some_and(|g| g.len() != labels.len()) {
            return Err(Error::CrossValidation(
                "features, labels and groups must have equal length".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            groups,
        })
    }

    pub fn from_field(field: &CovarianceField, labels: &[u16], groups: Option<&[u16]>) -> Result<Self> {
        Self::new(
            extract_features(field)
                .iter()
                .map(FeatureVector::to_array)
                .collect(),
            labels.to_vec(),
            groups.map(|g| g.iter().map(|&x| u32::from(x)).collect()),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Classifier {
    /// Nearest class centroid on z-scored features.
    #[default]
    NearestCentroid,
    /// Majority vote among the `k` nearest training samples (z-scored).
    Knn { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub grouped: bool,
    pub seed: u64,
    pub classifier: Classifier,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 4,
            grouped: true,
            seed: 0,
            classifier: Classifier::NearestCentroid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// `None` when the fold was skipped.
    pub accuracy: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub classes: Vec<u16>,
    /// `confusion[true][predicted]` summed over evaluated folds.
    pub confusion: Vec<Vec<usize>>,
}

impl CvReport {
    /// `fold,accuracy` lines; skipped folds have an empty accuracy.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,accuracy\n");
        for f in &self.folds {
            match f.accuracy {
                Some(a) => s.push_str(&format!("{},{a}\n", f.fold)),
                None => s.push_str(&format!("{},\n", f.fold)),
            }
        }
        s
    }
}

/// Fold index for every sample.
///
/// Ungrouped: samples are shuffled and cut into `k` near-equal parts.
/// Grouped: groups are shuffled, ordered by size (largest first, stable), and
/// each is placed whole into the currently smallest fold.
pub fn assign_folds(data: &LabeledSet, folds: usize, grouped: bool, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::CrossValidation(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; n];
    if grouped {
        let groups = data
            .groups
            .as_ref()
            .ok_or_else(|| Error::CrossValidation("grouped CV requested without group ids".into()))?;
        let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &g) in groups.iter().enumerate() {
            members.entry(g).or_default().push(i);
        }
        if members.len() < folds {
            return Err(Error::CrossValidation(format!(
                "{} groups cannot fill {folds} folds",
                members.len()
            )));
        }
        let mut order: Vec<(u32, Vec<usize>)> = members.into_iter().collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|g| std::cmp::Reverse(g.1.len()));
        let mut sizes = vec![0usize; folds];
        for (_, idx) in order {
            let f = (0..folds).min_by_key(|&f| (sizes[f], f)).unwrap();
            sizes[f] += idx.len();
            for i in idx {
                fold_of[i] = f;
            }
        }
    } else {
        if n < folds {
            return Err(Error::CrossValidation(format!(
                "{n} samples cannot fill {folds} folds"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos * folds / n;
        }
    }
    Ok(fold_of)
}

struct Standardizer {
    mean: [f64; 5],
    scale: [f64; 5],
}

impl Standardizer {
    fn fit(rows: &[[f64; 5]]) -> Self {
        let n = rows.len() as f64;
        let mut mean = [0.0; 5];
        for r in rows {
            for j in 0..5 {
                mean[j] += r[j] / n;
            }
        }
        let mut var = [0.0; 5];
        for r in rows {
            for j in 0..5 {
                var[j] += (r[j] - mean[j]).powi(2) / n;
            }
        }
        let scale = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Self { mean, scale }
    }

    fn apply(&self, r: &[f64; 5]) -> [f64; 5] {
        let mut out = [0.0; 5];
        for j in 0..5 {
            out[j] = (r[j] - self.mean[j]) / self.scale[j];
        }
        out
    }
}

fn sq_dist(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

enum Model<'a> {
    Centroids(Vec<(u16, [f64; 5])>),
    Knn { k: usize, train: &'a [([f64; 5], u16)] },
}

impl<'a> Model<'a> {
    fn fit(classifier: Classifier, train: &'a [([f64; 5], u16)], classes: &[u16]) -> Self {
        match classifier {
            Classifier::NearestCentroid => Model::Centroids(
                classes
                    .iter()
                    .map(|&c| {
                        let mut centroid = [0.0; 5];
                        let mut n = 0usize;
                        for (f, _) in train.iter().filter(|(_, l)| *l == c) {
                            for j in 0..5 {
                                centroid[j] += f[j];
                            }
                            n += 1;
                        }
                        (c, centroid.map(|v| v / n as f64))
                    })
                    .collect(),
            ),
            Classifier::Knn { k } => Model::Knn { k, train },
        }
    }

    fn predict(&self, x: &[f64; 5]) -> u16 {
        match self {
            Model::Centroids(cs) => {
                let mut best = (f64::INFINITY, cs[0].0);
                for (c, centroid) in cs {
                    let d = sq_dist(centroid, x);
                    if d < best.0 {
                        best = (d, *c);
                    }
                }
                best.1
            }
            Model::Knn { k, train } => {
                let mut d: Vec<(f64, u16)> = train.iter().map(|(f, l)| (sq_dist(f, x), *l)).collect();
                let k = (*k).clamp(1, d.len());
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
                let mut votes: BTreeMap<u16, usize> = BTreeMap::new();
                for (_, l) in &d[..k] {
                    *votes.entry(*l).or_default() += 1;
                }
                // most votes, lowest label on ties
                votes
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(l, _)| l)
                    .unwrap()
            }
        }
    }
}

/// Runs k-fold (optionally grouped) cross-validation and summarises accuracy.
pub fn crossval_classify(data: &LabeledSet, cfg: &CvConfig) -> Result<CvReport> {
    let classes: Vec<u16> = data
        .labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::CrossValidation(format!(
            "need at least 2 classes, found {}",
            classes.len()
        )));
    }
    let fold_of = assign_folds(data, cfg.folds, cfg.grouped, cfg.seed)?;
    let class_pos: BTreeMap<u16, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];

    let run_fold = |f: usize| -> (FoldResult, Vec<(usize, usize)>) {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == f).collect();
        let mut result = FoldResult {
            fold: f,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            accuracy: None,
            skipped: None,
        };
        if test_idx.is_empty() {
            result.skipped = Some("empty test fold".into());
            return (result, Vec::new());
        }
        let train_classes: BTreeSet<u16> = train_idx.iter().map(|&i| data.labels[i]).collect();
        if let Some(missing) = classes.iter().find(|c| !train_classes.contains(c)) {
            result.skipped = Some(format!("class {missing} absent from training data"));
            return (result, Vec::new());
        }
        let train_rows: Vec<[f64; 5]> = train_idx.iter().map(|&i| data.features[i]).collect();
        let z = Standardizer::fit(&train_rows);
        let train: Vec<([f64; 5], u16)> = train_idx
            .iter()
            .map(|&i| (z.apply(&data.features[i]), data.labels[i]))
            .collect();
        let model = Model::fit(cfg.classifier, &train, &classes);
        let pairs: Vec<(usize, usize)> = test_idx
            .iter()
            .map(|&i| {
                let pred = model.predict(&z.apply(&data.features[i]));
                (class_pos[&data.labels[i]], class_pos[&pred])
            })
            .collect();
        let correct = pairs.iter().filter(|(t, p)| t == p).count();
        result.accuracy = Some(correct as f64 / pairs.len() as f64);
        (result, pairs)
    };

    #[cfg(feature = "parallel")]
    let outcomes: Vec<(FoldResult, Vec<(usize, usize)>)> = {
        use rayon::prelude::*;
        (0..cfg.folds).into_par_iter().map(run_fold).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<(FoldResult, Vec<(usize, usize)>)> = (0..cfg.folds).map(run_fold).collect();

    let mut folds = Vec::with_capacity(cfg.folds);
    for (res, pairs) in outcomes {
        if let Some(reason) = &res.skipped {
            log::warn!("fold {} skipped: {reason}", res.fold);
        }
        for (t, p) in pairs {
            confusion[t][p] += 1;
        }
        folds.push(res);
    }
    let accs: Vec<f64> = folds.iter().filter_map(|f| f.accuracy).collect();
    if accs.is_empty() {
        return Err(Error::CrossValidation("every fold was skipped".into()));
    }
    Ok(CvReport {
        mean: accs.iter().sum::<f64>() / accs.len() as f64,
        min: accs.iter().copied().fold(f64::INFINITY, f64::min),
        max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        folds,
        classes,
        confusion,
    })
}
