//! Dataset ingestion, PCA reduction, feature scaling, split construction
//! (including the overfitting-inducing test-into-train merge) and synthetic
//! dataset generation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Argument(format!("label {bad} is not binary")));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != features[0].len() {
                return Err(Error::Argument(format!("ragged feature row {i}")));
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("non-finite feature {bad} in row {i}")));
            }
        }
        Ok(Self {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, |r| r.len())
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Train/test/validation partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub validation: Dataset,
}

/// Fitted PCA: mean vector plus orthonormal components in descending
/// eigenvalue order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

/// Load a CSV dataset. The label column must hold exactly two distinct
/// values; the lexicographically smaller one maps to 0.
pub fn load_csv(path: &std::path::Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column '{label_column}' not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let mut row = Vec::with_capacity(feature_names.len());
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "non-numeric cell '{cell}' at row {}, column '{}'",
                    row_no + 2,
                    headers[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "non-finite cell '{cell}' at row {}, column '{}'",
                    row_no + 2,
                    headers[col]
                )));
            }
            row.push(v);
        }
        features.push(row);
    }

    let mut distinct: Vec<&String> = Vec::new();
    for l in &raw_labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    if distinct.len() != 2 {
        return Err(Error::Schema(format!(
            "label column must hold exactly two distinct values, found {}",
            distinct.len()
        )));
    }
    distinct.sort();
    let zero = distinct[0].clone();
    let labels: Vec<u8> = raw_labels.iter().map(|l| u8::from(*l != zero)).collect();

    let mut ds = Dataset::new(features, labels)?;
    ds.feature_names = Some(feature_names);
    Ok(ds)
}

/// Mean-centered covariance eigendecomposition; top-d components by
/// eigenvalue with the sign fixed so each component's largest-magnitude entry
/// is positive.
pub fn pca_fit(x: &[Vec<f64>], d: usize) -> Result<PcaTransform> {
    let k_rows = x.len();
    if k_rows < 2 {
        return Err(Error::Argument(format!("PCA needs at least 2 rows, got {k_rows}")));
    }
    let k = x[0].len();
    if d == 0 || d > k.min(k_rows) {
        return Err(Error::Argument(format!(
            "component count {d} out of range 1..={}",
            k.min(k_rows)
        )));
    }
    let mean: Vec<f64> = (0..k)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / k_rows as f64)
        .collect();
    let centered = DMatrix::from_fn(k_rows, k, |i, j| x[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (k_rows as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut components = Vec::with_capacity(d);
    let mut explained = Vec::with_capacity(d);
    for &idx in order.iter().take(d) {
        let col = eig.eigenvectors.column(idx);
        let mut comp: Vec<f64> = col.iter().copied().collect();
        // deterministic sign: largest-magnitude entry positive
        let lead = comp
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            for v in &mut comp {
                *v = -*v;
            }
        }
        components.push(comp);
        explained.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaTransform {
        mean,
        components,
        explained_variance: explained,
    })
}

/// Project rows: (X - mean) * components^T.
pub fn pca_apply(t: &PcaTransform, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = t.mean.len();
    x.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != k {
                return Err(Error::Argument(format!(
                    "row {i} has {} columns, transform expects {k}",
                    row.len()
                )));
            }
            Ok(t.components
                .iter()
                .map(|c| c.iter().zip(row).zip(&t.mean).map(|((cj, xj), mj)| cj * (xj - mj)).sum())
                .collect())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTarget {
    QubitEncoding,
    AmplitudeEncoding,
}

/// Per-column min-max map onto [0, pi] for qubit encoding (constant columns
/// map to pi/2); amplitude encoding leaves rows unscaled but rejects all-zero
/// rows, which the encoder cannot normalize.
pub fn scale_features(x: &[Vec<f64>], target: ScaleTarget) -> Result<Vec<Vec<f64>>> {
    if x.is_empty() {
        return Err(Error::Argument("empty feature matrix".into()));
    }
    match target {
        ScaleTarget::AmplitudeEncoding => {
            for (i, row) in x.iter().enumerate() {
                if row.iter().all(|&v| v == 0.0) {
                    return Err(Error::Encoding(format!(
                        "row {i} is all zeros and cannot be amplitude-encoded"
                    )));
                }
            }
            Ok(x.to_vec())
        }
        ScaleTarget::QubitEncoding => {
            let k = x[0].len();
            let mut lo = vec![f64::INFINITY; k];
            let mut hi = vec![f64::NEG_INFINITY; k];
            for row in x {
                for (j, &v) in row.iter().enumerate() {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
            Ok(x.iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(j, &v)| {
                            if hi[j] == lo[j] {
                                std::f64::consts::FRAC_PI_2
                            } else {
                                (v - lo[j]) / (hi[j] - lo[j]) * std::f64::consts::PI
                            }
                        })
                        .collect()
                })
                .collect())
        }
    }
}

/// Seeded shuffle followed by a contiguous partition by ratios. With
/// `merge_test_into_train`, a copy of the test rows is appended to the
/// training set (the test set itself is unchanged).
pub fn split(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
    stratified: bool,
    merge_test_into_train: bool,
) -> Result<Splits> {
    let (rt, rs, rv) = ratios;
    if rt <= 0.0 || rs <= 0.0 || rv <= 0.0 {
        return Err(Error::Argument("split ratios must be positive".into()));
    }
    if (rt + rs + rv - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split ratios must sum to 1, got {}",
            rt + rs + rv
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let partition = |idx: &mut Vec<usize>, rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        idx.shuffle(rng);
        let n = idx.len();
        let n_train = (rt * n as f64).round() as usize;
        let n_test = (rs * n as f64).round() as usize;
        let n_train = n_train.min(n);
        let n_test = n_test.min(n - n_train);
        (
            idx[..n_train].to_vec(),
            idx[n_train..n_train + n_test].to_vec(),
            idx[n_train + n_test..].to_vec(),
        )
    };

    let (tr, te, va) = if stratified {
        let mut tr = Vec::new();
        let mut te = Vec::new();
        let mut va = Vec::new();
        for class in [0u8, 1u8] {
            let mut idx: Vec<usize> = (0..dataset.len())
                .filter(|&i| dataset.labels[i] == class)
                .collect();
            let (a, b, c) = partition(&mut idx, &mut rng);
            tr.extend(a);
            te.extend(b);
            va.extend(c);
        }
        (tr, te, va)
    } else {
        let mut idx: Vec<usize> = (0..dataset.len()).collect();
        partition(&mut idx, &mut rng)
    };

    if tr.is_empty() || te.is_empty() || va.is_empty() {
        return Err(Error::Argument(
            "a split is empty after rounding; use more data or different ratios".into(),
        ));
    }

    let mut train = dataset.subset(&tr);
    let test = dataset.subset(&te);
    let validation = dataset.subset(&va);
    if merge_test_into_train {
        train.features.extend(test.features.iter().cloned());
        train.labels.extend(test.labels.iter().copied());
    }
    Ok(Splits {
        train,
        test,
        validation,
    })
}

/// Two isotropic Gaussian clouds at +-(separation/2) along a seeded random
/// unit direction; labels 0/1 by cloud.
pub fn synth_gaussians(
    n_per_class: usize,
    k: usize,
    separation: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || k == 0 {
        return Err(Error::Argument("n_per_class and k must be positive".into()));
    }
    if !(separation >= 0.0) || !(noise_sd > 0.0) {
        return Err(Error::Argument(
            "separation must be nonnegative and noise_sd positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut u {
        *v /= norm;
    }
    let mut features = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in [0u8, 1u8] {
        let sign = if class == 0 { -1.0 } else { 1.0 };
        for _ in 0..n_per_class {
            let row: Vec<f64> = u
                .iter()
                .map(|&ui| sign * separation / 2.0 * ui + noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            features.push(row);
            labels.push(class);
        }
    }
    Dataset::new(features, labels)
}
