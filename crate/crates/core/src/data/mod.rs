//! Datasets: MNIST IDX files, seeded subsets, and synthetic samples.

mod histogram;
mod idx;
mod synthetic;

pub use histogram::{activation_histogram, ActivationHistogram, HISTOGRAM_BATCH};
pub use idx::{load_mnist_dir, load_mnist_idx, read_idx, IdxArray, IMAGE_MAGIC, LABEL_MAGIC, MNIST_DIR_ENV};
pub use synthetic::{
    sample_gaussian_2d, sample_hcr_density, separable_blobs, HcrSample, GAUSSIAN_2D_COVARIANCE,
    GAUSSIAN_2D_PRESETS,
};

use std::path::PathBuf;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, need {expected} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at row {row} is outside 0..{classes}")]
    BadLabel { row: usize, label: usize, classes: usize },
    #[error("requested {requested} rows from a dataset of {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("covariance matrix is not symmetric positive-definite")]
    NotPositiveDefinite,
    #[error("density is negative ({value}) at {point:?}")]
    NegativeDensity { point: Vec<f64>, value: f64 },
    #[error("sampling supports dimension 1 or 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("{0} labels for {1} rows")]
    LabelLength(usize, usize),
    #[error("non-finite feature at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("layer index {index} out of range for a network with {layers} layers")]
    BadLayer { index: usize, layers: usize },
    #[error(transparent)]
    Kan(#[from] crate::kan::KanError),
}

/// Row-major features with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub name: String,
    features: Array2<S>,
    labels: Option<Vec<usize>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        name: impl Into<String>,
        features: Array2<S>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self, DataError> {
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(DataError::LabelLength(l.len(), features.nrows()));
            }
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFinite(r, c));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<S> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of classes implied by the largest label.
    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m + 1)
    }

    /// Rows `rows` in that order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: self.features.select(Axis(0), rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Features and labels of `rows`; labels are empty for unlabeled data.
    pub fn batch(&self, rows: &[usize]) -> (Array2<S>, Vec<usize>) {
        let x = self.features.select(Axis(0), rows);
        let y = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&i| l[i]).collect())
            .unwrap_or_default();
        (x, y)
    }

    /// Per-class row counts, `counts[c]` for `c < n_classes`.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in self.labels.iter().flatten() {
            counts[l] += 1;
        }
        counts
    }
}

/// `n` rows drawn without replacement, in sampled order.
pub fn subset<S: Scalar>(data: &Dataset<S>, n: usize, seed: u64) -> Result<Dataset<S>, DataError> {
    if n > data.len() {
        return Err(DataError::SubsetTooLarge {
            requested: n,
            available: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = index::sample(&mut rng, data.len(), n).into_vec();
    let mut out = data.select(&rows);
    out.name = format!("{}[{n}]", data.name);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset<f64> {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i * 2 + j) as f64);
        Dataset::new("toy", x, Some((0..10).map(|i| i % 3).collect())).unwrap()
    }

    #[test]
    fn construction_checks() {
        assert!(matches!(
            Dataset::new("x", array![[1.0f64], [2.0]], Some(vec![0])),
            Err(DataError::LabelLength(1, 2))
        ));
        assert!(matches!(
            Dataset::new("x", array![[1.0f64], [f64::NAN]], None),
            Err(DataError::NonFinite(1, 0))
        ));
        let d = toy();
        assert_eq!(d.n_classes(), 3);
        assert_eq!(d.label_histogram(), vec![4, 3, 3]);
    }

    #[test]
    fn full_subset_is_a_permutation() {
        let d = toy();
        let s = subset(&d, d.len(), 3).unwrap();
        let mut first: Vec<f64> = s.features().column(0).to_vec();
        first.sort_by(f64::total_cmp);
        assert_eq!(first, d.features().column(0).to_vec());
        // labels travel with their rows
        for (row, &l) in s.features().rows().into_iter().zip(s.labels().unwrap()) {
            assert_eq!((row[0] as usize / 2) % 3, l);
        }
    }

    #[test]
    fn subset_is_seeded() {
        let d = toy();
        assert_eq!(subset(&d, 4, 11).unwrap(), subset(&d, 4, 11).unwrap());
        assert_ne!(subset(&d, 4, 11).unwrap(), subset(&d, 4, 12).unwrap());
        assert_eq!(subset(&d, 4, 0).unwrap().len(), 4);
        assert!(matches!(subset(&d, 11, 0), Err(DataError::SubsetTooLarge { .. })));
    }
}
