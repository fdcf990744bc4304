//! Cross-entropy, Adam, the epoch loop and the finite-difference gradient check.

mod adam;
mod gradcheck;
mod loss;

pub use adam::{adam_step, Adam, AdamConfig, Moments};
pub use gradcheck::{grad_check, BlockError, GradCheckReport, FD_STEP, RELATIVE_FLOOR};
pub use loss::softmax_cross_entropy;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::kan::{KanError, Network, Variant, DEGREE_RANGE};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset `{0}` has no labels")]
    Unlabeled(String),
    #[error("label {label} at row {row} is outside 0..{classes}")]
    Label { row: usize, label: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss became non-finite at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Kan(#[from] KanError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Subset sizes and epoch count of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// 2000 train / 1000 test images, 5 epochs.
    Desk,
    /// 20000 train / 10000 test images, 20 epochs.
    Full,
}

impl Scale {
    pub fn train_n(self) -> usize {
        match self {
            Scale::Desk => 2_000,
            Scale::Full => 20_000,
        }
    }

    pub fn test_n(self) -> usize {
        match self {
            Scale::Desk => 1_000,
            Scale::Full => 10_000,
        }
    }

    pub fn epochs(self) -> usize {
        match self {
            Scale::Desk => 5,
            Scale::Full => 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub degree: usize,
    pub variant: Variant,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: Scale::Desk.epochs(),
            batch_size: 128,
            seed: 0,
            degree: 3,
            variant: Variant::CdfKalNet,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !DEGREE_RANGE.contains(&self.degree) {
            return Err(TrainError::Config(format!("degree {} outside 3..=11", self.degree)));
        }
        Ok(())
    }

    /// The configured variant with widths `dims`, initialized from the run seed.
    pub fn build_network<S: Scalar>(&self, dims: &[usize]) -> Result<Network<S>, TrainError> {
        self.validate()?;
        Ok(crate::kan::build_variant(self.variant, dims, self.degree, self.seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// Shuffling, forward, backward and optimizer time; evaluation excluded.
    pub wall_seconds: f64,
}

impl EpochMetrics {
    /// Equality of everything except the timing.
    pub fn same_results(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_loss == other.train_loss
            && self.test_loss == other.test_loss
            && self.test_accuracy == other.test_accuracy
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub metrics: Vec<EpochMetrics>,
    pub network: Network<S>,
}

impl<S> TrainOutcome<S> {
    pub fn best_test_accuracy(&self) -> f64 {
        self.metrics.iter().map(|m| m.test_accuracy).fold(0.0, f64::max)
    }

    pub fn total_wall_seconds(&self) -> f64 {
        self.metrics.iter().map(|m| m.wall_seconds).sum()
    }
}

fn labels_of<S: Scalar>(data: &Dataset<S>) -> Result<&[usize], TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    data.labels().ok_or_else(|| TrainError::Unlabeled(data.name.clone()))
}

/// Mean cross-entropy and accuracy of `net` on `data`, in batches of `batch_size` rows.
pub fn evaluate<S: Scalar>(net: &Network<S>, data: &Dataset<S>, batch_size: usize) -> Result<(f64, f64), TrainError> {
    labels_of(data)?;
    let batch_size = batch_size.max(1);
    let rows: Vec<usize> = (0..data.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in rows.chunks(batch_size) {
        let (x, y) = data.batch(chunk);
        let logits = net.forward(x.view())?;
        loss += softmax_cross_entropy(logits.view(), &y)?.0 * chunk.len() as f64;
        for (row, &label) in logits.rows().into_iter().zip(&y) {
            let predicted = row
                .iter()
                .enumerate()
                .fold((0, S::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            correct += usize::from(predicted == label);
        }
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

pub fn train<S: Scalar>(
    net: Network<S>,
    train_set: &Dataset<S>,
    test_set: &Dataset<S>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>, TrainError> {
    train_with(net, train_set, test_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<S: Scalar>(
    mut net: Network<S>,
    train_set: &Dataset<S>,
    test_set: &Dataset<S>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<S>, TrainError> {
    cfg.validate()?;
    labels_of(train_set)?;
    labels_of(test_set)?;
    if let Some(v) = net.variant() {
        if v != cfg.variant || net.degree() != cfg.degree {
            return Err(TrainError::Config(format!(
                "network is {v} degree {} but the configuration names {} degree {}",
                net.degree(),
                cfg.variant,
                cfg.degree
            )));
        }
    }
    let mut opt = Adam::new(&net, cfg.learning_rate, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = train_set.batch(chunk);
            let (logits, cache) = net.forward_cached(x.view())?;
            let (loss, grad) = softmax_cross_entropy(logits.view(), &y)?;
            total += loss * chunk.len() as f64;
            let grads = net.backward(&cache, grad.view())?;
            opt.step(&mut net, &grads)?;
        }
        let wall_seconds = start.elapsed().as_secs_f64();
        let train_loss = total / train_set.len() as f64;
        let (test_loss, test_accuracy) = evaluate(&net, test_set, cfg.batch_size)?;
        if !train_loss.is_finite() || !test_loss.is_finite() {
            return Err(TrainError::Diverged(epoch));
        }
        let m = EpochMetrics {
            epoch,
            train_loss,
            test_loss,
            test_accuracy,
            wall_seconds,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(TrainOutcome { metrics, network: net })
}

/// Writes `epoch,train_loss,test_loss,test_accuracy,wall_seconds` rows.
pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[EpochMetrics]) -> Result<(), TrainError> {
    let path = path.as_ref();
    let io = |e: csv::Error| TrainError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for m in metrics {
        w.serialize(m).map_err(io)?;
    }
    w.flush().map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::separable_blobs;

    fn blobs_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            epochs,
            batch_size: 16,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn one_epoch_gives_one_row() {
        let data = separable_blobs::<f64>(64, 4, 1);
        let cfg = blobs_config(1);
        let net = cfg.build_network(&[4, 3, 2]).unwrap();
        let out = train(net, &data, &data, &cfg).unwrap();
        assert_eq!(out.metrics.len(), 1);
        let m = &out.metrics[0];
        assert_eq!(m.epoch, 1);
        assert!((0.0..=1.0).contains(&m.test_accuracy) && m.train_loss.is_finite() && m.wall_seconds >= 0.0);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let data = separable_blobs::<f64>(512, 4, 2);
        let test = separable_blobs::<f64>(256, 4, 3);
        for variant in Variant::ALL {
            let cfg = TrainConfig {
                variant,
                ..blobs_config(3)
            };
            let out = train(cfg.build_network(&[4, 4, 2]).unwrap(), &data, &test, &cfg).unwrap();
            let losses: Vec<f64> = out.metrics.iter().map(|m| m.train_loss).collect();
            assert!(losses.windows(2).all(|w| w[1] < w[0]), "{variant}: {losses:?}");
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let data = separable_blobs::<f64>(200, 5, 7);
        let cfg = blobs_config(2);
        let run = || train(cfg.build_network(&[5, 4, 2]).unwrap(), &data, &data, &cfg).unwrap();
        let (a, b) = (run(), run());
        assert!(a.metrics.iter().zip(&b.metrics).all(|(x, y)| x.same_results(y)));
        assert_eq!(a.network, b.network);
        let other = TrainConfig { seed: 5, ..cfg.clone() };
        let c = train(other.build_network(&[5, 4, 2]).unwrap(), &data, &data, &other).unwrap();
        assert_ne!(c.network, a.network);
    }

    #[test]
    fn config_and_data_errors() {
        for bad in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { degree: 12, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
        }
        let cfg = blobs_config(1);
        let net = cfg.build_network::<f64>(&[4, 2]).unwrap();
        let data = separable_blobs::<f64>(10, 4, 0);
        let empty = data.select(&[]);
        assert!(matches!(train(net.clone(), &empty, &data, &cfg), Err(TrainError::EmptyDataset)));
        let unlabeled = Dataset::new("x", data.features().clone(), None).unwrap();
        assert!(matches!(train(net.clone(), &unlabeled, &data, &cfg), Err(TrainError::Unlabeled(_))));
        let mismatched = TrainConfig { variant: Variant::KalNet, ..cfg };
        assert!(matches!(train(net, &data, &data, &mismatched), Err(TrainError::Config(_))));
    }

    #[test]
    fn metrics_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = EpochMetrics {
            epoch: 1,
            train_loss: 0.5,
            test_loss: 0.25,
            test_accuracy: 0.75,
            wall_seconds: 1.5,
        };
        write_metrics_csv(&path, &[m.clone(), EpochMetrics { epoch: 2, ..m }]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "epoch,train_loss,test_loss,test_accuracy,wall_seconds\n1,0.5,0.25,0.75,1.5\n2,0.5,0.25,0.75,1.5\n"
        );
    }

    #[test]
    fn scales() {
        assert_eq!((Scale::Desk.train_n(), Scale::Desk.test_n(), Scale::Desk.epochs()), (2000, 1000, 5));
        assert_eq!((Scale::Full.train_n(), Scale::Full.test_n(), Scale::Full.epochs()), (20000, 10000, 20));
    }
}
