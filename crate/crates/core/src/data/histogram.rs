use std::path::Path;

use ndarray::s;

use super::{DataError, Dataset};
use crate::kan::Network;
use crate::Scalar;

/// Rows per forward pass. MinMax statistics depend on the batch, so this
/// matches the default training batch.
pub const HISTOGRAM_BATCH: usize = 128;

/// Counts of post-normalization activations over fixed bins on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationHistogram {
    pub layer: usize,
    pub edges: Vec<f64>,
    /// Pooled over all features of the layer.
    pub counts: Vec<u64>,
    /// One row of counts per input feature of the layer, when requested.
    pub per_feature: Option<Vec<Vec<u64>>>,
}

impl ActivationHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of the pooled mass in each bin.
    pub fn mass(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Largest bin mass divided by the uniform mass `1 / bins`.
    pub fn max_bin_ratio(&self) -> f64 {
        let max = self.counts.iter().copied().max().unwrap_or(0) as f64;
        max * self.bins() as f64 / self.total() as f64
    }

    /// Long-format CSV: `feature,bin_lo,bin_hi,count`, pooled rows first with
    /// feature `pooled`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let io = |e: csv::Error| DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["feature", "bin_lo", "bin_hi", "count"]).map_err(io)?;
        let mut emit = |feature: String, counts: &[u64]| -> Result<(), csv::Error> {
            for (b, c) in counts.iter().enumerate() {
                w.write_record([
                    feature.clone(),
                    self.edges[b].to_string(),
                    self.edges[b + 1].to_string(),
                    c.to_string(),
                ])?;
            }
            Ok(())
        };
        emit("pooled".into(), &self.counts).map_err(io)?;
        for (f, counts) in self.per_feature.iter().flatten().enumerate() {
            emit(f.to_string(), counts).map_err(io)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Histogram of the normalized inputs `u` of layer `layer_index` (0-based)
/// over `data`, evaluated in batches of [`HISTOGRAM_BATCH`] rows.
pub fn activation_histogram<S: Scalar>(
    net: &Network<S>,
    data: &Dataset<S>,
    layer_index: usize,
    bins: usize,
    per_feature: bool,
) -> Result<ActivationHistogram, DataError> {
    if layer_index >= net.layers().len() {
        return Err(DataError::BadLayer {
            index: layer_index,
            layers: net.layers().len(),
        });
    }
    if bins == 0 {
        return Err(DataError::NoBins);
    }
    let width = net.layers()[layer_index].in_dim();
    let mut counts = vec![0u64; bins];
    let mut features = per_feature.then(|| vec![vec![0u64; bins]; width]);
    let x = data.features();
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + HISTOGRAM_BATCH).min(x.nrows());
        let u = net.normalized_activations(x.slice(s![start..end, ..]), layer_index)?;
        for row in u.rows() {
            for (f, v) in row.iter().enumerate() {
                let v = v.to_f64().unwrap_or(f64::NAN).clamp(0.0, 1.0);
                let b = ((v * bins as f64) as usize).min(bins - 1);
                counts[b] += 1;
                if let Some(per) = features.as_mut() {
                    per[f][b] += 1;
                }
            }
        }
        start = end;
    }
    Ok(ActivationHistogram {
        layer: layer_index,
        edges: (0..=bins).map(|b| b as f64 / bins as f64).collect(),
        counts,
        per_feature: features,
    })
}
