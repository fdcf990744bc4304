//! Maps raw features to (nearly) uniform values on `[0, 1]`.
//!
//! Three routes are provided:
//! - batch standardization followed by the standard normal CDF,
//! - the empirical distribution function (ranks `(i − ½)/n`),
//! - MinMax rescaling, kept as the baseline the other two are compared against.
//!
//! LayerNorm lives in [`layer_norm`] since the KAN layers standardize each example
//! over its features before the CDF.

mod layer_norm;
mod minmax;

pub use layer_norm::{
    layernorm_backward, layernorm_forward, LayerNormBatchCache, LayerNormBatchGrads, LayerNormCache, LayerNormGrads,
    LayerNormParams, DEFAULT_LN_EPSILON,
};
pub use minmax::{minmax_backward, minmax_forward, minmax_normalize, MinMaxCache, MinMaxScope};

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::Scalar;

/// Default variance guard for batch statistics.
pub const DEFAULT_BATCH_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizeError {
    #[error("cannot compute statistics of an empty column")]
    EmptyColumn,
    #[error("non-finite input value {0}")]
    NonFinite(f64),
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("sample has zero spread; bandwidth rule is undefined")]
    DegenerateSample,
    #[error("expected {expected} features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Per-feature mean and guarded standard deviation of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats<S> {
    pub mu: S,
    /// `sqrt(epsilon + unbiased variance)`, so always `≥ sqrt(epsilon)`.
    pub sigma: S,
    pub epsilon: S,
}

/// Mean and `sqrt(ε + s²)` with the unbiased variance `s²`.
///
/// A single-element column has variance 0, so `sigma = sqrt(ε)`.
pub fn batch_stats<S: Scalar>(column: &[S], epsilon: S) -> Result<BatchStats<S>, NormalizeError> {
    let (mu, var) = mean_and_unbiased_var(column.iter().copied(), column.len())?;
    Ok(BatchStats {
        mu,
        sigma: (epsilon + var).sqrt(),
        epsilon,
    })
}

fn mean_and_unbiased_var<S: Scalar>(
    values: impl Iterator<Item = S> + Clone,
    n: usize,
) -> Result<(S, S), NormalizeError> {
    if n == 0 {
        return Err(NormalizeError::EmptyColumn);
    }
    let nf = S::from_usize_lossy(n);
    let mu = values.clone().fold(S::zero(), |a, x| a + x) / nf;
    if n == 1 {
        return Ok((mu, S::zero()));
    }
    let ss = values.fold(S::zero(), |a, x| a + (x - mu) * (x - mu));
    Ok((mu, ss / (nf - S::one())))
}

/// Column-wise [`batch_stats`] of an `n × f` matrix.
pub fn column_stats<S: Scalar>(
    batch: ArrayView2<S>,
    epsilon: S,
) -> Result<Vec<BatchStats<S>>, NormalizeError> {
    batch
        .axis_iter(Axis(1))
        .map(|col| {
            let (mu, var) = mean_and_unbiased_var(col.iter().copied(), col.len())?;
            Ok(BatchStats {
                mu,
                sigma: (epsilon + var).sqrt(),
                epsilon,
            })
        })
        .collect()
}

/// Standard normal CDF `½(1 + erf(z/√2))`.
///
/// Evaluated through `erfc` on the far side of the mean so the tails keep
/// their relative precision.
#[inline]
pub fn gaussian_cdf<S: Scalar>(z: S) -> S {
    let half = S::lit(0.5);
    let t = z * S::FRAC_1_SQRT_2();
    if z < S::zero() {
        half * (-t).erfc_fn()
    } else {
        S::one() - half * t.erfc_fn()
    }
}

/// Standard normal density `exp(−z²/2)/√(2π)`, the derivative of [`gaussian_cdf`].
#[inline]
pub fn gaussian_cdf_deriv<S: Scalar>(z: S) -> S {
    let inv_sqrt_2pi = S::FRAC_1_SQRT_2() * S::FRAC_2_SQRT_PI() * S::lit(0.5);
    inv_sqrt_2pi * (-(z * z) * S::lit(0.5)).exp()
}

/// Clamps a CDF value into the open unit interval.
///
/// For `|z|` beyond ~8.3 (f64) the CDF rounds to exactly 0 or 1.
#[inline]
pub(crate) fn open_unit<S: Scalar>(u: S) -> S {
    let top = S::one() - S::epsilon() * S::lit(0.5);
    u.max(S::min_positive_value()).min(top)
}

/// Elementwise `Φ((x − μ)/σ)` per feature, strictly inside `(0, 1)`.
pub fn cdf_normalize<S: Scalar>(
    batch: ArrayView2<S>,
    stats: &[BatchStats<S>],
) -> Result<Array2<S>, NormalizeError> {
    if batch.ncols() != stats.len() {
        return Err(NormalizeError::FeatureMismatch {
            expected: stats.len(),
            got: batch.ncols(),
        });
    }
    if let Some(bad) = batch.iter().find(|x| !x.is_finite()) {
        return Err(NormalizeError::NonFinite(bad.to_f64().unwrap_or(f64::NAN)));
    }
    let mut out = batch.to_owned();
    for (mut col, st) in out.axis_iter_mut(Axis(1)).zip(stats) {
        col.mapv_inplace(|x| open_unit(gaussian_cdf((x - st.mu) / st.sigma)));
    }
    Ok(out)
}

/// Batch-statistics CDF normalizer with running averages for evaluation.
///
/// Training batches are normalized with their own statistics, which are also
/// folded into exponential running averages; evaluation uses the running
/// averages unchanged.
#[derive(Debug, Clone)]
pub struct BatchCdfNormalizer<S> {
    epsilon: S,
    momentum: S,
    running_mean: Vec<S>,
    running_var: Vec<S>,
    seen_batches: usize,
}

impl<S: Scalar> BatchCdfNormalizer<S> {
    /// Momentum 0.9: `running ← 0.9·running + 0.1·batch`.
    pub fn new(features: usize) -> Self {
        Self::with_params(features, S::lit(DEFAULT_BATCH_EPSILON), S::lit(0.9))
    }

    pub fn with_params(features: usize, epsilon: S, momentum: S) -> Self {
        Self {
            epsilon,
            momentum,
            running_mean: vec![S::zero(); features],
            running_var: vec![S::one(); features],
            seen_batches: 0,
        }
    }

    pub fn forward_train(&mut self, batch: ArrayView2<S>) -> Result<Array2<S>, NormalizeError> {
        let stats = column_stats(batch, self.epsilon)?;
        if stats.len() != self.running_mean.len() {
            return Err(NormalizeError::FeatureMismatch {
                expected: self.running_mean.len(),
                got: stats.len(),
            });
        }
        let keep = if self.seen_batches == 0 {
            S::zero()
        } else {
            self.momentum
        };
        for (i, st) in stats.iter().enumerate() {
            let var = st.sigma * st.sigma - self.epsilon;
            self.running_mean[i] = keep * self.running_mean[i] + (S::one() - keep) * st.mu;
            self.running_var[i] = keep * self.running_var[i] + (S::one() - keep) * var;
        }
        self.seen_batches += 1;
        cdf_normalize(batch, &stats)
    }

    pub fn forward_eval(&self, batch: ArrayView2<S>) -> Result<Array2<S>, NormalizeError> {
        cdf_normalize(batch, &self.running_stats())
    }

    pub fn running_stats(&self) -> Vec<BatchStats<S>> {
        self.running_mean
            .iter()
            .zip(&self.running_var)
            .map(|(&mu, &var)| BatchStats {
                mu,
                sigma: (self.epsilon + var.max(S::zero())).sqrt(),
                epsilon: self.epsilon,
            })
            .collect()
    }
}

fn total_order<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b)
        .unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}

/// Empirical distribution transform: the value of rank `i` (1-based) maps to
/// `(i − ½)/n`; tied values share the mean of their positions.
pub fn edf_transform<S: Scalar>(sample: &[S]) -> Vec<S> {
    let n = sample.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total_order(&sample[a], &sample[b]));
    let two_n = S::from_usize_lossy(2 * n);
    let mut out = vec![S::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sample[order[end]] == sample[order[start]] {
            end += 1;
        }
        // mean over 1-based ranks start+1..=end of (i − ½)/n
        let value = S::from_usize_lossy(start + end) / two_n;
        for &idx in &order[start..end] {
            out[idx] = value;
        }
        start = end;
    }
    out
}

/// Column-wise [`edf_transform`].
pub fn edf_normalize<S: Scalar>(batch: ArrayView2<S>) -> Array2<S> {
    let mut out = Array2::zeros(batch.raw_dim());
    for (src, mut dst) in batch.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
        let col: Vec<S> = src.iter().copied().collect();
        for (d, v) in dst.iter_mut().zip(edf_transform(&col)) {
            *d = v;
        }
    }
    out
}

/// EDF values together with a usable derivative.
///
/// Ranks are piecewise constant, so their true derivative vanishes; the CDF's
/// derivative is the density, estimated here by a Gaussian KDE with
/// Silverman's bandwidth at each sample point.
pub fn edf_transform_with_density<S: Scalar>(
    sample: &[S],
) -> Result<(Vec<S>, Vec<S>), NormalizeError> {
    let h = silverman_bandwidth(sample)?;
    let values = edf_transform(sample);
    let derivs = sample
        .iter()
        .map(|&x| kde_density(sample, x, h))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((values, derivs))
}

/// Gaussian kernel density estimate `(1/(n h)) Σ φ((x − x_i)/h)`.
pub fn kde_density<S: Scalar>(sample: &[S], x: S, bandwidth: S) -> Result<S, NormalizeError> {
    if !(bandwidth > S::zero()) {
        return Err(NormalizeError::NonPositiveBandwidth(
            bandwidth.to_f64().unwrap_or(f64::NAN),
        ));
    }
    if sample.is_empty() {
        return Err(NormalizeError::EmptyColumn);
    }
    let sum: S = sample
        .iter()
        .map(|&xi| gaussian_cdf_deriv((x - xi) / bandwidth))
        .sum();
    Ok(sum / (S::from_usize_lossy(sample.len()) * bandwidth))
}

/// Silverman's rule of thumb `1.06 · σ · n^{−1/5}` (σ: unbiased sample std).
pub fn silverman_bandwidth<S: Scalar>(sample: &[S]) -> Result<S, NormalizeError> {
    let (_, var) = mean_and_unbiased_var(sample.iter().copied(), sample.len())?;
    if !(var > S::zero()) {
        return Err(NormalizeError::DegenerateSample);
    }
    let n = S::from_usize_lossy(sample.len());
    Ok(S::lit(1.06) * var.sqrt() * n.powf(S::lit(-0.2)))
}

/// Kolmogorov–Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_distance_uniform<S: Scalar>(sample: &[S]) -> S {
    let mut sorted = sample.to_vec();
    sorted.sort_by(total_order);
    let n = S::from_usize_lossy(sorted.len());
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = S::from_usize_lossy(i) / n;
            let hi = S::from_usize_lossy(i + 1) / n;
            (x - lo).abs().max((hi - x).abs())
        })
        .fold(S::zero(), S::max)
}
