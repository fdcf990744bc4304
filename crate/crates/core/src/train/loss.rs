use ndarray::{Array2, ArrayView2, Axis};

use super::TrainError;
use crate::Scalar;

/// Mean cross-entropy of `logits` against `labels` and its gradient
/// `(softmax − onehot) / b`.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: ArrayView2<S>,
    labels: &[usize],
) -> Result<(f64, Array2<S>), TrainError> {
    let (b, c) = logits.dim();
    if labels.len() != b {
        return Err(TrainError::Shape(format!("{} labels for {b} rows", labels.len())));
    }
    if b == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut grad = Array2::zeros((b, c));
    let mut total = 0.0;
    let inv_b = S::one() / S::from_usize_lossy(b);
    for (row, ((z, mut g), &label)) in logits
        .axis_iter(Axis(0))
        .zip(grad.axis_iter_mut(Axis(0)))
        .zip(labels)
        .enumerate()
    {
        if label >= c {
            return Err(TrainError::Label { row, label, classes: c });
        }
        let max = z.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for (gi, &zi) in g.iter_mut().zip(z) {
            *gi = (zi - max).exp();
            sum += *gi;
        }
        let log_sum = sum.ln() + max;
        total += (log_sum - z[label]).to_f64().unwrap_or(f64::NAN);
        g.mapv_inplace(|e| e / sum * inv_b);
        g[label] -= inv_b;
    }
    Ok((total / b as f64, grad))
}
