use ndarray::ArrayView2;

use super::{softmax_cross_entropy, TrainError};
use crate::kan::Network;

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients at the
/// round-off level do not dominate.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub params: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&BlockError> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_relative_error < self.tolerance)
    }
}

/// Compares the analytic cross-entropy gradient of every trainable parameter
/// with central finite differences on one batch.
pub fn grad_check(
    net: &Network<f64>,
    x: ArrayView2<f64>,
    labels: &[usize],
    tolerance: f64,
) -> Result<GradCheckReport, TrainError> {
    let (logits, cache) = net.forward_cached(x)?;
    let (_, grad_logits) = softmax_cross_entropy(logits.view(), labels)?;
    let grads = net.backward(&cache, grad_logits.view())?;
    let loss = |n: &Network<f64>| -> Result<f64, TrainError> {
        Ok(softmax_cross_entropy(n.forward(x)?.view(), labels)?.0)
    };

    let mut work = net.clone();
    let mut blocks = Vec::with_capacity(grads.blocks.len());
    for (b, (name, g)) in grads.blocks.iter().enumerate() {
        let mut worst = 0.0f64;
        for (i, &analytic) in g.iter().enumerate() {
            let orig = work.params_mut()[b].1[i];
            work.params_mut()[b].1[i] = orig + FD_STEP;
            let plus = loss(&work)?;
            work.params_mut()[b].1[i] = orig - FD_STEP;
            let minus = loss(&work)?;
            work.params_mut()[b].1[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let scale = numeric.abs().max(analytic.abs()).max(RELATIVE_FLOOR);
            worst = worst.max((numeric - analytic).abs() / scale);
        }
        blocks.push(BlockError {
            name: name.clone(),
            params: g.len(),
            max_relative_error: worst,
        });
    }
    Ok(GradCheckReport { tolerance, blocks })
}
