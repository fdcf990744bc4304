use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::NormalizeError;
use crate::Scalar;

pub const DEFAULT_LN_EPSILON: f64 = 1e-5;

/// LayerNorm over the feature axis: `scale ⊙ (x − E[x]) / sqrt(Var[x] + ε) + shift`.
///
/// `frozen` pins `scale ≡ 1`, `shift ≡ 0`; frozen parameters never receive gradients
/// and the affine step is skipped entirely.
/// `(grad_x, grad_scale, grad_shift)`.
pub type LayerNormBatchGrads<S> = (Array2<S>, Vec<S>, Vec<S>);

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<S> {
    pub scale: Vec<S>,
    pub shift: Vec<S>,
    pub frozen: bool,
    pub epsilon: S,
}

impl<S: Scalar> LayerNormParams<S> {
    pub fn new(dim: usize, frozen: bool) -> Self {
        Self {
            scale: vec![S::one(); dim],
            shift: vec![S::zero(); dim],
            frozen,
            epsilon: S::lit(DEFAULT_LN_EPSILON),
        }
    }

    pub fn with_epsilon(mut self, epsilon: S) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Resets to the identity affine map and stops training it.
    pub fn freeze(&mut self) {
        self.scale.iter_mut().for_each(|s| *s = S::one());
        self.shift.iter_mut().for_each(|s| *s = S::zero());
        self.frozen = true;
    }

    /// Trainable parameter count: `2·dim`, or 0 when frozen.
    pub fn trainable_len(&self) -> usize {
        if self.frozen {
            0
        } else {
            2 * self.dim()
        }
    }

    /// Row-wise forward over a `b × dim` batch.
    pub fn forward_batch(
        &self,
        x: ArrayView2<S>,
    ) -> Result<(Array2<S>, LayerNormBatchCache<S>), NormalizeError> {
        if x.ncols() != self.dim() {
            return Err(NormalizeError::FeatureMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        let n = S::from_usize_lossy(x.ncols());
        let mut xhat = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let is = S::one() / (var + self.epsilon).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            *inv = is;
        }
        let y = if self.frozen {
            xhat.clone()
        } else {
            let mut y = xhat.clone();
            for mut row in y.axis_iter_mut(Axis(0)) {
                Zip::from(&mut row)
                    .and(&self.scale[..])
                    .and(&self.shift[..])
                    .for_each(|v, &g, &b| *v = *v * g + b);
            }
            y
        };
        Ok((y, LayerNormBatchCache { xhat, inv_std }))
    }

    /// Row-wise backward. Returns `(grad_x, grad_scale, grad_shift)`; the
    /// parameter gradients are all zero when frozen.
    pub fn backward_batch(
        &self,
        grad_y: ArrayView2<S>,
        cache: &LayerNormBatchCache<S>,
    ) -> Result<LayerNormBatchGrads<S>, NormalizeError> {
        if grad_y.dim() != cache.xhat.dim() {
            return Err(NormalizeError::Shape(format!(
                "grad {:?} vs cached {:?}",
                grad_y.dim(),
                cache.xhat.dim()
            )));
        }
        let dim = self.dim();
        let n = S::from_usize_lossy(dim);
        let mut grad_scale = vec![S::zero(); dim];
        let mut grad_shift = vec![S::zero(); dim];
        let mut grad_x = Array2::zeros(grad_y.raw_dim());
        let mut gx_hat = vec![S::zero(); dim];
        for ((gy, xh), (mut gx, &inv)) in grad_y
            .axis_iter(Axis(0))
            .zip(cache.xhat.axis_iter(Axis(0)))
            .zip(grad_x.axis_iter_mut(Axis(0)).zip(cache.inv_std.iter()))
        {
            if self.frozen {
                gx_hat.iter_mut().zip(gy.iter()).for_each(|(o, &g)| *o = g);
            } else {
                for j in 0..dim {
                    gx_hat[j] = gy[j] * self.scale[j];
                    grad_scale[j] += gy[j] * xh[j];
                    grad_shift[j] += gy[j];
                }
            }
            let mean_g = gx_hat.iter().copied().sum::<S>() / n;
            let mean_gx = gx_hat
                .iter()
                .zip(xh.iter())
                .map(|(&g, &x)| g * x)
                .sum::<S>()
                / n;
            for j in 0..dim {
                gx[j] = inv * (gx_hat[j] - mean_g - xh[j] * mean_gx);
            }
        }
        Ok((grad_x, grad_scale, grad_shift))
    }
}

/// Normalized rows and their inverse standard deviations.
#[derive(Debug, Clone)]
pub struct LayerNormBatchCache<S> {
    pub xhat: Array2<S>,
    pub inv_std: Array1<S>,
}

/// Cache of a single-vector [`layernorm_forward`].
#[derive(Debug, Clone)]
pub struct LayerNormCache<S> {
    inner: LayerNormBatchCache<S>,
    params: LayerNormParams<S>,
}

impl<S: Scalar> LayerNormCache<S> {
    pub fn normalized(&self) -> &[S] {
        self.inner.xhat.as_slice().expect("row-major cache")
    }

    pub fn inv_std(&self) -> S {
        self.inner.inv_std[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormGrads<S> {
    pub grad_x: Vec<S>,
    pub grad_scale: Vec<S>,
    pub grad_shift: Vec<S>,
}

/// LayerNorm of one example.
pub fn layernorm_forward<S: Scalar>(
    x: &[S],
    params: &LayerNormParams<S>,
) -> Result<(Vec<S>, LayerNormCache<S>), NormalizeError> {
    let view = ArrayView2::from_shape((1, x.len()), x)
        .map_err(|e| NormalizeError::Shape(e.to_string()))?;
    let (y, inner) = params.forward_batch(view)?;
    Ok((
        y.into_raw_vec_and_offset().0,
        LayerNormCache {
            inner,
            params: params.clone(),
        },
    ))
}

/// Exact gradients of [`layernorm_forward`].
pub fn layernorm_backward<S: Scalar>(
    grad_y: &[S],
    cache: &LayerNormCache<S>,
) -> Result<LayerNormGrads<S>, NormalizeError> {
    let view = ArrayView2::from_shape((1, grad_y.len()), grad_y)
        .map_err(|e| NormalizeError::Shape(e.to_string()))?;
    let (gx, grad_scale, grad_shift) = cache.params.backward_batch(view, &cache.inner)?;
    Ok(LayerNormGrads {
        grad_x: gx.into_raw_vec_and_offset().0,
        grad_scale,
        grad_shift,
    })
}
