use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::KanError;
use crate::basis::BasisSpec;
use crate::normalize::{
    gaussian_cdf, gaussian_cdf_deriv, minmax_backward, minmax_forward, open_unit, LayerNormBatchCache,
    LayerNormParams, MinMaxCache, MinMaxScope,
};
use crate::scalar::{silu, silu_deriv};
use crate::Scalar;

/// How a layer maps its inputs into `[0, 1]` before the Legendre features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputNorm {
    /// LayerNorm followed by the standard normal CDF.
    Cdf,
    /// MinMax rescaling over the batch; no LayerNorm.
    MinMax(MinMaxScope),
}

/// SiLU skip path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Residual {
    #[default]
    None,
    /// `y += silu(h)` when the layer is square; otherwise `silu` is applied to
    /// the input ahead of the normalization. Adds no parameters.
    Silu,
    /// `y += R · silu(h)` with a learned `m × n` matrix `R`.
    ProjectedSilu,
}

/// What happens after `W p` (plus residual).
#[derive(Debug, Clone, PartialEq)]
pub enum OutputStage<S> {
    Linear,
    /// `silu(LayerNorm(·))` over the `m` outputs.
    NormSilu(LayerNormParams<S>),
}

/// One Legendre KAN layer: normalize each input into `[0, 1]`, expand it in
/// `f_0..f_d`, and mix the concatenated features with `W ∈ ℝ^{m × n(d+1)}`.
///
/// The feature vector of one example is laid out input-major:
/// `p = [f_0(u_1) … f_d(u_1), f_0(u_2) …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer<S> {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) spec: BasisSpec<S>,
    pub weights: Array2<S>,
    /// Input LayerNorm of the CDF route; `None` for MinMax.
    pub ln: Option<LayerNormParams<S>>,
    pub norm: InputNorm,
    pub residual: Residual,
    /// Present iff `residual` is [`Residual::ProjectedSilu`].
    pub residual_weights: Option<Array2<S>>,
    pub output: OutputStage<S>,
}

/// Everything the backward pass of one layer needs.
#[derive(Debug, Clone)]
pub struct LayerCache<S> {
    input: Array2<S>,
    // silu applied ahead of the normalization
    pre_norm_silu: bool,
    ln: Option<LayerNormBatchCache<S>>,
    // LN output, argument of the CDF
    z: Option<Array2<S>>,
    minmax: Option<MinMaxCache<S>>,
    u: Array2<S>,
    features: Array2<S>,
    feature_derivs: Array2<S>,
    out_ln: Option<(LayerNormBatchCache<S>, Array2<S>)>,
}

impl<S> LayerCache<S> {
    /// Post-normalization activations `u ∈ [0, 1]`, `b × n`.
    pub fn normalized(&self) -> &Array2<S> {
        &self.u
    }

    pub fn into_normalized(self) -> Array2<S> {
        self.u
    }

    /// Legendre features `p`, `b × n(d+1)`.
    pub fn features(&self) -> &Array2<S> {
        &self.features
    }
}

/// Gradients of one layer. LayerNorm entries are `None` when the block is
/// absent or frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<S> {
    pub weights: Array2<S>,
    pub residual_weights: Option<Array2<S>>,
    pub ln: Option<(Vec<S>, Vec<S>)>,
    pub out_ln: Option<(Vec<S>, Vec<S>)>,
}

#[cfg(test)]
thread_local! {
    /// Scales every basis derivative in the backward pass; a fault injection
    /// hook for gradient-check tests.
    pub(crate) static BASIS_DERIV_FAULT: std::cell::Cell<Option<f64>> = const { std::cell::Cell::new(None) };
}

fn uniform_matrix<S: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Array2<S> {
    Array2::from_shape_fn((rows, cols), |_| S::lit(rng.random_range(-bound..=bound)))
}

impl<S: Scalar> KanLayer<S> {
    /// CDF layer with a learnable (or frozen) input LayerNorm and a linear output.
    pub fn cdf<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        degree: usize,
        frozen_ln: bool,
        rng: &mut R,
    ) -> Result<Self, KanError> {
        Self::build(in_dim, out_dim, degree, rng, InputNorm::Cdf, Residual::None, false, frozen_ln)
    }

    /// MinMax layer with the projected SiLU base path and a trailing
    /// `silu(LayerNorm(·))`.
    pub fn minmax<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        degree: usize,
        scope: MinMaxScope,
        rng: &mut R,
    ) -> Result<Self, KanError> {
        Self::build(
            in_dim,
            out_dim,
            degree,
            rng,
            InputNorm::MinMax(scope),
            Residual::ProjectedSilu,
            true,
            false,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        degree: usize,
        rng: &mut R,
        norm: InputNorm,
        residual: Residual,
        norm_silu_output: bool,
        frozen_ln: bool,
    ) -> Result<Self, KanError> {
        if in_dim == 0 || out_dim == 0 || degree == 0 {
            return Err(KanError::InvalidShape(format!(
                "in_dim {in_dim}, out_dim {out_dim}, degree {degree} must all be at least 1"
            )));
        }
        let cols = in_dim * (degree + 1);
        let bound = (6.0 / (cols + out_dim) as f64).sqrt();
        let weights = uniform_matrix(rng, out_dim, cols, bound);
        let residual_weights = (residual == Residual::ProjectedSilu)
            .then(|| uniform_matrix(rng, out_dim, in_dim, (6.0 / (in_dim + out_dim) as f64).sqrt()));
        Ok(Self {
            in_dim,
            out_dim,
            spec: BasisSpec::new(degree),
            weights,
            ln: matches!(norm, InputNorm::Cdf).then(|| LayerNormParams::new(in_dim, frozen_ln)),
            norm,
            residual,
            residual_weights,
            output: if norm_silu_output {
                OutputStage::NormSilu(LayerNormParams::new(out_dim, false))
            } else {
                OutputStage::Linear
            },
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn degree(&self) -> usize {
        self.spec.degree()
    }

    /// Length of one example's feature vector, `n(d+1)`.
    pub fn feature_len(&self) -> usize {
        self.in_dim * self.spec.len()
    }

    pub fn uses_cdf(&self) -> bool {
        matches!(self.norm, InputNorm::Cdf)
    }

    fn silu_before_norm(&self) -> bool {
        self.residual == Residual::Silu && self.in_dim != self.out_dim
    }

    pub fn trainable_params(&self) -> usize {
        let ln = self.ln.as_ref().map_or(0, LayerNormParams::trainable_len);
        let out = match &self.output {
            OutputStage::Linear => 0,
            OutputStage::NormSilu(p) => p.trainable_len(),
        };
        self.weights.len() + self.residual_weights.as_ref().map_or(0, |r| r.len()) + ln + out
    }

    /// Freezes every LayerNorm in the layer.
    pub fn freeze_norms(&mut self) {
        if let Some(ln) = &mut self.ln {
            ln.freeze();
        }
        if let OutputStage::NormSilu(p) = &mut self.output {
            p.freeze();
        }
    }

    /// Checks the internal shape invariants; used after deserialization.
    pub fn validate(&self) -> Result<(), KanError> {
        let expect = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(KanError::InvalidShape(format!("{what} is {got:?}, expected {want:?}")))
            }
        };
        expect("weights", self.weights.dim(), (self.out_dim, self.feature_len()))?;
        match (&self.residual, &self.residual_weights) {
            (Residual::ProjectedSilu, Some(r)) => expect("residual weights", r.dim(), (self.out_dim, self.in_dim))?,
            (Residual::ProjectedSilu, None) => {
                return Err(KanError::InvalidShape("projected residual without weights".into()))
            }
            (_, Some(_)) => return Err(KanError::InvalidShape("unused residual weights".into())),
            _ => {}
        }
        match (&self.norm, &self.ln) {
            (InputNorm::Cdf, Some(ln)) => expect("layer norm", (ln.dim(), 0), (self.in_dim, 0))?,
            (InputNorm::Cdf, None) => return Err(KanError::InvalidShape("CDF layer without layer norm".into())),
            (InputNorm::MinMax(_), Some(_)) => {
                return Err(KanError::InvalidShape("MinMax layer carries a layer norm".into()))
            }
            _ => {}
        }
        if let OutputStage::NormSilu(p) = &self.output {
            expect("output layer norm", (p.dim(), 0), (self.out_dim, 0))?;
        }
        Ok(())
    }

    /// Batch forward `b × n → b × m`.
    pub fn forward(&self, h: ArrayView2<S>) -> Result<(Array2<S>, LayerCache<S>), KanError> {
        if h.ncols() != self.in_dim {
            return Err(KanError::InvalidShape(format!(
                "layer expects {} inputs, got {}",
                self.in_dim,
                h.ncols()
            )));
        }
        if let Some(v) = h.iter().find(|v| !v.is_finite()) {
            return Err(KanError::NonFinite(v.to_f64().unwrap_or(f64::NAN)));
        }
        let pre_norm = self.silu_before_norm().then(|| h.mapv(silu));
        let norm_in = pre_norm.as_ref().map_or(h, |a| a.view());

        let (u, ln_cache, z, minmax_cache) = match self.norm {
            InputNorm::Cdf => {
                let ln = self.ln.as_ref().expect("validated CDF layer");
                let (z, cache) = ln.forward_batch(norm_in)?;
                let u = z.mapv(|v| open_unit(gaussian_cdf(v)));
                (u, Some(cache), Some(z), None)
            }
            InputNorm::MinMax(scope) => {
                let (u, cache) = minmax_forward(norm_in, scope);
                (u, None, None, Some(cache))
            }
        };

        let b = h.nrows();
        let width = self.spec.len();
        let mut features = Array2::zeros((b, self.feature_len()));
        let mut feature_derivs = Array2::zeros((b, self.feature_len()));
        Zip::from(features.rows_mut())
            .and(feature_derivs.rows_mut())
            .and(u.rows())
            .for_each(|mut p, mut dp, ur| {
                let p = p.as_slice_mut().expect("standard layout");
                let dp = dp.as_slice_mut().expect("standard layout");
                for (i, &ui) in ur.iter().enumerate() {
                    self.spec
                        .fill(ui, &mut p[i * width..(i + 1) * width], Some(&mut dp[i * width..(i + 1) * width]));
                }
            });

        let mut s = features.dot(&self.weights.t());
        match self.residual {
            Residual::Silu if self.in_dim == self.out_dim => {
                Zip::from(&mut s).and(h).for_each(|y, &x| *y += silu(x));
            }
            Residual::ProjectedSilu => {
                let r = self.residual_weights.as_ref().expect("validated residual");
                s += &h.mapv(silu).dot(&r.t());
            }
            _ => {}
        }

        let (y, out_ln) = match &self.output {
            OutputStage::Linear => (s, None),
            OutputStage::NormSilu(p) => {
                let (t, cache) = p.forward_batch(s.view())?;
                (t.mapv(silu), Some((cache, t)))
            }
        };
        Ok((
            y,
            LayerCache {
                input: h.to_owned(),
                pre_norm_silu: pre_norm.is_some(),
                ln: ln_cache,
                z,
                minmax: minmax_cache,
                u,
                features,
                feature_derivs,
                out_ln,
            },
        ))
    }

    /// Exact gradients for `grad_y = ∂L/∂y`. Returns `(∂L/∂h, parameter grads)`.
    pub fn backward(
        &self,
        grad_y: ArrayView2<S>,
        cache: &LayerCache<S>,
    ) -> Result<(Array2<S>, LayerGrads<S>), KanError> {
        let b = cache.input.nrows();
        if grad_y.dim() != (b, self.out_dim) || cache.features.ncols() != self.feature_len() {
            return Err(KanError::CacheMismatch(format!(
                "gradient {:?} vs batch {b} × {} outputs",
                grad_y.dim(),
                self.out_dim
            )));
        }

        let (grad_s, out_ln) = match (&self.output, &cache.out_ln) {
            (OutputStage::Linear, None) => (grad_y.to_owned(), None),
            (OutputStage::NormSilu(p), Some((ln_cache, t))) => {
                let mut g_t = grad_y.to_owned();
                Zip::from(&mut g_t).and(t).for_each(|g, &x| *g *= silu_deriv(x));
                let (g_s, g_scale, g_shift) = p.backward_batch(g_t.view(), ln_cache)?;
                (g_s, (!p.frozen).then_some((g_scale, g_shift)))
            }
            _ => return Err(KanError::CacheMismatch("output stage differs from cache".into())),
        };

        let mut grad_h = Array2::<S>::zeros((b, self.in_dim));
        let mut residual_weights = None;
        match self.residual {
            Residual::Silu if self.in_dim == self.out_dim => {
                Zip::from(&mut grad_h)
                    .and(&grad_s)
                    .and(&cache.input)
                    .for_each(|gh, &g, &x| *gh += g * silu_deriv(x));
            }
            Residual::ProjectedSilu => {
                let r = self.residual_weights.as_ref().expect("validated residual");
                residual_weights = Some(grad_s.t().dot(&cache.input.mapv(silu)));
                let mut back = grad_s.dot(r);
                Zip::from(&mut back).and(&cache.input).for_each(|g, &x| *g *= silu_deriv(x));
                grad_h += &back;
            }
            _ => {}
        }

        let grad_w = grad_s.t().dot(&cache.features);
        let grad_p = grad_s.dot(&self.weights);

        #[cfg(test)]
        let fault = BASIS_DERIV_FAULT.with(|f| f.get()).map(S::lit);
        let width = self.spec.len();
        let mut grad_u = Array2::<S>::zeros((b, self.in_dim));
        Zip::from(grad_u.rows_mut())
            .and(grad_p.rows())
            .and(cache.feature_derivs.rows())
            .for_each(|mut gu, gp, dp| {
                for (i, g) in gu.iter_mut().enumerate() {
                    let lo = i * width;
                    *g = (lo..lo + width).map(|k| gp[k] * dp[k]).sum();
                    #[cfg(test)]
                    if let Some(f) = fault {
                        *g *= f;
                    }
                }
            });

        let mut ln_grads = None;
        let grad_norm_in = match self.norm {
            InputNorm::Cdf => {
                let (ln, ln_cache, z) = match (&self.ln, &cache.ln, &cache.z) {
                    (Some(ln), Some(c), Some(z)) => (ln, c, z),
                    _ => return Err(KanError::CacheMismatch("missing layer norm cache".into())),
                };
                let mut grad_z = grad_u;
                Zip::from(&mut grad_z).and(z).for_each(|g, &v| *g *= gaussian_cdf_deriv(v));
                let (gx, g_scale, g_shift) = ln.backward_batch(grad_z.view(), ln_cache)?;
                if !ln.frozen {
                    ln_grads = Some((g_scale, g_shift));
                }
                gx
            }
            InputNorm::MinMax(_) => {
                let mm = cache
                    .minmax
                    .as_ref()
                    .ok_or_else(|| KanError::CacheMismatch("missing MinMax cache".into()))?;
                minmax_backward(grad_u.view(), cache.u.view(), mm)
            }
        };
        if cache.pre_norm_silu {
            Zip::from(&mut grad_h)
                .and(&grad_norm_in)
                .and(&cache.input)
                .for_each(|gh, &g, &x| *gh += g * silu_deriv(x));
        } else {
            grad_h += &grad_norm_in;
        }

        Ok((
            grad_h,
            LayerGrads {
                weights: grad_w,
                residual_weights,
                ln: ln_grads,
                out_ln,
            },
        ))
    }

    /// Per-input feature layout `[f_0(u_i) … f_d(u_i)]` for one example.
    pub fn feature_vector(&self, u: &[S]) -> Vec<S> {
        let width = self.spec.len();
        let mut p = vec![S::zero(); u.len() * width];
        for (i, &ui) in u.iter().enumerate() {
            self.spec.fill(ui, &mut p[i * width..(i + 1) * width], None);
        }
        p
    }
}
