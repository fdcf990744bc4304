//! Legendre Kolmogorov–Arnold networks with CDF or MinMax input normalization.
//!
//! Each [`KanLayer`] maps its inputs into `[0, 1]`, expands every coordinate in
//! the orthonormal Legendre basis, and mixes the features linearly. A
//! [`Network`] chains layers; the input LayerNorm of each CDF layer is the
//! normalization stage in front of it, so the first layer's LayerNorm acts on
//! the flattened input.
//!
//! Four preset architectures are available through [`build_variant`]:
//!
//! | variant | normalization | LayerNorm | SiLU |
//! |---|---|---|---|
//! | `KAL_NET` | MinMax over the batch | trailing, learnable | projected input path and output |
//! | `CDFKAL_NET` | LayerNorm + Gaussian CDF | learnable | none |
//! | `CDFKAL_NET_FIXEDNORM` | LayerNorm + Gaussian CDF | frozen | none |
//! | `CDFKAL_SILU` | LayerNorm + Gaussian CDF | learnable | input residual |
//!
//! Backpropagation is exact, including the MinMax extremes.

mod checkpoint;
mod layer;

pub use layer::{InputNorm, KanLayer, LayerCache, LayerGrads, OutputStage, Residual};

#[cfg(test)]
pub(crate) use layer::BASIS_DERIV_FAULT;

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{LayerNormParams, MinMaxScope, NormalizeError};
use crate::Scalar;

/// Degrees accepted by [`build_variant`].
pub const DEGREE_RANGE: RangeInclusive<usize> = 3..=11;
/// Hidden sizes of the default MNIST network.
pub const MNIST_DIMS: [usize; 4] = [784, 64, 64, 10];

#[derive(Debug, Error)]
pub enum KanError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("cache does not match this forward pass: {0}")]
    CacheMismatch(String),
    #[error("unknown variant `{0}` (expected KAL_NET, CDFKAL_NET, CDFKAL_NET_FIXEDNORM or CDFKAL_SILU)")]
    UnknownVariant(String),
    #[error("degree {0} outside the supported range 3..=11")]
    DegreeOutOfRange(usize),
    #[error("layer {layer} outputs {out_dim} values but layer {} expects {in_dim}", layer + 1)]
    DimChain {
        layer: usize,
        out_dim: usize,
        in_dim: usize,
    },
    #[error("network needs at least one layer")]
    Empty,
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Preset architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "KAL_NET")]
    KalNet,
    #[serde(rename = "CDFKAL_NET")]
    CdfKalNet,
    #[serde(rename = "CDFKAL_NET_FIXEDNORM")]
    CdfKalNetFixedNorm,
    #[serde(rename = "CDFKAL_SILU")]
    CdfKalSilu,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::KalNet,
        Variant::CdfKalNet,
        Variant::CdfKalNetFixedNorm,
        Variant::CdfKalSilu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::KalNet => "KAL_NET",
            Variant::CdfKalNet => "CDFKAL_NET",
            Variant::CdfKalNetFixedNorm => "CDFKAL_NET_FIXEDNORM",
            Variant::CdfKalSilu => "CDFKAL_SILU",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = KanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "KAL_NET" => Ok(Variant::KalNet),
            "CDFKAL_NET" => Ok(Variant::CdfKalNet),
            "CDFKAL_NET_FIXEDNORM" | "FIXEDNORM" => Ok(Variant::CdfKalNetFixedNorm),
            "CDFKAL_SILU" => Ok(Variant::CdfKalSilu),
            _ => Err(KanError::UnknownVariant(s.to_string())),
        }
    }
}

/// Knobs that the presets leave open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// MinMax statistics scope for `KAL_NET`.
    pub minmax_scope: MinMaxScope,
    /// Residual wiring for `CDFKAL_SILU`: [`Residual::Silu`] or [`Residual::ProjectedSilu`].
    pub silu_residual: Residual,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            minmax_scope: MinMaxScope::PerFeature,
            silu_residual: Residual::Silu,
        }
    }
}

/// Builds a preset with default options. `dims` lists the layer widths
/// including input and output, e.g. [`MNIST_DIMS`].
pub fn build_variant<S: Scalar>(
    variant: Variant,
    dims: &[usize],
    degree: usize,
    seed: u64,
) -> Result<Network<S>, KanError> {
    build_variant_with(variant, dims, degree, seed, BuildOptions::default())
}

pub fn build_variant_with<S: Scalar>(
    variant: Variant,
    dims: &[usize],
    degree: usize,
    seed: u64,
    options: BuildOptions,
) -> Result<Network<S>, KanError> {
    if !DEGREE_RANGE.contains(&degree) {
        return Err(KanError::DegreeOutOfRange(degree));
    }
    if dims.len() < 2 {
        return Err(KanError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (n, m) = (w[0], w[1]);
            match variant {
                Variant::KalNet => KanLayer::minmax(n, m, degree, options.minmax_scope, &mut rng),
                Variant::CdfKalNet => KanLayer::cdf(n, m, degree, false, &mut rng),
                Variant::CdfKalNetFixedNorm => KanLayer::cdf(n, m, degree, true, &mut rng),
                Variant::CdfKalSilu => KanLayer::build(
                    n,
                    m,
                    degree,
                    &mut rng,
                    InputNorm::Cdf,
                    options.silu_residual,
                    false,
                    false,
                ),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut net = Network::new(layers)?;
    net.variant = Some(variant);
    Ok(net)
}

/// Ordered stack of KAN layers producing logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    layers: Vec<KanLayer<S>>,
    variant: Option<Variant>,
}

/// Per-layer caches of one forward pass.
#[derive(Debug, Clone)]
pub struct NetworkCache<S> {
    layers: Vec<LayerCache<S>>,
    batch: usize,
}

impl<S> NetworkCache<S> {
    pub fn layer(&self, index: usize) -> Option<&LayerCache<S>> {
        self.layers.get(index)
    }
}

/// Named gradient blocks in [`Network::params_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads<S> {
    pub blocks: Vec<(String, Vec<S>)>,
}

impl<S: Scalar> NetworkGrads<S> {
    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|(_, g)| g.iter().all(|v| v.is_zero()))
    }

    pub fn get(&self, name: &str) -> Option<&[S]> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, g)| g.as_slice())
    }
}

// logical row-major order regardless of memory layout
fn flat<S: Clone>(a: Array2<S>) -> Vec<S> {
    a.iter().cloned().collect()
}

impl<S: Scalar> Network<S> {
    pub fn new(layers: Vec<KanLayer<S>>) -> Result<Self, KanError> {
        if layers.is_empty() {
            return Err(KanError::Empty);
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(KanError::DimChain {
                    layer: k,
                    out_dim: pair[0].out_dim,
                    in_dim: pair[1].in_dim,
                });
            }
        }
        for l in &layers {
            l.validate()?;
        }
        Ok(Self { layers, variant: None })
    }

    pub fn layers(&self) -> &[KanLayer<S>] {
        &self.layers
    }

    /// Mutable layer access; shapes must be left unchanged.
    pub fn layers_mut(&mut self) -> &mut [KanLayer<S>] {
        &mut self.layers
    }

    pub fn variant(&self) -> Option<Variant> {
        self.variant
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn degree(&self) -> usize {
        self.layers[0].degree()
    }

    /// LayerNorm applied to the flattened input (the first layer's input norm).
    pub fn pre_norm(&self) -> Option<&LayerNormParams<S>> {
        self.layers[0].ln.as_ref()
    }

    pub fn trainable_params(&self) -> usize {
        self.layers.iter().map(KanLayer::trainable_params).sum()
    }

    /// Freezes every LayerNorm in the network.
    pub fn freeze_norms(&mut self) {
        self.layers.iter_mut().for_each(KanLayer::freeze_norms);
    }

    /// True if any layer evaluates the Gaussian CDF.
    pub fn uses_cdf(&self) -> bool {
        self.layers.iter().any(KanLayer::uses_cdf)
    }

    pub fn forward(&self, x: ArrayView2<S>) -> Result<Array2<S>, KanError> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Forward pass retaining every layer's cache for [`Self::backward`].
    pub fn forward_cached(&self, x: ArrayView2<S>) -> Result<(Array2<S>, NetworkCache<S>), KanError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let (y, cache) = layer.forward(h.view())?;
            caches.push(cache);
            h = y;
        }
        Ok((
            h,
            NetworkCache {
                layers: caches,
                batch: x.nrows(),
            },
        ))
    }

    /// Post-normalization activations entering the Legendre expansion of `layer`.
    pub fn normalized_activations(&self, x: ArrayView2<S>, layer: usize) -> Result<Array2<S>, KanError> {
        if layer >= self.layers.len() {
            return Err(KanError::InvalidShape(format!(
                "layer {layer} of a {}-layer network",
                self.layers.len()
            )));
        }
        let mut h = x.to_owned();
        for l in &self.layers[..layer] {
            h = l.forward(h.view())?.0;
        }
        let (_, cache) = self.layers[layer].forward(h.view())?;
        Ok(cache.into_normalized())
    }

    /// Gradients of every trainable block given `∂L/∂logits`.
    pub fn backward(&self, cache: &NetworkCache<S>, grad_logits: ArrayView2<S>) -> Result<NetworkGrads<S>, KanError> {
        if cache.layers.len() != self.layers.len() {
            return Err(KanError::CacheMismatch(format!(
                "{} cached layers for a {}-layer network",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        if grad_logits.dim() != (cache.batch, self.output_dim()) {
            return Err(KanError::CacheMismatch(format!(
                "gradient {:?} vs cached batch {} × {}",
                grad_logits.dim(),
                cache.batch,
                self.output_dim()
            )));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits.to_owned();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let (gh, grads) = layer.backward(g.view(), c)?;
            per_layer.push(grads);
            g = gh;
        }
        per_layer.reverse();
        let mut blocks = Vec::new();
        for (k, grads) in per_layer.into_iter().enumerate() {
            blocks.push((format!("layer{k}.weights"), flat(grads.weights)));
            if let Some(r) = grads.residual_weights {
                blocks.push((format!("layer{k}.residual_weights"), flat(r)));
            }
            if let Some((scale, shift)) = grads.ln {
                blocks.push((format!("layer{k}.ln.scale"), scale));
                blocks.push((format!("layer{k}.ln.shift"), shift));
            }
            if let Some((scale, shift)) = grads.out_ln {
                blocks.push((format!("layer{k}.out_ln.scale"), scale));
                blocks.push((format!("layer{k}.out_ln.shift"), shift));
            }
        }
        Ok(NetworkGrads { blocks })
    }

    /// Trainable parameter blocks, named and ordered as in [`NetworkGrads`].
    /// Frozen LayerNorm parameters are not listed.
    pub fn params_mut(&mut self) -> Vec<(String, &mut [S])> {
        let mut out: Vec<(String, &mut [S])> = Vec::new();
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let KanLayer {
                weights,
                ln,
                residual_weights,
                output,
                ..
            } = layer;
            out.push((format!("layer{k}.weights"), weights.as_slice_mut().expect("standard layout")));
            if let Some(r) = residual_weights {
                out.push((format!("layer{k}.residual_weights"), r.as_slice_mut().expect("standard layout")));
            }
            if let Some(p) = ln.as_mut().filter(|p| !p.frozen) {
                out.push((format!("layer{k}.ln.scale"), &mut p.scale[..]));
                out.push((format!("layer{k}.ln.shift"), &mut p.shift[..]));
            }
            if let OutputStage::NormSilu(p) = output {
                if !p.frozen {
                    out.push((format!("layer{k}.out_ln.scale"), &mut p.scale[..]));
                    out.push((format!("layer{k}.out_ln.shift"), &mut p.shift[..]));
                }
            }
        }
        out
    }

    /// Sizes of the trainable blocks, by name.
    pub fn param_layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.weights"), layer.weights.len()));
            if let Some(r) = &layer.residual_weights {
                out.push((format!("layer{k}.residual_weights"), r.len()));
            }
            if let Some(p) = layer.ln.as_ref().filter(|p| !p.frozen) {
                out.push((format!("layer{k}.ln.scale"), p.dim()));
                out.push((format!("layer{k}.ln.shift"), p.dim()));
            }
            if let OutputStage::NormSilu(p) = &layer.output {
                if !p.frozen {
                    out.push((format!("layer{k}.out_ln.scale"), p.dim()));
                    out.push((format!("layer{k}.out_ln.shift"), p.dim()));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests;
