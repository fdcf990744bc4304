//! CDF-normalized Legendre Kolmogorov–Arnold networks and HCR density models.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod data;
pub mod hcr;
pub mod kan;
pub mod normalize;
pub mod quadrature;
pub mod scalar;
pub mod train;

pub use scalar::Scalar;

pub type BasisSpec = basis::BasisSpec<f64>;
pub type LayerNormParams = normalize::LayerNormParams<f64>;
pub type HcrModel = hcr::HcrModel<f64>;
pub type HcrModel32 = hcr::HcrModel<f32>;
pub type Network = kan::Network<f64>;
pub type Network32 = kan::Network<f32>;
pub type KanLayer = kan::KanLayer<f64>;
pub type Dataset = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
