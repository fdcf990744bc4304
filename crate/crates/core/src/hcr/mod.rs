//! HCR (hierarchical correlation reconstruction) joint densities on `[0, 1]^d`.
//!
//! A density is a linear combination of product basis functions,
//!
//! ```text
//! ρ(x) = Σ_j a_j · f_{j_1}(x_1) · … · f_{j_d}(x_d)
//! ```
//!
//! where `f_k` is the orthonormal Legendre family from [`crate::basis`].
//! `a_{0…0} = 1` is the normalization; coefficients with a single nonzero
//! index describe marginals, two nonzero indices pairwise dependence, and so on.
//! Orthonormality makes each coefficient the expectation of its basis product,
//! which is how [`estimate_coefficients`] works. Nothing here repairs negative
//! density values except [`HcrModel::calibrate_density_2d`].

mod conditional;
mod grid;
mod info;
mod text;

pub use conditional::{free_at, ConditionalDensity, KanReduction};
pub use grid::{CalibratedGrid, MIN_CALIBRATION_GRID};

use std::collections::BTreeMap;
use std::fmt;

use ndarray::ArrayView2;
use thiserror::Error;

use crate::basis::BasisSpec;
use crate::Scalar;

/// Denominators below this magnitude make conditioning an error.
pub const SINGULAR_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HcrError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample entry ({row}, {col}) = {value} is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model dimension must be at least 1")]
    ZeroDimension,
    #[error("multi-index {index} exceeds degree {degree}")]
    DegreeExceeded { index: MultiIndex, degree: usize },
    #[error("coefficient of the zero multi-index is fixed at 1, got {0}")]
    NormalizationViolated(f64),
    #[error("basis set must contain the zero multi-index")]
    MissingZeroIndex,
    #[error("conditioning needs exactly one free coordinate, got {0}")]
    FreeCoordinates(usize),
    #[error("normalization contraction {0:e} is below the singularity threshold")]
    SingularConditioning(f64),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("coordinate {coordinate} is out of range for dimension {dim}")]
    BadCoordinate { coordinate: usize, dim: usize },
    #[error("coefficient {0} couples the output with more than one input")]
    NotPairwise(MultiIndex),
    #[error("operation needs a bivariate model, got dimension {0}")]
    NotBivariate(usize),
    #[error("grid needs at least {min} points per axis, got {got}")]
    GridTooSmall { min: usize, got: usize },
    #[error("floor must be positive, got {0}")]
    NonPositiveFloor(f64),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Multi-index `(j_1, …, j_d)` selecting one product basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&j| j == 0)
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&j| j != 0).count()
    }

    pub fn max_entry(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[usize; N]> for MultiIndex {
    fn from(v: [usize; N]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str(")")
    }
}

/// Every multi-index with at most two nonzero entries, each `≤ degree`.
///
/// This is the marginals-plus-pairwise set that reduces to a KAN neuron.
pub fn pairwise_basis(dim: usize, degree: usize) -> Vec<MultiIndex> {
    let mut out = vec![MultiIndex::zero(dim)];
    for i in 0..dim {
        for a in 1..=degree {
            let mut idx = vec![0; dim];
            idx[i] = a;
            out.push(MultiIndex(idx));
        }
    }
    for i in 0..dim {
        for k in (i + 1)..dim {
            for a in 1..=degree {
                for b in 1..=degree {
                    let mut idx = vec![0; dim];
                    idx[i] = a;
                    idx[k] = b;
                    out.push(MultiIndex(idx));
                }
            }
        }
    }
    out.sort();
    out
}

/// The full tensor basis `{0..=degree}^dim`. Size `(degree + 1)^dim`.
pub fn full_basis(dim: usize, degree: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity((degree + 1).pow(dim as u32));
    let mut idx = vec![0usize; dim];
    loop {
        out.push(MultiIndex(idx.clone()));
        let mut pos = dim;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] < degree {
                idx[pos] += 1;
                idx[pos + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
        }
    }
}

/// Sparse HCR density model. Immutable after estimation apart from
/// explicit [`HcrModel::set`] calls.
#[derive(Debug, Clone, PartialEq)]
pub struct HcrModel<S> {
    dim: usize,
    spec: BasisSpec<S>,
    coeffs: BTreeMap<MultiIndex, S>,
}

impl<S: Scalar> HcrModel<S> {
    /// The uniform density: only `a_0 = 1`.
    pub fn uniform(dim: usize, degree: usize) -> Result<Self, HcrError> {
        if dim == 0 {
            return Err(HcrError::ZeroDimension);
        }
        let mut coeffs = BTreeMap::new();
        coeffs.insert(MultiIndex::zero(dim), S::one());
        Ok(Self {
            dim,
            spec: BasisSpec::new(degree),
            coeffs,
        })
    }

    /// Builds a model from explicit coefficients; the zero index is added if absent.
    pub fn from_coefficients<I>(dim: usize, degree: usize, coeffs: I) -> Result<Self, HcrError>
    where
        I: IntoIterator<Item = (MultiIndex, S)>,
    {
        let mut model = Self::uniform(dim, degree)?;
        for (idx, a) in coeffs {
            model.set(idx, a)?;
        }
        Ok(model)
    }

    fn validate_index(&self, idx: &MultiIndex) -> Result<(), HcrError> {
        if idx.dim() != self.dim {
            return Err(HcrError::DimensionMismatch {
                expected: self.dim,
                got: idx.dim(),
            });
        }
        if idx.max_entry() > self.spec.degree() {
            return Err(HcrError::DegreeExceeded {
                index: idx.clone(),
                degree: self.spec.degree(),
            });
        }
        Ok(())
    }

    /// Sets `a_idx`. The zero index only accepts exactly 1.
    pub fn set(&mut self, idx: MultiIndex, value: S) -> Result<(), HcrError> {
        self.validate_index(&idx)?;
        if idx.is_zero() && value != S::one() {
            return Err(HcrError::NormalizationViolated(to_f64(value)));
        }
        self.coeffs.insert(idx, value);
        Ok(())
    }

    /// `a_idx`, or 0 when not stored.
    pub fn get(&self, idx: &MultiIndex) -> S {
        self.coeffs.get(idx).copied().unwrap_or_else(S::zero)
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (&MultiIndex, &S)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.spec.degree()
    }

    pub fn spec(&self) -> &BasisSpec<S> {
        &self.spec
    }

    fn check_point(&self, x: &[S]) -> Result<(), HcrError> {
        if x.len() != self.dim {
            return Err(HcrError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if let Some((col, &v)) = x
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= S::zero() && **v <= S::one()))
        {
            return Err(HcrError::OutOfRange {
                row: 0,
                col,
                value: to_f64(v),
            });
        }
        Ok(())
    }

    /// Basis table `table[i][k] = f_k(x_i)`.
    fn basis_table(&self, x: &[S]) -> Vec<Vec<S>> {
        x.iter()
            .map(|&xi| {
                let mut row = vec![S::zero(); self.spec.len()];
                self.spec.fill(xi, &mut row, None);
                row
            })
            .collect()
    }

    /// `ρ(x)`; may be negative.
    pub fn eval_density(&self, x: &[S]) -> Result<S, HcrError> {
        self.check_point(x)?;
        let table = self.basis_table(x);
        Ok(self
            .coeffs
            .iter()
            .map(|(idx, &a)| {
                idx.0
                    .iter()
                    .zip(&table)
                    .fold(a, |acc, (&j, row)| acc * row[j])
            })
            .sum())
    }
}

/// Coefficients as empirical means of basis products over the sample.
///
/// `samples` is `n × d` with entries already normalized into `[0, 1]`.
pub fn estimate_coefficients<S: Scalar>(
    samples: ArrayView2<S>,
    basis_set: &[MultiIndex],
    degree: usize,
) -> Result<HcrModel<S>, HcrError> {
    let (n, dim) = samples.dim();
    if n == 0 {
        return Err(HcrError::EmptySample);
    }
    let mut model = HcrModel::uniform(dim, degree)?;
    if !basis_set.iter().any(MultiIndex::is_zero) {
        return Err(HcrError::MissingZeroIndex);
    }
    for idx in basis_set {
        model.validate_index(idx)?;
    }
    for ((row, col), &v) in samples.indexed_iter() {
        if !(v >= S::zero() && v <= S::one()) {
            return Err(HcrError::OutOfRange {
                row,
                col,
                value: to_f64(v),
            });
        }
    }

    let width = degree + 1;
    let nontrivial: Vec<&MultiIndex> = basis_set.iter().filter(|i| !i.is_zero()).collect();
    let mut sums = vec![S::zero(); nontrivial.len()];
    let mut table = vec![S::zero(); dim * width];
    for row in samples.rows() {
        for (c, &v) in row.iter().enumerate() {
            model.spec.fill(v, &mut table[c * width..(c + 1) * width], None);
        }
        for (sum, idx) in sums.iter_mut().zip(&nontrivial) {
            let mut prod = S::one();
            for (c, &j) in idx.0.iter().enumerate() {
                if j != 0 {
                    prod *= table[c * width + j];
                }
            }
            *sum += prod;
        }
    }
    let nf = S::from_usize_lossy(n);
    for (idx, sum) in nontrivial.into_iter().zip(sums) {
        model.coeffs.insert(idx.clone(), sum / nf);
    }
    Ok(model)
}
