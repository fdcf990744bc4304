use super::{to_f64, HcrError, HcrModel, SINGULAR_THRESHOLD};
use crate::basis::BasisSpec;
use crate::Scalar;

/// One-dimensional density of the free coordinate given the others.
///
/// `ρ(x | rest) = Σ_i w_i f_i(x)` with `w_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity<S> {
    free: usize,
    spec: BasisSpec<S>,
    weights: Vec<S>,
}

impl<S: Scalar> ConditionalDensity<S> {
    /// Index of the free coordinate in the parent model.
    pub fn free_coordinate(&self) -> usize {
        self.free
    }

    /// Legendre weights `w_i`, length `degree + 1`.
    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Density at `x`. Panics outside `[0, 1]`.
    pub fn eval(&self, x: S) -> S {
        let mut f = vec![S::zero(); self.spec.len()];
        self.spec.eval_into(x, &mut f).expect("x in [0, 1]");
        f.iter().zip(&self.weights).map(|(&a, &b)| a * b).sum()
    }

    /// `E[x | rest] = ½ + w_1/√12`.
    pub fn mean(&self) -> S {
        let w1 = self.weights.get(1).copied().unwrap_or_else(S::zero);
        S::lit(0.5) + w1 / S::lit(12.0).sqrt()
    }
}

/// Pairwise numerator of the conditional expectation as univariate expansions.
///
/// `numerator(rest) = constant + Σ_k Σ_j functions[k][j] · f_j(x_{inputs[k]})`.
/// `functions[k][0]` is always 0; the marginal term `a_{1,0,…,0}` is kept in
/// `constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct KanReduction<S> {
    pub output: usize,
    pub constant: S,
    pub inputs: Vec<usize>,
    pub functions: Vec<Vec<S>>,
}

impl<S: Scalar> KanReduction<S> {
    /// Sums the univariate expansions at `values` (one per input, in [`Self::inputs`] order).
    pub fn eval(&self, values: &[S]) -> S {
        assert_eq!(values.len(), self.inputs.len(), "one value per input");
        let degree = self.functions.first().map_or(0, |f| f.len() - 1);
        let spec = BasisSpec::<S>::new(degree);
        let mut f = vec![S::zero(); spec.len()];
        let mut acc = self.constant;
        for (coeffs, &v) in self.functions.iter().zip(values) {
            spec.eval_into(v, &mut f).expect("input in [0, 1]");
            acc += coeffs.iter().zip(&f).map(|(&a, &b)| a * b).sum::<S>();
        }
        acc
    }

    /// Weight row for a KAN neuron reading [`Self::inputs`] in order: blocks of
    /// `degree + 1` per input, the constant folded into the first `f_0` slot.
    pub fn layer_weights(&self) -> Vec<S> {
        let mut row: Vec<S> = self.functions.iter().flatten().copied().collect();
        if let Some(first) = row.first_mut() {
            *first += self.constant;
        }
        row
    }
}

impl<S: Scalar> HcrModel<S> {
    fn free_coordinate(&self, fixed: &[Option<S>]) -> Result<usize, HcrError> {
        if fixed.len() != self.dim {
            return Err(HcrError::DimensionMismatch {
                expected: self.dim,
                got: fixed.len(),
            });
        }
        let free: Vec<usize> = (0..self.dim).filter(|&i| fixed[i].is_none()).collect();
        if free.len() != 1 {
            return Err(HcrError::FreeCoordinates(free.len()));
        }
        for (col, v) in fixed.iter().enumerate() {
            if let Some(v) = *v {
                if !(v >= S::zero() && v <= S::one()) {
                    return Err(HcrError::OutOfRange {
                        row: 0,
                        col,
                        value: to_f64(v),
                    });
                }
            }
        }
        Ok(free[0])
    }

    /// Density of the one `None` coordinate of `fixed` given the others.
    pub fn conditional_density(
        &self,
        fixed: &[Option<S>],
    ) -> Result<ConditionalDensity<S>, HcrError> {
        let free = self.free_coordinate(fixed)?;
        let table: Vec<Vec<S>> = fixed
            .iter()
            .map(|v| {
                let mut row = vec![S::zero(); self.spec.len()];
                if let Some(v) = *v {
                    self.spec.fill(v, &mut row, None);
                }
                row
            })
            .collect();
        let mut sums = vec![S::zero(); self.spec.len()];
        for (idx, &a) in &self.coeffs {
            let mut prod = a;
            for (c, &j) in idx.as_slice().iter().enumerate() {
                if c != free {
                    prod *= table[c][j];
                }
            }
            sums[idx.as_slice()[free]] += prod;
        }
        let denom = sums[0];
        if denom.abs() < S::lit(SINGULAR_THRESHOLD) {
            return Err(HcrError::SingularConditioning(to_f64(denom)));
        }
        let weights = sums.into_iter().map(|s| s / denom).collect();
        Ok(ConditionalDensity {
            free,
            spec: self.spec.clone(),
            weights,
        })
    }

    /// `E[x_free | rest] = ½ + (1/√12) · numerator / normalization`.
    pub fn conditional_expectation(&self, fixed: &[Option<S>]) -> Result<S, HcrError> {
        Ok(self.conditional_density(fixed)?.mean())
    }

    /// Collapses the first-moment numerator for `output` into one univariate
    /// Legendre expansion per remaining coordinate.
    ///
    /// Only coefficients with index 1 at `output` contribute; those that also
    /// couple two or more other coordinates make the reduction inexact and are
    /// rejected.
    pub fn kan_reduce(&self, output: usize) -> Result<KanReduction<S>, HcrError> {
        if output >= self.dim {
            return Err(HcrError::BadCoordinate {
                coordinate: output,
                dim: self.dim,
            });
        }
        let inputs: Vec<usize> = (0..self.dim).filter(|&i| i != output).collect();
        let mut functions = vec![vec![S::zero(); self.spec.len()]; inputs.len()];
        let mut constant = S::zero();
        for (idx, &a) in &self.coeffs {
            let j = idx.as_slice();
            if j[output] != 1 {
                continue;
            }
            let others: Vec<usize> = inputs.iter().copied().filter(|&c| j[c] != 0).collect();
            match others.as_slice() {
                [] => constant += a,
                [c] => {
                    let k = inputs.iter().position(|i| i == c).expect("input coordinate");
                    functions[k][j[*c]] += a;
                }
                _ => return Err(HcrError::NotPairwise(idx.clone())),
            }
        }
        Ok(KanReduction {
            output,
            constant,
            inputs,
            functions,
        })
    }

    /// Direct contraction `Σ_{j: j_output = 1} a_j Π_{c ≠ output} f_{j_c}(x_c)`.
    pub fn first_moment_numerator(&self, output: usize, x: &[S]) -> Result<S, HcrError> {
        if output >= self.dim {
            return Err(HcrError::BadCoordinate {
                coordinate: output,
                dim: self.dim,
            });
        }
        if x.len() != self.dim {
            return Err(HcrError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut probe = x.to_vec();
        probe[output] = S::lit(0.5);
        self.check_point(&probe)?;
        let table = self.basis_table(&probe);
        Ok(self
            .coeffs
            .iter()
            .filter(|(idx, _)| idx.as_slice()[output] == 1)
            .map(|(idx, &a)| {
                idx.as_slice()
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != output)
                    .fold(a, |acc, (c, &j)| acc * table[c][j])
            })
            .sum())
    }
}

/// Helper for tests and callers that build partial assignments.
pub fn free_at<S: Copy>(point: &[S], free: usize) -> Vec<Option<S>> {
    point
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == free { None } else { Some(v) })
        .collect()
}
