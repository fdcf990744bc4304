//! Entropy and mutual information read directly off the coefficients.
//!
//! With `ρ = 1 + g`, `∫g = 0`, and small `g`, `ρ ln ρ ≈ g + g²/2`, so the exact
//! quantities are approximately `−½ Σ a²` and `½ Σ a²_cross`. The first-order
//! forms drop the `½` (they use `ln(1 + g) ≈ g` inside `∫ρ ln ρ`) and therefore
//! overstate magnitudes by about a factor of two; both are provided.

use super::{HcrError, HcrModel};
use crate::Scalar;

impl<S: Scalar> HcrModel<S> {
    fn nontrivial_square_sum(&self) -> S {
        self.coeffs
            .iter()
            .filter(|(idx, _)| !idx.is_zero())
            .map(|(_, &a)| a * a)
            .sum()
    }

    /// `−Σ_{j≠0} a_j²` in nats.
    pub fn entropy_approx(&self) -> S {
        -self.nontrivial_square_sum()
    }

    /// `−½ Σ_{j≠0} a_j²`, the second-order expansion of `−∫ρ ln ρ`.
    pub fn entropy_second_order(&self) -> S {
        -self.nontrivial_square_sum() * S::lit(0.5)
    }

    fn cross_square_sum(&self, x_block: &[usize], y_block: &[usize]) -> Result<S, HcrError> {
        self.check_partition(x_block, y_block)?;
        Ok(self
            .coeffs
            .iter()
            .filter(|(idx, _)| {
                let j = idx.as_slice();
                x_block.iter().any(|&c| j[c] != 0) && y_block.iter().any(|&c| j[c] != 0)
            })
            .map(|(_, &a)| a * a)
            .sum())
    }

    /// `Σ a_j²` over multi-indices nonzero in both blocks.
    pub fn mutual_information_approx(&self, x_block: &[usize], y_block: &[usize]) -> Result<S, HcrError> {
        self.cross_square_sum(x_block, y_block)
    }

    /// Half of [`Self::mutual_information_approx`]; the second-order expansion
    /// of `∫ρ ln(ρ / ρ_X ρ_Y)` when the marginals are uniform.
    pub fn mutual_information_second_order(
        &self,
        x_block: &[usize],
        y_block: &[usize],
    ) -> Result<S, HcrError> {
        Ok(self.cross_square_sum(x_block, y_block)? * S::lit(0.5))
    }

    fn check_partition(&self, x_block: &[usize], y_block: &[usize]) -> Result<(), HcrError> {
        if x_block.is_empty() || y_block.is_empty() {
            return Err(HcrError::InvalidPartition("both blocks must be nonempty".into()));
        }
        let mut seen = vec![false; self.dim];
        for &c in x_block.iter().chain(y_block) {
            if c >= self.dim {
                return Err(HcrError::InvalidPartition(format!(
                    "coordinate {c} out of range for dimension {}",
                    self.dim
                )));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(HcrError::InvalidPartition(format!("coordinate {c} listed twice")));
            }
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(HcrError::InvalidPartition(format!("coordinate {c} not covered")));
        }
        Ok(())
    }
}
