use ndarray::Array2;

use super::{HcrError, HcrModel};
use crate::quadrature::trapezoid_weights;
use crate::Scalar;

/// Smallest grid accepted by [`HcrModel::calibrate_density_2d`].
pub const MIN_CALIBRATION_GRID: usize = 8;

/// `max(ρ, floor) / Z` sampled on the `grid × grid` nodes `(i/(grid−1), k/(grid−1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedGrid<S> {
    /// `values[[i, k]]` is the density at `(x_i, y_k)`.
    pub values: Array2<S>,
    /// Trapezoid integral of the clipped density before rescaling.
    pub normalizer: S,
    pub floor: S,
}

impl<S: Scalar> CalibratedGrid<S> {
    pub fn points(&self) -> usize {
        self.values.nrows()
    }

    /// Trapezoid integral of [`Self::values`]; 1 up to rounding.
    pub fn integral(&self) -> S {
        trapezoid_2d(&self.values)
    }
}

fn trapezoid_2d<S: Scalar>(values: &Array2<S>) -> S {
    let w = trapezoid_weights::<S>(values.nrows()).expect("grid has at least 2 points");
    values
        .indexed_iter()
        .map(|((i, k), &v)| w[i] * w[k] * v)
        .sum()
}

fn grid_node<S: Scalar>(i: usize, points: usize) -> S {
    S::from_usize_lossy(i) / S::from_usize_lossy(points - 1)
}

impl<S: Scalar> HcrModel<S> {
    fn require_bivariate(&self) -> Result<(), HcrError> {
        if self.dim != 2 {
            return Err(HcrError::NotBivariate(self.dim));
        }
        Ok(())
    }

    /// Raw `ρ` on the `points × points` node grid of the unit square.
    pub fn density_grid(&self, points: usize) -> Result<Array2<S>, HcrError> {
        self.require_bivariate()?;
        if points < 2 {
            return Err(HcrError::GridTooSmall { min: 2, got: points });
        }
        let axis: Vec<Vec<S>> = (0..points)
            .map(|i| {
                let mut row = vec![S::zero(); self.spec.len()];
                self.spec.fill(grid_node(i, points), &mut row, None);
                row
            })
            .collect();
        Ok(Array2::from_shape_fn((points, points), |(i, k)| {
            self.coeffs
                .iter()
                .map(|(idx, &a)| {
                    let j = idx.as_slice();
                    a * axis[i][j[0]] * axis[k][j[1]]
                })
                .sum()
        }))
    }

    /// Clips `ρ` at `floor` and renormalizes by the trapezoid rule.
    pub fn calibrate_density_2d(&self, floor: S, grid: usize) -> Result<CalibratedGrid<S>, HcrError> {
        self.require_bivariate()?;
        if grid < MIN_CALIBRATION_GRID {
            return Err(HcrError::GridTooSmall {
                min: MIN_CALIBRATION_GRID,
                got: grid,
            });
        }
        if !(floor > S::zero()) {
            return Err(HcrError::NonPositiveFloor(super::to_f64(floor)));
        }
        let mut values = self.density_grid(grid)?;
        values.mapv_inplace(|v| v.max(floor));
        let normalizer = trapezoid_2d(&values);
        values.mapv_inplace(|v| v / normalizer);
        Ok(CalibratedGrid {
            values,
            normalizer,
            floor,
        })
    }

    /// Fraction of the unit square where `ρ < 0`, estimated at the
    /// `cells × cells` cell midpoints.
    pub fn negative_area_fraction(&self, cells: usize) -> Result<f64, HcrError> {
        self.require_bivariate()?;
        if cells == 0 {
            return Err(HcrError::GridTooSmall { min: 1, got: 0 });
        }
        let mid = |i: usize| (S::from_usize_lossy(i) + S::lit(0.5)) / S::from_usize_lossy(cells);
        let axis: Vec<Vec<S>> = (0..cells)
            .map(|i| {
                let mut row = vec![S::zero(); self.spec.len()];
                self.spec.fill(mid(i), &mut row, None);
                row
            })
            .collect();
        let mut negative = 0usize;
        for fx in &axis {
            for fy in &axis {
                let rho: S = self
                    .coeffs
                    .iter()
                    .map(|(idx, &a)| a * fx[idx.as_slice()[0]] * fy[idx.as_slice()[1]])
                    .sum();
                if rho < S::zero() {
                    negative += 1;
                }
            }
        }
        Ok(negative as f64 / (cells * cells) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcr::MultiIndex;

    #[test]
    fn uniform_model_calibrates_to_constant() {
        let m = HcrModel::<f64>::uniform(2, 3).unwrap();
        let g = m.calibrate_density_2d(0.1, 16).unwrap();
        assert!(g.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!((g.normalizer - 1.0).abs() < 1e-14);
    }

    #[test]
    fn positive_model_is_barely_rescaled() {
        let m = HcrModel::<f64>::from_coefficients(2, 1, [(MultiIndex::from([1, 1]), 0.3)]).unwrap();
        let g = m.calibrate_density_2d(0.1, 65).unwrap();
        // bilinear integrand: the trapezoid rule is exact
        assert!((g.normalizer - 1.0).abs() < 1e-6);
        assert!((g.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_regions_are_clipped() {
        let m = HcrModel::from_coefficients(2, 2, [(MultiIndex::from([1, 1]), 0.9)]).unwrap();
        assert!(m.density_grid(9).unwrap().iter().any(|&v| v < 0.0));
        let floor = 0.1;
        let g = m.calibrate_density_2d(floor, 33).unwrap();
        let min = g.values.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - floor / g.normalizer).abs() < 1e-15);
        assert!(min > 0.0);
        assert!((g.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argument_errors() {
        let m = HcrModel::<f64>::uniform(2, 1).unwrap();
        assert!(matches!(m.calibrate_density_2d(0.1, 7), Err(HcrError::GridTooSmall { .. })));
        assert!(matches!(m.calibrate_density_2d(0.0, 8), Err(HcrError::NonPositiveFloor(_))));
        let m3 = HcrModel::<f64>::uniform(3, 1).unwrap();
        assert!(matches!(m3.calibrate_density_2d(0.1, 8), Err(HcrError::NotBivariate(3))));
    }

    #[test]
    fn negative_fraction_of_bilinear_model() {
        // 1 + 3c(2x−1)(2y−1) < 0 where (2x−1)(2y−1) < −1/(3c)
        let c = 0.9;
        let m = HcrModel::from_coefficients(2, 1, [(MultiIndex::from([1, 1]), c)]).unwrap();
        let frac = m.negative_area_fraction(400).unwrap();
        // s = 2x−1, t = 2y−1: each of the two mixed-sign quadrants holds 1 − k + k ln k of the 4
        let k: f64 = 1.0 / (3.0 * c);
        let exact = (1.0 - k + k * k.ln()) / 2.0;
        assert!((frac - exact).abs() < 2e-3, "{frac} vs {exact}");
        assert_eq!(HcrModel::<f64>::uniform(2, 1).unwrap().negative_area_fraction(10).unwrap(), 0.0);
    }
}
