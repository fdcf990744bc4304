use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataError, Dataset};
use crate::hcr::HcrModel;
use crate::Scalar;

/// Covariance of the correlated 2D Gaussian demo.
pub const GAUSSIAN_2D_COVARIANCE: [[f64; 2]; 2] = [[3.0, 2.0], [2.0, 3.0]];
/// Sample sizes of the normalization comparison demo.
pub const GAUSSIAN_2D_PRESETS: [usize; 3] = [100, 1_000, 10_000];

const HCR_GRID_1D: usize = 1025;
const HCR_GRID_2D: usize = 129;
const ENVELOPE_FACTOR: f64 = 1.1;

/// `n` zero-mean draws `L z` with `L Lᵀ = covariance`.
pub fn sample_gaussian_2d<S: Scalar>(
    n: usize,
    covariance: [[f64; 2]; 2],
    seed: u64,
) -> Result<Dataset<S>, DataError> {
    let [[a, b], [c, d]] = covariance;
    if b != c || !(a > 0.0) {
        return Err(DataError::NotPositiveDefinite);
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let rest = d - l21 * l21;
    if !(rest > 0.0) {
        return Err(DataError::NotPositiveDefinite);
    }
    let l22 = rest.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    for mut row in x.rows_mut() {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        row[0] = S::lit(l11 * z0);
        row[1] = S::lit(l21 * z0 + l22 * z1);
    }
    Dataset::new(format!("gaussian2d[{n}]"), x, None)
}

/// Rejection sample plus sampler diagnostics.
#[derive(Debug, Clone)]
pub struct HcrSample<S> {
    pub data: Dataset<S>,
    pub envelope: f64,
    pub proposals: usize,
}

impl<S> HcrSample<S> {
    pub fn acceptance_rate(&self) -> f64 {
        self.data_len() as f64 / self.proposals as f64
    }

    fn data_len(&self) -> usize {
        self.data.features.nrows()
    }
}

/// Rejection sampling from an HCR density on `[0, 1]^d`, `d ≤ 2`.
///
/// The density is checked for negativity on a verification grid whose maximum,
/// times 1.1, becomes the uniform envelope.
pub fn sample_hcr_density<S: Scalar>(
    model: &HcrModel<S>,
    n: usize,
    seed: u64,
) -> Result<HcrSample<S>, DataError> {
    let dim = model.dim();
    let grid: Vec<Vec<S>> = match dim {
        1 => (0..HCR_GRID_1D)
            .map(|i| vec![S::from_usize_lossy(i) / S::from_usize_lossy(HCR_GRID_1D - 1)])
            .collect(),
        2 => {
            let t = |i: usize| S::from_usize_lossy(i) / S::from_usize_lossy(HCR_GRID_2D - 1);
            (0..HCR_GRID_2D * HCR_GRID_2D)
                .map(|k| vec![t(k / HCR_GRID_2D), t(k % HCR_GRID_2D)])
                .collect()
        }
        d => return Err(DataError::UnsupportedDimension(d)),
    };
    let mut max = 0.0f64;
    for p in &grid {
        let v = model.eval_density(p).expect("grid point in range").to_f64().unwrap_or(f64::NAN);
        if !(v >= 0.0) {
            return Err(DataError::NegativeDensity {
                point: p.iter().map(|s| s.to_f64().unwrap_or(f64::NAN)).collect(),
                value: v,
            });
        }
        max = max.max(v);
    }
    let envelope = max * ENVELOPE_FACTOR;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, dim));
    let mut proposals = 0usize;
    let mut point = vec![S::zero(); dim];
    let mut filled = 0;
    while filled < n {
        proposals += 1;
        for p in point.iter_mut() {
            *p = S::lit(rng.random::<f64>());
        }
        let rho = model.eval_density(&point).expect("proposal in range");
        if S::lit(rng.random::<f64>() * envelope) < rho {
            x.row_mut(filled).iter_mut().zip(&point).for_each(|(d, &s)| *d = s);
            filled += 1;
        }
    }
    Ok(HcrSample {
        data: Dataset::new(format!("hcr{dim}d[{n}]"), x, None)?,
        envelope,
        proposals,
    })
}

/// Two Gaussian classes in `dim` dimensions separated by a margin of 2 along
/// the first axis; labels follow the sign of that axis.
pub fn separable_blobs<S: Scalar>(n: usize, dim: usize, seed: u64) -> Dataset<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for mut row in x.rows_mut() {
        for v in row.iter_mut() {
            *v = S::lit(rng.sample::<f64, _>(StandardNormal));
        }
        let positive = row[0] > S::zero();
        row[0] += if positive { S::one() } else { -S::one() };
        labels.push(usize::from(positive));
    }
    Dataset::new(format!("blobs{dim}d[{n}]"), x, Some(labels)).expect("finite draws")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcr::{estimate_coefficients, full_basis, MultiIndex};
    use crate::normalize::ks_distance_uniform;

    fn covariance(d: &Dataset<f64>) -> [[f64; 2]; 2] {
        let x = d.features();
        let n = x.nrows() as f64;
        let m0 = x.column(0).sum() / n;
        let m1 = x.column(1).sum() / n;
        let mut c = [[0.0; 2]; 2];
        for r in x.rows() {
            let (a, b) = (r[0] - m0, r[1] - m1);
            c[0][0] += a * a;
            c[0][1] += a * b;
            c[1][1] += b * b;
        }
        c[1][0] = c[0][1];
        c.map(|row| row.map(|v| v / (n - 1.0)))
    }

    #[test]
    fn gaussian_matches_target_covariance() {
        let d = sample_gaussian_2d::<f64>(100_000, GAUSSIAN_2D_COVARIANCE, 1).unwrap();
        let c = covariance(&d);
        for i in 0..2 {
            for j in 0..2 {
                let t = GAUSSIAN_2D_COVARIANCE[i][j];
                assert!((c[i][j] - t).abs() < 0.05 * t, "{c:?}");
            }
        }
        // means within 3 standard errors
        let x = d.features();
        for k in 0..2 {
            let m = x.column(k).sum() / 1e5;
            assert!(m.abs() < 3.0 * (3.0f64 / 1e5).sqrt());
        }
    }

    #[test]
    fn identity_covariance_is_uncorrelated() {
        let d = sample_gaussian_2d::<f64>(100_000, [[1.0, 0.0], [0.0, 1.0]], 2).unwrap();
        let c = covariance(&d);
        let r = c[0][1] / (c[0][0] * c[1][1]).sqrt();
        assert!(r.abs() < 0.02, "r = {r}");
    }

    #[test]
    fn gaussian_presets_and_errors() {
        for n in GAUSSIAN_2D_PRESETS {
            assert_eq!(sample_gaussian_2d::<f64>(n, GAUSSIAN_2D_COVARIANCE, 0).unwrap().len(), n);
        }
        for bad in [[[1.0, 2.0], [2.0, 1.0]], [[1.0, 0.5], [0.4, 1.0]], [[0.0, 0.0], [0.0, 1.0]]] {
            assert!(matches!(
                sample_gaussian_2d::<f64>(10, bad, 0),
                Err(DataError::NotPositiveDefinite)
            ));
        }
    }

    #[test]
    fn uniform_hcr_sample_is_uniform() {
        let m = HcrModel::<f64>::uniform(2, 2).unwrap();
        let s = sample_hcr_density(&m, 10_000, 5).unwrap();
        for k in 0..2 {
            let col = s.data.features().column(k).to_vec();
            assert!(ks_distance_uniform(&col) < 0.02);
        }
    }

    #[test]
    fn hcr_sample_recovers_coefficient() {
        let m = HcrModel::<f64>::from_coefficients(2, 1, [(MultiIndex::from([1, 1]), 0.3)]).unwrap();
        let n = 100_000;
        let s = sample_hcr_density(&m, n, 8).unwrap();
        let est = estimate_coefficients(s.data.features().view(), &full_basis(2, 1), 1).unwrap();
        let se = (1.0f64 - 0.09).sqrt() / (n as f64).sqrt();
        assert!((est.get(&MultiIndex::from([1, 1])) - 0.3).abs() < 3.0 * se);

        // max density 1 + 0.3·3 at the corners
        assert!((s.envelope - 1.9 * 1.1).abs() < 1e-12);
        let p = 1.0 / s.envelope;
        let binom_se = (p * (1.0 - p) / s.proposals as f64).sqrt();
        assert!((s.acceptance_rate() - p).abs() < 3.0 * binom_se, "{}", s.acceptance_rate());
    }

    #[test]
    fn hcr_sampler_rejects_signed_models() {
        let m = HcrModel::from_coefficients(2, 1, [(MultiIndex::from([1, 1]), 0.5)]).unwrap();
        assert!(matches!(sample_hcr_density(&m, 10, 0), Err(DataError::NegativeDensity { .. })));
        let m3 = HcrModel::<f64>::uniform(3, 1).unwrap();
        assert!(matches!(sample_hcr_density(&m3, 10, 0), Err(DataError::UnsupportedDimension(3))));
    }

    #[test]
    fn blobs_are_separable() {
        let d = separable_blobs::<f64>(500, 3, 4);
        for (row, &l) in d.features().rows().into_iter().zip(d.labels().unwrap()) {
            assert_eq!(row[0] > 0.0, l == 1);
            assert!(row[0].abs() >= 1.0);
        }
    }
}
