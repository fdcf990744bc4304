//! Gauss–Legendre and trapezoid quadrature on the unit interval and square.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature needs at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
}

/// n-point Gauss–Legendre rule, stored on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<S> {
    nodes: Vec<S>,
    weights: Vec<S>,
}

impl<S: Scalar> GaussLegendre<S> {
    /// Nodes by Newton iteration on `P_n` from the Chebyshev-like initial guess.
    ///
    /// The iteration always runs in f64 and is converted at the end, so an f32
    /// rule is as accurate as f32 allows.
    pub fn new(n: usize) -> Result<Self, QuadratureError> {
        if n == 0 {
            return Err(QuadratureError::TooFewPoints { min: 1, got: 0 });
        }
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_deriv(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_deriv(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self {
            nodes: nodes.into_iter().map(S::lit).collect(),
            weights: weights.into_iter().map(S::lit).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[0, 1]` (weights sum to 1).
    pub fn unit_rule(&self) -> (Vec<S>, Vec<S>) {
        let half = S::lit(0.5);
        let nodes = self.nodes.iter().map(|&x| half * (x + S::one())).collect();
        let weights = self.weights.iter().map(|&w| half * w).collect();
        (nodes, weights)
    }

    /// `∫_{-1}^{1} f(x) dx`.
    pub fn integrate<F: FnMut(S) -> S>(&self, mut f: F) -> S {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `∫_0^1 f(u) du`.
    pub fn integrate_unit<F: FnMut(S) -> S>(&self, mut f: F) -> S {
        let half = S::lit(0.5);
        self.integrate(|x| f(half * (x + S::one()))) * half
    }

    /// `∫∫_{[0,1]²} f(u, v) du dv` with the tensor-product rule.
    pub fn integrate_unit_square<F: FnMut(S, S) -> S>(&self, mut f: F) -> S {
        let (nodes, weights) = self.unit_rule();
        let mut total = S::zero();
        for (&u, &wu) in nodes.iter().zip(&weights) {
            for (&v, &wv) in nodes.iter().zip(&weights) {
                total += wu * wv * f(u, v);
            }
        }
        total
    }
}

// Independent of `basis` so the rule can serve as an oracle for it.
fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite trapezoid weights for `points` equispaced nodes on `[0, 1]`.
pub fn trapezoid_weights<S: Scalar>(points: usize) -> Result<Vec<S>, QuadratureError> {
    if points < 2 {
        return Err(QuadratureError::TooFewPoints { min: 2, got: points });
    }
    let h = S::one() / S::from_usize_lossy(points - 1);
    let mut w = vec![h; points];
    w[0] = h * S::lit(0.5);
    w[points - 1] = h * S::lit(0.5);
    Ok(w)
}

/// Trapezoid rule for `samples` taken on an equispaced grid over `[0, 1]`.
pub fn trapezoid_unit<S: Scalar>(samples: &[S]) -> Result<S, QuadratureError> {
    let w = trapezoid_weights::<S>(samples.len())?;
    Ok(samples.iter().zip(&w).map(|(&f, &w)| f * w).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_monomials_exactly_up_to_degree_2n_minus_1() {
        for n in [1usize, 2, 5, 16, 32, 64] {
            let rule = GaussLegendre::<f64>::new(n).unwrap();
            for k in 0..(2 * n).min(40) {
                let exact = 1.0 / (k as f64 + 1.0);
                let got = rule.integrate_unit(|u| u.powi(k as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} k={k} got={got}");
            }
        }
    }

    #[test]
    fn five_point_nodes_match_closed_form() {
        let rule = GaussLegendre::<f64>::new(5).unwrap();
        let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
        let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
        let expected = [-b, -a, 0.0, a, b];
        for (x, e) in rule.nodes.iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!((rule.weights[2] - 128.0 / 225.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let xs: Vec<f64> = (0..9).map(|i| 3.0 * i as f64 / 8.0 + 1.0).collect();
        assert!((trapezoid_unit(&xs).unwrap() - 2.5).abs() < 1e-15);
        assert!(trapezoid_unit::<f64>(&[1.0]).is_err());
        assert!(GaussLegendre::<f64>::new(0).is_err());
    }

    #[test]
    fn unit_square_product() {
        let rule = GaussLegendre::<f64>::new(8).unwrap();
        let got = rule.integrate_unit_square(|u, v| u * v * v);
        assert!((got - 1.0 / 6.0).abs() < 1e-15);
    }
}
