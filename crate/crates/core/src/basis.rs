//! Legendre polynomials on `[-1, 1]` and their orthonormal rescaling to `[0, 1]`.
//!
//! The rescaled family is `f_k(u) = sqrt(2k + 1) · P_k(2u − 1)`, which satisfies
//! `∫₀¹ f_j f_k du = δ_jk`. The first members are
//!
//! ```text
//! f_0 = 1
//! f_1 = √3 (2u − 1)
//! f_2 = √5 (6u² − 6u + 1)
//! f_3 = √7 (20u³ − 30u² + 12u − 1)
//! f_4 = 3 (70u⁴ − 140u³ + 90u² − 20u + 1)
//! ```
//!
//! Everything is computed with the upward three-term recurrence
//! `(k+1) P_{k+1} = (2k+1) x P_k − k P_{k−1}`, which is stable for the
//! degrees used here (≤ 11). Derivatives use `P'_{k+1} = (k+1) P_k + x P'_k`.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    /// Input outside the closed unit interval (usually a missing normalization upstream).
    #[error("basis argument {0} is outside [0, 1]")]
    OutOfRange(f64),
}

/// `P_k(x)` by upward recurrence from `P_0 = 1`, `P_1 = x`.
///
/// Defined for any finite `x`; outside `[-1, 1]` the polynomial simply extends.
pub fn legendre_p<S: Scalar>(k: usize, x: S) -> S {
    let mut prev = S::one();
    if k == 0 {
        return prev;
    }
    let mut cur = x;
    for n in 1..k {
        let nf = S::from_usize_lossy(n);
        let next = ((nf + nf + S::one()) * x * cur - nf * prev) / (nf + S::one());
        prev = cur;
        cur = next;
    }
    cur
}

/// `P'_k(x)`.
pub fn legendre_p_deriv<S: Scalar>(k: usize, x: S) -> S {
    if k == 0 {
        return S::zero();
    }
    let (mut p_prev, mut p) = (S::one(), x);
    let mut dp = S::one();
    for n in 1..k {
        let nf = S::from_usize_lossy(n);
        let p_next = ((nf + nf + S::one()) * x * p - nf * p_prev) / (nf + S::one());
        dp = (nf + S::one()) * p + x * dp;
        p_prev = p;
        p = p_next;
    }
    dp
}

fn check_unit<S: Scalar>(u: S) -> Result<(), BasisError> {
    // NaN fails both comparisons.
    if u >= S::zero() && u <= S::one() {
        Ok(())
    } else {
        Err(BasisError::OutOfRange(u.to_f64().unwrap_or(f64::NAN)))
    }
}

fn norm_const<S: Scalar>(k: usize) -> S {
    S::from_usize_lossy(2 * k + 1).sqrt()
}

/// `f_k(u) = sqrt(2k+1) · P_k(2u − 1)` for `u ∈ [0, 1]`.
pub fn orthonormal_f<S: Scalar>(k: usize, u: S) -> Result<S, BasisError> {
    check_unit(u)?;
    Ok(norm_const::<S>(k) * legendre_p(k, u + u - S::one()))
}

/// `d/du f_k(u) = 2 sqrt(2k+1) · P'_k(2u − 1)`.
pub fn orthonormal_f_deriv<S: Scalar>(k: usize, u: S) -> Result<S, BasisError> {
    check_unit(u)?;
    let two = S::one() + S::one();
    Ok(two * norm_const::<S>(k) * legendre_p_deriv(k, u + u - S::one()))
}

/// Maximum degree plus the precomputed `sqrt(2k+1)` constants.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec<S> {
    degree_max: usize,
    norm_consts: Vec<S>,
}

impl<S: Scalar> BasisSpec<S> {
    pub fn new(degree_max: usize) -> Self {
        let norm_consts = (0..=degree_max).map(norm_const).collect();
        Self {
            degree_max,
            norm_consts,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree_max
    }

    /// Number of basis functions, `degree + 1`.
    pub fn len(&self) -> usize {
        self.degree_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn norm_consts(&self) -> &[S] {
        &self.norm_consts
    }

    /// `[f_0(u), …, f_d(u)]`.
    pub fn eval(&self, u: S) -> Result<Vec<S>, BasisError> {
        let mut out = vec![S::zero(); self.len()];
        self.eval_into(u, &mut out)?;
        Ok(out)
    }

    /// Writes `f_0(u) … f_d(u)` into the first `degree + 1` slots of `out`.
    pub fn eval_into(&self, u: S, out: &mut [S]) -> Result<(), BasisError> {
        check_unit(u)?;
        self.fill(u, out, None);
        Ok(())
    }

    /// Values and derivatives in a single recurrence pass.
    pub fn eval_with_deriv_into(
        &self,
        u: S,
        values: &mut [S],
        derivs: &mut [S],
    ) -> Result<(), BasisError> {
        check_unit(u)?;
        self.fill(u, values, Some(derivs));
        Ok(())
    }

    pub(crate) fn fill(&self, u: S, values: &mut [S], mut derivs: Option<&mut [S]>) {
        let d = self.degree_max;
        assert!(values.len() > d, "value buffer shorter than basis");
        if let Some(dv) = derivs.as_deref() {
            assert!(dv.len() > d, "derivative buffer shorter than basis");
        }
        let x = u + u - S::one();
        let two = S::one() + S::one();
        let c = &self.norm_consts;

        values[0] = c[0];
        if let Some(dv) = derivs.as_deref_mut() {
            dv[0] = S::zero();
        }
        if d == 0 {
            return;
        }
        // (p_prev, p) = (P_{n-1}, P_n); dp = P'_n
        let (mut p_prev, mut p, mut dp) = (S::one(), x, S::one());
        values[1] = c[1] * p;
        if let Some(dv) = derivs.as_deref_mut() {
            dv[1] = two * c[1];
        }
        for n in 1..d {
            let nf = S::from_usize_lossy(n);
            let p_next = ((nf + nf + S::one()) * x * p - nf * p_prev) / (nf + S::one());
            dp = (nf + S::one()) * p + x * dp;
            p_prev = p;
            p = p_next;
            values[n + 1] = c[n + 1] * p;
            if let Some(dv) = derivs.as_deref_mut() {
                dv[n + 1] = two * c[n + 1] * dp;
            }
        }
    }
}

/// Free-function form of [`BasisSpec::eval`].
pub fn eval_basis_vector<S: Scalar>(spec: &BasisSpec<S>, u: S) -> Result<Vec<S>, BasisError> {
    spec.eval(u)
}
