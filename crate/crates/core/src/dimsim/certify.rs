//! Exact-arithmetic bound on the spectral radius of `M(w, ∞) = V − B̂/λ`.
//!
//! `M(w, ∞)` is nilpotent when `λ` solves the Laguerre equation, so a
//! floating-point eigensolver only resolves it to about `ε^{1/s}`. Here `λ`
//! is polished in rational arithmetic, the reduced matrix
//! `V̄ − B̄̂/λ` is formed exactly, and its characteristic polynomial is bounded
//! with the Fujiwara root bound.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{check_order, polished_root};
use crate::error::{GlmError, Result};

type Q = BigRational;

/// Result of certifying one order.
#[derive(Debug, Clone)]
pub struct InfinityCertificate {
    pub order: usize,
    /// `λ` at the rational root, rounded to `f64` for reporting.
    pub lambda: f64,
    /// Upper bound on `log2 |L'_{s+1}(x)|` at the rational root.
    pub root_residual_log2: f64,
    /// Rigorous upper bound on the spectral radius.
    pub spectral_radius_bound: f64,
}

const FRACTION_BITS: u64 = 320;

fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn q_from_f64(x: f64) -> Q {
    Q::from_float(x).expect("finite value")
}

fn factorial(n: usize) -> BigInt {
    (1..=n as u64).fold(BigInt::one(), |acc, k| acc * k)
}

fn binomial(n: usize, k: usize) -> BigInt {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn laguerre_derivative(n: usize, m: usize, x: &Q) -> Q {
    if m > n {
        return Q::zero();
    }
    let mut acc = Q::zero();
    for i in (m..=n).rev() {
        let coef = Q::new(binomial(n, i), factorial(i - m));
        let coef = if i % 2 == 0 { coef } else { -coef };
        acc = acc * x + coef;
    }
    acc
}

/// Round to the nearest multiple of `2^-bits` to keep denominators bounded.
fn round_to_bits(x: &Q, bits: u64) -> Q {
    let scale = BigInt::one() << bits;
    let scaled = x * Q::from_integer(scale.clone());
    Q::new(scaled.round().to_integer(), scale)
}

/// Upper bound on `log2 |x|`; `-inf` for zero.
fn log2_upper(x: &Q) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let num = x.numer().abs();
    let den = x.denom().abs();
    // |num| < 2^bits(num), |den| ≥ 2^(bits(den)−1)
    num.bits() as f64 - (den.bits() as f64 - 1.0)
}

type Mat = Vec<Vec<Q>>;

fn zeros(n: usize) -> Mat {
    vec![vec![Q::zero(); n]; n]
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = zeros(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if !b[k][j].is_zero() {
                    out[i][j] += &a[i][k] * &b[k][j];
                }
            }
        }
    }
    out
}

/// Coefficients `a_0..a_{n−1}` of the monic characteristic polynomial,
/// by the Faddeev–LeVerrier recursion.
fn characteristic_polynomial(a: &Mat) -> Vec<Q> {
    let n = a.len();
    let mut coeffs = vec![Q::zero(); n + 1];
    coeffs[n] = Q::one();
    let mut m = zeros(n);
    for k in 1..=n {
        // M_k = A M_{k−1} + c_{n−k+1} I
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += &coeffs[n - k + 1];
        }
        let am = matmul(a, &next);
        let trace = (0..n).fold(Q::zero(), |acc, i| acc + &am[i][i]);
        coeffs[n - k] = -trace / q_int(k as i64);
        m = next;
    }
    coeffs.truncate(n);
    coeffs
}

/// Reduced `N = V̄ − B̄̂/λ` in exact arithmetic, with
/// `B̄̂ = H − λE + V̄(λI − Kᵀ)`.
fn reduced_infinity_matrix(s: usize, lambda: &Q) -> Mat {
    let n = s + 1;
    let x = q_int(n as i64) / lambda;
    let sign = if n % 2 == 0 { 1 } else { -1 };
    let mut v = Vec::with_capacity(s);
    let mut power = Q::one();
    for k in 0..s {
        let m = s - k + 1;
        v.push(q_int(sign * m as i64) / q_int(n as i64) * &power * laguerre_derivative(n, m, &x));
        power *= lambda;
    }
    let mut vbar = zeros(s);
    vbar[0] = v;

    let mut b_hat = zeros(s);
    for i in 0..s {
        for j in 0..s {
            // H has a unit subdiagonal and 1/(j−i+1)! on and above the diagonal
            if j + 1 >= i {
                b_hat[i][j] += Q::new(BigInt::one(), factorial(j + 1 - i));
            }
            if j >= i {
                b_hat[i][j] -= lambda * Q::new(BigInt::one(), factorial(j - i));
            }
        }
    }
    // V̄(λI − Kᵀ): only row 0 is nonzero; (Kᵀ)_{kj} = 1 when k = j + 1
    for j in 0..s {
        let mut acc = &vbar[0][j] * lambda;
        if j + 1 < s {
            acc -= &vbar[0][j + 1];
        }
        b_hat[0][j] += acc;
    }

    let mut out = zeros(s);
    for i in 0..s {
        for j in 0..s {
            out[i][j] = &vbar[i][j] - &b_hat[i][j] / lambda;
        }
    }
    out
}

/// Certify `ρ(M(w, ∞))` for the order-`s` method at the exact Laguerre root.
///
/// The eigenvalues of `M(w, ∞)` do not depend on `w` or on the abscissae, so
/// the reduced matrix suffices.
pub fn certify_infinity_damping(s: usize) -> Result<InfinityCertificate> {
    check_order(s)?;
    let n = s + 1;
    let mut x = q_from_f64(polished_root(s)?);
    for _ in 0..6 {
        let step = laguerre_derivative(n, 1, &x) / laguerre_derivative(n, 2, &x);
        x = round_to_bits(&(x - step), FRACTION_BITS);
    }
    let residual = laguerre_derivative(n, 1, &x);
    let root_residual_log2 = log2_upper(&residual);
    if root_residual_log2 > -200.0 {
        return Err(GlmError::RootFinding(format!(
            "order {s}: rational Newton residual 2^{root_residual_log2:.0} too large"
        )));
    }
    let lambda = q_int(n as i64) / &x;
    let coeffs = characteristic_polynomial(&reduced_infinity_matrix(s, &lambda));

    // Fujiwara: |z| ≤ 2 max_k |a_{n−k}|^{1/k}, the last term using |a_0/2|
    let mut exponent = f64::NEG_INFINITY;
    for (idx, a) in coeffs.iter().enumerate() {
        let k = (s - idx) as f64;
        let mut lg = log2_upper(a);
        if idx == 0 {
            lg -= 1.0;
        }
        exponent = exponent.max(lg / k);
    }
    let spectral_radius_bound = 2.0 * exponent.exp2();
    Ok(InfinityCertificate {
        order: s,
        lambda: lambda.to_f64().unwrap_or(f64::NAN),
        root_residual_log2,
        spectral_radius_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn characteristic_polynomial_of_companion() {
        // companion of z² − 3z + 2
        let a = vec![vec![q_int(0), q_int(-2)], vec![q_int(1), q_int(3)]];
        let c = characteristic_polynomial(&a);
        assert_eq!(c, vec![q_int(2), q_int(-3)]);
    }

    #[test]
    fn log2_bound_is_upper() {
        for (n, d) in [(1i64, 1i64), (3, 7), (1000, 3), (-5, 1024)] {
            let x = Q::new(BigInt::from(n), BigInt::from(d));
            assert!(log2_upper(&x) >= (n as f64 / d as f64).abs().log2());
        }
    }

    #[test]
    fn low_orders_are_nilpotent_at_infinity() {
        for s in 2..=4 {
            let cert = certify_infinity_damping(s).unwrap();
            assert!(cert.spectral_radius_bound <= 1e-7, "{cert:?}");
            assert!((cert.lambda - super::super::find_dimsim_lambda(s).unwrap()).abs() < 1e-12);
        }
    }
}
