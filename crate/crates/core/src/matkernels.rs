//! Small dense matrices and special functions that the coefficient formulas
//! are assembled from: the shift matrix `K`, `exp(K)`, the Hessenberg-type
//! matrix `H`, `φ₁(K)`, the scaled Vandermonde matrix and Laguerre
//! polynomial derivatives.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GlmError, Result};

/// `k!` as a float. Exact for `k ≤ 22`, correctly rounded well beyond that.
pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Binomial coefficient `n choose k` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        return Err(GlmError::InvalidDimension("matrix dimension must be at least 1".into()));
    }
    Ok(())
}

/// Nilpotent shift matrix `K_n`: ones on the superdiagonal.
pub fn shift_matrix(n: usize) -> Result<DMatrix<f64>> {
    check_dim(n)?;
    Ok(DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 }))
}

/// `E_n = exp(K_n)`, upper triangular with entry `(i, j) = 1/(j − i)!`.
pub fn exp_shift_matrix(n: usize) -> Result<DMatrix<f64>> {
    check_dim(n)?;
    Ok(DMatrix::from_fn(n, n, |i, j| if j >= i { 1.0 / factorial(j - i) } else { 0.0 }))
}

/// `φ₁(K_n) = Σ_k K_n^k / (k+1)!`, upper triangular with entry `1/(j − i + 1)!`.
pub fn phi1_matrix(n: usize) -> Result<DMatrix<f64>> {
    check_dim(n)?;
    Ok(DMatrix::from_fn(n, n, |i, j| if j >= i { 1.0 / factorial(j - i + 1) } else { 0.0 }))
}

/// Hessenberg matrix `H_n`: `φ₁(K_n)` plus a unit subdiagonal.
pub fn hess_matrix(n: usize) -> Result<DMatrix<f64>> {
    check_dim(n)?;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if j + 1 >= i {
            1.0 / factorial(j + 1 - i)
        } else {
            0.0
        }
    }))
}

/// Ordered, finite, pairwise distinct stage abscissae (in units of one step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Abscissae(Vec<f64>);

impl Abscissae {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(GlmError::InvalidDimension("abscissae vector is empty".into()));
        }
        let distinct = c.iter().all(|x| x.is_finite())
            && c.iter().enumerate().all(|(i, a)| c[i + 1..].iter().all(|b| a != b));
        if !distinct {
            return Err(GlmError::ConfluentAbscissae(c));
        }
        Ok(Abscissae(c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Index of an abscissa equal to zero, if any.
    pub fn zero_index(&self) -> Option<usize> {
        self.0.iter().position(|&x| x == 0.0)
    }
}

impl TryFrom<Vec<f64>> for Abscissae {
    type Error = GlmError;
    fn try_from(c: Vec<f64>) -> Result<Self> {
        Abscissae::new(c)
    }
}

impl From<Abscissae> for Vec<f64> {
    fn from(c: Abscissae) -> Self {
        c.0
    }
}

/// How the abscissae of a constructed method are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbscissaeChoice {
    /// `c_i = (i − 1)/(s − 1)`, equispaced in `[0, 1]`.
    UnitInterval,
    /// `c_i = 1 − s + i`, integers ending at 1.
    IntegerTail,
    Custom(Vec<f64>),
}

impl AbscissaeChoice {
    /// The growth-limited default: unit interval up to order 4, integer tail above.
    pub fn default_for(order: usize) -> Self {
        if order <= 4 {
            AbscissaeChoice::UnitInterval
        } else {
            AbscissaeChoice::IntegerTail
        }
    }

    pub fn abscissae(&self, s: usize) -> Result<Abscissae> {
        check_dim(s)?;
        let c = match self {
            // a single stage sits at the end of the step
            AbscissaeChoice::UnitInterval if s == 1 => vec![1.0],
            AbscissaeChoice::UnitInterval => (0..s).map(|i| i as f64 / (s - 1) as f64).collect(),
            AbscissaeChoice::IntegerTail => (1..=s).map(|i| 1.0 - s as f64 + i as f64).collect(),
            AbscissaeChoice::Custom(c) => {
                if c.len() != s {
                    return Err(GlmError::DimensionMismatch(format!(
                        "custom abscissae have length {}, expected {s}",
                        c.len()
                    )));
                }
                c.clone()
            }
        };
        Abscissae::new(c)
    }
}

/// Scaled Vandermonde matrix `C_n = [1, c, c²/2, …, c^{n−1}/(n−1)!]` of shape `s × n`.
pub fn scaled_vandermonde(c: &Abscissae, n: usize) -> Result<DMatrix<f64>> {
    check_dim(n)?;
    let c = c.as_slice();
    Ok(DMatrix::from_fn(c.len(), n, |i, j| c[i].powi(j as i32) / factorial(j)))
}

/// `m`-th derivative of the degree-`n` Laguerre polynomial
/// `L_n(x) = Σ_i C(n, i) (−x)^i / i!`, evaluated at `x`.
///
/// Returns 0 when `m > n`.
pub fn laguerre_derivative(n: usize, m: usize, x: f64) -> f64 {
    if m > n {
        return 0.0;
    }
    // coefficient of x^{i−m} is C(n,i)(−1)^i / (i−m)!
    let mut acc = 0.0;
    for i in (m..=n).rev() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc = acc * x + sign * binomial(n, i) / factorial(i - m);
    }
    acc
}

/// `X · M⁻¹` via an LU solve with partial pivoting on `Mᵀ`.
pub fn solve_right(x: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() || x.ncols() != m.nrows() {
        return Err(GlmError::DimensionMismatch(format!(
            "cannot right-divide {}x{} by {}x{}",
            x.nrows(),
            x.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    m.transpose()
        .lu()
        .solve(&x.transpose())
        .map(|y| y.transpose())
        .ok_or_else(|| GlmError::Singular("right division by a singular matrix".into()))
}

/// `M⁻¹ · X` via an LU solve with partial pivoting.
pub fn solve_left(m: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() || x.nrows() != m.nrows() {
        return Err(GlmError::DimensionMismatch(format!(
            "cannot left-divide {}x{} by {}x{}",
            x.nrows(),
            x.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    m.clone()
        .lu()
        .solve(x)
        .ok_or_else(|| GlmError::Singular("left division by a singular matrix".into()))
}

/// Similarity transform `T · X · T⁻¹`.
pub fn similarity(t: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_right(&(t * x), t)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn shift_matrix_small_cases() {
        assert_eq!(shift_matrix(1).unwrap(), DMatrix::from_element(1, 1, 0.0));
        assert_eq!(
            shift_matrix(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
        );
        let k = shift_matrix(3).unwrap();
        let k2 = &k * &k;
        let mut e13 = DMatrix::zeros(3, 3);
        e13[(0, 2)] = 1.0;
        assert_eq!(k2, e13);
        assert_eq!(&k2 * &k, DMatrix::zeros(3, 3));
        assert!(matches!(shift_matrix(0), Err(GlmError::InvalidDimension(_))));
    }

    #[test]
    fn exp_shift_matches_truncated_series() {
        assert_eq!(
            exp_shift_matrix(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])
        );
        assert_abs_diff_eq!(exp_shift_matrix(4).unwrap()[(0, 3)], 1.0 / 6.0);
        for n in 1..=8 {
            let k = shift_matrix(n).unwrap();
            let mut term = DMatrix::identity(n, n);
            let mut series = DMatrix::zeros(n, n);
            for j in 0..n {
                series += &term / factorial(j);
                term = &term * &k;
            }
            // K^n = 0
            assert_eq!(term, DMatrix::zeros(n, n));
            assert_eq!(series, exp_shift_matrix(n).unwrap());
        }
    }

    #[test]
    fn hess_and_phi_shapes() {
        assert_eq!(
            hess_matrix(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 1.0, 1.0])
        );
        let h3 = hess_matrix(3).unwrap();
        assert_abs_diff_eq!(h3[(0, 2)], 1.0 / 6.0);
        assert_eq!(h3[(2, 1)], 1.0);
        assert_eq!(h3[(2, 0)], 0.0);
        assert_eq!(
            phi1_matrix(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])
        );
        assert_abs_diff_eq!(phi1_matrix(3).unwrap()[(0, 2)], 1.0 / 6.0);

        let diff = hess_matrix(4).unwrap() - phi1_matrix(4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j + 1 { 1.0 } else { 0.0 };
                assert_eq!(diff[(i, j)], expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn phi_identity_at_n6() {
        let n = 6;
        let lhs = phi1_matrix(n).unwrap() * shift_matrix(n).unwrap();
        let rhs = exp_shift_matrix(n).unwrap() - DMatrix::identity(n, n);
        assert!(max_abs(&(lhs - rhs)) < 1e-14);
    }

    #[test]
    fn vandermonde_rows() {
        let c = Abscissae::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(
            scaled_vandermonde(&c, 3).unwrap(),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.5])
        );
        let c = Abscissae::new(vec![0.0, 0.5, 1.0]).unwrap();
        let v = scaled_vandermonde(&c, 3).unwrap();
        assert_eq!(v.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.5, 0.125]);
    }

    #[test]
    fn vandermonde_determinant_matches_product_formula() {
        // det C_s = Π_{i<j}(c_j − c_i) / Π_k k!
        for s in 2..=7 {
            let c = AbscissaeChoice::UnitInterval.abscissae(s).unwrap();
            let det = scaled_vandermonde(&c, s).unwrap().determinant();
            let cs = c.as_slice();
            let mut expected = 1.0;
            for i in 0..s {
                for j in i + 1..s {
                    expected *= cs[j] - cs[i];
                }
                expected /= factorial(i);
            }
            assert!((det - expected).abs() <= 1e-10 * expected.abs(), "s={s}");
        }
    }

    #[test]
    fn vandermonde_solves_reproduce_identity() {
        // unit-interval nodes above s = 7 push the inverse past 1e6, so the
        // residual there is checked only for the per-order default choice
        for s in 1..=10 {
            let choices = if s <= 7 {
                vec![AbscissaeChoice::UnitInterval, AbscissaeChoice::IntegerTail]
            } else {
                vec![AbscissaeChoice::default_for(s)]
            };
            for choice in choices {
                let c = choice.abscissae(s).unwrap();
                let v = scaled_vandermonde(&c, s).unwrap();
                let inv = solve_left(&v, &DMatrix::identity(s, s)).unwrap();
                let err = max_abs(&(&v * inv - DMatrix::identity(s, s)));
                assert!(err < 1e-10, "s={s} {choice:?}: {err}");
            }
        }
    }

    #[test]
    fn abscissae_validation() {
        assert!(matches!(
            Abscissae::new(vec![0.0, 0.5, 0.5]),
            Err(GlmError::ConfluentAbscissae(_))
        ));
        assert!(Abscissae::new(vec![f64::NAN]).is_err());
        assert_eq!(
            AbscissaeChoice::IntegerTail.abscissae(4).unwrap().as_slice(),
            &[-2.0, -1.0, 0.0, 1.0]
        );
        assert_eq!(AbscissaeChoice::UnitInterval.abscissae(1).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn laguerre_examples() {
        assert_abs_diff_eq!(laguerre_derivative(1, 0, 2.0), -1.0);
        for x in [-3.0, 0.0, 0.7, 11.0] {
            assert_abs_diff_eq!(laguerre_derivative(3, 3, x), -1.0, epsilon = 1e-14);
        }
        assert_eq!(laguerre_derivative(3, 4, 1.0), 0.0);

        // central finite difference of L_5' at 1.7
        let x = 1.7;
        let d = 1e-4;
        let fd = (laguerre_derivative(5, 1, x + d) - laguerre_derivative(5, 1, x - d)) / (2.0 * d);
        assert!((fd - laguerre_derivative(5, 2, x)).abs() < 1e-8);
    }

    fn laguerre_recurrence(n: usize, x: f64) -> f64 {
        let (mut prev, mut cur) = (1.0, 1.0 - x);
        if n == 0 {
            return prev;
        }
        for k in 2..=n {
            let kf = k as f64;
            let next = ((2.0 * kf - 1.0 - x) * cur - (kf - 1.0) * prev) / kf;
            prev = cur;
            cur = next;
        }
        cur
    }

    proptest! {
        #[test]
        fn laguerre_agrees_with_recurrence(n in 0usize..=12, x in -20.0f64..20.0) {
            let direct = laguerre_derivative(n, 0, x);
            let rec = laguerre_recurrence(n, x);
            // all terms share one sign at −|x|, which bounds the cancellation
            let scale = laguerre_derivative(n, 0, -x.abs());
            prop_assert!((direct - rec).abs() <= 1e-12 * (1.0 + scale),
                "n={} x={} direct={} rec={}", n, x, direct, rec);
        }

        #[test]
        fn phi_times_shift_is_exp_minus_identity(n in 1usize..=12) {
            let lhs = phi1_matrix(n).unwrap() * shift_matrix(n).unwrap();
            let rhs = exp_shift_matrix(n).unwrap() - DMatrix::identity(n, n);
            prop_assert!(max_abs(&(lhs - rhs)) <= 1e-14);
        }
    }
}
